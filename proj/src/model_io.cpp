#include "ncomp/io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace ncomp {

namespace {

constexpr std::array<char, 4> kMagic = {'N', 'C', 'M', 'F'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct Cursor {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > size) throw ParseError("NCMF: truncated file");
  }
  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(data[pos] | (data[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t len = u32();
    need(len);
    std::string s(reinterpret_cast<const char*>(data + pos), len);
    pos += len;
    return s;
  }
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

std::uint32_t crc32(const std::uint8_t* data, std::size_t size) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int bit = 0; bit < 8; ++bit) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = 0; i < size; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

void save_model(const Model<float>& model, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u16(out, kVersion);
  put_string(out, model.arch_name);

  for (const auto& g : model.params) {
    put_string(out, g.cls);
    out.push_back(kDtypeF32);
    put_u32(out, static_cast<std::uint32_t>(g.value.rank()));
    for (Index d : g.value.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (Index i = 0; i < g.value.size(); ++i) put_f32(out, g.value[i]);
    const Index n = g.mask.size();
    for (Index byte = 0; byte < (n + 7) / 8; ++byte) {
      std::uint8_t packed = 0;
      for (Index bit = 0; bit < 8 && byte * 8 + bit < n; ++bit) {
        if (g.mask[byte * 8 + bit]) packed |= static_cast<std::uint8_t>(1u << bit);
      }
      out.push_back(packed);
    }
  }

  put_u32(out, crc32(out.data(), out.size()));
  write_file(path, out);
}

Model<float> load_model(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file(path);
  if (bytes.size() < kMagic.size() + 2 + 4 + 4) throw ParseError("NCMF: truncated file");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) throw ParseError("NCMF: bad magic");

  Cursor cur{bytes.data(), bytes.size() - 4};
  cur.pos = kMagic.size();
  const std::uint16_t version = cur.u16();
  if (version != kVersion) throw ParseError("NCMF: unsupported version " + std::to_string(version));

  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
  if (crc32(bytes.data(), bytes.size() - 4) != stored) throw ParseError("NCMF: checksum mismatch");

  const std::string arch = cur.str();
  Model<float> model;
  try {
    model = build_from_arch<float>(arch);
  } catch (const Error&) {
    throw ParseError("NCMF: unknown architecture \"" + arch + "\"");
  }

  std::vector<bool> seen(model.params.size(), false);
  while (cur.pos < cur.size) {
    const std::string cls = cur.str();
    ParamGroup<float>* g = model.find(cls);
    if (!g) throw ParseError("NCMF: unexpected parameter group \"" + cls + "\"");
    const std::uint8_t dtype = cur.u8();
    if (dtype != kDtypeF32) throw ParseError("NCMF: unsupported dtype " + std::to_string(dtype));
    const std::uint32_t rank = cur.u32();
    if (rank != static_cast<std::uint32_t>(g->value.rank())) throw ParseError("NCMF: rank mismatch for " + cls);
    for (std::uint32_t d = 0; d < rank; ++d) {
      if (cur.u32() != static_cast<std::uint32_t>(g->value.dim(d))) throw ParseError("NCMF: shape mismatch for " + cls);
    }
    for (Index i = 0; i < g->value.size(); ++i) g->value[i] = cur.f32();
    const Index n = g->mask.size();
    for (Index byte = 0; byte < (n + 7) / 8; ++byte) {
      const std::uint8_t packed = cur.u8();
      for (Index bit = 0; bit < 8 && byte * 8 + bit < n; ++bit) {
        g->mask[byte * 8 + bit] = (packed >> bit) & 1u;
      }
    }
    std::size_t index = 0;
    while (model.params[index].cls != cls) ++index;
    if (seen[index]) throw ParseError("NCMF: duplicate parameter group \"" + cls + "\"");
    seen[index] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw ParseError("NCMF: missing parameter group \"" + model.params[i].cls + "\"");
  }
  model.enforce_masks();
  return model;
}

Dataset<float> load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  auto be32 = [](const std::vector<std::uint8_t>& b, std::size_t at) -> std::uint32_t {
    if (at + 4 > b.size()) throw ParseError("IDX: truncated header");
    return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
           (static_cast<std::uint32_t>(b[at + 2]) << 8) | b[at + 3];
  };

  if (be32(img, 0) != 0x00000803u) throw ParseError("IDX: bad image magic");
  if (be32(lab, 0) != 0x00000801u) throw ParseError("IDX: bad label magic");
  const std::uint32_t n = be32(img, 4), h = be32(img, 8), w = be32(img, 12);
  if (be32(lab, 4) != n) throw ParseError("IDX: image/label count mismatch");
  if (img.size() != 16 + static_cast<std::size_t>(n) * h * w) throw ParseError("IDX: image payload size mismatch");
  if (lab.size() != 8 + n) throw ParseError("IDX: label payload size mismatch");

  Dataset<float> data;
  data.inputs = Tensor<float>({static_cast<Index>(n), 1, static_cast<Index>(h), static_cast<Index>(w)});
  for (Index i = 0; i < data.inputs.size(); ++i) {
    data.inputs[i] = static_cast<float>(img[16 + static_cast<std::size_t>(i)]) / 255.0f;
  }
  data.labels.resize(n);
  std::int32_t max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    data.labels[i] = lab[8 + i];
    max_label = std::max(max_label, data.labels[i]);
  }
  data.num_classes = max_label + 1;
  data.validate();
  return data;
}

void save_idx(const Dataset<float>& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  data.validate();
  if (data.inputs.dim(1) != 1) throw ShapeError("save_idx: single-channel images only");
  const Index n = data.size(), h = data.inputs.dim(2), w = data.inputs.dim(3);

  std::vector<std::uint8_t> img;
  auto put_be32 = [](std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  };
  put_be32(img, 0x00000803u);
  put_be32(img, static_cast<std::uint32_t>(n));
  put_be32(img, static_cast<std::uint32_t>(h));
  put_be32(img, static_cast<std::uint32_t>(w));
  for (Index i = 0; i < data.inputs.size(); ++i) {
    const float clamped = std::min(1.0f, std::max(0.0f, data.inputs[i]));
    img.push_back(static_cast<std::uint8_t>(std::lround(clamped * 255.0f)));
  }
  write_file(images, img);

  std::vector<std::uint8_t> lab;
  put_be32(lab, 0x00000801u);
  put_be32(lab, static_cast<std::uint32_t>(n));
  for (std::int32_t l : data.labels) {
    if (l > 255) throw ValueError("save_idx: labels above 255 do not fit the format");
    lab.push_back(static_cast<std::uint8_t>(l));
  }
  write_file(labels, lab);
}

}  // namespace ncomp
