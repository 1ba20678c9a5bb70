#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ncomp/ops.hpp"
#include "ncomp/tensor.hpp"

namespace ncomp {

enum class LayerKind { kConv2d, kLinear, kRelu, kMaxPool2d, kFlatten };

struct LayerSpec {
  LayerKind kind;
  std::string name;  // parameterized layers only; weight classes are name + ".weight"/".bias"
  Index in_channels = 0, out_channels = 0, kernel = 0, stride = 1, padding = 0;  // conv
  Index in_features = 0, out_features = 0;                                       // linear
  Index window = 0, pool_stride = 0;                                             // maxpool

  static LayerSpec conv(std::string name, Index in_c, Index out_c, Index k, Index stride = 1, Index padding = 0) {
    LayerSpec s{LayerKind::kConv2d, std::move(name)};
    s.in_channels = in_c;
    s.out_channels = out_c;
    s.kernel = k;
    s.stride = stride;
    s.padding = padding;
    return s;
  }
  static LayerSpec linear(std::string name, Index in_f, Index out_f) {
    LayerSpec s{LayerKind::kLinear, std::move(name)};
    s.in_features = in_f;
    s.out_features = out_f;
    return s;
  }
  static LayerSpec relu() { return {LayerKind::kRelu, ""}; }
  static LayerSpec maxpool(Index window, Index stride = 0) {
    LayerSpec s{LayerKind::kMaxPool2d, ""};
    s.window = window;
    s.pool_stride = stride == 0 ? window : stride;
    return s;
  }
  static LayerSpec flatten() { return {LayerKind::kFlatten, ""}; }
};

// One named parameter group (a "weight class"): the tensor, its binary prune
// mask, and whether pruning may touch it. The value is exactly 0 wherever the
// mask is 0.
template <typename T>
struct ParamGroup {
  std::string cls;
  Tensor<T> value;
  Tensor<std::uint8_t> mask;
  bool prunable = true;

  ParamGroup(std::string cls_, Tensor<T> value_, bool prunable_)
      : cls(std::move(cls_)), value(std::move(value_)), mask(full<std::uint8_t>(value.shape(), 1)), prunable(prunable_) {}
};

template <typename T>
struct Model {
  std::string arch_name;
  Shape input_shape;  // per-sample [C x H x W]
  Index num_classes = 0;
  std::vector<LayerSpec> layers;
  std::vector<ParamGroup<T>> params;  // layer order, weight before bias

  ParamGroup<T>* find(const std::string& cls) {
    for (auto& g : params)
      if (g.cls == cls) return &g;
    return nullptr;
  }
  const ParamGroup<T>* find(const std::string& cls) const {
    for (const auto& g : params)
      if (g.cls == cls) return &g;
    return nullptr;
  }

  // Re-zeroes values at masked positions; the mask is authoritative.
  void enforce_masks() {
    for (auto& g : params) {
      for (Index i = 0; i < g.value.size(); ++i) {
        if (!g.mask[i]) g.value[i] = T{0};
      }
    }
  }

  std::vector<std::string> prunable_classes() const {
    std::vector<std::string> out;
    for (const auto& g : params)
      if (g.prunable) out.push_back(g.cls);
    return out;
  }
};

template <typename T>
struct Dataset {
  Tensor<T> inputs;  // [n x C x H x W]
  std::vector<std::int32_t> labels;
  Index num_classes = 0;

  Index size() const { return static_cast<Index>(labels.size()); }

  void validate() const {
    if (inputs.rank() != 4) throw ShapeError("dataset inputs must be [n x C x H x W]");
    if (inputs.dim(0) != size()) throw ShapeError("dataset input/label count mismatch");
    if (num_classes < 1) throw ValueError("dataset needs at least one class");
    for (std::int32_t l : labels) {
      if (l < 0 || l >= num_classes) throw ValueError("invalid label " + std::to_string(l));
    }
  }
};

struct ClassCount {
  std::string cls;
  std::uint64_t total = 0;
  std::uint64_t surviving = 0;
};

struct ParamCounts {
  std::vector<ClassCount> per_class;
  std::uint64_t total = 0;
  std::uint64_t surviving = 0;
  std::uint64_t pruned() const { return total - surviving; }
};

template <typename T>
ParamCounts count_params(const Model<T>& model) {
  ParamCounts counts;
  for (const auto& g : model.params) {
    ClassCount c{g.cls, static_cast<std::uint64_t>(g.value.size()), 0};
    for (Index i = 0; i < g.mask.size(); ++i) c.surviving += g.mask[i] ? 1 : 0;
    counts.total += c.total;
    counts.surviving += c.surviving;
    counts.per_class.push_back(std::move(c));
  }
  return counts;
}

// Layer id of a weight class: the prefix before the final '.', or the whole id.
inline std::string layer_of_class(const std::string& cls) {
  const auto pos = cls.rfind('.');
  return pos == std::string::npos ? cls : cls.substr(0, pos);
}

namespace detail {

// He-normal initialization; biases start at zero.
template <typename T>
void add_layer_params(Model<T>& model, const LayerSpec& spec, Rng& rng) {
  if (spec.kind == LayerKind::kConv2d) {
    const double fan_in = static_cast<double>(spec.in_channels * spec.kernel * spec.kernel);
    Tensor<T> w = normal<T>(rng, {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, T{0},
                            static_cast<T>(std::sqrt(2.0 / fan_in)));
    model.params.emplace_back(spec.name + ".weight", std::move(w), true);
    model.params.emplace_back(spec.name + ".bias", zeros<T>({spec.out_channels}), false);
  } else if (spec.kind == LayerKind::kLinear) {
    const double fan_in = static_cast<double>(spec.in_features);
    Tensor<T> w = normal<T>(rng, {spec.out_features, spec.in_features}, T{0}, static_cast<T>(std::sqrt(2.0 / fan_in)));
    model.params.emplace_back(spec.name + ".weight", std::move(w), true);
    model.params.emplace_back(spec.name + ".bias", zeros<T>({spec.out_features}), false);
  }
}

}  // namespace detail

// The reference MNIST classifier: conv 1->20 5x5, conv 20->50 5x5,
// fc 800->500, fc 500->10, ReLU + 2x2 maxpool after each convolution and
// ReLU after fc1; 431,080 parameters for 1x28x28 inputs.
template <typename T = float>
Model<T> build_mnist_classifier(std::uint64_t seed = 0) {
  Model<T> m;
  m.arch_name = "mnist";
  m.input_shape = {1, 28, 28};
  m.num_classes = 10;
  m.layers = {
      LayerSpec::conv("conv1", 1, 20, 5),  LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::conv("conv2", 20, 50, 5), LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::flatten(),
      LayerSpec::linear("fc1", 800, 500),  LayerSpec::relu(),
      LayerSpec::linear("fc2", 500, 10),
  };
  Rng rng(seed);
  for (const auto& l : m.layers) detail::add_layer_params(m, l, rng);
  return m;
}

// Desk-scale classifier: conv C->8 3x3 pad 1, 2x2 maxpool, fc ->32, fc ->K.
// 4,538 parameters for the default 1x8x8 input and 10 classes.
template <typename T = float>
Model<T> build_toy_classifier(const Shape& in_shape, Index num_classes, std::uint64_t seed) {
  if (in_shape.size() != 3) throw ShapeError("toy classifier expects input [C x H x W]");
  const Index c = in_shape[0], h = in_shape[1], w = in_shape[2];
  if (h < 4 || w < 4) throw ShapeError("toy classifier needs spatial dims >= 4");
  if (num_classes < 1) throw ValueError("toy classifier needs at least one class");
  const Index flat = 8 * (h / 2) * (w / 2);

  Model<T> m;
  m.arch_name = "toy:" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w) + ":" + std::to_string(num_classes);
  m.input_shape = in_shape;
  m.num_classes = num_classes;
  m.layers = {
      LayerSpec::conv("conv1", c, 8, 3, 1, 1), LayerSpec::relu(), LayerSpec::maxpool(2),
      LayerSpec::flatten(),
      LayerSpec::linear("fc1", flat, 32),      LayerSpec::relu(),
      LayerSpec::linear("fc2", 32, num_classes),
  };
  Rng rng(seed);
  for (const auto& l : m.layers) detail::add_layer_params(m, l, rng);
  return m;
}

// Rebuilds a model skeleton from its arch_name ("mnist" or "toy:CxHxW:K");
// used when loading serialized models.
template <typename T = float>
Model<T> build_from_arch(const std::string& arch_name, std::uint64_t seed = 0) {
  if (arch_name == "mnist") return build_mnist_classifier<T>(seed);
  if (arch_name.rfind("toy:", 0) == 0) {
    const std::string body = arch_name.substr(4);
    const auto colon = body.find(':');
    if (colon != std::string::npos) {
      Shape in_shape;
      Index dim = 0;
      bool have_digit = false, ok = true;
      for (char ch : body.substr(0, colon)) {
        if (ch >= '0' && ch <= '9') {
          dim = dim * 10 + (ch - '0');
          have_digit = true;
        } else if (ch == 'x' && have_digit) {
          in_shape.push_back(dim);
          dim = 0;
          have_digit = false;
        } else {
          ok = false;
          break;
        }
      }
      if (ok && have_digit) in_shape.push_back(dim);
      const std::string tail = body.substr(colon + 1);
      if (ok && in_shape.size() == 3 && !tail.empty() && tail.find_first_not_of("0123456789") == std::string::npos) {
        return build_toy_classifier<T>(in_shape, static_cast<Index>(std::stoll(tail)), seed);
      }
    }
  }
  throw ValueError("unknown architecture: " + arch_name);
}

}  // namespace ncomp
