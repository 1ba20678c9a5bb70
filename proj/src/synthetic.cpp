#include "ncomp/io.hpp"

namespace ncomp {

namespace {

constexpr Index kHeight = 8;
constexpr Index kWidth = 8;
constexpr Index kBlockPositions = (kHeight / 2) * (kWidth / 2);
constexpr float kRampGain = 0.25f;

Dataset<float> make_split(Index samples, Index num_classes, double noise_std, Rng& rng) {
  Dataset<float> data;
  data.num_classes = num_classes;
  data.inputs = Tensor<float>({samples, 1, kHeight, kWidth});
  data.labels.resize(static_cast<std::size_t>(samples));
  for (Index s = 0; s < samples; ++s) {
    const Index cls = s % num_classes;  // round-robin keeps class counts within +-1
    data.labels[static_cast<std::size_t>(s)] = static_cast<std::int32_t>(cls);
    const Tensor<float> base = synthetic_base_pattern(cls, num_classes);
    float* dst = data.inputs.data() + s * kHeight * kWidth;
    for (Index i = 0; i < kHeight * kWidth; ++i) {
      dst[i] = base[i] + static_cast<float>(rng.normal(0.0, noise_std));
    }
  }
  return data;
}

}  // namespace

Tensor<float> synthetic_base_pattern(Index cls, Index num_classes) {
  if (num_classes < 1) throw ConfigError("synthetic data needs at least one class");
  if (num_classes > kBlockPositions) {
    throw ConfigError("synthetic data supports at most " + std::to_string(kBlockPositions) + " classes");
  }
  if (cls < 0 || cls >= num_classes) throw ValueError("class index out of range");

  Tensor<float> img({1, kHeight, kWidth});
  const float ramp = kRampGain * static_cast<float>(cls + 1) / static_cast<float>(num_classes);
  for (Index y = 0; y < kHeight; ++y) {
    for (Index x = 0; x < kWidth; ++x) {
      img[y * kWidth + x] = ramp * static_cast<float>(x) / static_cast<float>(kWidth - 1);
    }
  }
  const Index row = (cls / (kWidth / 2)) * 2;
  const Index col = (cls % (kWidth / 2)) * 2;
  for (Index dy = 0; dy < 2; ++dy) {
    for (Index dx = 0; dx < 2; ++dx) {
      img[(row + dy) * kWidth + col + dx] = 1.0f;
    }
  }
  return img;
}

std::pair<Dataset<float>, Dataset<float>> gen_synthetic(const SyntheticSpec& spec) {
  if (spec.train_samples < 1 || spec.test_samples < 1) throw ConfigError("synthetic splits must be nonempty");
  if (spec.noise_std < 0) throw ConfigError("noise stddev must be >= 0");
  Rng rng(spec.seed);
  Dataset<float> train = make_split(spec.train_samples, spec.num_classes, spec.noise_std, rng);
  Dataset<float> test = make_split(spec.test_samples, spec.num_classes, spec.noise_std, rng);
  return {std::move(train), std::move(test)};
}

}  // namespace ncomp
