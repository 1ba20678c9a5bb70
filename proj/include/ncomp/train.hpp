#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <thread>
#include <vector>

#include "ncomp/model.hpp"
#include "ncomp/ops.hpp"
#include "ncomp/rng.hpp"

namespace ncomp {

template <typename T>
struct Gradients {
  std::vector<Tensor<T>> by_param;  // aligned with Model::params
};

// Everything backward needs from the forward pass: per-layer outputs, conv
// patch matrices, and pool argmax offsets.
template <typename T>
struct ForwardTrace {
  bool valid = false;
  Index batch = 0;
  Tensor<T> input;
  std::vector<Tensor<T>> outputs;
  std::vector<Tensor<T>> conv_cols;
  std::vector<std::vector<Index>> pool_argmax;

  const Tensor<T>& logits() const { return outputs.back(); }
};

namespace detail {

template <typename T>
const ParamGroup<T>& group(const Model<T>& model, const std::string& cls) {
  const ParamGroup<T>* g = model.find(cls);
  if (!g) throw StateError("missing parameter group " + cls);
  return *g;
}

// Batched convolution: one im2col block per sample, a single GEMM, then a
// per-sample copy into [B x O x OH x OW] layout.
template <typename T>
Tensor<T> conv_forward_batch(const LayerSpec& spec, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                             Tensor<T>* cols_out) {
  const Index b = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c_in != spec.in_channels) throw ShapeError("conv " + spec.name + ": expected " + std::to_string(spec.in_channels) + " input channels");
  check_conv_geometry(h, w, spec.kernel, spec.kernel, spec.stride, spec.padding);
  const Index oh = conv_out_dim(h, spec.kernel, spec.stride, spec.padding);
  const Index ow = conv_out_dim(w, spec.kernel, spec.stride, spec.padding);
  const Index patch = spec.in_channels * spec.kernel * spec.kernel;
  const Index win = oh * ow;

  Tensor<T> cols({patch, b * win});
  for (Index s = 0; s < b; ++s) {
    im2col(x.data() + s * c_in * h * w, c_in, h, w, spec.kernel, spec.kernel, spec.stride, spec.padding,
           cols.data() + s * win, b * win);
  }

  Tensor<T> prod({spec.out_channels, b * win});
  prod.mat(spec.out_channels, b * win).noalias() = weight.mat(spec.out_channels, patch) * cols.mat(patch, b * win);

  Tensor<T> out({b, spec.out_channels, oh, ow});
  for (Index s = 0; s < b; ++s) {
    for (Index o = 0; o < spec.out_channels; ++o) {
      const T* src = prod.data() + o * b * win + s * win;
      T* dst = out.data() + (s * spec.out_channels + o) * win;
      for (Index i = 0; i < win; ++i) dst[i] = src[i] + bias[o];
    }
  }
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

template <typename T>
Tensor<T> linear_forward_batch(const LayerSpec& spec, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 2 || x.dim(1) != spec.in_features) {
    throw ShapeError("linear " + spec.name + ": expected input [B x " + std::to_string(spec.in_features) + "]");
  }
  const Index b = x.dim(0);
  Tensor<T> out({b, spec.out_features});
  out.mat(b, spec.out_features).noalias() =
      x.mat(b, spec.in_features) * weight.mat(spec.out_features, spec.in_features).transpose();
  for (Index r = 0; r < b; ++r) {
    T* row = out.data() + r * spec.out_features;
    for (Index c = 0; c < spec.out_features; ++c) row[c] += bias[c];
  }
  return out;
}

}  // namespace detail

// Forward pass over a batch [B x C x H x W], recording what backward needs.
template <typename T>
ForwardTrace<T> forward_trace(const Model<T>& model, const Tensor<T>& batch) {
  if (batch.rank() != 4) throw ShapeError("forward expects a batch [B x C x H x W]");
  ForwardTrace<T> trace;
  trace.batch = batch.dim(0);
  trace.input = batch;
  trace.conv_cols.resize(model.layers.size());
  trace.pool_argmax.resize(model.layers.size());

  const Tensor<T>* cur = &trace.input;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const LayerSpec& spec = model.layers[i];
    Tensor<T> out;
    switch (spec.kind) {
      case LayerKind::kConv2d:
        out = detail::conv_forward_batch(spec, *cur, detail::group(model, spec.name + ".weight").value,
                                         detail::group(model, spec.name + ".bias").value, &trace.conv_cols[i]);
        break;
      case LayerKind::kLinear:
        out = detail::linear_forward_batch(spec, *cur, detail::group(model, spec.name + ".weight").value,
                                           detail::group(model, spec.name + ".bias").value);
        break;
      case LayerKind::kRelu:
        out = relu(*cur);
        break;
      case LayerKind::kMaxPool2d:
        out = maxpool2d(*cur, spec.window, spec.pool_stride, &trace.pool_argmax[i]);
        break;
      case LayerKind::kFlatten:
        out = Tensor<T>({cur->dim(0), cur->size() / cur->dim(0)}, std::vector<T>(cur->values().begin(), cur->values().end()));
        break;
    }
    trace.outputs.push_back(std::move(out));
    cur = &trace.outputs.back();
  }
  trace.valid = true;
  return trace;
}

// Logits for a batch, without recording anything.
template <typename T>
Tensor<T> forward(const Model<T>& model, const Tensor<T>& batch) {
  return forward_trace(model, batch).outputs.back();
}

// Gradients of loss_scale * mean cross-entropy w.r.t. every parameter group.
template <typename T>
Gradients<T> backward(const Model<T>& model, const ForwardTrace<T>& trace, std::span<const std::int32_t> labels,
                      double loss_scale = 1.0) {
  if (!trace.valid) throw StateError("backward called without a recorded forward pass");
  if (static_cast<Index>(labels.size()) != trace.batch) throw ValueError("backward: label count mismatch");

  Gradients<T> grads;
  grads.by_param.reserve(model.params.size());
  for (const auto& g : model.params) grads.by_param.emplace_back(g.value.shape());
  auto grad_of = [&](const std::string& cls) -> Tensor<T>& {
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      if (model.params[i].cls == cls) return grads.by_param[i];
    }
    throw StateError("missing parameter group " + cls);
  };

  // d(mean CE)/d logits = (softmax - onehot) / B, times the loss scale.
  const Tensor<T>& logits = trace.logits();
  const Index classes = logits.dim(1);
  Tensor<T> delta = softmax(logits);
  for (Index r = 0; r < trace.batch; ++r) {
    const std::int32_t label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes) throw ValueError("invalid label " + std::to_string(label));
    delta[r * classes + label] -= T{1};
  }
  const T scale = static_cast<T>(loss_scale / static_cast<double>(trace.batch));
  for (Index i = 0; i < delta.size(); ++i) delta[i] *= scale;

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const LayerSpec& spec = model.layers[li];
    const Tensor<T>& in = li == 0 ? trace.input : trace.outputs[li - 1];
    const Tensor<T>& out = trace.outputs[li];
    Tensor<T> din;
    switch (spec.kind) {
      case LayerKind::kConv2d: {
        const Index b = in.dim(0), h = in.dim(2), w = in.dim(3);
        const Index oh = out.dim(2), ow = out.dim(3), win = oh * ow;
        const Index patch = spec.in_channels * spec.kernel * spec.kernel;
        const Tensor<T>& cols = trace.conv_cols[li];

        Tensor<T> dout_mat({spec.out_channels, b * win});
        for (Index s = 0; s < b; ++s) {
          for (Index o = 0; o < spec.out_channels; ++o) {
            const T* src = delta.data() + (s * spec.out_channels + o) * win;
            T* dst = dout_mat.data() + o * b * win + s * win;
            std::copy(src, src + win, dst);
          }
        }

        Tensor<T>& dw = grad_of(spec.name + ".weight");
        dw.mat(spec.out_channels, patch).noalias() =
            dout_mat.mat(spec.out_channels, b * win) * cols.mat(patch, b * win).transpose();
        Tensor<T>& db = grad_of(spec.name + ".bias");
        for (Index o = 0; o < spec.out_channels; ++o) {
          const T* row = dout_mat.data() + o * b * win;
          T sum{0};
          for (Index i = 0; i < b * win; ++i) sum += row[i];
          db[o] = sum;
        }

        const Tensor<T>& weight = detail::group(model, spec.name + ".weight").value;
        Tensor<T> dcols({patch, b * win});
        dcols.mat(patch, b * win).noalias() =
            weight.mat(spec.out_channels, patch).transpose() * dout_mat.mat(spec.out_channels, b * win);
        din = Tensor<T>(in.shape());
        for (Index s = 0; s < b; ++s) {
          col2im(dcols.data() + s * win, b * win, spec.in_channels, h, w, spec.kernel, spec.kernel, spec.stride,
                 spec.padding, din.data() + s * spec.in_channels * h * w);
        }
        break;
      }
      case LayerKind::kLinear: {
        const Index b = in.dim(0);
        Tensor<T>& dw = grad_of(spec.name + ".weight");
        dw.mat(spec.out_features, spec.in_features).noalias() =
            delta.mat(b, spec.out_features).transpose() * in.mat(b, spec.in_features);
        Tensor<T>& db = grad_of(spec.name + ".bias");
        for (Index c = 0; c < spec.out_features; ++c) {
          T sum{0};
          for (Index r = 0; r < b; ++r) sum += delta[r * spec.out_features + c];
          db[c] = sum;
        }
        const Tensor<T>& weight = detail::group(model, spec.name + ".weight").value;
        din = Tensor<T>(in.shape());
        din.mat(b, spec.in_features).noalias() =
            delta.mat(b, spec.out_features) * weight.mat(spec.out_features, spec.in_features);
        break;
      }
      case LayerKind::kRelu: {
        din = Tensor<T>(in.shape());
        for (Index i = 0; i < in.size(); ++i) din[i] = out[i] > T{0} ? delta[i] : T{0};
        break;
      }
      case LayerKind::kMaxPool2d: {
        din = Tensor<T>(in.shape());
        const auto& argmax = trace.pool_argmax[li];
        for (std::size_t i = 0; i < argmax.size(); ++i) din[argmax[i]] += delta[static_cast<Index>(i)];
        break;
      }
      case LayerKind::kFlatten: {
        din = Tensor<T>(in.shape(), std::vector<T>(delta.values().begin(), delta.values().end()));
        break;
      }
    }
    delta = std::move(din);
  }
  return grads;
}

template <typename T>
Tensor<T> gather_batch(const Tensor<T>& inputs, std::span<const Index> order, Index begin, Index count) {
  const Index sample = inputs.size() / inputs.dim(0);
  Shape shape = inputs.shape();
  shape[0] = count;
  Tensor<T> out(std::move(shape));
  for (Index i = 0; i < count; ++i) {
    const T* src = inputs.data() + order[static_cast<std::size_t>(begin + i)] * sample;
    std::copy(src, src + sample, out.data() + i * sample);
  }
  return out;
}

// Plain SGD on mean cross-entropy. Gradients at masked positions are dropped
// and the values re-zeroed after each step, so pruned weights stay exactly 0.
template <typename T>
void train(Model<T>& model, const Dataset<T>& data, int epochs, double lr, Index batch_size, Rng& rng) {
  if (data.size() == 0) throw ValueError("train: empty dataset");
  if (epochs < 1) throw ValueError("train: epochs must be >= 1");
  if (!(lr > 0)) throw ValueError("train: learning rate must be positive");
  if (batch_size < 1) throw ValueError("train: batch size must be >= 1");
  data.validate();

  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  const T step = static_cast<T>(lr);

  for (int e = 0; e < epochs; ++e) {
    shuffle(order, rng);
    for (Index begin = 0; begin < data.size(); begin += batch_size) {
      const Index count = std::min(batch_size, data.size() - begin);
      Tensor<T> inputs = gather_batch(data.inputs, order, begin, count);
      std::vector<std::int32_t> labels(static_cast<std::size_t>(count));
      for (Index i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + i)])];

      ForwardTrace<T> trace = forward_trace(model, inputs);
      Gradients<T> grads = backward(model, trace, labels);
      for (std::size_t p = 0; p < model.params.size(); ++p) {
        auto& group = model.params[p];
        auto& grad = grads.by_param[p];
        for (Index i = 0; i < group.value.size(); ++i) {
          if (group.mask[i]) {
            group.value[i] -= step * grad[i];
          } else {
            group.value[i] = T{0};
          }
        }
      }
    }
  }
}

// Fraction of argmax-correct predictions; ties resolve to the lowest class
// index. Shards across threads with order-independent integer aggregation, so
// the result is identical for any thread count.
template <typename T>
double evaluate(const Model<T>& model, const Dataset<T>& data, unsigned threads = 1) {
  if (data.size() == 0) throw ValueError("evaluate: empty dataset");
  data.validate();
  const Index n = data.size();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));

  auto count_range = [&](Index begin, Index end) -> std::uint64_t {
    constexpr Index kChunk = 256;
    std::uint64_t correct = 0;
    std::vector<Index> order(static_cast<std::size_t>(end - begin));
    std::iota(order.begin(), order.end(), begin);
    for (Index at = 0; at < end - begin; at += kChunk) {
      const Index count = std::min(kChunk, end - begin - at);
      Tensor<T> inputs = gather_batch(data.inputs, order, at, count);
      Tensor<T> logits = forward(model, inputs);
      const Index classes = logits.dim(1);
      for (Index r = 0; r < count; ++r) {
        const T* row = logits.data() + r * classes;
        Index best = 0;
        for (Index c = 1; c < classes; ++c) {
          if (row[c] > row[best]) best = c;
        }
        if (best == data.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(at + r)])]) ++correct;
      }
    }
    return correct;
  };

  std::uint64_t correct = 0;
  if (threads == 1) {
    correct = count_range(0, n);
  } else {
    std::vector<std::uint64_t> partial(threads, 0);
    std::vector<std::thread> pool;
    const Index per = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const Index begin = std::min<Index>(t * per, n);
      const Index end = std::min<Index>(begin + per, n);
      pool.emplace_back([&, t, begin, end] { partial[t] = begin < end ? count_range(begin, end) : 0; });
    }
    for (auto& th : pool) th.join();
    for (std::uint64_t c : partial) correct += c;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace ncomp
