#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ncomp/tensor.hpp"

// Forward/backward kernels for the reference networks. All convolutions are
// cross-correlations (no kernel flip) with zero padding.

namespace ncomp {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 tensors");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> out({a.dim(0), b.dim(1)});
  out.mat(a.dim(0), b.dim(1)).noalias() = a.mat(a.dim(0), a.dim(1)) * b.mat(b.dim(0), b.dim(1));
  return out;
}

inline Index conv_out_dim(Index in, Index kernel, Index stride, Index padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// Patch matrix for one sample: [C*kh*kw x OH*OW], zero padding outside.
template <typename T>
void im2col(const T* input, Index channels, Index height, Index width, Index kh, Index kw, Index stride, Index padding,
            T* cols, Index col_stride) {
  const Index oh = conv_out_dim(height, kh, stride, padding);
  const Index ow = conv_out_dim(width, kw, stride, padding);
  Index row = 0;
  for (Index c = 0; c < channels; ++c) {
    const T* plane = input + c * height * width;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj, ++row) {
        T* dst = cols + row * col_stride;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - padding + ki;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * stride - padding + kj;
            const bool inside = iy >= 0 && iy < height && ix >= 0 && ix < width;
            dst[oy * ow + ox] = inside ? plane[iy * width + ix] : T{0};
          }
        }
      }
    }
  }
}

// Scatter-add of a patch matrix back onto the input plane (conv backward).
template <typename T>
void col2im(const T* cols, Index col_stride, Index channels, Index height, Index width, Index kh, Index kw,
            Index stride, Index padding, T* grad_input) {
  const Index oh = conv_out_dim(height, kh, stride, padding);
  const Index ow = conv_out_dim(width, kw, stride, padding);
  Index row = 0;
  for (Index c = 0; c < channels; ++c) {
    T* plane = grad_input + c * height * width;
    for (Index ki = 0; ki < kh; ++ki) {
      for (Index kj = 0; kj < kw; ++kj, ++row) {
        const T* src = cols + row * col_stride;
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - padding + ki;
          if (iy < 0 || iy >= height) continue;
          for (Index ox = 0; ox < ow; ++ox) {
            const Index ix = ox * stride - padding + kj;
            if (ix < 0 || ix >= width) continue;
            plane[iy * width + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

inline void check_conv_geometry(Index h, Index w, Index kh, Index kw, Index stride, Index padding) {
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: negative padding");
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
}

// Single-sample convolution: input [C_in x H x W], kernels [C_out x C_in x kh x kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias, Index stride = 1,
                 Index padding = 0) {
  if (input.rank() != 3) throw ShapeError("conv2d expects input [C x H x W]");
  if (kernels.rank() != 4) throw ShapeError("conv2d expects kernels [O x C x kh x kw]");
  if (kernels.dim(1) != input.dim(0)) throw ShapeError("conv2d: channel mismatch");
  if (bias.size() != kernels.dim(0)) throw ShapeError("conv2d: bias size mismatch");
  const Index c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const Index c_out = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  check_conv_geometry(h, w, kh, kw, stride, padding);
  const Index oh = conv_out_dim(h, kh, stride, padding);
  const Index ow = conv_out_dim(w, kw, stride, padding);

  Tensor<T> cols({c_in * kh * kw, oh * ow});
  im2col(input.data(), c_in, h, w, kh, kw, stride, padding, cols.data(), oh * ow);

  Tensor<T> out({c_out, oh, ow});
  out.mat(c_out, oh * ow).noalias() = kernels.mat(c_out, c_in * kh * kw) * cols.mat(c_in * kh * kw, oh * ow);
  for (Index o = 0; o < c_out; ++o) {
    T* plane = out.data() + o * oh * ow;
    for (Index i = 0; i < oh * ow; ++i) plane[i] += bias[o];
  }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (Index i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

// Per-window maximum over the two trailing spatial dims; works for [C x H x W]
// and [B x C x H x W]. stride == 0 means stride = window. argmax, when given,
// receives the flat input offset of each window's maximum.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, Index window, Index stride = 0, std::vector<Index>* argmax = nullptr) {
  if (x.rank() != 3 && x.rank() != 4) throw ShapeError("maxpool2d expects [C x H x W] or [B x C x H x W]");
  if (window < 1) throw ShapeError("maxpool2d: window must be >= 1");
  if (stride == 0) stride = window;
  const Index h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  if (window > h || window > w) throw ShapeError("maxpool2d: window exceeds spatial dims");
  const Index planes = x.size() / (h * w);
  const Index oh = (h - window) / stride + 1;
  const Index ow = (w - window) / stride + 1;

  Shape out_shape(x.shape());
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  Tensor<T> out(std::move(out_shape));
  if (argmax) argmax->assign(static_cast<std::size_t>(planes * oh * ow), 0);

  for (Index p = 0; p < planes; ++p) {
    const T* in_plane = x.data() + p * h * w;
    T* out_plane = out.data() + p * oh * ow;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        Index best = (oy * stride) * w + ox * stride;
        T best_v = in_plane[best];
        for (Index ki = 0; ki < window; ++ki) {
          for (Index kj = 0; kj < window; ++kj) {
            const Index idx = (oy * stride + ki) * w + ox * stride + kj;
            if (in_plane[idx] > best_v) {
              best_v = in_plane[idx];
              best = idx;
            }
          }
        }
        out_plane[oy * ow + ox] = best_v;
        if (argmax) (*argmax)[static_cast<std::size_t>(p * oh * ow + oy * ow + ox)] = p * h * w + best;
      }
    }
  }
  return out;
}

// Numerically stable row-wise softmax; accepts a vector or a [B x C] batch.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  if (logits.rank() != 1 && logits.rank() != 2) throw ShapeError("softmax expects rank 1 or 2");
  const Index cols = logits.dim(logits.rank() - 1);
  const Index rows = logits.size() / cols;
  Tensor<T> out(logits.shape());
  for (Index r = 0; r < rows; ++r) {
    const T* in = logits.data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = in[0];
    for (Index c = 1; c < cols; ++c) mx = std::max(mx, in[c]);
    T sum{0};
    for (Index c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - mx);
      sum += o[c];
    }
    for (Index c = 0; c < cols; ++c) o[c] /= sum;
  }
  return out;
}

// Mean negative log-likelihood of the true classes, computed via log-sum-exp.
template <typename T>
T cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects logits [B x C]");
  const Index batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<Index>(labels.size()) != batch) throw ValueError("cross_entropy: label count mismatch");
  T total{0};
  for (Index r = 0; r < batch; ++r) {
    const std::int32_t label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= classes) throw ValueError("invalid label " + std::to_string(label));
    const T* in = logits.data() + r * classes;
    T mx = in[0];
    for (Index c = 1; c < classes; ++c) mx = std::max(mx, in[c]);
    T sum{0};
    for (Index c = 0; c < classes; ++c) sum += std::exp(in[c] - mx);
    total += std::log(sum) + mx - in[label];
  }
  return total / static_cast<T>(batch);
}

}  // namespace ncomp
