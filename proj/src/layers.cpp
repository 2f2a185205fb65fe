#include "scenechar/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace scenechar {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<const RowMat>;
using MutMatMap = Eigen::Map<RowMat>;

Tensor init_uniform(std::vector<std::size_t> shape, std::size_t fan_in,
                    Rng& rng) {
  Tensor t(std::move(shape));
  const double limit = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-limit, limit);
  return t;
}

void check_conv_input(const ConvLayer& layer, const Tensor& input) {
  if (input.rank() != 3) {
    throw std::invalid_argument("conv input must be [C,H,W], got " +
                                shape_to_string(input.shape()));
  }
  if (layer.weights.rank() != 4 || layer.weights.extent(0) != layer.k ||
      layer.weights.extent(2) != layer.f || layer.weights.extent(3) != layer.f) {
    throw std::invalid_argument("conv weights must be [k,C,f,f], got " +
                                shape_to_string(layer.weights.shape()));
  }
  if (input.extent(0) != layer.weights.extent(1)) {
    throw std::invalid_argument(
        "conv channel mismatch: input " + shape_to_string(input.shape()) +
        " vs weights " + shape_to_string(layer.weights.shape()));
  }
}

// Patch matrix [C*f*f, oh*ow]; column (y*ow + x) is the padded input window
// under output cell (y, x).
Tensor im2col(const Tensor& input, std::size_t f, std::size_t s, std::size_t p,
              Shape2D out) {
  const std::size_t channels = input.extent(0);
  const std::size_t in_h = input.extent(1);
  const std::size_t in_w = input.extent(2);
  Tensor cols({channels * f * f, out.height * out.width});
  double* col_data = cols.data();
  const std::size_t n_cols = out.height * out.width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < f; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const std::size_t row = (c * f + i) * f + j;
        double* dst = col_data + row * n_cols;
        for (std::size_t y = 0; y < out.height; ++y) {
          // signed: y*s + i - p may fall in the padding border
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s + i) -
                                    static_cast<std::ptrdiff_t>(p);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) {
            for (std::size_t x = 0; x < out.width; ++x) dst[y * out.width + x] = 0.0;
            continue;
          }
          const double* src = input.data() + (c * in_h + iy) * in_w;
          for (std::size_t x = 0; x < out.width; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * s + j) -
                                      static_cast<std::ptrdiff_t>(p);
            dst[y * out.width + x] =
                (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) ? 0.0
                                                                    : src[ix];
          }
        }
      }
    }
  }
  return cols;
}

// Inverse of im2col: scatter-adds patch columns back onto the input grid.
Tensor col2im(const Tensor& cols, std::size_t channels, std::size_t in_h,
              std::size_t in_w, std::size_t f, std::size_t s, std::size_t p,
              Shape2D out) {
  Tensor image({channels, in_h, in_w});
  const std::size_t n_cols = out.height * out.width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < f; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const std::size_t row = (c * f + i) * f + j;
        const double* src = cols.data() + row * n_cols;
        for (std::size_t y = 0; y < out.height; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s + i) -
                                    static_cast<std::ptrdiff_t>(p);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in_h)) continue;
          double* dst = image.data() + (c * in_h + iy) * in_w;
          for (std::size_t x = 0; x < out.width; ++x) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * s + j) -
                                      static_cast<std::ptrdiff_t>(p);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in_w)) continue;
            dst[ix] += src[y * out.width + x];
          }
        }
      }
    }
  }
  return image;
}

}  // namespace

ConvLayer make_conv_layer(std::size_t k, std::size_t in_channels,
                          std::size_t f, std::size_t s, std::size_t p,
                          Rng& rng) {
  if (k < 1 || in_channels < 1 || f < 1 || s < 1)
    throw std::invalid_argument("conv layer parameters must be >= 1");
  ConvLayer layer;
  layer.k = k;
  layer.f = f;
  layer.s = s;
  layer.p = p;
  layer.weights = init_uniform({k, in_channels, f, f}, in_channels * f * f, rng);
  layer.bias = Tensor({k});
  return layer;
}

FullyConnectedLayer make_fc_layer(std::size_t out_features,
                                  std::size_t in_features, Rng& rng) {
  if (out_features < 1 || in_features < 1)
    throw std::invalid_argument("fc layer dimensions must be >= 1");
  FullyConnectedLayer layer;
  layer.weights = init_uniform({out_features, in_features}, in_features, rng);
  layer.bias = Tensor({out_features});
  return layer;
}

Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
  check_conv_input(layer, input);
  const Shape2D out_shape =
      conv_output_shape({input.extent(1), input.extent(2)}, layer.f, layer.p,
                        layer.s);
  const std::size_t cff = input.extent(0) * layer.f * layer.f;
  const std::size_t n_cols = out_shape.height * out_shape.width;
  const Tensor cols = im2col(input, layer.f, layer.s, layer.p, out_shape);

  Tensor out({layer.k, out_shape.height, out_shape.width});
  MatMap w(layer.weights.data(), static_cast<Eigen::Index>(layer.k),
           static_cast<Eigen::Index>(cff));
  MatMap c(cols.data(), static_cast<Eigen::Index>(cff),
           static_cast<Eigen::Index>(n_cols));
  MutMatMap o(out.data(), static_cast<Eigen::Index>(layer.k),
              static_cast<Eigen::Index>(n_cols));
  o.noalias() = w * c;
  for (std::size_t f_idx = 0; f_idx < layer.k; ++f_idx) {
    double* row = out.data() + f_idx * n_cols;
    const double b = layer.bias[f_idx];
    for (std::size_t i = 0; i < n_cols; ++i) row[i] += b;
  }
  return out;
}

ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input,
                        const Tensor& grad_out) {
  check_conv_input(layer, input);
  const Shape2D out_shape =
      conv_output_shape({input.extent(1), input.extent(2)}, layer.f, layer.p,
                        layer.s);
  if (grad_out.rank() != 3 || grad_out.extent(0) != layer.k ||
      grad_out.extent(1) != out_shape.height ||
      grad_out.extent(2) != out_shape.width) {
    throw std::invalid_argument("conv grad_out shape " +
                                shape_to_string(grad_out.shape()) +
                                " does not match forward output");
  }
  const std::size_t channels = input.extent(0);
  const std::size_t cff = channels * layer.f * layer.f;
  const std::size_t n_cols = out_shape.height * out_shape.width;
  const Tensor cols = im2col(input, layer.f, layer.s, layer.p, out_shape);

  ConvGrads grads;
  grads.bias = Tensor({layer.k});
  for (std::size_t f_idx = 0; f_idx < layer.k; ++f_idx) {
    const double* row = grad_out.data() + f_idx * n_cols;
    double sum = 0.0;
    for (std::size_t i = 0; i < n_cols; ++i) sum += row[i];
    grads.bias[f_idx] = sum;
  }

  grads.weights = Tensor(layer.weights.shape());
  MatMap g(grad_out.data(), static_cast<Eigen::Index>(layer.k),
           static_cast<Eigen::Index>(n_cols));
  MatMap c(cols.data(), static_cast<Eigen::Index>(cff),
           static_cast<Eigen::Index>(n_cols));
  MutMatMap gw(grads.weights.data(), static_cast<Eigen::Index>(layer.k),
               static_cast<Eigen::Index>(cff));
  gw.noalias() = g * c.transpose();

  Tensor grad_cols({cff, n_cols});
  MatMap w(layer.weights.data(), static_cast<Eigen::Index>(layer.k),
           static_cast<Eigen::Index>(cff));
  MutMatMap gc(grad_cols.data(), static_cast<Eigen::Index>(cff),
               static_cast<Eigen::Index>(n_cols));
  gc.noalias() = w.transpose() * g;
  grads.input = col2im(grad_cols, channels, input.extent(1), input.extent(2),
                       layer.f, layer.s, layer.p, out_shape);
  return grads;
}

MaxPoolResult maxpool_forward(const MaxPoolLayer& layer, const Tensor& input) {
  if (input.rank() != 3) {
    throw std::invalid_argument("maxpool input must be [C,H,W], got " +
                                shape_to_string(input.shape()));
  }
  const Shape2D out_shape =
      conv_output_shape({input.extent(1), input.extent(2)}, layer.window, 0,
                        layer.stride);
  const std::size_t channels = input.extent(0);
  const std::size_t in_h = input.extent(1);
  const std::size_t in_w = input.extent(2);

  MaxPoolResult result;
  result.output = Tensor({channels, out_shape.height, out_shape.width});
  result.argmax.resize(result.output.size());
  std::size_t cell = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_shape.height; ++y) {
      for (std::size_t x = 0; x < out_shape.width; ++x, ++cell) {
        std::size_t best_idx = (c * in_h + y * layer.stride) * in_w +
                               x * layer.stride;
        double best = input[best_idx];
        for (std::size_t i = 0; i < layer.window; ++i) {
          const std::size_t iy = y * layer.stride + i;
          const double* row = input.data() + (c * in_h + iy) * in_w;
          for (std::size_t j = 0; j < layer.window; ++j) {
            const std::size_t ix = x * layer.stride + j;
            if (row[ix] > best) {
              best = row[ix];
              best_idx = (c * in_h + iy) * in_w + ix;
            }
          }
        }
        result.output[cell] = best;
        result.argmax[cell] = best_idx;
      }
    }
  }
  return result;
}

Tensor maxpool_backward(const std::vector<std::size_t>& argmax,
                        const Tensor& grad_out,
                        const std::vector<std::size_t>& input_shape) {
  if (grad_out.size() != argmax.size()) {
    throw std::invalid_argument(
        "maxpool grad_out has " + std::to_string(grad_out.size()) +
        " cells but the argmax map has " + std::to_string(argmax.size()));
  }
  Tensor grad_input(input_shape);
  for (std::size_t cell = 0; cell < argmax.size(); ++cell) {
    if (argmax[cell] >= grad_input.size()) {
      throw std::invalid_argument("argmax map does not fit input shape " +
                                  shape_to_string(input_shape));
    }
    grad_input[argmax[cell]] += grad_out[cell];
  }
  return grad_input;
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  if (input.shape() != grad_out.shape()) {
    throw std::invalid_argument("relu_backward shape mismatch: " +
                                shape_to_string(input.shape()) + " vs " +
                                shape_to_string(grad_out.shape()));
  }
  Tensor grad(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    grad[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return grad;
}

Tensor fc_forward(const FullyConnectedLayer& layer, const Tensor& input) {
  const std::size_t out_n = layer.weights.extent(0);
  const std::size_t in_n = layer.weights.extent(1);
  if (input.rank() != 1 || input.size() != in_n) {
    throw std::invalid_argument("fc input length " +
                                shape_to_string(input.shape()) +
                                " does not match weights " +
                                shape_to_string(layer.weights.shape()));
  }
  Tensor out({out_n});
  MatMap w(layer.weights.data(), static_cast<Eigen::Index>(out_n),
           static_cast<Eigen::Index>(in_n));
  Eigen::Map<const Eigen::VectorXd> x(input.data(),
                                      static_cast<Eigen::Index>(in_n));
  Eigen::Map<const Eigen::VectorXd> b(layer.bias.data(),
                                      static_cast<Eigen::Index>(out_n));
  Eigen::Map<Eigen::VectorXd> y(out.data(), static_cast<Eigen::Index>(out_n));
  y.noalias() = w * x + b;
  return out;
}

FcGrads fc_backward(const FullyConnectedLayer& layer, const Tensor& input,
                    const Tensor& grad_out) {
  const std::size_t out_n = layer.weights.extent(0);
  const std::size_t in_n = layer.weights.extent(1);
  if (input.rank() != 1 || input.size() != in_n)
    throw std::invalid_argument("fc_backward input length mismatch");
  if (grad_out.rank() != 1 || grad_out.size() != out_n)
    throw std::invalid_argument("fc_backward grad_out length mismatch");

  FcGrads grads;
  grads.bias = grad_out;
  grads.weights = Tensor({out_n, in_n});
  for (std::size_t o = 0; o < out_n; ++o) {
    double* row = grads.weights.data() + o * in_n;
    const double g = grad_out[o];
    for (std::size_t i = 0; i < in_n; ++i) row[i] = g * input[i];
  }
  grads.input = Tensor({in_n});
  MatMap w(layer.weights.data(), static_cast<Eigen::Index>(out_n),
           static_cast<Eigen::Index>(in_n));
  Eigen::Map<const Eigen::VectorXd> g(grad_out.data(),
                                      static_cast<Eigen::Index>(out_n));
  Eigen::Map<Eigen::VectorXd> gx(grads.input.data(),
                                 static_cast<Eigen::Index>(in_n));
  gx.noalias() = w.transpose() * g;
  return grads;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 1 || logits.size() < 1)
    throw std::invalid_argument("softmax expects a non-empty rank-1 tensor");
  double max_logit = logits[0];
  for (std::size_t i = 1; i < logits.size(); ++i)
    max_logit = std::max(max_logit, logits[i]);
  Tensor probs(logits.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] /= sum;
  return probs;
}

}  // namespace scenechar
