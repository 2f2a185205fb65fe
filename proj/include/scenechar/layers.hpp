#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scenechar/rng.hpp"
#include "scenechar/tensor.hpp"

namespace scenechar {

// 2-D convolution: k square filters of extent f, stride s, zero padding p.
// weights is [k, in_channels, f, f], bias is [k].
struct ConvLayer {
  std::size_t k = 0;
  std::size_t f = 0;
  std::size_t s = 1;
  std::size_t p = 0;
  Tensor weights;
  Tensor bias;
};

struct MaxPoolLayer {
  std::size_t window = 2;
  std::size_t stride = 2;
};

// weights is [out_features, in_features], bias is [out_features].
struct FullyConnectedLayer {
  Tensor weights;
  Tensor bias;
};

// Uniform init on [-sqrt(2/fan_in), +sqrt(2/fan_in)], biases zero.
ConvLayer make_conv_layer(std::size_t k, std::size_t in_channels,
                          std::size_t f, std::size_t s, std::size_t p,
                          Rng& rng);
FullyConnectedLayer make_fc_layer(std::size_t out_features,
                                  std::size_t in_features, Rng& rng);

// input [C, H, W] -> output [k, H', W'] with H', W' per conv_output_shape.
// out[o,y,x] = bias[o] + sum_{c,i,j} weights[o,c,i,j] * padded[c, y*s+i, x*s+j].
Tensor conv_forward(const ConvLayer& layer, const Tensor& input);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

// Gradients of sum(grad_out * output) w.r.t. input, weights and bias.
ConvGrads conv_backward(const ConvLayer& layer, const Tensor& input,
                        const Tensor& grad_out);

struct MaxPoolResult {
  Tensor output;
  // Flat input index of the chosen element per output cell, row-major over
  // the output; ties resolve to the first maximal element in row-major order.
  std::vector<std::size_t> argmax;
};

MaxPoolResult maxpool_forward(const MaxPoolLayer& layer, const Tensor& input);

// Routes grad_out back to the recorded argmax positions, summing where
// overlapping windows picked the same element.
Tensor maxpool_backward(const std::vector<std::size_t>& argmax,
                        const Tensor& grad_out,
                        const std::vector<std::size_t>& input_shape);

Tensor relu(const Tensor& input);
// Passes grad_out where input > 0; the gradient at exactly 0 is 0.
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

// input and output are rank-1.
Tensor fc_forward(const FullyConnectedLayer& layer, const Tensor& input);

struct FcGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

FcGrads fc_backward(const FullyConnectedLayer& layer, const Tensor& input,
                    const Tensor& grad_out);

// Max-subtracted, so arbitrarily large logits stay finite.
Tensor softmax(const Tensor& logits);

}  // namespace scenechar
