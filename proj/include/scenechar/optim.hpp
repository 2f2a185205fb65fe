#pragma once

#include <cstddef>
#include <cstdint>

#include "scenechar/tensor.hpp"

namespace scenechar {

struct SgdConfig {
  double learning_rate = 0.005;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::uint64_t seed = 0;
};

struct CrossEntropyResult {
  double loss = 0.0;
  // Gradient w.r.t. the logits that produced probs: probs - one_hot(label).
  Tensor grad_logits;
};

// loss = -ln(probs[label]); probs must come from softmax.
CrossEntropyResult cross_entropy(const Tensor& probs, std::size_t label);

// params <- params - lr * grads, elementwise.
void sgd_step(Tensor& params, const Tensor& grads, double lr);

}  // namespace scenechar
