#include "scenechar/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace scenechar {

CrossEntropyResult cross_entropy(const Tensor& probs, std::size_t label) {
  if (probs.rank() != 1)
    throw std::invalid_argument("cross_entropy expects rank-1 probabilities");
  if (label >= probs.size()) {
    throw std::invalid_argument("label " + std::to_string(label) +
                                " out of range for " +
                                std::to_string(probs.size()) + " classes");
  }
  CrossEntropyResult result;
  result.loss = -std::log(probs[label]);
  result.grad_logits = probs;
  result.grad_logits[label] -= 1.0;
  return result;
}

void sgd_step(Tensor& params, const Tensor& grads, double lr) {
  if (params.shape() != grads.shape()) {
    throw std::invalid_argument("sgd_step shape mismatch: " +
                                shape_to_string(params.shape()) + " vs " +
                                shape_to_string(grads.shape()));
  }
  double* p = params.data();
  const double* g = grads.data();
  for (std::size_t i = 0; i < params.size(); ++i) p[i] -= lr * g[i];
}

}  // namespace scenechar
