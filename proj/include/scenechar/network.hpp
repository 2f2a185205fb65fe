#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "scenechar/layers.hpp"
#include "scenechar/tensor.hpp"

namespace scenechar {

// Declarative layer stack. Shapes are chain-checked before any parameters
// are allocated or any training starts.
struct ConvSpec {
  std::size_t k = 0, f = 0, s = 1, p = 0;
};
struct ReluSpec {};
struct MaxPoolSpec {
  std::size_t window = 2, stride = 2;
};
struct FlattenSpec {};
struct FcSpec {
  std::size_t out = 0;
};
struct SoftmaxSpec {};

using LayerSpec =
    std::variant<ConvSpec, ReluSpec, MaxPoolSpec, FlattenSpec, FcSpec,
                 SoftmaxSpec>;

struct NetworkSpec {
  std::size_t in_channels = 1;
  std::size_t in_height = 50;
  std::size_t in_width = 50;
  std::vector<LayerSpec> layers;
};

// Output shape of every layer, starting with the input shape. Throws with a
// per-layer description when consecutive layers do not chain.
std::vector<std::vector<std::size_t>> chain_shapes(const NetworkSpec& spec);

std::string layer_spec_name(const LayerSpec& spec);

class Network;

struct ForwardCache {
  // activations[i] is the input of layer i; the final entry is the logits.
  std::vector<Tensor> activations;
  // Argmax maps for maxpool layers, indexed by layer position.
  std::vector<std::vector<std::size_t>> pool_argmax;
};

class Network {
 public:
  Network() = default;
  // Materializes parameters with the seeded init from layers.hpp.
  Network(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }

  // Logits, pre-softmax; a trailing SoftmaxSpec is evaluated by the loss or
  // by predict_probs, never here. Pure: repeated calls are bit-identical.
  Tensor forward(const Tensor& input, ForwardCache* cache = nullptr) const;

  Tensor predict_probs(const Tensor& input) const;

  struct Gradients {
    // Aligned with spec().layers; empty tensors for parameterless layers.
    std::vector<Tensor> weights;
    std::vector<Tensor> bias;

    void accumulate(const Gradients& other);
    void scale(double factor);
  };

  Gradients zero_gradients() const;

  // Backpropagates grad_logits through the cached activations, filling
  // grads (accumulating onto whatever is there) and returning the gradient
  // w.r.t. the network input.
  Tensor backward(const ForwardCache& cache, const Tensor& grad_logits,
                  Gradients& grads) const;

  void apply_sgd(const Gradients& grads, double lr);

  // Parameter tensors in declaration order (weights then bias per layer).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  // One human-readable name per parameters() entry, e.g. "conv1.weights".
  std::vector<std::string> parameter_names() const;

  const std::vector<ConvLayer>& conv_layers() const { return convs_; }
  const std::vector<FullyConnectedLayer>& fc_layers() const { return fcs_; }

 private:
  friend Network load_network_params(const NetworkSpec&,
                                     std::vector<Tensor>);

  NetworkSpec spec_;
  // Parameter storage; layer i of the spec maps into these via param_index_.
  std::vector<ConvLayer> convs_;
  std::vector<FullyConnectedLayer> fcs_;
  // For each spec layer: index into convs_ or fcs_, or npos.
  std::vector<std::size_t> param_index_;

  void index_layers();
};

// checkpoint file: "scenechar checkpoint v1" line, one JSON line holding the
// network spec, input normalization mean and an optional config echo, then
// each parameter tensor in declaration order as
//   u32 rank, u64 dims[rank], f64 values[prod(dims)]   (little-endian).
// Writing is canonical, so load followed by save is byte-exact.
struct Checkpoint {
  Network network;
  double input_mean = 0.0;
  // Opaque provenance echo (JSON text) carried through save/load.
  std::string config_echo;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace scenechar
