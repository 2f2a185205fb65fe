#include "scenechar/network.hpp"

#include "json.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace scenechar {

namespace {

constexpr std::size_t kNoParams = std::numeric_limits<std::size_t>::max();
constexpr const char* kCheckpointMagic = "scenechar checkpoint v1";

using nlohmann::json;

json layer_to_json(const LayerSpec& layer) {
  json j;
  if (const auto* conv = std::get_if<ConvSpec>(&layer)) {
    j["type"] = "conv";
    j["k"] = conv->k;
    j["f"] = conv->f;
    j["s"] = conv->s;
    j["p"] = conv->p;
  } else if (std::holds_alternative<ReluSpec>(layer)) {
    j["type"] = "relu";
  } else if (const auto* pool = std::get_if<MaxPoolSpec>(&layer)) {
    j["type"] = "maxpool";
    j["window"] = pool->window;
    j["stride"] = pool->stride;
  } else if (std::holds_alternative<FlattenSpec>(layer)) {
    j["type"] = "flatten";
  } else if (const auto* fc = std::get_if<FcSpec>(&layer)) {
    j["type"] = "fc";
    j["out"] = fc->out;
  } else {
    j["type"] = "softmax";
  }
  return j;
}

LayerSpec layer_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv")
    return ConvSpec{j.at("k").get<std::size_t>(), j.at("f").get<std::size_t>(),
                    j.at("s").get<std::size_t>(), j.at("p").get<std::size_t>()};
  if (type == "relu") return ReluSpec{};
  if (type == "maxpool")
    return MaxPoolSpec{j.at("window").get<std::size_t>(),
                       j.at("stride").get<std::size_t>()};
  if (type == "flatten") return FlattenSpec{};
  if (type == "fc") return FcSpec{j.at("out").get<std::size_t>()};
  if (type == "softmax") return SoftmaxSpec{};
  throw std::runtime_error("checkpoint: unknown layer type '" + type + "'");
}

void write_tensor_binary(std::ostream& out, const Tensor& t) {
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  for (std::size_t extent : t.shape()) {
    const std::uint64_t e = extent;
    out.write(reinterpret_cast<const char*>(&e), sizeof e);
  }
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
}

Tensor read_tensor_binary(std::istream& in) {
  std::uint32_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), sizeof rank);
  if (!in || rank == 0 || rank > 8)
    throw std::runtime_error("checkpoint: bad tensor rank");
  std::vector<std::size_t> shape(rank);
  for (auto& extent : shape) {
    std::uint64_t e = 0;
    in.read(reinterpret_cast<char*>(&e), sizeof e);
    extent = static_cast<std::size_t>(e);
  }
  Tensor t(std::move(shape));
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated tensor data");
  return t;
}

}  // namespace

std::string layer_spec_name(const LayerSpec& spec) {
  return layer_to_json(spec).at("type").get<std::string>();
}

std::vector<std::vector<std::size_t>> chain_shapes(const NetworkSpec& spec) {
  if (spec.in_channels < 1 || spec.in_height < 1 || spec.in_width < 1)
    throw std::invalid_argument("network input extents must be >= 1");
  std::vector<std::vector<std::size_t>> shapes;
  shapes.push_back({spec.in_channels, spec.in_height, spec.in_width});
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& cur = shapes.back();
    const auto describe = [&](const std::string& what) {
      return "layer " + std::to_string(i) + " (" +
             layer_spec_name(spec.layers[i]) + "): " + what + "; input " +
             shape_to_string(cur);
    };
    if (std::holds_alternative<SoftmaxSpec>(spec.layers[i]) &&
        i + 1 != spec.layers.size())
      throw std::invalid_argument(describe("softmax must be the final layer"));

    if (const auto* conv = std::get_if<ConvSpec>(&spec.layers[i])) {
      if (cur.size() != 3)
        throw std::invalid_argument(describe("expects a [C,H,W] input"));
      Shape2D out;
      try {
        out = conv_output_shape({cur[1], cur[2]}, conv->f, conv->p, conv->s);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(describe(e.what()));
      }
      shapes.push_back({conv->k, out.height, out.width});
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec.layers[i])) {
      if (cur.size() != 3)
        throw std::invalid_argument(describe("expects a [C,H,W] input"));
      Shape2D out;
      try {
        out = conv_output_shape({cur[1], cur[2]}, pool->window, 0,
                                pool->stride);
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(describe(e.what()));
      }
      shapes.push_back({cur[0], out.height, out.width});
    } else if (std::holds_alternative<FlattenSpec>(spec.layers[i])) {
      std::size_t n = 1;
      for (std::size_t extent : cur) n *= extent;
      shapes.push_back({n});
    } else if (const auto* fc = std::get_if<FcSpec>(&spec.layers[i])) {
      if (cur.size() != 1)
        throw std::invalid_argument(
            describe("expects a flattened rank-1 input"));
      shapes.push_back({fc->out});
    } else {
      // relu / softmax keep the shape
      if (std::holds_alternative<SoftmaxSpec>(spec.layers[i]) &&
          cur.size() != 1)
        throw std::invalid_argument(describe("expects a rank-1 input"));
      shapes.push_back(cur);
    }
  }
  return shapes;
}

void Network::index_layers() {
  param_index_.assign(spec_.layers.size(), kNoParams);
  std::size_t conv_i = 0, fc_i = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (std::holds_alternative<ConvSpec>(spec_.layers[i]))
      param_index_[i] = conv_i++;
    else if (std::holds_alternative<FcSpec>(spec_.layers[i]))
      param_index_[i] = fc_i++;
  }
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  const auto shapes = chain_shapes(spec_);
  index_layers();
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    Rng rng = Rng::derive(seed, i);
    if (const auto* conv = std::get_if<ConvSpec>(&spec_.layers[i])) {
      convs_.push_back(make_conv_layer(conv->k, shapes[i][0], conv->f, conv->s,
                                       conv->p, rng));
    } else if (const auto* fc = std::get_if<FcSpec>(&spec_.layers[i])) {
      fcs_.push_back(make_fc_layer(fc->out, shapes[i][0], rng));
    }
  }
}

Tensor Network::forward(const Tensor& input, ForwardCache* cache) const {
  if (input.shape() !=
      std::vector<std::size_t>{spec_.in_channels, spec_.in_height,
                               spec_.in_width}) {
    throw std::invalid_argument(
        "network input shape " + shape_to_string(input.shape()) +
        " does not match spec input [" + std::to_string(spec_.in_channels) +
        " " + std::to_string(spec_.in_height) + " " +
        std::to_string(spec_.in_width) + "]");
  }
  if (cache) {
    cache->activations.clear();
    cache->pool_argmax.assign(spec_.layers.size(), {});
    cache->activations.push_back(input);
  }
  Tensor current = input;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (std::holds_alternative<ConvSpec>(spec_.layers[i])) {
      current = conv_forward(convs_[param_index_[i]], current);
    } else if (std::holds_alternative<ReluSpec>(spec_.layers[i])) {
      current = relu(current);
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec_.layers[i])) {
      MaxPoolResult result =
          maxpool_forward({pool->window, pool->stride}, current);
      if (cache) cache->pool_argmax[i] = std::move(result.argmax);
      current = std::move(result.output);
    } else if (std::holds_alternative<FlattenSpec>(spec_.layers[i])) {
      current = current.reshaped({current.size()});
    } else if (std::holds_alternative<FcSpec>(spec_.layers[i])) {
      current = fc_forward(fcs_[param_index_[i]], current);
    }
    // SoftmaxSpec: identity here, evaluated by the loss / predict_probs.
    if (cache) cache->activations.push_back(current);
  }
  return current;
}

Tensor Network::predict_probs(const Tensor& input) const {
  return softmax(forward(input));
}

void Network::Gradients::accumulate(const Gradients& other) {
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (std::size_t j = 0; j < weights[i].size(); ++j)
      weights[i][j] += other.weights[i][j];
    for (std::size_t j = 0; j < bias[i].size(); ++j)
      bias[i][j] += other.bias[i][j];
  }
}

void Network::Gradients::scale(double factor) {
  for (auto& t : weights)
    for (std::size_t j = 0; j < t.size(); ++j) t[j] *= factor;
  for (auto& t : bias)
    for (std::size_t j = 0; j < t.size(); ++j) t[j] *= factor;
}

Network::Gradients Network::zero_gradients() const {
  Gradients grads;
  grads.weights.resize(spec_.layers.size());
  grads.bias.resize(spec_.layers.size());
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (std::holds_alternative<ConvSpec>(spec_.layers[i])) {
      grads.weights[i] = Tensor(convs_[param_index_[i]].weights.shape());
      grads.bias[i] = Tensor(convs_[param_index_[i]].bias.shape());
    } else if (std::holds_alternative<FcSpec>(spec_.layers[i])) {
      grads.weights[i] = Tensor(fcs_[param_index_[i]].weights.shape());
      grads.bias[i] = Tensor(fcs_[param_index_[i]].bias.shape());
    }
  }
  return grads;
}

Tensor Network::backward(const ForwardCache& cache, const Tensor& grad_logits,
                         Gradients& grads) const {
  if (cache.activations.size() != spec_.layers.size() + 1)
    throw std::invalid_argument("backward: cache does not match this network");
  if (grads.weights.size() != spec_.layers.size())
    throw std::invalid_argument("backward: gradients not sized for network");

  Tensor grad = grad_logits;
  for (std::size_t idx = spec_.layers.size(); idx-- > 0;) {
    const Tensor& layer_input = cache.activations[idx];
    if (std::holds_alternative<ConvSpec>(spec_.layers[idx])) {
      ConvGrads cg =
          conv_backward(convs_[param_index_[idx]], layer_input, grad);
      for (std::size_t j = 0; j < cg.weights.size(); ++j)
        grads.weights[idx][j] += cg.weights[j];
      for (std::size_t j = 0; j < cg.bias.size(); ++j)
        grads.bias[idx][j] += cg.bias[j];
      grad = std::move(cg.input);
    } else if (std::holds_alternative<ReluSpec>(spec_.layers[idx])) {
      grad = relu_backward(layer_input, grad);
    } else if (std::holds_alternative<MaxPoolSpec>(spec_.layers[idx])) {
      grad = maxpool_backward(cache.pool_argmax[idx], grad,
                              layer_input.shape());
    } else if (std::holds_alternative<FlattenSpec>(spec_.layers[idx])) {
      grad = grad.reshaped(layer_input.shape());
    } else if (std::holds_alternative<FcSpec>(spec_.layers[idx])) {
      FcGrads fg = fc_backward(fcs_[param_index_[idx]], layer_input, grad);
      for (std::size_t j = 0; j < fg.weights.size(); ++j)
        grads.weights[idx][j] += fg.weights[j];
      for (std::size_t j = 0; j < fg.bias.size(); ++j)
        grads.bias[idx][j] += fg.bias[j];
      grad = std::move(fg.input);
    }
    // SoftmaxSpec: grad_logits already accounts for it (fused with the loss).
  }
  return grad;
}

void Network::apply_sgd(const Gradients& grads, double lr) {
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (param_index_[i] == kNoParams) continue;
    if (std::holds_alternative<ConvSpec>(spec_.layers[i])) {
      ConvLayer& layer = convs_[param_index_[i]];
      for (std::size_t j = 0; j < layer.weights.size(); ++j)
        layer.weights[j] -= lr * grads.weights[i][j];
      for (std::size_t j = 0; j < layer.bias.size(); ++j)
        layer.bias[j] -= lr * grads.bias[i][j];
    } else {
      FullyConnectedLayer& layer = fcs_[param_index_[i]];
      for (std::size_t j = 0; j < layer.weights.size(); ++j)
        layer.weights[j] -= lr * grads.weights[i][j];
      for (std::size_t j = 0; j < layer.bias.size(); ++j)
        layer.bias[j] -= lr * grads.bias[i][j];
    }
  }
}

std::vector<Tensor*> Network::parameters() {
  std::vector<Tensor*> params;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    if (std::holds_alternative<ConvSpec>(spec_.layers[i])) {
      params.push_back(&convs_[param_index_[i]].weights);
      params.push_back(&convs_[param_index_[i]].bias);
    } else if (std::holds_alternative<FcSpec>(spec_.layers[i])) {
      params.push_back(&fcs_[param_index_[i]].weights);
      params.push_back(&fcs_[param_index_[i]].bias);
    }
  }
  return params;
}

std::vector<const Tensor*> Network::parameters() const {
  std::vector<const Tensor*> params;
  for (Tensor* t : const_cast<Network*>(this)->parameters()) params.push_back(t);
  return params;
}

std::vector<std::string> Network::parameter_names() const {
  std::vector<std::string> names;
  std::size_t conv_n = 0, fc_n = 0;
  for (const auto& layer : spec_.layers) {
    if (std::holds_alternative<ConvSpec>(layer)) {
      const std::string base = "conv" + std::to_string(++conv_n);
      names.push_back(base + ".weights");
      names.push_back(base + ".bias");
    } else if (std::holds_alternative<FcSpec>(layer)) {
      const std::string base = "fc" + std::to_string(++fc_n);
      names.push_back(base + ".weights");
      names.push_back(base + ".bias");
    }
  }
  return names;
}

Network load_network_params(const NetworkSpec& spec,
                            std::vector<Tensor> params) {
  Network net;
  net.spec_ = spec;
  const auto shapes = chain_shapes(spec);
  net.index_layers();
  std::size_t next = 0;
  const auto take = [&](const std::vector<std::size_t>& want) {
    if (next >= params.size())
      throw std::runtime_error("checkpoint: missing parameter tensors");
    if (params[next].shape() != want)
      throw std::runtime_error("checkpoint: parameter shape " +
                               shape_to_string(params[next].shape()) +
                               " does not match spec shape " +
                               shape_to_string(want));
    return std::move(params[next++]);
  };
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (const auto* conv = std::get_if<ConvSpec>(&spec.layers[i])) {
      ConvLayer layer;
      layer.k = conv->k;
      layer.f = conv->f;
      layer.s = conv->s;
      layer.p = conv->p;
      layer.weights = take({conv->k, shapes[i][0], conv->f, conv->f});
      layer.bias = take({conv->k});
      net.convs_.push_back(std::move(layer));
    } else if (const auto* fc = std::get_if<FcSpec>(&spec.layers[i])) {
      FullyConnectedLayer layer;
      layer.weights = take({fc->out, shapes[i][0]});
      layer.bias = take({fc->out});
      net.fcs_.push_back(std::move(layer));
    }
  }
  if (next != params.size())
    throw std::runtime_error("checkpoint: extra parameter tensors");
  return net;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  json header;
  header["in"] = {ckpt.network.spec().in_channels,
                  ckpt.network.spec().in_height, ckpt.network.spec().in_width};
  header["input_mean"] = ckpt.input_mean;
  json layers = json::array();
  for (const auto& layer : ckpt.network.spec().layers)
    layers.push_back(layer_to_json(layer));
  header["layers"] = layers;
  header["config"] =
      ckpt.config_echo.empty() ? json() : json::parse(ckpt.config_echo);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  out << kCheckpointMagic << '\n' << header.dump() << '\n';
  for (const Tensor* t : ckpt.network.parameters()) write_tensor_binary(out, *t);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic)
    throw std::runtime_error("not a scenechar v1 checkpoint: " + path.string());
  std::getline(in, header_line);
  const json header = json::parse(header_line);

  NetworkSpec spec;
  spec.in_channels = header.at("in").at(0).get<std::size_t>();
  spec.in_height = header.at("in").at(1).get<std::size_t>();
  spec.in_width = header.at("in").at(2).get<std::size_t>();
  for (const auto& j : header.at("layers")) spec.layers.push_back(layer_from_json(j));

  std::vector<Tensor> params;
  const std::size_t expected = [&] {
    std::size_t n = 0;
    for (const auto& layer : spec.layers)
      if (std::holds_alternative<ConvSpec>(layer) ||
          std::holds_alternative<FcSpec>(layer))
        n += 2;
    return n;
  }();
  for (std::size_t i = 0; i < expected; ++i)
    params.push_back(read_tensor_binary(in));

  Checkpoint ckpt;
  ckpt.network = load_network_params(spec, std::move(params));
  ckpt.input_mean = header.at("input_mean").get<double>();
  ckpt.config_echo =
      header.at("config").is_null() ? "" : header.at("config").dump();
  return ckpt;
}

}  // namespace scenechar
