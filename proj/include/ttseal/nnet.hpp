#pragma once

// Small differentiable MLP engine: dense, TT-linear, ReLU and a terminal
// softmax. Parameters are addressed as blocks (dense weight, bias, TT-core) so
// that importance scoring, sealing and the attacker all share one view.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "ttseal/dataset.hpp"
#include "ttseal/error.hpp"
#include "ttseal/rng.hpp"
#include "ttseal/tt_tensor.hpp"

namespace ttseal {

enum class BlockKind : std::uint8_t { weight = 0, bias = 1, core = 2 };

/// Address of one parameter block inside a Model.
struct ParamKey {
  std::uint32_t layer = 0;
  BlockKind kind = BlockKind::weight;
  std::uint32_t index = 0;

  auto operator<=>(const ParamKey&) const = default;

  static ParamKey of(CoreId id) { return {id.layer, BlockKind::core, id.core}; }

  std::optional<CoreId> core_id() const {
    if (kind != BlockKind::core) return std::nullopt;
    return CoreId{layer, index};
  }

  std::string str() const {
    switch (kind) {
      case BlockKind::weight: return "L" + std::to_string(layer) + ".weight";
      case BlockKind::bias: return "L" + std::to_string(layer) + ".bias";
      case BlockKind::core: return "L" + std::to_string(layer) + ".core" + std::to_string(index);
    }
    return "?";
  }
};

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t in_size, std::size_t out_size)
      : in(in_size), out(out_size), weight(in_size * out_size, 0.0), bias(out_size, 0.0) {}
};

struct TTLinearLayer {
  TTTensor tt;
  ShapeDescriptor shape;
  std::vector<double> bias;

  std::size_t in() const { return shape.cols(); }
  std::size_t out() const { return shape.rows(); }
};

struct ReluLayer {
  std::size_t size = 0;
};

struct SoftmaxLayer {
  std::size_t size = 0;
};

using Layer = std::variant<DenseLayer, TTLinearLayer, ReluLayer, SoftmaxLayer>;

inline bool has_parameters(const Layer& layer) {
  return std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<TTLinearLayer>(layer);
}

namespace detail {
inline std::uint64_t next_model_token() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

class Model {
 public:
  Model() = default;

  Model(std::vector<Layer> layers, std::size_t class_count)
      : layers_(std::move(layers)), class_count_(class_count) {
    for (std::size_t l = 0; l < layers_.size(); ++l)
      if (auto* tt = std::get_if<TTLinearLayer>(&layers_[l]))
        tt->tt.set_layer(static_cast<std::uint32_t>(l));
    validate();
  }

  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t class_count() const { return class_count_; }

  std::size_t input_size() const { return size_in(layers_.front()); }

  // Identifies the exact parameter state; changes on every mutation.
  std::uint64_t token() const { return token_; }

  std::vector<ParamKey> parameter_keys() const {
    std::vector<ParamKey> keys;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto layer = static_cast<std::uint32_t>(l);
      if (std::holds_alternative<DenseLayer>(layers_[l])) {
        keys.push_back({layer, BlockKind::weight, 0});
        keys.push_back({layer, BlockKind::bias, 0});
      } else if (const auto* tt = std::get_if<TTLinearLayer>(&layers_[l])) {
        for (std::size_t k = 0; k < tt->tt.order(); ++k)
          keys.push_back({layer, BlockKind::core, static_cast<std::uint32_t>(k)});
        keys.push_back({layer, BlockKind::bias, 0});
      }
    }
    return keys;
  }

  std::vector<CoreId> core_ids() const {
    std::vector<CoreId> ids;
    for (const auto& key : parameter_keys())
      if (auto id = key.core_id()) ids.push_back(*id);
    return ids;
  }

  bool has_tt_cores() const {
    return std::any_of(layers_.begin(), layers_.end(),
                       [](const Layer& l) { return std::holds_alternative<TTLinearLayer>(l); });
  }

  const TTCore& core(CoreId id) const {
    const auto* tt = std::get_if<TTLinearLayer>(&layers_.at(id.layer));
    require(tt != nullptr && id.core < tt->tt.order(), ErrorKind::unknown_core,
            "no TT-core " + id.str() + " in model");
    return tt->tt.core(id.core);
  }

  std::span<const double> block(ParamKey key) const {
    return const_cast<Model*>(this)->block_impl(key);
  }

  std::span<double> mutable_block(ParamKey key) {
    token_ = detail::next_model_token();
    return block_impl(key);
  }

  bool contains(ParamKey key) const {
    if (key.layer >= layers_.size()) return false;
    const auto& layer = layers_[key.layer];
    if (std::holds_alternative<DenseLayer>(layer))
      return key.index == 0 && key.kind != BlockKind::core;
    if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
      if (key.kind == BlockKind::core) return key.index < tt->tt.order();
      return key.kind == BlockKind::bias && key.index == 0;
    }
    return false;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& key : parameter_keys()) n += block(key).size();
    return n;
  }

  /// Indices of the first and last layers that carry parameters.
  std::pair<std::uint32_t, std::uint32_t> boundary_layers() const {
    std::optional<std::uint32_t> first, last;
    for (std::size_t l = 0; l < layers_.size(); ++l)
      if (has_parameters(layers_[l])) {
        if (!first) first = static_cast<std::uint32_t>(l);
        last = static_cast<std::uint32_t>(l);
      }
    require(first.has_value(), ErrorKind::shape, "model has no parameterized layers");
    return {*first, *last};
  }

  /// Fan-in / fan-out used for the uniform initialization of a block.
  std::pair<std::size_t, std::size_t> fans(ParamKey key) const {
    const auto& layer = layers_.at(key.layer);
    if (const auto* d = std::get_if<DenseLayer>(&layer)) return {d->in, d->out};
    const auto& tt = std::get<TTLinearLayer>(layer);
    if (key.kind == BlockKind::bias) return {tt.in(), tt.out()};
    const auto& c = tt.tt.core(key.index);
    return {c.left_rank * tt.shape.col_factors[key.index],
            c.right_rank * tt.shape.row_factors[key.index]};
  }

  void validate() const {
    require(!layers_.empty(), ErrorKind::shape, "model without layers");
    std::size_t width = size_in(layers_.front());
    std::size_t softmax_count = 0;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      require(size_in(layer) == width, ErrorKind::shape,
              "layer " + std::to_string(l) + " expects input " + std::to_string(size_in(layer)) +
                  " but receives " + std::to_string(width));
      if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        require(d->weight.size() == d->in * d->out && d->bias.size() == d->out, ErrorKind::shape,
                "dense layer " + std::to_string(l) + " has inconsistent storage");
      } else if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
        tt->tt.validate();
        tt->shape.validate();
        detail::check_layout(tt->tt, tt->shape);
        require(tt->bias.size() == tt->out(), ErrorKind::shape,
                "TT layer " + std::to_string(l) + " bias size mismatch");
      } else if (std::holds_alternative<SoftmaxLayer>(layer)) {
        ++softmax_count;
        require(l + 1 == layers_.size(), ErrorKind::shape, "softmax must be the terminal layer");
      }
      width = size_out(layer);
      require(width >= 1, ErrorKind::degenerate, "layer " + std::to_string(l) + " has zero width");
    }
    require(softmax_count == 1, ErrorKind::shape, "model needs exactly one terminal softmax");
    require(width == class_count_, ErrorKind::shape, "output width differs from class count");
  }

  static std::size_t size_in(const Layer& layer) {
    return std::visit(
        [](const auto& l) -> std::size_t {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DenseLayer>) return l.in;
          else if constexpr (std::is_same_v<T, TTLinearLayer>) return l.in();
          else return l.size;
        },
        layer);
  }

  static std::size_t size_out(const Layer& layer) {
    return std::visit(
        [](const auto& l) -> std::size_t {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, DenseLayer>) return l.out;
          else if constexpr (std::is_same_v<T, TTLinearLayer>) return l.out();
          else return l.size;
        },
        layer);
  }

 private:
  std::span<double> block_impl(ParamKey key) {
    require(contains(key), ErrorKind::unknown_core, "no parameter block " + key.str());
    auto& layer = layers_[key.layer];
    if (auto* d = std::get_if<DenseLayer>(&layer))
      return key.kind == BlockKind::weight ? std::span<double>(d->weight) : std::span<double>(d->bias);
    auto& tt = std::get<TTLinearLayer>(layer);
    if (key.kind == BlockKind::bias) return tt.bias;
    return tt.tt.core_data(key.index);
  }

  std::vector<Layer> layers_;
  std::size_t class_count_ = 0;
  std::uint64_t token_ = detail::next_model_token();
};

/// Bitwise parameter equality (same topology assumed by key set).
inline bool same_parameters(const Model& a, const Model& b) {
  const auto keys = a.parameter_keys();
  if (keys != b.parameter_keys()) return false;
  for (const auto& k : keys) {
    auto x = a.block(k), y = b.block(k);
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i)
      if (std::bit_cast<std::uint64_t>(x[i]) != std::bit_cast<std::uint64_t>(y[i])) return false;
  }
  return true;
}

/// Re-initializes one block: weights and cores uniform in [-a, a] with
/// a = sqrt(6 / (fan_in + fan_out)); biases zero. The random stream depends
/// only on (seed, block address).
inline void init_block(Model& model, ParamKey key, std::uint64_t seed) {
  auto data = model.mutable_block(key);
  if (key.kind == BlockKind::bias) {
    std::fill(data.begin(), data.end(), 0.0);
    return;
  }
  const auto [fan_in, fan_out] = model.fans(key);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Rng rng(derive_seed(seed, {stream::init, key.layer, static_cast<std::uint64_t>(key.kind), key.index}));
  for (auto& v : data) v = rng.uniform(-a, a);
}

inline void initialize(Model& model, std::uint64_t seed) {
  for (const auto& key : model.parameter_keys()) init_block(model, key, seed);
}

/// Topology of the desk-scale MLP: dense(input -> hidden), ReLU, then
/// tt_layers TT-linear(hidden -> hidden) + ReLU, then dense(hidden -> classes)
/// and softmax. hidden = product(tt_factors); every TT mode has factors
/// (f, f) and all internal ranks equal tt_rank.
struct MlpSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> tt_factors = {4, 4, 4};
  std::size_t tt_layers = 2;
  std::size_t tt_rank = 4;
  std::size_t classes = 4;
};

inline TTTensor zero_tt(const ShapeDescriptor& shape, std::size_t rank) {
  std::vector<TTCore> cores;
  const auto modes = shape.mode_sizes();
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const std::size_t left = k == 0 ? 1 : rank;
    const std::size_t right = k + 1 == modes.size() ? 1 : rank;
    cores.emplace_back(CoreId{0, static_cast<std::uint32_t>(k)}, left, modes[k], right);
  }
  return TTTensor(std::move(cores));
}

inline Model make_mlp(const MlpSpec& spec, std::uint64_t seed) {
  const std::size_t hidden = product(spec.tt_factors);
  std::vector<Layer> layers;
  layers.emplace_back(DenseLayer(spec.input_dim, hidden));
  layers.emplace_back(ReluLayer{hidden});
  for (std::size_t t = 0; t < spec.tt_layers; ++t) {
    auto shape = ShapeDescriptor::matrix(spec.tt_factors, spec.tt_factors);
    layers.emplace_back(TTLinearLayer{zero_tt(shape, spec.tt_rank), shape,
                                      std::vector<double>(hidden, 0.0)});
    layers.emplace_back(ReluLayer{hidden});
  }
  layers.emplace_back(DenseLayer(hidden, spec.classes));
  layers.emplace_back(SoftmaxLayer{spec.classes});
  Model model(std::move(layers), spec.classes);
  initialize(model, seed);
  return model;
}

// ---------------------------------------------------------------------------
// forward / backward

struct ForwardCache {
  std::uint64_t token = 0;
  // activations[l] is the input of layer l; the last entry is the output y.
  std::vector<std::vector<double>> activations;

  std::span<const double> output() const& { return activations.back(); }
  std::span<const double> logits() const& { return activations[activations.size() - 2]; }
  // on a temporary cache, hand out the storage instead of a dangling view
  std::vector<double> output() && { return std::move(activations.back()); }
  std::vector<double> logits() && { return std::move(activations[activations.size() - 2]); }
};

inline ForwardCache forward(const Model& model, std::span<const double> x) {
  require(x.size() == model.input_size(), ErrorKind::shape,
          "forward: input has " + std::to_string(x.size()) + " features, model expects " +
              std::to_string(model.input_size()));
  ForwardCache cache;
  cache.token = model.token();
  cache.activations.reserve(model.layers().size() + 1);
  cache.activations.emplace_back(x.begin(), x.end());
  for (const auto& layer : model.layers()) {
    const auto& in = cache.activations.back();
    std::vector<double> out;
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      out = d->bias;
      for (std::size_t o = 0; o < d->out; ++o) {
        const double* w = &d->weight[o * d->in];
        double s = 0.0;
        for (std::size_t i = 0; i < d->in; ++i) s += w[i] * in[i];
        out[o] += s;
      }
    } else if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
      out = tt_apply(tt->tt, tt->shape, in);
      for (std::size_t o = 0; o < out.size(); ++o) out[o] += tt->bias[o];
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      out = in;
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
    } else {
      out = in;
      const double mx = *std::max_element(out.begin(), out.end());
      double s = 0.0;
      for (auto& v : out) s += (v = std::exp(v - mx));
      for (auto& v : out) v /= s;
    }
    cache.activations.push_back(std::move(out));
  }
  return cache;
}

/// Argmax of the output, ties to the lowest class index.
inline std::size_t argmax(std::span<const double> y) {
  return static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
}

inline std::size_t predict(const Model& model, std::span<const double> x) {
  return argmax(forward(model, x).output());
}

/// Cross-entropy of y against the label, computed from log-softmax.
inline double cross_entropy(const ForwardCache& cache, std::size_t label) {
  const auto z = cache.logits();
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  return -(z[label] - mx - std::log(s));
}

struct CrossEntropyTarget {
  std::size_t label = 0;
};

/// The scalar v^T y.
struct ProjectionTarget {
  std::vector<double> v;
};

using ScalarTarget = std::variant<CrossEntropyTarget, ProjectionTarget>;

/// Per-block gradients keyed by parameter address.
struct Gradients {
  std::map<ParamKey, std::vector<double>> blocks;

  const std::vector<double>& at(ParamKey key) const { return blocks.at(key); }
  const std::vector<double>& at(CoreId id) const { return blocks.at(ParamKey::of(id)); }

  double squared_norm(ParamKey key) const {
    double s = 0.0;
    for (double v : blocks.at(key)) s += v * v;
    return s;
  }
  double squared_norm(CoreId id) const { return squared_norm(ParamKey::of(id)); }
};

namespace detail {

// Parameter-gradient accumulator. TT layers accumulate the gradient of the
// matricized weight and are projected onto their cores once in finish().
struct GradAccumulator {
  std::vector<std::vector<double>> weight;  // dense weight or TT dense-weight grad
  std::vector<std::vector<double>> bias;

  explicit GradAccumulator(const Model& model)
      : weight(model.layers().size()), bias(model.layers().size()) {
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      const auto& layer = model.layers()[l];
      if (const auto* d = std::get_if<DenseLayer>(&layer)) {
        weight[l].assign(d->weight.size(), 0.0);
        bias[l].assign(d->out, 0.0);
      } else if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
        weight[l].assign(tt->in() * tt->out(), 0.0);
        bias[l].assign(tt->out(), 0.0);
      }
    }
  }

  void clear() {
    for (auto& w : weight) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : bias) std::fill(b.begin(), b.end(), 0.0);
  }

  Gradients finish(const Model& model, double scale = 1.0) const {
    Gradients g;
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
      const auto& layer = model.layers()[l];
      const auto layer_id = static_cast<std::uint32_t>(l);
      auto scaled = [scale](std::vector<double> v) {
        if (scale != 1.0)
          for (auto& x : v) x *= scale;
        return v;
      };
      if (std::holds_alternative<DenseLayer>(layer)) {
        g.blocks[{layer_id, BlockKind::weight, 0}] = scaled(weight[l]);
        g.blocks[{layer_id, BlockKind::bias, 0}] = scaled(bias[l]);
      } else if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
        auto cores = tt_core_gradients(tt->tt, tt->shape, weight[l]);
        for (std::size_t k = 0; k < cores.size(); ++k)
          g.blocks[{layer_id, BlockKind::core, static_cast<std::uint32_t>(k)}] = scaled(std::move(cores[k]));
        g.blocks[{layer_id, BlockKind::bias, 0}] = scaled(bias[l]);
      }
    }
    return g;
  }
};

inline std::vector<double> logit_gradient(const ForwardCache& cache, const ScalarTarget& target,
                                          std::size_t classes) {
  const auto y = cache.output();
  std::vector<double> g(y.begin(), y.end());
  if (const auto* ce = std::get_if<CrossEntropyTarget>(&target)) {
    require(ce->label < classes, ErrorKind::shape, "label out of range");
    g[ce->label] -= 1.0;
  } else {
    const auto& v = std::get<ProjectionTarget>(target).v;
    require(v.size() == classes, ErrorKind::shape, "projection vector has wrong length");
    double vy = 0.0;
    for (std::size_t i = 0; i < classes; ++i) vy += v[i] * y[i];
    for (std::size_t i = 0; i < classes; ++i) g[i] = y[i] * (v[i] - vy);
  }
  return g;
}

// Reverse pass starting from the gradient at the softmax input. Parameter
// gradients go to acc when given; returns the input gradient.
inline std::vector<double> backprop(const Model& model, const ForwardCache& cache,
                                    std::vector<double> grad, GradAccumulator* acc) {
  require(cache.token == model.token() &&
              cache.activations.size() == model.layers().size() + 1,
          ErrorKind::stale_cache, "forward cache does not belong to this model state");
  const auto& layers = model.layers();
  for (std::size_t l = layers.size() - 1; l-- > 0;) {
    const auto& in = cache.activations[l];
    const auto& layer = layers[l];
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      std::vector<double> gin(d->in, 0.0);
      for (std::size_t o = 0; o < d->out; ++o) {
        const double go = grad[o];
        if (go == 0.0) continue;
        const double* w = &d->weight[o * d->in];
        for (std::size_t i = 0; i < d->in; ++i) gin[i] += w[i] * go;
        if (acc) {
          double* gw = &acc->weight[l][o * d->in];
          for (std::size_t i = 0; i < d->in; ++i) gw[i] += go * in[i];
          acc->bias[l][o] += go;
        }
      }
      grad = std::move(gin);
    } else if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
      if (acc) {
        const std::size_t n_in = tt->in();
        for (std::size_t o = 0; o < grad.size(); ++o) {
          const double go = grad[o];
          acc->bias[l][o] += go;
          if (go == 0.0) continue;
          double* gw = &acc->weight[l][o * n_in];
          for (std::size_t i = 0; i < n_in; ++i) gw[i] += go * in[i];
        }
      }
      grad = tt_apply_transposed(tt->tt, tt->shape, grad);
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (!(in[i] > 0.0)) grad[i] = 0.0;
    }
  }
  return grad;
}

}  // namespace detail

/// Gradients of the chosen scalar (cross-entropy loss or v^T y) with respect
/// to every parameter block.
inline Gradients backward(const Model& model, const ForwardCache& cache, const ScalarTarget& target) {
  detail::GradAccumulator acc(model);
  detail::backprop(model, cache, detail::logit_gradient(cache, target, model.class_count()), &acc);
  return acc.finish(model);
}

/// Gradient of the chosen scalar with respect to the model input.
inline std::vector<double> input_gradient(const Model& model, const ForwardCache& cache,
                                          const ScalarTarget& target) {
  return detail::backprop(model, cache, detail::logit_gradient(cache, target, model.class_count()),
                          nullptr);
}

// ---------------------------------------------------------------------------
// training

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs_per_round = 10;
  std::size_t batch_size = 16;
  std::uint64_t rng_seed = 0;
  // blocks left untouched by the optimizer
  std::vector<ParamKey> frozen;

  void validate() const {
    require(learning_rate > 0.0, ErrorKind::config, "learning_rate must be > 0");
    require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");
  }
};

/// Mini-batch SGD on mean cross-entropy. Shuffling is seeded per epoch, so
/// the result is a pure function of (model, data, cfg). epochs_per_round = 0
/// returns the model untouched.
inline Model train(Model model, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  require(!data.empty(), ErrorKind::empty, "train: empty dataset");
  require(data.dim == model.input_size(), ErrorKind::shape, "train: dataset dimension mismatch");
  if (cfg.epochs_per_round == 0) return model;

  std::vector<ParamKey> trainable;
  for (const auto& key : model.parameter_keys())
    if (std::find(cfg.frozen.begin(), cfg.frozen.end(), key) == cfg.frozen.end())
      trainable.push_back(key);

  detail::GradAccumulator acc(model);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(cfg.rng_seed, {stream::shuffle, epoch}));
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      acc.clear();
      for (std::size_t s = start; s < stop; ++s) {
        const auto i = order[s];
        const auto cache = forward(model, data.inputs[i]);
        detail::backprop(model, cache,
                         detail::logit_gradient(cache, CrossEntropyTarget{data.labels[i]},
                                                model.class_count()),
                         &acc);
      }
      const auto grads = acc.finish(model, 1.0 / static_cast<double>(stop - start));
      for (const auto& key : trainable) {
        auto block = model.mutable_block(key);
        const auto& g = grads.at(key);
        for (std::size_t j = 0; j < block.size(); ++j) block[j] -= cfg.learning_rate * g[j];
      }
    }
  }
  return model;
}

/// Fraction of argmax-correct predictions (ties to the lowest class index).
inline double evaluate_accuracy(const Model& model, const Dataset& data) {
  require(!data.empty(), ErrorKind::empty, "evaluate_accuracy: empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (predict(model, data.inputs[i]) == data.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

/// Replaces every TT layer by the dense layer holding its reconstructed weight.
inline Model densify(const Model& model) {
  std::vector<Layer> layers;
  for (const auto& layer : model.layers()) {
    if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
      DenseLayer d(tt->in(), tt->out());
      d.weight = dense_matrix(tt->tt, tt->shape);
      d.bias = tt->bias;
      layers.emplace_back(std::move(d));
    } else {
      layers.push_back(layer);
    }
  }
  return Model(std::move(layers), model.class_count());
}

/// Replaces dense hidden layers (every dense layer except the first and last
/// parameterized ones) by TT-linear layers from TT-SVD of their weights.
/// Each replaced layer must have in = out = product(factors).
inline Model decompose_hidden(const Model& model, const std::vector<std::size_t>& factors,
                              std::size_t max_rank) {
  const auto [first, last] = model.boundary_layers();
  std::vector<Layer> layers;
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto& layer = model.layers()[l];
    const auto* d = std::get_if<DenseLayer>(&layer);
    if (d == nullptr || l == first || l == last) {
      layers.push_back(layer);
      continue;
    }
    require(d->in == product(factors) && d->out == product(factors), ErrorKind::shape,
            "layer " + std::to_string(l) + " does not match the TT factorization");
    auto shape = ShapeDescriptor::matrix(factors, factors);
    const std::vector<std::size_t> caps(factors.size() - 1, max_rank);
    auto tt = tt_svd(shape.tensorize(d->weight), caps, static_cast<std::uint32_t>(l));
    layers.emplace_back(TTLinearLayer{std::move(tt), std::move(shape), d->bias});
  }
  return Model(std::move(layers), model.class_count());
}

}  // namespace ttseal
