#pragma once

// Shared fixtures and independent reference computations for the test suite.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ttseal/nnet.hpp"
#include "ttseal/tt_tensor.hpp"

namespace ttseal::testing {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

inline DenseTensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  const auto n = product(shape);
  return DenseTensor(std::move(shape), random_vector(n, seed));
}

/// TT tensor with random cores for the given modes and internal ranks.
inline TTTensor random_tt(const std::vector<std::size_t>& modes, const std::vector<std::size_t>& inner_ranks,
                          std::uint64_t seed) {
  std::vector<TTCore> cores;
  for (std::size_t k = 0; k < modes.size(); ++k) {
    const std::size_t l = k == 0 ? 1 : inner_ranks[k - 1];
    const std::size_t r = k + 1 == modes.size() ? 1 : inner_ranks[k];
    TTCore c(CoreId{0, static_cast<std::uint32_t>(k)}, l, modes[k], r);
    c.data = random_vector(c.data.size(), seed * 131 + k);
    cores.push_back(std::move(c));
  }
  return TTTensor(std::move(cores));
}

/// Entry-by-entry chain product of core slices.
inline double tt_entry(const TTTensor& tt, const std::vector<std::size_t>& idx) {
  std::vector<double> row{1.0};
  for (std::size_t k = 0; k < tt.order(); ++k) {
    const auto& c = tt.core(k);
    std::vector<double> next(c.right_rank, 0.0);
    for (std::size_t a = 0; a < c.left_rank; ++a)
      for (std::size_t b = 0; b < c.right_rank; ++b) next[b] += row[a] * c.at(a, idx[k], b);
    row = next;
  }
  return row[0];
}

/// Small model with every layer type: dense -> relu -> TT -> relu -> dense -> softmax.
inline Model toy_model(std::uint64_t seed, std::size_t in = 3, std::size_t classes = 3, std::size_t rank = 2) {
  auto shape = ShapeDescriptor::matrix({2, 3}, {2, 3});
  std::vector<Layer> layers;
  layers.emplace_back(DenseLayer(in, 6));
  layers.emplace_back(ReluLayer{6});
  layers.emplace_back(TTLinearLayer{zero_tt(shape, rank), shape, std::vector<double>(6, 0.0)});
  layers.emplace_back(ReluLayer{6});
  layers.emplace_back(DenseLayer(6, classes));
  layers.emplace_back(SoftmaxLayer{classes});
  Model m(std::move(layers), classes);
  initialize(m, seed);
  // nonzero biases so their gradients are exercised
  for (const auto& key : m.parameter_keys())
    if (key.kind == BlockKind::bias) {
      auto b = m.mutable_block(key);
      const auto v = random_vector(b.size(), seed + key.layer, -0.3, 0.3);
      std::copy(v.begin(), v.end(), b.begin());
    }
  return m;
}

inline double scalar_of(const Model& m, std::span<const double> x, const ScalarTarget& target) {
  const auto c = forward(m, x);
  const auto y = c.output();
  if (const auto* ce = std::get_if<CrossEntropyTarget>(&target)) return -std::log(y[ce->label]);
  const auto& v = std::get<ProjectionTarget>(target).v;
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += v[i] * y[i];
  return s;
}

/// Central finite difference of the scalar with respect to one block.
inline std::vector<double> fd_gradient(Model m, ParamKey key, std::span<const double> x, const ScalarTarget& t,
                                       double h = 1e-5) {
  const std::size_t n = m.block(key).size();
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double orig = m.block(key)[i];
    m.mutable_block(key)[i] = orig + h;
    const double up = scalar_of(m, x, t);
    m.mutable_block(key)[i] = orig - h;
    const double down = scalar_of(m, x, t);
    m.mutable_block(key)[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// Exact E ||dy/dG||_F^2 per core from one-hot projections (one backward pass
/// per output class).
inline std::map<CoreId, double> exact_jacobian_sq(const Model& m, const Dataset& batch) {
  std::map<CoreId, double> out;
  for (auto id : m.core_ids()) out[id] = 0.0;
  for (const auto& x : batch.inputs) {
    const auto cache = forward(m, x);
    for (std::size_t c = 0; c < m.class_count(); ++c) {
      std::vector<double> v(m.class_count(), 0.0);
      v[c] = 1.0;
      const auto g = backward(m, cache, ProjectionTarget{v});
      for (auto id : m.core_ids())
        for (double d : g.at(id)) out[id] += d * d;
    }
  }
  for (auto& [id, v] : out) v /= static_cast<double>(batch.size());
  return out;
}

inline Dataset random_inputs(std::size_t n, std::size_t dim, std::size_t classes, std::uint64_t seed) {
  Dataset d{dim, classes, {}, {}, Split::val};
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> x(dim);
    for (auto& v : x) v = u(gen);
    d.push(std::move(x), i % classes);
  }
  return d;
}

}  // namespace ttseal::testing
