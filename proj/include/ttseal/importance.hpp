#pragma once

// Core-wise importance I_acc: layer-normalized root of the expected squared
// Frobenius norms of dL/dG and dy/dG, the latter via Hutchinson probes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ttseal/bytes.hpp"
#include "ttseal/dataset.hpp"
#include "ttseal/error.hpp"
#include "ttseal/nnet.hpp"
#include "ttseal/rng.hpp"

namespace ttseal {

enum class ProbeDistribution { rademacher, normal };

struct ImportanceScore {
  CoreId core_id;
  std::size_t left_rank = 0;
  std::size_t mode_size = 0;
  std::size_t right_rank = 0;
  double i_acc = 0.0;
  double raw_loss_grad_sq = 0.0;  // E ||dL/dG||_F^2
  double raw_jacobian_sq = 0.0;   // E ||dy/dG||_F^2 (Hutchinson estimate)
  double mu_l = 1.0;

  std::size_t size() const { return left_rank * mode_size * right_rank; }
};

struct ImportanceReport {
  std::vector<ImportanceScore> scores;  // model core order
  std::size_t probe_count = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t val_set_fingerprint = 0;

  /// Ascending I_acc, ties by core id.
  std::vector<ImportanceScore> ascending() const {
    auto out = scores;
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.i_acc != b.i_acc) return a.i_acc < b.i_acc;
      return a.core_id < b.core_id;
    });
    return out;
  }

  const ImportanceScore& find(CoreId id) const {
    for (const auto& s : scores)
      if (s.core_id == id) return s;
    fail(ErrorKind::unknown_core, "no score for core " + id.str());
  }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "layer,core,left_rank,mode,right_rank,size,i_acc\n";
    for (const auto& s : scores)
      out << s.core_id.layer << ',' << s.core_id.core << ',' << s.left_rank << ',' << s.mode_size << ','
          << s.right_rank << ',' << s.size() << ',' << s.i_acc << '\n';
    return out.str();
  }

  Bytes serialize() const {
    ByteWriter w;
    w.raw(std::string_view("TTIACC\x01\x00", 8));
    w.u64(probe_count);
    w.u64(rng_seed);
    w.u64(val_set_fingerprint);
    w.u32(static_cast<std::uint32_t>(scores.size()));
    for (const auto& s : scores) {
      w.u32(s.core_id.layer);
      w.u32(s.core_id.core);
      w.u32(static_cast<std::uint32_t>(s.left_rank));
      w.u32(static_cast<std::uint32_t>(s.mode_size));
      w.u32(static_cast<std::uint32_t>(s.right_rank));
      w.f64(s.i_acc);
      w.f64(s.raw_loss_grad_sq);
      w.f64(s.raw_jacobian_sq);
      w.f64(s.mu_l);
    }
    return std::move(w).take();
  }

  static ImportanceReport deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    const auto magic = r.raw(8);
    require(std::equal(magic.begin(), magic.end(), "TTIACC\x01\x00"), ErrorKind::format,
            "not an importance report");
    ImportanceReport rep;
    rep.probe_count = r.u64();
    rep.rng_seed = r.u64();
    rep.val_set_fingerprint = r.u64();
    const auto n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
      ImportanceScore s;
      s.core_id.layer = r.u32();
      s.core_id.core = r.u32();
      s.left_rank = r.u32();
      s.mode_size = r.u32();
      s.right_rank = r.u32();
      s.i_acc = r.f64();
      s.raw_loss_grad_sq = r.f64();
      s.raw_jacobian_sq = r.f64();
      s.mu_l = r.f64();
      rep.scores.push_back(s);
    }
    require(r.done(), ErrorKind::format, "trailing bytes in importance report");
    return rep;
  }
};

namespace detail {

inline std::vector<double> draw_probe(std::size_t n, ProbeDistribution dist, std::uint64_t seed,
                                      std::uint64_t sample, std::uint64_t probe) {
  Rng rng(derive_seed(seed, {stream::probe, sample, probe}));
  std::vector<double> v(n);
  for (auto& x : v) x = dist == ProbeDistribution::rademacher ? rng.rademacher() : rng.normal();
  return v;
}

inline std::map<CoreId, double> zero_per_core(const Model& model) {
  std::map<CoreId, double> out;
  for (auto id : model.core_ids()) out[id] = 0.0;
  return out;
}

}  // namespace detail

/// Hutchinson estimate of ||dy/dG||_F^2 per core: mean over samples and
/// probes of ||d(v^T y)/dG||_F^2 with v i.i.d. over the output dimension.
/// The probe for (sample i, probe t) comes from the stream (seed, i, t).
inline std::map<CoreId, double> estimate_jacobian_norm_sq(
    const Model& model, const Dataset& batch, std::size_t probes, std::uint64_t rng_seed,
    ProbeDistribution dist = ProbeDistribution::rademacher) {
  require(probes >= 1, ErrorKind::config, "probes must be >= 1");
  require(!batch.empty(), ErrorKind::empty, "estimate_jacobian_norm_sq: empty batch");
  auto acc = detail::zero_per_core(model);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto cache = forward(model, batch.inputs[i]);
    for (std::size_t t = 0; t < probes; ++t) {
      auto v = detail::draw_probe(model.class_count(), dist, rng_seed, i, t);
      const auto g = backward(model, cache, ProjectionTarget{std::move(v)});
      for (auto& [id, sum] : acc) sum += g.squared_norm(id);
    }
  }
  const double denom = static_cast<double>(batch.size() * probes);
  for (auto& [id, sum] : acc) sum /= denom;
  return acc;
}

/// I_acc(G) = sqrt(E[||dL/dG||^2 + ||dy/dG||^2]) / mu_l with mu_l the mean
/// Frobenius norm of the cores in G's layer. Squared norms are summed per
/// sample and divided by the sample count before the root. Samples are
/// visited in mini-batches of batch_size; the result does not depend on it.
inline ImportanceReport compute_iacc(const Model& model, const Dataset& val, std::size_t probes,
                                     std::uint64_t rng_seed, std::size_t batch_size = 32,
                                     ProbeDistribution dist = ProbeDistribution::rademacher) {
  require(model.has_tt_cores(), ErrorKind::no_tt_cores,
          "model has no TT-cores; decompose its hidden layers first (ttseal decompose)");
  require(!val.empty(), ErrorKind::empty, "compute_iacc: empty validation set");
  require(probes >= 1, ErrorKind::config, "probes must be >= 1");
  require(batch_size >= 1, ErrorKind::config, "batch_size must be >= 1");

  auto loss_sq = detail::zero_per_core(model);
  auto jac_sq = detail::zero_per_core(model);
  for (std::size_t start = 0; start < val.size(); start += batch_size) {
    const std::size_t stop = std::min(val.size(), start + batch_size);
    for (std::size_t i = start; i < stop; ++i) {
      const auto cache = forward(model, val.inputs[i]);
      const auto gl = backward(model, cache, CrossEntropyTarget{val.labels[i]});
      for (auto& [id, sum] : loss_sq) sum += gl.squared_norm(id);
      for (std::size_t t = 0; t < probes; ++t) {
        auto v = detail::draw_probe(model.class_count(), dist, rng_seed, i, t);
        const auto gv = backward(model, cache, ProjectionTarget{std::move(v)});
        for (auto& [id, sum] : jac_sq) sum += gv.squared_norm(id) / static_cast<double>(probes);
      }
    }
  }

  std::map<std::uint32_t, std::pair<double, std::size_t>> layer_norms;
  for (auto id : model.core_ids()) {
    auto& [sum, count] = layer_norms[id.layer];
    sum += model.core(id).frobenius_norm();
    ++count;
  }

  ImportanceReport report;
  report.probe_count = probes;
  report.rng_seed = rng_seed;
  report.val_set_fingerprint = val.fingerprint();
  const double n = static_cast<double>(val.size());
  for (auto id : model.core_ids()) {
    const auto& [sum, count] = layer_norms[id.layer];
    const double mu = sum / static_cast<double>(count);
    require(mu > 0.0, ErrorKind::degenerate, "layer " + std::to_string(id.layer) + " has all-zero cores");
    const auto& core = model.core(id);
    ImportanceScore s;
    s.core_id = id;
    s.left_rank = core.left_rank;
    s.mode_size = core.mode_size;
    s.right_rank = core.right_rank;
    s.raw_loss_grad_sq = loss_sq[id] / n;
    s.raw_jacobian_sq = jac_sq[id] / n;
    s.mu_l = mu;
    s.i_acc = std::sqrt(s.raw_loss_grad_sq + s.raw_jacobian_sq) / mu;
    report.scores.push_back(s);
  }
  return report;
}

}  // namespace ttseal
