#pragma once

// Transfer-attack simulator: JBDA substitute training against a label-only
// oracle, (I-)FGSM generation with four target modes, and the transfer ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ttseal/dataset.hpp"
#include "ttseal/error.hpp"
#include "ttseal/nnet.hpp"
#include "ttseal/rng.hpp"

namespace ttseal {

enum class AttackMode { NT, RD, SM, LL };

inline const char* to_string(AttackMode m) {
  switch (m) {
    case AttackMode::NT: return "NT";
    case AttackMode::RD: return "RD";
    case AttackMode::SM: return "SM";
    case AttackMode::LL: return "LL";
  }
  return "NT";
}

inline AttackMode parse_attack_mode(std::string_view s) {
  if (s == "NT") return AttackMode::NT;
  if (s == "RD") return AttackMode::RD;
  if (s == "SM") return AttackMode::SM;
  if (s == "LL") return AttackMode::LL;
  fail(ErrorKind::config, "unknown attack mode '" + std::string(s) + "'");
}

struct AttackConfig {
  double epsilon = 0.1;
  std::size_t iterations = 15;
  AttackMode mode = AttackMode::NT;
  std::uint64_t rng_seed = 0;

  void validate() const {
    require(epsilon >= 0.0 && epsilon <= 1.0, ErrorKind::config, "epsilon must lie in [0,1]");
    require(iterations >= 1, ErrorKind::config, "iterations must be >= 1");
  }
};

struct JBDAConfig {
  double seed_fraction = 0.1;
  std::size_t augmentation_rounds = 3;
  double lambda_step = 0.1;
  std::size_t max_pool = 4096;
  TrainConfig train;

  void validate() const {
    require(seed_fraction > 0.0 && seed_fraction < 1.0, ErrorKind::config,
            "seed_fraction must lie in (0,1)");
    train.validate();
  }
};

/// Label-only black box.
using LabelOracle = std::function<std::size_t(std::span<const double>)>;

inline LabelOracle label_oracle(const Model& model) {
  return [&model](std::span<const double> x) { return predict(model, x); };
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Jacobian-based dataset augmentation. Each round labels the pool through the
/// oracle and trains the substitute; between rounds every pool point x adds
/// x + lambda * sign(d F_label(x) / dx), clipped to [0,1], until max_pool.
inline Model jbda_train(const LabelOracle& oracle, const Dataset& seeds, Model substitute,
                        const JBDAConfig& cfg) {
  cfg.validate();
  require(!seeds.empty(), ErrorKind::empty, "jbda_train: empty seed set");
  require(cfg.max_pool >= seeds.size(), ErrorKind::config, "max_pool smaller than the seed set");

  Dataset pool{seeds.dim, substitute.class_count(), seeds.inputs, {}, Split::seed};
  for (std::size_t round = 0;; ++round) {
    pool.labels.resize(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool.labels[i] = oracle(pool.inputs[i]);

    TrainConfig tc = cfg.train;
    tc.rng_seed = derive_seed(cfg.train.rng_seed, {stream::substitute, round});
    substitute = train(std::move(substitute), pool, tc);

    if (round == cfg.augmentation_rounds) break;
    const std::size_t current = pool.size();
    for (std::size_t i = 0; i < current && pool.size() < cfg.max_pool; ++i) {
      std::vector<double> onehot(substitute.class_count(), 0.0);
      onehot[pool.labels[i]] = 1.0;
      const auto cache = forward(substitute, pool.inputs[i]);
      const auto g = input_gradient(substitute, cache, ProjectionTarget{onehot});
      std::vector<double> x = pool.inputs[i];
      for (std::size_t k = 0; k < x.size(); ++k)
        x[k] = std::clamp(x[k] + cfg.lambda_step * sign(g[k]), 0.0, 1.0);
      pool.inputs.push_back(std::move(x));
    }
  }
  return substitute;
}

/// One FGSM step. NT ascends the loss of y_ref (the true label); targeted modes
/// descend the loss of y_ref (the target label). Clipped to [0,1].
inline std::vector<double> fgsm_step(const Model& model, std::span<const double> x, std::size_t y_ref,
                                     double epsilon, AttackMode mode) {
  const auto cache = forward(model, x);
  const auto g = input_gradient(model, cache, CrossEntropyTarget{y_ref});
  const double dir = mode == AttackMode::NT ? 1.0 : -1.0;
  std::vector<double> out(x.begin(), x.end());
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = std::clamp(out[k] + dir * epsilon * sign(g[k]), 0.0, 1.0);
  return out;
}

/// Iterative FGSM: `iterations` steps of size epsilon / iterations, each
/// followed by projection onto the l-inf ball around x and the unit box.
inline std::vector<double> i_fgsm(const Model& model, std::span<const double> x, std::size_t y_ref,
                                  const AttackConfig& cfg) {
  cfg.validate();
  const double step = cfg.epsilon / static_cast<double>(cfg.iterations);
  std::vector<double> adv(x.begin(), x.end());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    adv = fgsm_step(model, adv, y_ref, step, cfg.mode);
    for (std::size_t k = 0; k < adv.size(); ++k)
      adv[k] = std::clamp(std::clamp(adv[k], x[k] - cfg.epsilon, x[k] + cfg.epsilon), 0.0, 1.0);
  }
  return adv;
}

/// RD: uniform over labels other than the true one. SM: best class after
/// the top-1. LL: least likely. Ties go to the lowest index.
inline std::size_t pick_target(std::span<const double> y, AttackMode mode, std::size_t true_label,
                               Rng& rng) {
  const std::size_t n = y.size();
  require(n >= 2, ErrorKind::shape, "targeted attacks need at least 2 classes");
  require(mode != AttackMode::NT, ErrorKind::config, "NT attacks have no target");
  switch (mode) {
    case AttackMode::RD: {
      const auto r = static_cast<std::size_t>(rng.below(n - 1));
      return r < true_label ? r : r + 1;
    }
    case AttackMode::SM: {
      const std::size_t top = argmax(y);
      std::size_t best = top == 0 ? 1 : 0;
      for (std::size_t i = 0; i < n; ++i)
        if (i != top && y[i] > y[best]) best = i;
      return best;
    }
    case AttackMode::LL:
      return static_cast<std::size_t>(std::min_element(y.begin(), y.end()) - y.begin());
    case AttackMode::NT: break;
  }
  return 0;
}

struct AdversarialExample {
  std::vector<double> x;
  std::size_t y_true = 0;
  std::size_t y_target = 0;  // equals y_true for NT
};

struct TransferResult {
  AttackMode mode = AttackMode::NT;
  double epsilon = 0.0;
  std::size_t successes = 0;
  std::size_t n = 0;
  double transfer_ratio = 0.0;
  double substitute_accuracy = 0.0;
  std::vector<std::uint8_t> verdicts;  // per sample, 1 = attack transferred
};

/// T = (1/N) sum [O(x_adv) != y] for NT, (1/N) sum [O(x_adv) = y_t] otherwise.
inline TransferResult transfer_ratio(const LabelOracle& oracle,
                                     std::span<const AdversarialExample> examples, AttackMode mode) {
  require(!examples.empty(), ErrorKind::empty, "transfer_ratio: no adversarial examples");
  TransferResult r;
  r.mode = mode;
  r.n = examples.size();
  r.verdicts.reserve(r.n);
  for (const auto& e : examples) {
    const auto label = oracle(e.x);
    const bool hit = mode == AttackMode::NT ? label != e.y_true : label == e.y_target;
    r.verdicts.push_back(hit ? 1 : 0);
    r.successes += hit ? 1 : 0;
  }
  r.transfer_ratio = static_cast<double>(r.successes) / static_cast<double>(r.n);
  return r;
}

/// Crafts one adversarial example per eval point on the substitute. Targets
/// come from the substitute's clean prediction; RD draws use a per-sample
/// stream derived from (seed, sample index).
inline std::vector<AdversarialExample> craft_adversarial(const Model& substitute, const Dataset& eval,
                                                         const AttackConfig& cfg) {
  cfg.validate();
  std::vector<AdversarialExample> out;
  out.reserve(eval.size());
  for (std::size_t i = 0; i < eval.size(); ++i) {
    AdversarialExample e;
    e.y_true = eval.labels[i];
    e.y_target = e.y_true;
    if (cfg.mode != AttackMode::NT) {
      Rng rng(derive_seed(cfg.rng_seed, {stream::target, i}));
      const auto cache = forward(substitute, eval.inputs[i]);
      e.y_target = pick_target(cache.output(), cfg.mode, e.y_true, rng);
    }
    e.x = i_fgsm(substitute, eval.inputs[i], e.y_target, cfg);
    out.push_back(std::move(e));
  }
  return out;
}

/// Full red path for one (epsilon, mode) cell.
inline TransferResult run_transfer_attack(const Model& oracle_model, const Model& substitute,
                                          const Dataset& eval, const AttackConfig& cfg) {
  const auto examples = craft_adversarial(substitute, eval, cfg);
  auto r = transfer_ratio(label_oracle(oracle_model), examples, cfg.mode);
  r.epsilon = cfg.epsilon;
  r.substitute_accuracy = evaluate_accuracy(substitute, eval);
  return r;
}

}  // namespace ttseal
