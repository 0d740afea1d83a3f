#pragma once

// End-to-end wiring shared by the CLI and the acceptance suite: task
// construction from a config, cached substitute training per exposure, the
// selection step at a threshold, and the transfer-attack sweep.

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ttseal/calibrate.hpp"
#include "ttseal/config.hpp"
#include "ttseal/dataset.hpp"
#include "ttseal/importance.hpp"
#include "ttseal/nnet.hpp"
#include "ttseal/seal.hpp"
#include "ttseal/selector.hpp"
#include "ttseal/threat.hpp"

namespace ttseal {

inline DatasetSplits task_splits(const PipelineConfig& cfg, const Dataset& data) {
  SplitFractions f;
  f.val = cfg.val_fraction;
  f.eval = cfg.eval_fraction;
  f.seed = cfg.seed_fraction;
  f.train = 1.0 - f.val - f.eval - f.seed;
  return split_dataset(data, f);
}

inline Dataset task_dataset(const PipelineConfig& cfg) {
  if (!cfg.dataset_path.empty()) return load_dataset_csv(cfg.dataset_path, cfg.classes);
  SyntheticSpec spec;
  spec.classes = cfg.classes;
  spec.clusters_per_class = cfg.clusters;
  spec.samples = cfg.samples;
  spec.dim = cfg.dim;
  spec.spread = cfg.spread;
  spec.seed = derive_seed(cfg.seed, {stream::data});
  return make_synthetic(spec);
}

/// The synthetic oracle: dense -> TT-linear x tt_layers -> dense, trained on
/// the train split.
inline Model train_synthetic_oracle(const PipelineConfig& cfg, const Dataset& train_split) {
  MlpSpec spec;
  spec.input_dim = train_split.dim;
  spec.classes = train_split.class_count;
  spec.tt_factors = cfg.tt_factors;
  spec.tt_layers = cfg.tt_layers;
  spec.tt_rank = cfg.tt_rank;
  TrainConfig tc;
  tc.learning_rate = cfg.oracle_lr;
  tc.epochs_per_round = cfg.oracle_epochs;
  tc.batch_size = cfg.oracle_batch;
  tc.rng_seed = derive_seed(cfg.seed, {stream::shuffle});
  return train(make_mlp(spec, derive_seed(cfg.seed, {stream::init})), train_split, tc);
}

struct Task {
  DatasetSplits splits;
  Model oracle;
};

inline Task build_task(const PipelineConfig& cfg) {
  cfg.validate();
  Task t;
  t.splits = task_splits(cfg, task_dataset(cfg));
  require(!t.splits.train.empty() && !t.splits.val.empty() && !t.splits.seed.empty() && !t.splits.eval.empty(),
          ErrorKind::empty, "dataset too small for the configured splits");
  if (!cfg.model_path.empty()) {
    t.oracle = load_model(read_file(cfg.model_path));
    require(t.oracle.input_size() == t.splits.train.dim, ErrorKind::shape,
            "model input size does not match the dataset dimension");
  } else {
    t.oracle = train_synthetic_oracle(cfg, t.splits.train);
  }
  return t;
}

inline ThreatSetup threat_setup(const PipelineConfig& cfg, const Task& task) {
  ThreatSetup s;
  s.seeds = task.splits.seed;
  s.eval = task.splits.eval;
  s.jbda = cfg.jbda();
  s.seed = derive_seed(cfg.seed, {stream::attacker});
  return s;
}

inline ImportanceReport score_task(const PipelineConfig& cfg, const Task& task) {
  return compute_iacc(task.oracle, task.splits.val, cfg.probes, derive_seed(cfg.seed, {stream::probe}),
                      cfg.importance_batch, cfg.probe_distribution);
}

/// Substitutes trained per set of encrypted cores, memoized so calibration,
/// curve sweeps and attacks share the same runs.
class SubstituteBank {
 public:
  SubstituteBank(const Model& oracle_model, const ThreatSetup& setup, std::size_t repetitions)
      : oracle_(oracle_model), setup_(setup), repetitions_(repetitions) {
    require(repetitions >= 1, ErrorKind::config, "repetitions must be >= 1");
  }

  const std::vector<Model>& substitutes(std::vector<CoreId> encrypted) {
    std::sort(encrypted.begin(), encrypted.end());
    encrypted.erase(std::unique(encrypted.begin(), encrypted.end()), encrypted.end());
    auto it = cache_.find(encrypted);
    if (it != cache_.end()) return it->second;
    std::vector<Model> subs;
    for (std::size_t r = 0; r < repetitions_; ++r) subs.push_back(train_substitute(oracle_, encrypted, setup_, r));
    ++trainings_;
    return cache_.emplace(std::move(encrypted), std::move(subs)).first->second;
  }

  std::vector<double> accuracies(const std::vector<CoreId>& encrypted) {
    std::vector<double> out;
    for (const auto& m : substitutes(encrypted)) out.push_back(evaluate_accuracy(m, setup_.eval));
    return out;
  }

  /// A_sub(m) over the ascending-I_acc prefix of length m.
  AccuracyOracle prefix_oracle(const ImportanceReport& report) {
    std::vector<CoreId> order;
    for (const auto& s : report.ascending()) order.push_back(s.core_id);
    return AccuracyOracle([this, order](std::size_t m) {
      require(m <= order.size(), ErrorKind::config, "prefix longer than the core list");
      return accuracies({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(m)});
    });
  }

  const Model& oracle_model() const { return oracle_; }
  const ThreatSetup& setup() const { return setup_; }
  std::size_t repetitions() const { return repetitions_; }
  std::size_t distinct_exposures() const { return trainings_; }

 private:
  const Model& oracle_;
  const ThreatSetup& setup_;
  std::size_t repetitions_;
  std::size_t trainings_ = 0;
  std::map<std::vector<CoreId>, std::vector<Model>> cache_;
};

/// Minimal-cost plan whose integerized importance reaches the threshold.
/// With fallback_full an infeasible threshold yields the all-cores plan.
inline EncryptionPlan plan_for_threshold(const Model& model, const ImportanceReport& report, double threshold,
                                         double scale = 0.0, bool fallback_full = false) {
  require(threshold >= 0.0, ErrorKind::config, "threshold must be >= 0");
  std::vector<double> values;
  for (const auto& s : report.scores) values.push_back(s.i_acc);
  if (scale <= 0.0) scale = default_scale(values);
  const auto items = make_items(report, scale);
  const auto th = scale_threshold(threshold, scale);
  try {
    return value_dp_select(items, th, model.parameter_count());
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::infeasible || !fallback_full) throw;
    std::vector<CoreId> all;
    for (const auto& it : items) all.push_back(it.core_id);
    auto plan = plan_of(items, all, model.parameter_count());
    plan.threshold_scaled = th;
    return plan;
  }
}

/// Plan at a calibrated threshold. The scaled threshold is the sum of the
/// prefix items' integerized values, so rounding can never make the prefix
/// itself fall short.
inline EncryptionPlan plan_for_calibration(const Model& model, const ImportanceReport& report,
                                           const CalibrationResult& cal, double scale = 0.0) {
  std::vector<double> values;
  for (const auto& s : report.scores) values.push_back(s.i_acc);
  if (scale <= 0.0) scale = default_scale(values);
  const auto items = make_items(report, scale);
  std::int64_t th = 0;
  for (auto id : cal.prefix) {
    auto it = std::find_if(items.begin(), items.end(), [&](const Item& x) { return x.core_id == id; });
    require(it != items.end(), ErrorKind::unknown_core, "calibration names unknown core " + id.str());
    th += it->scaled_value;
  }
  return value_dp_select(items, th, model.parameter_count());
}

struct AttackRow {
  double epsilon = 0.0;
  AttackMode mode = AttackMode::NT;
  std::string exposure_level;
  double transfer_ratio = 0.0;  // mean over repetitions
  double substitute_acc = 0.0;  // mean over repetitions
  std::size_t n = 0;            // adversarial examples per repetition
  std::vector<TransferResult> runs;
};

inline std::string attack_csv(const std::vector<AttackRow>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "epsilon,mode,exposure_level,transfer_ratio,substitute_acc,n\n";
  for (const auto& r : rows)
    out << r.epsilon << ',' << to_string(r.mode) << ',' << r.exposure_level << ',' << r.transfer_ratio << ','
        << r.substitute_acc << ',' << r.n << '\n';
  return out.str();
}

/// Transfer attack of every substitute for one exposure over the grid.
inline std::vector<AttackRow> attack_exposure(SubstituteBank& bank, const std::string& level,
                                              const std::vector<CoreId>& encrypted,
                                              const std::vector<double>& epsilons,
                                              const std::vector<AttackMode>& modes, std::size_t iterations) {
  const auto& subs = bank.substitutes(encrypted);
  std::vector<AttackRow> rows;
  for (double eps : epsilons) {
    for (auto mode : modes) {
      AttackRow row;
      row.epsilon = eps;
      row.mode = mode;
      row.exposure_level = level;
      for (std::size_t r = 0; r < subs.size(); ++r) {
        AttackConfig ac;
        ac.epsilon = eps;
        ac.mode = mode;
        ac.iterations = iterations;
        ac.rng_seed = derive_seed(bank.setup().seed, {stream::target, r});
        auto res = run_transfer_attack(bank.oracle_model(), subs[r], bank.setup().eval, ac);
        row.transfer_ratio += res.transfer_ratio;
        row.substitute_acc += res.substitute_accuracy;
        row.n = res.n;
        row.runs.push_back(std::move(res));
      }
      row.transfer_ratio /= static_cast<double>(subs.size());
      row.substitute_acc /= static_cast<double>(subs.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace ttseal
