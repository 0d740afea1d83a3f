#pragma once

// One-time calibration of the importance threshold: binary search over
// ascending-I_acc prefixes against a substitute-accuracy oracle.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ttseal/bytes.hpp"
#include "ttseal/dataset.hpp"
#include "ttseal/exposure.hpp"
#include "ttseal/importance.hpp"
#include "ttseal/nnet.hpp"
#include "ttseal/threat.hpp"

namespace ttseal {

/// Substitute accuracy as a function of the encrypted prefix length. Each
/// evaluation yields one accuracy per repetition; the oracle value is their
/// mean.
class AccuracyOracle {
 public:
  using RunsFn = std::function<std::vector<double>(std::size_t)>;

  explicit AccuracyOracle(RunsFn fn) : fn_(std::move(fn)) {}

  static AccuracyOracle from_function(std::function<double(std::size_t)> f) {
    return AccuracyOracle([f = std::move(f)](std::size_t m) { return std::vector<double>{f(m)}; });
  }

  std::vector<double> runs(std::size_t prefix_len) const { return fn_(prefix_len); }

  double evaluate(std::size_t prefix_len) const { return mean(runs(prefix_len)); }

  static double mean(const std::vector<double>& v) {
    require(!v.empty(), ErrorKind::internal, "accuracy oracle returned no runs");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }

 private:
  RunsFn fn_;
};

struct CalibrationProbe {
  std::size_t m = 0;
  double a_sub_mean = 0.0;
  std::vector<double> runs;
};

struct CalibrationResult {
  std::size_t prefix_len = 0;
  double i_acc_th = 0.0;
  double a_bb = 0.0;
  double delta = 0.03;
  std::size_t oracle_calls = 0;
  std::vector<CalibrationProbe> trace;
  std::vector<CoreId> prefix;  // the first prefix_len cores, ascending I_acc

  std::string trace_csv() const {
    std::ostringstream out;
    out.precision(17);
    out << "probe_m,a_sub_mean,a_sub_runs...\n";
    for (const auto& p : trace) {
      out << p.m << ',' << p.a_sub_mean;
      for (double r : p.runs) out << ',' << r;
      out << '\n';
    }
    return out.str();
  }

  /// key=value summary, one per line.
  std::string to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "prefix_len=" << prefix_len << "\ni_acc_th=" << i_acc_th << "\na_bb=" << a_bb
        << "\ndelta=" << delta << "\noracle_calls=" << oracle_calls << "\nprefix=";
    for (std::size_t i = 0; i < prefix.size(); ++i) out << (i ? " " : "") << prefix[i].str();
    out << '\n';
    return out.str();
  }

  /// Inverse of to_text; the trace is not stored there and stays empty.
  static CalibrationResult from_text(std::string_view text) {
    CalibrationResult r;
    std::istringstream in{std::string(text)};
    std::string line;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      require(eq != std::string::npos, ErrorKind::format, "calibration line without '=': " + line);
      const auto key = line.substr(0, eq), value = line.substr(eq + 1);
      seen.insert(key);
      if (key == "prefix_len") r.prefix_len = std::stoull(value);
      else if (key == "i_acc_th") r.i_acc_th = std::stod(value);
      else if (key == "a_bb") r.a_bb = std::stod(value);
      else if (key == "delta") r.delta = std::stod(value);
      else if (key == "oracle_calls") r.oracle_calls = std::stoull(value);
      else if (key == "prefix") {
        std::istringstream ids(value);
        std::string id;
        while (ids >> id) r.prefix.push_back(CoreId::parse(id));
      } else {
        fail(ErrorKind::format, "unknown calibration key '" + key + "'");
      }
    }
    require(seen.count("prefix_len") && seen.count("prefix") && r.prefix.size() == r.prefix_len,
            ErrorKind::format, "calibration file is incomplete");
    return r;
  }
};

/// lo = 0, hi = n; while lo < hi: m = (lo + hi) / 2, hi = m if
/// A_sub(m) <= a_bb + delta else lo = m + 1. Returns the sum of the first lo
/// ascending scores as the threshold. prefix_len = n is the full-encryption
/// fallback.
inline CalibrationResult calibrate_threshold(const ImportanceReport& report, const AccuracyOracle& oracle,
                                             double a_bb, double delta = 0.03) {
  require(delta >= 0.0, ErrorKind::config, "delta must be >= 0");
  require(!report.scores.empty(), ErrorKind::empty, "calibrate_threshold: empty importance report");
  const auto sorted = report.ascending();
  CalibrationResult res;
  res.a_bb = a_bb;
  res.delta = delta;
  std::size_t lo = 0, hi = sorted.size();
  while (lo < hi) {
    const std::size_t m = (lo + hi) / 2;
    CalibrationProbe probe{m, 0.0, oracle.runs(m)};
    probe.a_sub_mean = AccuracyOracle::mean(probe.runs);
    ++res.oracle_calls;
    if (probe.a_sub_mean <= a_bb + delta)
      hi = m;
    else
      lo = m + 1;
    res.trace.push_back(std::move(probe));
  }
  res.prefix_len = lo;
  for (std::size_t i = 0; i < lo; ++i) {
    res.i_acc_th += sorted[i].i_acc;
    res.prefix.push_back(sorted[i].core_id);
  }
  return res;
}

/// Attacker setting shared by every substitute training: seed inputs, JBDA
/// schedule, the clean evaluation set and the base seed.
struct ThreatSetup {
  Dataset seeds;
  Dataset eval;
  JBDAConfig jbda;
  std::uint64_t seed = 0;
  // keep exposed blocks fixed during substitute training
  bool freeze_exposed = false;
};

/// One JBDA substitute trained from the exposure implied by the encrypted
/// cores. Repetition r uses its own init and shuffling streams.
inline Model train_substitute(const Model& oracle_model, std::span<const CoreId> encrypted_cores,
                              const ThreatSetup& setup, std::size_t repetition) {
  const auto hidden = hidden_blocks(oracle_model, encrypted_cores);
  Model start = expose(oracle_model, hidden, derive_seed(setup.seed, {stream::attacker, repetition}));
  JBDAConfig cfg = setup.jbda;
  cfg.train.rng_seed = derive_seed(setup.seed, {stream::substitute, repetition});
  if (setup.freeze_exposed)
    for (const auto& key : oracle_model.parameter_keys())
      if (!hidden.count(key)) cfg.train.frozen.push_back(key);
  return jbda_train(label_oracle(oracle_model), setup.seeds, std::move(start), cfg);
}

inline std::vector<double> substitute_accuracies(const Model& oracle_model,
                                                 std::span<const CoreId> encrypted_cores,
                                                 const ThreatSetup& setup, std::size_t repetitions) {
  require(repetitions >= 1, ErrorKind::config, "repetitions must be >= 1");
  std::vector<double> runs;
  for (std::size_t r = 0; r < repetitions; ++r)
    runs.push_back(evaluate_accuracy(train_substitute(oracle_model, encrypted_cores, setup, r), setup.eval));
  return runs;
}

/// A_BB: mean clean accuracy of substitutes trained with every core hidden.
inline double measure_black_box_baseline(const Model& oracle_model, const ThreatSetup& setup,
                                         std::size_t repetitions, std::vector<double>* runs = nullptr) {
  const auto all = oracle_model.core_ids();
  auto r = substitute_accuracies(oracle_model, all, setup, repetitions);
  if (runs) *runs = r;
  return AccuracyOracle::mean(r);
}

/// evaluate(m) hides the first m cores in ascending I_acc order (plus the
/// mandatory blocks) and averages substitute accuracy over the repetitions.
/// The oracle keeps references to oracle_model and setup.
inline AccuracyOracle build_substitute_oracle(const Model& oracle_model, const ImportanceReport& report,
                                              const ThreatSetup& setup, std::size_t repetitions) {
  require(!report.scores.empty(), ErrorKind::empty, "build_substitute_oracle: empty report");
  std::vector<CoreId> order;
  for (const auto& s : report.ascending()) order.push_back(s.core_id);
  return AccuracyOracle([&oracle_model, &setup, order, repetitions](std::size_t m) {
    require(m <= order.size(), ErrorKind::config, "prefix longer than the core list");
    return substitute_accuracies(oracle_model, std::span(order).first(m), setup, repetitions);
  });
}

}  // namespace ttseal
