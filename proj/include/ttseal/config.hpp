#pragma once

// Flat key=value pipeline configuration. Lines are `key = value`; `#` starts
// a comment. Later assignments (including command-line overrides) win.

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ttseal/bytes.hpp"
#include "ttseal/error.hpp"
#include "ttseal/importance.hpp"
#include "ttseal/threat.hpp"

namespace ttseal {

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out = "out";

  // inputs; empty paths select the synthetic generator / synthetic MLP
  std::string model_path;
  std::string dataset_path;

  // synthetic data
  std::size_t classes = 4;
  std::size_t clusters = 8;
  std::size_t samples = 4000;
  std::size_t dim = 16;
  double spread = 0.1;
  double val_fraction = 0.1;
  double eval_fraction = 0.2;

  // synthetic oracle
  std::vector<std::size_t> tt_factors{4, 4, 4};
  std::size_t tt_layers = 2;
  std::size_t tt_rank = 10;
  double oracle_lr = 0.05;
  std::size_t oracle_epochs = 40;
  std::size_t oracle_batch = 16;

  // importance
  std::size_t probes = 4;
  std::size_t importance_batch = 32;
  ProbeDistribution probe_distribution = ProbeDistribution::rademacher;

  // calibration and selection
  double delta = 0.03;
  std::size_t repetitions = 3;
  double scale = 0.0;      // 0 picks the default scale
  double threshold = -1.0;  // < 0 reads it from the calibration result
  bool fallback_full = false;

  // attacker
  double seed_fraction = 0.025;
  std::size_t jbda_rounds = 3;
  double jbda_lambda = 0.1;
  std::size_t max_pool = 4096;
  double sub_lr = 0.01;
  std::size_t sub_epochs = 10;
  std::size_t sub_batch = 16;
  std::vector<double> epsilons{0.05, 0.1, 0.15, 0.2};
  std::vector<AttackMode> modes{AttackMode::NT, AttackMode::RD, AttackMode::SM, AttackMode::LL};
  std::size_t attack_iterations = 15;

  // sealing
  std::string key_file;
  std::size_t bench_repetitions = 10;
  std::size_t decompose_rank = 8;

  void set(std::string_view key, std::string_view value);
  void validate() const;
  std::string to_text() const;

  JBDAConfig jbda() const {
    JBDAConfig j;
    j.seed_fraction = seed_fraction;
    j.augmentation_rounds = jbda_rounds;
    j.lambda_step = jbda_lambda;
    j.max_pool = max_pool;
    j.train.learning_rate = sub_lr;
    j.train.epochs_per_round = sub_epochs;
    j.train.batch_size = sub_batch;
    return j;
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(',');
    const auto part = trim(s.substr(0, pos));
    if (!part.empty()) out.push_back(part);
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

template <class T>
T parse_number(std::string_view key, std::string_view s) {
  s = trim(s);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc{} && ptr == s.data() + s.size(), ErrorKind::config,
          "config key '" + std::string(key) + "': cannot parse '" + std::string(s) + "'");
  return v;
}

inline bool parse_bool(std::string_view key, std::string_view s) {
  s = trim(s);
  if (s == "1" || s == "true" || s == "yes") return true;
  if (s == "0" || s == "false" || s == "no") return false;
  fail(ErrorKind::config, "config key '" + std::string(key) + "': expected a boolean");
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

}  // namespace detail

inline void PipelineConfig::set(std::string_view key, std::string_view value) {
  using detail::parse_number;
  value = detail::trim(value);
  const auto sz = [&] { return parse_number<std::size_t>(key, value); };
  const auto real = [&] { return parse_number<double>(key, value); };
  if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "out") out = value;
  else if (key == "model") model_path = value;
  else if (key == "dataset") dataset_path = value;
  else if (key == "classes") classes = sz();
  else if (key == "clusters") clusters = sz();
  else if (key == "samples") samples = sz();
  else if (key == "dim") dim = sz();
  else if (key == "spread") spread = real();
  else if (key == "val_fraction") val_fraction = real();
  else if (key == "eval_fraction") eval_fraction = real();
  else if (key == "tt_factors") {
    tt_factors.clear();
    for (auto p : detail::split_list(value)) tt_factors.push_back(parse_number<std::size_t>(key, p));
  } else if (key == "tt_layers") tt_layers = sz();
  else if (key == "tt_rank") tt_rank = sz();
  else if (key == "oracle_lr") oracle_lr = real();
  else if (key == "oracle_epochs") oracle_epochs = sz();
  else if (key == "oracle_batch") oracle_batch = sz();
  else if (key == "probes") probes = sz();
  else if (key == "importance_batch") importance_batch = sz();
  else if (key == "probe_distribution") {
    if (value == "rademacher") probe_distribution = ProbeDistribution::rademacher;
    else if (value == "normal") probe_distribution = ProbeDistribution::normal;
    else fail(ErrorKind::config, "probe_distribution must be rademacher or normal");
  } else if (key == "delta") delta = real();
  else if (key == "repetitions") repetitions = sz();
  else if (key == "scale") scale = real();
  else if (key == "threshold") threshold = real();
  else if (key == "fallback_full") fallback_full = detail::parse_bool(key, value);
  else if (key == "seed_fraction") seed_fraction = real();
  else if (key == "jbda_rounds") jbda_rounds = sz();
  else if (key == "jbda_lambda") jbda_lambda = real();
  else if (key == "max_pool") max_pool = sz();
  else if (key == "sub_lr") sub_lr = real();
  else if (key == "sub_epochs") sub_epochs = sz();
  else if (key == "sub_batch") sub_batch = sz();
  else if (key == "epsilons") {
    epsilons.clear();
    for (auto p : detail::split_list(value)) epsilons.push_back(parse_number<double>(key, p));
  } else if (key == "modes") {
    modes.clear();
    for (auto p : detail::split_list(value)) modes.push_back(parse_attack_mode(p));
  } else if (key == "attack_iterations") attack_iterations = sz();
  else if (key == "key_file") key_file = value;
  else if (key == "bench_repetitions") bench_repetitions = sz();
  else if (key == "decompose_rank") decompose_rank = sz();
  else fail(ErrorKind::config, "unknown config key '" + std::string(key) + "'");
}

inline void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::config, msg); };
  check(delta >= 0.0, "delta must be >= 0");
  check(repetitions >= 1, "repetitions must be >= 1");
  check(probes >= 1, "probes must be >= 1");
  check(importance_batch >= 1, "importance_batch must be >= 1");
  check(classes >= 2, "classes must be >= 2");
  check(clusters >= 1 && samples >= 1 && dim >= 1, "clusters, samples and dim must be >= 1");
  check(spread >= 0.0, "spread must be >= 0");
  check(val_fraction > 0.0 && eval_fraction > 0.0 && seed_fraction > 0.0 &&
            val_fraction + eval_fraction + seed_fraction < 1.0,
        "val, eval and seed fractions must be positive and sum below 1");
  check(!tt_factors.empty(), "tt_factors must not be empty");
  for (auto f : tt_factors) check(f >= 1, "tt_factors entries must be >= 1");
  check(tt_rank >= 1, "tt_rank must be >= 1");
  check(oracle_lr > 0.0 && sub_lr > 0.0, "learning rates must be > 0");
  check(oracle_batch >= 1 && sub_batch >= 1, "batch sizes must be >= 1");
  check(scale >= 0.0, "scale must be >= 0 (0 = default)");
  check(!epsilons.empty(), "epsilons must not be empty");
  for (double e : epsilons) check(e >= 0.0 && e <= 1.0, "epsilons entries must lie in [0,1]");
  check(!modes.empty(), "modes must not be empty");
  check(attack_iterations >= 1, "attack_iterations must be >= 1");
  check(bench_repetitions >= 10, "bench_repetitions must be >= 10");
  check(decompose_rank >= 1, "decompose_rank must be >= 1");
  check(jbda_lambda >= 0.0, "jbda_lambda must be >= 0");
}

inline std::string PipelineConfig::to_text() const {
  std::ostringstream o;
  o.precision(17);
  o << "seed = " << seed << "\nout = " << out << "\nmodel = " << model_path << "\ndataset = " << dataset_path
    << "\nclasses = " << classes << "\nclusters = " << clusters << "\nsamples = " << samples
    << "\ndim = " << dim << "\nspread = " << spread << "\nval_fraction = " << val_fraction
    << "\neval_fraction = " << eval_fraction << "\ntt_factors = " << detail::join(tt_factors)
    << "\ntt_layers = " << tt_layers << "\ntt_rank = " << tt_rank << "\noracle_lr = " << oracle_lr
    << "\noracle_epochs = " << oracle_epochs << "\noracle_batch = " << oracle_batch
    << "\nprobes = " << probes << "\nimportance_batch = " << importance_batch
    << "\nprobe_distribution = " << (probe_distribution == ProbeDistribution::normal ? "normal" : "rademacher")
    << "\ndelta = " << delta << "\nrepetitions = " << repetitions << "\nscale = " << scale
    << "\nthreshold = " << threshold << "\nfallback_full = " << (fallback_full ? "true" : "false")
    << "\nseed_fraction = " << seed_fraction << "\njbda_rounds = " << jbda_rounds
    << "\njbda_lambda = " << jbda_lambda << "\nmax_pool = " << max_pool << "\nsub_lr = " << sub_lr
    << "\nsub_epochs = " << sub_epochs << "\nsub_batch = " << sub_batch
    << "\nepsilons = " << detail::join(epsilons) << "\nmodes = ";
  for (std::size_t i = 0; i < modes.size(); ++i) o << (i ? "," : "") << to_string(modes[i]);
  o << "\nattack_iterations = " << attack_iterations << "\nkey_file = " << key_file
    << "\nbench_repetitions = " << bench_repetitions << "\ndecompose_rank = " << decompose_rank << '\n';
  return o.str();
}

inline void apply_config_text(PipelineConfig& cfg, std::string_view text) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string_view::npos, ErrorKind::config,
            "config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

inline PipelineConfig parse_config(std::string_view text) {
  PipelineConfig cfg;
  apply_config_text(cfg, text);
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace ttseal
