// ttseal: command-line driver for the scoring, calibration, selection,
// sealing and attack pipeline. Every subcommand reads and writes files in the
// configured output directory.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ttseal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ttseal;

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
  std::string key_file;
  bool verify = false;
  bool fallback_full = false;
};

struct Paths {
  fs::path dir;
  fs::path at(const char* name) const { return dir / name; }
};

PipelineConfig resolve_config(const Options& o) {
  PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorKind::config, "--set expects key=value, got '" + kv + "'");
    cfg.set(detail::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
  }
  if (o.seed_given) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  if (!o.key_file.empty()) cfg.key_file = o.key_file;
  if (o.fallback_full) cfg.fallback_full = true;
  cfg.validate();
  fs::create_directories(cfg.out);
  return cfg;
}

void require_file(const fs::path& p, const std::string& hint) {
  require(fs::exists(p), ErrorKind::io, "missing " + p.string() + " (" + hint + ")");
}

std::string read_text(const fs::path& p) {
  const auto bytes = read_file(p.string());
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

/// Explicit paths win; otherwise artifacts written by gen-data are reused, and
/// failing that the synthetic task is rebuilt in-process.
Task load_task(PipelineConfig cfg) {
  const Paths out{cfg.out};
  if (cfg.dataset_path.empty() && fs::exists(out.at("data.csv"))) cfg.dataset_path = out.at("data.csv").string();
  if (cfg.model_path.empty() && fs::exists(out.at("oracle.ttm"))) cfg.model_path = out.at("oracle.ttm").string();
  return build_task(cfg);
}

ImportanceReport load_report(const PipelineConfig& cfg, const Task& task) {
  const auto path = Paths{cfg.out}.at("importance.ttiacc");
  require_file(path, "run `ttseal score` first");
  auto rep = ImportanceReport::deserialize(read_file(path.string()));
  require(rep.val_set_fingerprint == task.splits.val.fingerprint(), ErrorKind::stale_cache,
          "importance report was computed on a different validation set; rerun `ttseal score`");
  for (const auto& s : rep.scores)
    require(task.oracle.contains(ParamKey::of(s.core_id)), ErrorKind::unknown_core,
            "importance report names core " + s.core_id.str() + " absent from the model");
  return rep;
}

EncryptionPlan load_plan(const PipelineConfig& cfg) {
  const auto path = Paths{cfg.out}.at("plan.csv");
  require_file(path, "run `ttseal plan` first");
  return plan_from_csv(read_text(path));
}

KeyMaterial load_key(const PipelineConfig& cfg) {
  std::string path = cfg.key_file;
  if (path.empty())
    if (const char* env = std::getenv("TTSEAL_KEY")) path = env;
  require(!path.empty(), ErrorKind::config, "no key given; pass --key-file or set TTSEAL_KEY");
  return KeyMaterial::load(path);
}

int cmd_gen_data(const PipelineConfig& cfg) {
  require(cfg.model_path.empty() && cfg.dataset_path.empty(), ErrorKind::config,
          "gen-data builds the synthetic task; unset model and dataset");
  const Paths out{cfg.out};
  const auto data = task_dataset(cfg);
  const auto splits = task_splits(cfg, data);
  const auto oracle = train_synthetic_oracle(cfg, splits.train);
  write_text(out.at("data.csv").string(), dataset_to_csv(data));
  write_file(out.at("oracle.ttm").string(), save_model(oracle));
  write_text(out.at("config.txt").string(), cfg.to_text());
  std::cout << "samples " << data.size() << ", oracle parameters " << oracle.parameter_count()
            << ", eval accuracy " << evaluate_accuracy(oracle, splits.eval) << '\n';
  return 0;
}

int cmd_decompose(const PipelineConfig& cfg) {
  require(!cfg.model_path.empty(), ErrorKind::config, "decompose needs model = <dense model file>");
  const auto model = load_model(read_file(cfg.model_path));
  const auto tt = decompose_hidden(model, cfg.tt_factors, cfg.decompose_rank);
  const auto path = Paths{cfg.out}.at("model_tt.ttm");
  write_file(path.string(), save_model(tt));
  std::cout << "wrote " << path.string() << " with " << tt.core_ids().size() << " TT cores\n";
  return 0;
}

int cmd_score(const PipelineConfig& cfg) {
  const auto task = load_task(cfg);
  require(task.oracle.has_tt_cores(), ErrorKind::no_tt_cores,
          "model has no TT cores; run `ttseal decompose` (set decompose_rank and tt_factors) first");
  const auto rep = score_task(cfg, task);
  const Paths out{cfg.out};
  write_text(out.at("importance.csv").string(), rep.to_csv());
  write_file(out.at("importance.ttiacc").string(), rep.serialize());
  std::cout << "scored " << rep.scores.size() << " cores\n";
  return 0;
}

int cmd_calibrate(const PipelineConfig& cfg) {
  const auto task = load_task(cfg);
  const auto rep = load_report(cfg, task);
  const auto setup = threat_setup(cfg, task);
  SubstituteBank bank(task.oracle, setup, cfg.repetitions);
  const auto oracle = bank.prefix_oracle(rep);
  const double a_bb = oracle.evaluate(rep.scores.size());
  const auto res = calibrate_threshold(rep, oracle, a_bb, cfg.delta);
  const Paths out{cfg.out};
  write_text(out.at("calibration.txt").string(), res.to_text());
  write_text(out.at("calibration_trace.csv").string(), res.trace_csv());
  std::cout << res.to_text();
  return 0;
}

int cmd_plan(const PipelineConfig& cfg) {
  const auto task = load_task(cfg);
  const auto rep = load_report(cfg, task);
  EncryptionPlan plan;
  if (cfg.threshold >= 0.0) {
    plan = plan_for_threshold(task.oracle, rep, cfg.threshold, cfg.scale, cfg.fallback_full);
  } else {
    const auto path = Paths{cfg.out}.at("calibration.txt");
    require_file(path, "run `ttseal calibrate` first or set threshold");
    plan = plan_for_calibration(task.oracle, rep, CalibrationResult::from_text(read_text(path)), cfg.scale);
  }
  std::vector<double> values;
  for (const auto& s : rep.scores) values.push_back(s.i_acc);
  const auto items = make_items(rep, cfg.scale > 0.0 ? cfg.scale : default_scale(values));
  write_text(Paths{cfg.out}.at("plan.csv").string(), plan_to_csv(plan, items));
  std::cout << "selected " << plan.selected.size() << " of " << items.size() << " cores, encryption ratio "
            << plan.encryption_ratio << '\n';
  return 0;
}

int cmd_seal(const PipelineConfig& cfg, bool verify) {
  const auto task = load_task(cfg);
  const auto plan = load_plan(cfg);
  const auto key = load_key(cfg);
  const auto bytes = seal(task.oracle, plan, key, cfg.seed);
  const auto path = Paths{cfg.out}.at("sealed.ttseal");
  write_file(path.string(), bytes);
  if (verify) {
    const auto back = unseal(read_file(path.string()), key);
    require(save_model(back) == save_model(quantize_f32(task.oracle)), ErrorKind::internal,
            "verification failed: unsealed model differs from the input");
    std::cout << "verified round trip\n";
  }
  const auto c = parse_container(bytes);
  std::cout << "sealed " << c.records.size() << " blocks, " << c.encrypted_bytes() << " of " << c.total_bytes()
            << " payload bytes encrypted\n";
  return 0;
}

int cmd_unseal(const PipelineConfig& cfg, bool verify) {
  const Paths out{cfg.out};
  require_file(out.at("sealed.ttseal"), "run `ttseal seal` first");
  const auto model = unseal(read_file(out.at("sealed.ttseal").string()), load_key(cfg));
  write_file(out.at("unsealed.ttm").string(), save_model(model));
  if (verify) {
    const auto task = load_task(cfg);
    require(save_model(model) == save_model(quantize_f32(task.oracle)), ErrorKind::internal,
            "verification failed: unsealed model differs from the source model");
    std::cout << "verified round trip\n";
  }
  std::cout << "wrote " << out.at("unsealed.ttm").string() << '\n';
  return 0;
}

int cmd_attack(const PipelineConfig& cfg) {
  const auto task = load_task(cfg);
  const auto plan = load_plan(cfg);
  const auto setup = threat_setup(cfg, task);
  SubstituteBank bank(task.oracle, setup, cfg.repetitions);
  std::vector<AttackRow> rows;
  const std::vector<std::pair<std::string, std::vector<CoreId>>> levels{
      {"white-box", {}}, {"threshold", plan.selected}, {"black-box", task.oracle.core_ids()}};
  for (const auto& [name, cores] : levels) {
    auto part = attack_exposure(bank, name, cores, cfg.epsilons, cfg.modes, cfg.attack_iterations);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  write_text(Paths{cfg.out}.at("attack.csv").string(), attack_csv(rows));
  std::cout << "wrote " << rows.size() << " attack rows\n";
  return 0;
}

int cmd_bench(const PipelineConfig& cfg) {
  const Paths out{cfg.out};
  require_file(out.at("sealed.ttseal"), "run `ttseal seal` first");
  const auto task = load_task(cfg);
  const auto report =
      bench_decrypt(read_file(out.at("sealed.ttseal").string()), load_key(cfg), task.splits.eval, cfg.bench_repetitions);
  write_text(out.at("timing.csv").string(), report.to_csv());
  std::cout << report.to_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TT-core selective encryption pipeline"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config_path, "key = value configuration file");
  app.add_option("-s,--set", o.overrides, "override a config key (key=value), repeatable");
  app.add_option("--seed", o.seed, "top-level seed")->each([&](const std::string&) { o.seed_given = true; });
  app.add_option("-o,--out", o.out, "output directory");
  app.add_option("-k,--key-file", o.key_file, "AES-256 key file (32 raw bytes or 64 hex chars)");
  app.add_flag("--verify", o.verify, "seal/unseal: check the round trip against the source model");
  app.add_flag("--fallback-full", o.fallback_full, "plan: encrypt every core when the threshold is unreachable");

  const std::map<std::string, std::string> commands{
      {"gen-data", "write the synthetic dataset and trained oracle"},
      {"decompose", "replace dense hidden layers by TT layers"},
      {"score", "importance of every TT core"},
      {"calibrate", "binary-search the robustness threshold"},
      {"plan", "minimal-cost encryption set at the threshold"},
      {"seal", "write the sealed container"},
      {"unseal", "decrypt the sealed container"},
      {"attack", "transfer attacks at white-box, threshold and black-box exposure"},
      {"bench", "decryption and inference timing"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    const auto cfg = resolve_config(o);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "gen-data") return cmd_gen_data(cfg);
    if (cmd == "decompose") return cmd_decompose(cfg);
    if (cmd == "score") return cmd_score(cfg);
    if (cmd == "calibrate") return cmd_calibrate(cfg);
    if (cmd == "plan") return cmd_plan(cfg);
    if (cmd == "seal") return cmd_seal(cfg, o.verify);
    if (cmd == "unseal") return cmd_unseal(cfg, o.verify);
    if (cmd == "attack") return cmd_attack(cfg);
    if (cmd == "bench") return cmd_bench(cfg);
  } catch (const Error& e) {
    std::cerr << "ttseal: " << to_string(e.kind()) << " error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "ttseal: io error: " << e.what() << '\n';
    return exit_code(ErrorKind::io);
  } catch (const std::exception& e) {
    std::cerr << "ttseal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
