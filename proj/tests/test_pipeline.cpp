#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "ttseal/pipeline.hpp"

namespace fs = std::filesystem;
using namespace ttseal;
using namespace ttseal::testing;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

constexpr const char* kSmallConfig = R"(# small task for CLI tests
samples = 400
dim = 4
classes = 3
clusters = 2
spread = 0.08
tt_factors = 2,2
tt_layers = 1
tt_rank = 2
oracle_epochs = 10
probes = 2
repetitions = 1
seed_fraction = 0.1
jbda_rounds = 1
sub_epochs = 3
epsilons = 0.1
modes = NT, LL
attack_iterations = 3
)";

struct CliResult {
  int code = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  static fs::path dir;

  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / ("ttseal_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "small.cfg") << kSmallConfig;
    KeyMaterial key;
    for (std::size_t i = 0; i < key.bytes.size(); ++i) key.bytes[i] = static_cast<std::uint8_t>(3 * i + 1);
    std::ofstream(dir / "key.hex") << KeyMaterial::from_bytes(key.bytes).to_hex() << '\n';
    std::ofstream(dir / "other.hex") << std::string(64, 'e') << '\n';
    ASSERT_EQ(run("gen-data").code, 0);
    ASSERT_EQ(run("score").code, 0);
  }

  static void TearDownTestSuite() { fs::remove_all(dir); }

  static CliResult run(const std::string& args, const std::string& out = "out") {
    const auto err = dir / "stderr.txt";
    const std::string cmd = std::string(TTSEAL_CLI_PATH) + " --config " + (dir / "small.cfg").string() +
                            " --out " + (dir / out).string() + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  static fs::path out(const char* name) { return dir / "out" / name; }
};

fs::path Cli::dir;

}  // namespace

TEST(Config, ParsesCommentsListsAndOverrides) {
  auto cfg = parse_config("seed = 9  # trailing\n\nepsilons = 0.1, 0.3\nmodes = SM,LL\ntt_factors=2,3\n");
  EXPECT_EQ(cfg.seed, 9U);
  EXPECT_EQ(cfg.epsilons, (std::vector<double>{0.1, 0.3}));
  EXPECT_EQ(cfg.modes, (std::vector<AttackMode>{AttackMode::SM, AttackMode::LL}));
  EXPECT_EQ(cfg.tt_factors, (std::vector<std::size_t>{2, 3}));
  apply_config_text(cfg, "seed = 10\n");
  EXPECT_EQ(cfg.seed, 10U);
}

TEST(Config, TextRoundTrip) {
  auto cfg = parse_config("delta = 0.125\nprobe_distribution = normal\nfallback_full = yes\nout = x/y\n");
  EXPECT_EQ(parse_config(cfg.to_text()).to_text(), cfg.to_text());
}

TEST(Config, RejectsBadInput) {
  auto expect_config_error = [](const std::string& text) {
    try {
      parse_config(text).validate();
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::config) << text;
    }
  };
  expect_config_error("delta = -1\n");
  expect_config_error("no_such_key = 1\n");
  expect_config_error("probes = many\n");
  expect_config_error("epsilons = 0.1, 1.5\n");
  expect_config_error("val_fraction = 0.5\neval_fraction = 0.5\n");
  expect_config_error("just a line\n");
  expect_config_error("bench_repetitions = 3\n");
}

TEST(Config, SampleConfigSpellsOutTheDefaults) {
  const auto cfg = load_config(std::string(TTSEAL_SOURCE_DIR) + "/configs/desk.cfg");
  EXPECT_EQ(cfg.to_text(), PipelineConfig{}.to_text());
}

TEST(Config, ExitCodesAreDistinct) {
  std::set<int> codes;
  for (int k = 0; k <= static_cast<int>(ErrorKind::internal); ++k) {
    const int c = exit_code(static_cast<ErrorKind>(k));
    EXPECT_GT(c, 1);
    EXPECT_LT(c, 126);
    codes.insert(c);
  }
  EXPECT_EQ(codes.size(), static_cast<std::size_t>(ErrorKind::internal) + 1);
}

TEST(CalibrationText, RoundTrip) {
  CalibrationResult r;
  r.prefix_len = 2;
  r.i_acc_th = 0.1 + 0.2;
  r.a_bb = 0.4;
  r.delta = 0.03;
  r.oracle_calls = 3;
  r.prefix = {{2, 1}, {4, 0}};
  const auto back = CalibrationResult::from_text(r.to_text());
  EXPECT_EQ(back.to_text(), r.to_text());
  EXPECT_EQ(back.i_acc_th, r.i_acc_th);
  EXPECT_THROW(CalibrationResult::from_text("prefix_len=2\nprefix=2:1\n"), Error);
}

TEST(Pipeline, SplitsMatchFractions) {
  PipelineConfig cfg;
  cfg.samples = 1000;
  const auto splits = task_splits(cfg, task_dataset(cfg));
  EXPECT_EQ(splits.val.size() + splits.eval.size() + splits.seed.size() + splits.train.size(), 1000U);
  EXPECT_NEAR(static_cast<double>(splits.seed.size()), 25.0, 1.0);
  EXPECT_NEAR(static_cast<double>(splits.eval.size()), 200.0, 1.0);
}

TEST(Pipeline, PlanAtCalibrationCoversThePrefix) {
  const auto m = toy_model(4, 3, 3, 3);
  const auto rep = compute_iacc(m, random_inputs(20, 3, 3, 4), 2, 1);
  for (std::size_t len = 0; len <= rep.scores.size(); ++len) {
    CalibrationResult cal;
    for (std::size_t i = 0; i < len; ++i) cal.prefix.push_back(rep.ascending()[i].core_id);
    cal.prefix_len = len;
    const auto plan = plan_for_calibration(m, rep, cal);
    double prefix_value = 0.0, plan_value = 0.0;
    for (auto id : cal.prefix) prefix_value += rep.find(id).i_acc;
    for (auto id : plan.selected) plan_value += rep.find(id).i_acc;
    EXPECT_GE(plan_value, prefix_value * (1.0 - 1e-6)) << len;
  }
}

TEST_F(Cli, ScoreIsDeterministicWithOneRowPerCore) {
  const auto first = slurp(out("importance.csv"));
  ASSERT_EQ(run("score").code, 0);
  EXPECT_EQ(slurp(out("importance.csv")), first);
  const auto oracle = load_model(read_file(out("oracle.ttm").string()));
  EXPECT_EQ(lines(first), oracle.core_ids().size() + 1);
}

TEST_F(Cli, DenseModelNeedsDecomposition) {
  const auto oracle = load_model(read_file(out("oracle.ttm").string()));
  write_file((dir / "dense.ttm").string(), save_model(densify(oracle)));
  const auto model_flag = "--set model=" + (dir / "dense.ttm").string();
  const auto r = run(model_flag + " score", "dense");
  EXPECT_EQ(r.code, exit_code(ErrorKind::no_tt_cores));
  EXPECT_NE(r.err.find("decompose"), std::string::npos) << r.err;

  ASSERT_EQ(run(model_flag + " --set decompose_rank=4 decompose", "dense").code, 0);
  const auto tt = load_model(read_file((dir / "dense" / "model_tt.ttm").string()));
  EXPECT_EQ(tt.core_ids().size(), oracle.core_ids().size());
  // full rank on a 2x2 x 2x2 layer reproduces the weights
  const auto batch = random_inputs(10, 4, 3, 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto a = forward(tt, batch.inputs[i]).output(), b = forward(oracle, batch.inputs[i]).output();
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
  }
}

TEST_F(Cli, CalibrateRespectsDeltaAndCallBudget) {
  ASSERT_EQ(run("--set delta=1 calibrate").code, 0);
  const auto cal = CalibrationResult::from_text(slurp(out("calibration.txt")));
  EXPECT_EQ(cal.prefix_len, 0U);
  const auto n = load_model(read_file(out("oracle.ttm").string())).core_ids().size();
  EXPECT_LE(cal.oracle_calls, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n)))) + 1);
  EXPECT_EQ(lines(slurp(out("calibration_trace.csv"))), cal.oracle_calls + 1);
  EXPECT_EQ(run("--set delta=-1 calibrate").code, exit_code(ErrorKind::config));
}

TEST_F(Cli, PlanThresholds) {
  ASSERT_EQ(run("--set threshold=0 plan").code, 0);
  EXPECT_TRUE(plan_from_csv(slurp(out("plan.csv"))).selected.empty());

  EXPECT_EQ(run("--set threshold=1e9 plan").code, exit_code(ErrorKind::infeasible));
  ASSERT_EQ(run("--set threshold=1e9 --fallback-full plan").code, 0);
  const auto oracle = load_model(read_file(out("oracle.ttm").string()));
  EXPECT_EQ(plan_from_csv(slurp(out("plan.csv"))).selected, oracle.core_ids());
}

TEST_F(Cli, SealUnsealRoundTrip) {
  const auto key = "--key-file " + (dir / "key.hex").string();
  ASSERT_EQ(run("--set threshold=0.5 --fallback-full plan").code, 0);
  ASSERT_EQ(run(key + " --verify seal").code, 0);
  const auto sealed = slurp(out("sealed.ttseal"));
  ASSERT_EQ(run(key + " seal").code, 0);
  EXPECT_EQ(slurp(out("sealed.ttseal")), sealed);
  ASSERT_EQ(run(key + " --verify unseal").code, 0);
  const auto oracle = load_model(read_file(out("oracle.ttm").string()));
  const auto want = save_model(quantize_f32(oracle));
  EXPECT_EQ(slurp(out("unsealed.ttm")), std::string(want.begin(), want.end()));

  EXPECT_EQ(run("--key-file " + (dir / "other.hex").string() + " unseal").code, exit_code(ErrorKind::wrong_key));
  EXPECT_EQ(run("--key-file " + (dir / "missing.hex").string() + " unseal").code, exit_code(ErrorKind::io));

  // flip a byte in the last record's ciphertext (everything is encrypted
  // at full fallback, and the last bytes of the file are its payload)
  auto bytes = read_file(out("sealed.ttseal").string());
  bytes[bytes.size() - 5] ^= 0x10;
  write_file(out("sealed.ttseal").string(), bytes);
  EXPECT_EQ(run(key + " unseal").code, exit_code(ErrorKind::authentication));
  ASSERT_EQ(run(key + " seal").code, 0);
}

TEST_F(Cli, KeyFromEnvironment) {
  ASSERT_EQ(run("--set threshold=0 plan").code, 0);
  const std::string env = "TTSEAL_KEY=" + (dir / "key.hex").string();
  ::putenv(const_cast<char*>(env.c_str()));
  EXPECT_EQ(run("seal", "env").code, exit_code(ErrorKind::io));  // no plan in that directory yet
  fs::create_directories(dir / "env");
  fs::copy_file(out("plan.csv"), dir / "env" / "plan.csv", fs::copy_options::overwrite_existing);
  EXPECT_EQ(run("--verify seal", "env").code, 0);
  ::unsetenv("TTSEAL_KEY");
  EXPECT_EQ(run("seal", "env").code, exit_code(ErrorKind::config));
}

TEST_F(Cli, AttackAndBenchOutputs) {
  ASSERT_EQ(run("--set threshold=0 plan").code, 0);
  ASSERT_EQ(run("attack").code, 0);
  const auto csv = slurp(out("attack.csv"));
  EXPECT_EQ(csv.rfind("epsilon,mode,exposure_level,transfer_ratio,substitute_acc,n\n", 0), 0U);
  EXPECT_EQ(lines(csv), 1U + 3U * 1U * 2U);
  for (const char* level : {"white-box", "threshold", "black-box"}) EXPECT_NE(csv.find(level), std::string::npos);

  const auto key = "--key-file " + (dir / "key.hex").string();
  ASSERT_EQ(run(key + " seal").code, 0);
  ASSERT_EQ(run(key + " bench").code, 0);
  const auto timing = slurp(out("timing.csv"));
  EXPECT_EQ(timing.rfind("category,bytes,median_ns,ratio\n", 0), 0U);
  EXPECT_EQ(lines(timing), 5U);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("no-such-command").code, exit_code(ErrorKind::config));
  EXPECT_EQ(run("--bogus score").code, exit_code(ErrorKind::config));
  EXPECT_EQ(run("--set nonsense score").code, exit_code(ErrorKind::config));
  EXPECT_EQ(run("calibrate", "fresh").code, exit_code(ErrorKind::io));
}
