#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <map>
#include <random>

#include "helpers.hpp"
#include "ttseal/seal.hpp"

using namespace ttseal;
using namespace ttseal::testing;

namespace {

KeyMaterial test_key(std::uint8_t fill) {
  std::array<std::uint8_t, 32> raw{};
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(fill + i * 7);
  return KeyMaterial::from_bytes(raw);
}

Model mlp(std::uint64_t seed, std::size_t rank = 3) {
  MlpSpec s;
  s.input_dim = 5;
  s.tt_factors = {2, 3};
  s.tt_rank = rank;
  s.classes = 3;
  return make_mlp(s, seed);
}

EncryptionPlan plan_with(const std::vector<CoreId>& cores) {
  EncryptionPlan p;
  p.selected = cores;
  std::sort(p.selected.begin(), p.selected.end());
  return p;
}

bool blocks_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST(Key, HexAndRawLoading) {
  const auto k = test_key(1);
  const auto again = KeyMaterial::from_hex(k.to_hex() + "\n");
  EXPECT_EQ(again.bytes, k.bytes);
  EXPECT_EQ(again.key_id, k.key_id);
  EXPECT_NE(test_key(2).key_id, k.key_id);
  EXPECT_THROW(KeyMaterial::from_hex("abcd"), Error);
  EXPECT_THROW(KeyMaterial::from_hex(std::string(64, 'z')), Error);
}

TEST(Seal, EmptyPlanEncryptsOnlyMandatoryBlocks) {
  const auto m = quantize_f32(mlp(1));
  const auto c = parse_container(seal(m, plan_with({}), test_key(1), 7));
  const auto [first, last] = m.boundary_layers();
  for (const auto& rec : c.records) EXPECT_EQ(rec.encrypted, rec.key.layer == first || rec.key.layer == last);
}

TEST(Seal, FullPlanEncryptsEveryBlock) {
  const auto m = quantize_f32(mlp(1));
  const auto c = parse_container(seal(m, plan_with(m.core_ids()), test_key(1), 7));
  for (const auto& rec : c.records) EXPECT_TRUE(rec.encrypted) << rec.key.str();
}

TEST(Seal, UnknownCoreIsRejected) {
  const auto m = mlp(1);
  try {
    seal(m, plan_with({{9, 0}}), test_key(1), 1);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unknown_core);
  }
}

TEST(Seal, RandomizedRoundTripsAreBitExact) {
  std::mt19937_64 gen(5);
  for (std::uint64_t t = 0; t < 30; ++t) {
    const auto m = quantize_f32(mlp(t, 1 + t % 4));
    std::vector<CoreId> chosen;
    for (auto id : m.core_ids())
      if (gen() & 1U) chosen.push_back(id);
    const auto key = test_key(static_cast<std::uint8_t>(t));
    const auto back = unseal(seal(m, plan_with(chosen), key, t), key);
    ASSERT_TRUE(same_parameters(back, m)) << "trial " << t;
  }
}

TEST(Seal, QuantizesToFloat32) {
  const auto m = mlp(3);
  const auto key = test_key(3);
  const auto back = unseal(seal(m, plan_with({}), key, 1), key);
  for (const auto& k : m.parameter_keys()) {
    const auto a = back.block(k), b = m.block(k);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], static_cast<double>(static_cast<float>(b[i])));
  }
}

TEST(Seal, ByteDeterministic) {
  const auto m = mlp(4);
  const auto p = plan_with({m.core_ids()[0]});
  EXPECT_EQ(seal(m, p, test_key(4), 11), seal(m, p, test_key(4), 11));
  EXPECT_NE(seal(m, p, test_key(4), 11), seal(m, p, test_key(4), 12));
}

TEST(Unseal, EveryCiphertextByteFlipIsRejected) {
  const auto m = mlp(5, 2);
  const auto key = test_key(5);
  const auto bytes = seal(m, plan_with({m.core_ids()[1]}), key, 3);
  // locate encrypted payloads by re-parsing and searching for them
  const auto c = parse_container(bytes);
  std::size_t flips = 0;
  for (const auto& rec : c.records) {
    if (!rec.encrypted) continue;
    const auto it = std::search(bytes.begin(), bytes.end(), rec.payload.begin(), rec.payload.end());
    ASSERT_NE(it, bytes.end());
    const auto offset = static_cast<std::size_t>(it - bytes.begin());
    for (std::size_t i = 0; i < rec.payload.size(); ++i) {
      auto tampered = bytes;
      tampered[offset + i] ^= 0x01;
      try {
        unseal(tampered, key);
        FAIL() << "flip at " << offset + i << " accepted";
      } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::authentication);
      }
      ++flips;
    }
  }
  EXPECT_GT(flips, 0U);
}

TEST(Unseal, HeaderTamperingIsRejected) {
  const auto m = mlp(5, 2);
  const auto key = test_key(5);
  const auto bytes = seal(m, plan_with({}), key, 3);
  std::size_t rejected = 0;
  for (std::size_t i = 0; i < bytes.size(); i += 7) {
    if (i >= 20 && i < 28) continue;  // plan fingerprint is informational
    auto tampered = bytes;
    tampered[i] ^= 0x80;
    try {
      const auto back = unseal(tampered, key);
      // flips inside plaintext payloads are not authenticated
      EXPECT_FALSE(same_parameters(back, unseal(bytes, key)));
    } catch (const Error&) {
      ++rejected;
    }
  }
  EXPECT_GT(rejected, 0U);
}

TEST(Unseal, WrongKeyAndBadFormat) {
  const auto m = mlp(6);
  const auto bytes = seal(m, plan_with(m.core_ids()), test_key(6), 1);
  try {
    unseal(bytes, test_key(7));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::wrong_key);
  }
  auto bad_version = bytes;
  bad_version[8] = 9;
  try {
    unseal(bad_version, test_key(6));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::format);
  }
  Bytes truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() - 3));
  EXPECT_THROW(unseal(truncated, test_key(6)), Error);
}

TEST(Container, NoncesUniqueAndKeyAbsent) {
  const auto m = mlp(7);
  const auto key = test_key(8);
  const auto bytes = seal(m, plan_with(m.core_ids()), key, 2);
  const auto c = parse_container(bytes);
  std::set<std::array<std::uint8_t, kNonceBytes>> nonces;
  for (const auto& rec : c.records) EXPECT_TRUE(nonces.insert(rec.nonce).second);
  EXPECT_EQ(std::search(bytes.begin(), bytes.end(), key.bytes.begin(), key.bytes.end()), bytes.end());
  EXPECT_EQ(c.plan_fingerprint, plan_with(m.core_ids()).fingerprint());
}

TEST(Container, ReusedKeyAndSeedNeverPairOneNonceWithTwoMessages) {
  const auto key = test_key(8);
  std::map<std::array<std::uint8_t, kNonceBytes>, std::pair<Bytes, Bytes>> seen;
  std::size_t encrypted = 0;
  for (std::uint64_t model_seed : {1U, 2U}) {
    const auto m = mlp(model_seed);
    for (const auto& rec : parse_container(seal(m, plan_with(m.core_ids()), key, 5)).records) {
      if (!rec.encrypted) continue;
      ++encrypted;
      const auto [it, fresh] = seen.try_emplace(rec.nonce, rec.aad, rec.payload);
      // a repeat is only allowed for a byte-identical record (e.g. zero biases)
      if (!fresh) {
        EXPECT_EQ(it->second.first, rec.aad);
        EXPECT_EQ(it->second.second, rec.payload);
      }
    }
  }
  EXPECT_GT(encrypted, 0U);
}

TEST(AttackerView, EmptyPlanExposesAllTTCores) {
  const auto m = quantize_f32(mlp(9));
  const auto view = attacker_view(seal(m, plan_with({}), test_key(9), 1), 42);
  for (auto id : m.core_ids()) EXPECT_TRUE(blocks_equal(view.block(ParamKey::of(id)), m.block(ParamKey::of(id))));
}

TEST(AttackerView, FullPlanSharesNoValues) {
  const auto m = quantize_f32(mlp(10));
  const auto view = attacker_view(seal(m, plan_with(m.core_ids()), test_key(9), 1), 42);
  for (const auto& key : m.parameter_keys()) {
    if (key.kind == BlockKind::bias) continue;  // both zero-initialized
    const auto a = view.block(key), b = m.block(key);
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
    EXPECT_EQ(same, 0U) << key.str();
  }
}

TEST(AttackerView, SeedDeterministic) {
  const auto m = mlp(11);
  const auto bytes = seal(m, plan_with({m.core_ids()[0]}), test_key(1), 1);
  EXPECT_TRUE(same_parameters(attacker_view(bytes, 5), attacker_view(bytes, 5)));
  EXPECT_FALSE(same_parameters(attacker_view(bytes, 5), attacker_view(bytes, 6)));
}

TEST(AttackerView, RevealsExactlyTheUnplannedNonMandatoryBlocks) {
  std::mt19937_64 gen(12);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto m = quantize_f32(mlp(100 + t, 2));
    std::vector<CoreId> chosen;
    for (auto id : m.core_ids())
      if (gen() % 3 == 0) chosen.push_back(id);
    const auto bytes = seal(m, plan_with(chosen), test_key(1), t);
    const auto view = attacker_view(bytes, 1000 + t);
    const auto hidden = hidden_blocks(m, chosen);
    std::size_t plain_values = 0;
    for (const auto& key : m.parameter_keys()) {
      const bool exposed = blocks_equal(view.block(key), m.block(key));
      if (hidden.count(key) == 0) {
        EXPECT_TRUE(exposed) << key.str();
        plain_values += m.block(key).size();
      } else if (key.kind != BlockKind::bias) {
        EXPECT_FALSE(exposed) << key.str();
      }
    }
    const auto c = parse_container(bytes);
    EXPECT_EQ(c.total_bytes() - c.encrypted_bytes(), plain_values * sizeof(float));
  }
}

TEST(ModelFile, RoundTrip) {
  const auto m = mlp(13);
  const auto back = load_model(save_model(m));
  EXPECT_TRUE(same_parameters(back, m));
  EXPECT_EQ(save_model(back), save_model(m));
  EXPECT_THROW(load_model(seal(m, plan_with({}), test_key(1), 1)), Error);
}

TEST(Bench, ReportsPositiveDurationsAndByteRatios) {
  const auto m = mlp(14);
  const auto key = test_key(2);
  const auto bytes = seal(m, plan_with({}), key, 1);
  const auto report = bench_decrypt(bytes, key, random_inputs(16, 5, 3, 1), 10);
  EXPECT_GT(report.t_seal_decrypt_ns, 0U);
  EXPECT_GT(report.t_bb_decrypt_ns, 0U);
  EXPECT_GT(report.t_inference_ns, 0U);
  const auto c = parse_container(bytes);
  EXPECT_EQ(report.seal_bytes, c.encrypted_bytes());
  EXPECT_EQ(report.bb_bytes, c.total_bytes());
  const auto csv = report.to_csv();
  EXPECT_EQ(csv.rfind("category,bytes,median_ns,ratio\n", 0), 0U);
  EXPECT_THROW(bench_decrypt(bytes, key, random_inputs(16, 5, 3, 1), 5), Error);
}
