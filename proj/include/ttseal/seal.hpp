#pragma once

// Mixed plaintext/ciphertext model container. Planned cores and the mandatory
// boundary layers are stored as AES-256-GCM records, everything else as plain
// little-endian float32.
//
// Layout (all integers little-endian):
//   magic "TTSEAL\x01\x00" | u32 format version | u64 key check |
//   u64 plan fingerprint | u32 manifest length | manifest |
//   u32 record count | records...
// Record:
//   u32 layer | u8 kind | u32 index | u8 encrypted | [12-byte nonce] |
//   u64 payload length | payload
// Plain payloads are float32 values; encrypted payloads are the ciphertext of
// those bytes followed by the 16-byte tag, with the record header (everything
// before the payload, minus the nonce) as associated data.

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/rand.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ttseal/bytes.hpp"
#include "ttseal/error.hpp"
#include "ttseal/exposure.hpp"
#include "ttseal/nnet.hpp"
#include "ttseal/rng.hpp"
#include "ttseal/selector.hpp"

namespace ttseal {

inline constexpr std::string_view kContainerMagic{"TTSEAL\x01\x00", 8};
inline constexpr std::string_view kModelMagic{"TTMODL\x01\x00", 8};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kNonceBytes = 12;
inline constexpr std::size_t kTagBytes = 16;

struct KeyMaterial {
  std::array<std::uint8_t, 32> bytes{};
  std::string key_id;

  static KeyMaterial from_bytes(std::span<const std::uint8_t> raw);
  static KeyMaterial from_hex(std::string_view hex);
  static KeyMaterial generate();
  /// 32 raw bytes, or 64 hex characters (surrounding whitespace ignored).
  static KeyMaterial load(const std::string& path);

  std::string to_hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    for (auto b : bytes) {
      s.push_back(digits[b >> 4]);
      s.push_back(digits[b & 15]);
    }
    return s;
  }
};

namespace detail {

struct CipherCtxDeleter {
  void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CipherCtx = std::unique_ptr<EVP_CIPHER_CTX, CipherCtxDeleter>;

inline CipherCtx new_cipher_ctx() {
  CipherCtx ctx(EVP_CIPHER_CTX_new());
  require(ctx != nullptr, ErrorKind::internal, "EVP_CIPHER_CTX_new failed");
  return ctx;
}

// Identifies a key without revealing it: SHA-256 over a domain tag and the key.
inline std::uint64_t key_check(const std::array<std::uint8_t, 32>& key) {
  std::array<std::uint8_t, 32 + 16> msg{};
  std::string_view tag("ttseal-key-check", 16);
  std::copy(tag.begin(), tag.end(), msg.begin());
  std::copy(key.begin(), key.end(), msg.begin() + 16);
  std::array<std::uint8_t, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  require(EVP_Digest(msg.data(), msg.size(), digest.data(), &len, EVP_sha256(), nullptr) == 1,
          ErrorKind::internal, "SHA-256 failed");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(digest[i]) << (8 * i);
  return v;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex;
  s.width(16);
  s.fill('0');
  s << v;
  return s.str();
}

}  // namespace detail

inline KeyMaterial KeyMaterial::from_bytes(std::span<const std::uint8_t> raw) {
  require(raw.size() == 32, ErrorKind::config, "key must be 32 bytes");
  KeyMaterial k;
  std::copy(raw.begin(), raw.end(), k.bytes.begin());
  k.key_id = detail::hex64(detail::key_check(k.bytes));
  return k;
}

inline KeyMaterial KeyMaterial::from_hex(std::string_view hex) {
  while (!hex.empty() && std::isspace(static_cast<unsigned char>(hex.back()))) hex.remove_suffix(1);
  while (!hex.empty() && std::isspace(static_cast<unsigned char>(hex.front()))) hex.remove_prefix(1);
  require(hex.size() == 64, ErrorKind::config, "hex key must have 64 characters");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    fail(ErrorKind::config, "hex key contains a non-hex character");
  };
  std::array<std::uint8_t, 32> raw{};
  for (std::size_t i = 0; i < 32; ++i)
    raw[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return from_bytes(raw);
}

inline KeyMaterial KeyMaterial::generate() {
  std::array<std::uint8_t, 32> raw{};
  require(RAND_bytes(raw.data(), static_cast<int>(raw.size())) == 1, ErrorKind::internal,
          "RAND_bytes failed");
  return from_bytes(raw);
}

inline KeyMaterial KeyMaterial::load(const std::string& path) {
  const auto data = read_file(path);
  if (data.size() == 32) return from_bytes(data);
  return from_hex(std::string_view(reinterpret_cast<const char*>(data.data()), data.size()));
}

// ---------------------------------------------------------------------------
// manifest

namespace detail {

enum class LayerTag : std::uint8_t { dense = 0, tt = 1, relu = 2, softmax = 3 };

inline void write_manifest(ByteWriter& w, const Model& model) {
  w.u32(static_cast<std::uint32_t>(model.class_count()));
  w.u32(static_cast<std::uint32_t>(model.layers().size()));
  for (const auto& layer : model.layers()) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerTag::dense));
      w.u32(static_cast<std::uint32_t>(d->in));
      w.u32(static_cast<std::uint32_t>(d->out));
    } else if (const auto* tt = std::get_if<TTLinearLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerTag::tt));
      w.u32(static_cast<std::uint32_t>(tt->shape.order()));
      for (std::size_t k = 0; k < tt->shape.order(); ++k) {
        w.u32(static_cast<std::uint32_t>(tt->shape.row_factors[k]));
        w.u32(static_cast<std::uint32_t>(tt->shape.col_factors[k]));
      }
      for (auto r : tt->tt.ranks()) w.u32(static_cast<std::uint32_t>(r));
      w.u32(static_cast<std::uint32_t>(tt->shape.original_shape.size()));
      for (auto s : tt->shape.original_shape) w.u32(static_cast<std::uint32_t>(s));
    } else if (const auto* r = std::get_if<ReluLayer>(&layer)) {
      w.u8(static_cast<std::uint8_t>(LayerTag::relu));
      w.u32(static_cast<std::uint32_t>(r->size));
    } else {
      w.u8(static_cast<std::uint8_t>(LayerTag::softmax));
      w.u32(static_cast<std::uint32_t>(std::get<SoftmaxLayer>(layer).size));
    }
  }
}

inline constexpr std::uint32_t kMaxDim = 1U << 24;

// Zero-valued model with the manifest's topology.
inline Model read_manifest(ByteReader& r) {
  auto dim = [&r]() {
    const auto v = r.u32();
    require(v >= 1 && v <= kMaxDim, ErrorKind::format, "manifest dimension out of range");
    return static_cast<std::size_t>(v);
  };
  const std::size_t classes = dim();
  const auto count = r.u32();
  require(count >= 1 && count <= 4096, ErrorKind::format, "manifest layer count out of range");
  std::vector<Layer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    const auto tag = r.u8();
    switch (static_cast<LayerTag>(tag)) {
      case LayerTag::dense: {
        const auto in = dim();
        const auto out = dim();
        layers.emplace_back(DenseLayer(in, out));
        break;
      }
      case LayerTag::tt: {
        const auto order = r.u32();
        require(order >= 1 && order <= 64, ErrorKind::format, "TT order out of range");
        ShapeDescriptor shape;
        for (std::uint32_t k = 0; k < order; ++k) {
          shape.row_factors.push_back(dim());
          shape.col_factors.push_back(dim());
        }
        std::vector<std::size_t> ranks;
        for (std::uint32_t k = 0; k <= order; ++k) ranks.push_back(dim());
        const auto n_axes = r.u32();
        require(n_axes >= 1 && n_axes <= 64, ErrorKind::format, "original shape rank out of range");
        for (std::uint32_t k = 0; k < n_axes; ++k) shape.original_shape.push_back(dim());
        shape.validate();
        const auto modes = shape.mode_sizes();
        std::vector<TTCore> cores;
        for (std::uint32_t k = 0; k < order; ++k)
          cores.emplace_back(CoreId{l, k}, ranks[k], modes[k], ranks[k + 1]);
        TTTensor tt(std::move(cores));
        layers.emplace_back(TTLinearLayer{std::move(tt), shape, std::vector<double>(shape.rows(), 0.0)});
        break;
      }
      case LayerTag::relu: layers.emplace_back(ReluLayer{dim()}); break;
      case LayerTag::softmax: layers.emplace_back(SoftmaxLayer{dim()}); break;
      default: fail(ErrorKind::format, "unknown layer tag " + std::to_string(tag));
    }
  }
  try {
    return Model(std::move(layers), classes);
  } catch (const Error& e) {
    fail(ErrorKind::format, std::string("inconsistent manifest: ") + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// plain model files (float64, no encryption)

inline Bytes save_model(const Model& model) {
  ByteWriter w;
  w.raw(kModelMagic);
  ByteWriter manifest;
  detail::write_manifest(manifest, model);
  w.u32(static_cast<std::uint32_t>(manifest.size()));
  w.raw(manifest.bytes());
  for (const auto& key : model.parameter_keys())
    for (double v : model.block(key)) w.f64(v);
  return std::move(w).take();
}

inline Model load_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.raw(8);
  if (std::equal(magic.begin(), magic.end(), kContainerMagic.begin()))
    fail(ErrorKind::format, "this is a sealed container; use unseal");
  require(std::equal(magic.begin(), magic.end(), kModelMagic.begin()), ErrorKind::format,
          "not a model file");
  const auto len = r.u32();
  ByteReader mr(r.raw(len));
  Model model = detail::read_manifest(mr);
  require(mr.done(), ErrorKind::format, "trailing bytes in manifest");
  for (const auto& key : model.parameter_keys())
    for (auto& v : model.mutable_block(key)) v = r.f64();
  require(r.done(), ErrorKind::format, "trailing bytes in model file");
  return model;
}

/// Rounds every parameter to float32 precision.
inline Model quantize_f32(Model model) {
  for (const auto& key : model.parameter_keys())
    for (auto& v : model.mutable_block(key)) v = static_cast<double>(static_cast<float>(v));
  return model;
}

// ---------------------------------------------------------------------------
// container

struct ContainerRecord {
  ParamKey key;
  bool encrypted = false;
  std::array<std::uint8_t, kNonceBytes> nonce{};
  Bytes aad;      // header bytes bound to the ciphertext
  Bytes payload;  // f32 values, or ciphertext || tag
};

struct ParsedContainer {
  std::uint32_t version = 0;
  std::uint64_t key_check = 0;
  std::uint64_t plan_fingerprint = 0;
  Model skeleton;  // topology with zero parameters
  std::vector<ContainerRecord> records;

  std::size_t encrypted_bytes() const {
    std::size_t n = 0;
    for (const auto& r : records)
      if (r.encrypted) n += r.payload.size() - kTagBytes;
    return n;
  }
  std::size_t total_bytes() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.payload.size() - (r.encrypted ? kTagBytes : 0);
    return n;
  }
};

namespace detail {

inline Bytes record_aad(const ParamKey& key, bool encrypted, std::uint64_t payload_len) {
  ByteWriter w;
  w.u32(key.layer);
  w.u8(static_cast<std::uint8_t>(key.kind));
  w.u32(key.index);
  w.u8(encrypted ? 1 : 0);
  w.u64(payload_len);
  return std::move(w).take();
}

/// HMAC-SHA256(key, seed || aad || plaintext) truncated to the nonce size.
/// Deterministic for a given input, and a repeat requires the whole record
/// to repeat, so a reused key never pairs one nonce with two messages.
inline std::array<std::uint8_t, kNonceBytes> synthetic_nonce(const KeyMaterial& key, std::uint64_t seed,
                                                             std::span<const std::uint8_t> aad,
                                                             std::span<const std::uint8_t> plain) {
  ByteWriter msg;
  msg.raw(std::string_view("ttseal-nonce", 12));
  msg.u64(seed);
  msg.raw(aad);
  msg.raw(plain);
  std::array<std::uint8_t, EVP_MAX_MD_SIZE> mac{};
  unsigned int len = 0;
  require(HMAC(EVP_sha256(), key.bytes.data(), static_cast<int>(key.bytes.size()), msg.bytes().data(),
               msg.bytes().size(), mac.data(), &len) != nullptr,
          ErrorKind::internal, "HMAC-SHA256 failed");
  std::array<std::uint8_t, kNonceBytes> nonce{};
  std::copy_n(mac.begin(), kNonceBytes, nonce.begin());
  return nonce;
}

inline Bytes to_f32_bytes(std::span<const double> values) {
  ByteWriter w;
  for (double v : values) w.f32(static_cast<float>(v));
  return std::move(w).take();
}

class GcmCipher {
 public:
  explicit GcmCipher(const KeyMaterial& key, bool encrypt) : ctx_(new_cipher_ctx()), encrypt_(encrypt) {
    const int ok = encrypt ? EVP_EncryptInit_ex(ctx_.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr)
                           : EVP_DecryptInit_ex(ctx_.get(), EVP_aes_256_gcm(), nullptr, nullptr, nullptr);
    require(ok == 1, ErrorKind::internal, "AES-256-GCM init failed");
    require(EVP_CIPHER_CTX_ctrl(ctx_.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(kNonceBytes), nullptr) == 1,
            ErrorKind::internal, "GCM IV length setup failed");
    // the key schedule runs once; each record only resets the nonce
    const int keyed = encrypt ? EVP_EncryptInit_ex(ctx_.get(), nullptr, nullptr, key.bytes.data(), nullptr)
                              : EVP_DecryptInit_ex(ctx_.get(), nullptr, nullptr, key.bytes.data(), nullptr);
    require(keyed == 1, ErrorKind::internal, "AES-256-GCM key setup failed");
  }

  Bytes seal(std::span<const std::uint8_t> plain, std::span<const std::uint8_t> nonce,
             std::span<const std::uint8_t> aad) {
    require(EVP_EncryptInit_ex(ctx_.get(), nullptr, nullptr, nullptr, nonce.data()) == 1,
            ErrorKind::internal, "GCM key/nonce setup failed");
    int len = 0;
    require(EVP_EncryptUpdate(ctx_.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) == 1,
            ErrorKind::internal, "GCM AAD failed");
    Bytes out(plain.size() + kTagBytes);
    require(EVP_EncryptUpdate(ctx_.get(), out.data(), &len, plain.data(), static_cast<int>(plain.size())) == 1,
            ErrorKind::internal, "GCM encrypt failed");
    int fin = 0;
    require(EVP_EncryptFinal_ex(ctx_.get(), out.data() + len, &fin) == 1, ErrorKind::internal,
            "GCM finalize failed");
    require(EVP_CIPHER_CTX_ctrl(ctx_.get(), EVP_CTRL_GCM_GET_TAG, static_cast<int>(kTagBytes),
                                out.data() + plain.size()) == 1,
            ErrorKind::internal, "GCM tag extraction failed");
    return out;
  }

  // Decrypts into out (resized); false on authentication failure.
  bool open(std::span<const std::uint8_t> sealed, std::span<const std::uint8_t> nonce,
            std::span<const std::uint8_t> aad, Bytes& out) {
    if (sealed.size() < kTagBytes) return false;
    const std::size_t n = sealed.size() - kTagBytes;
    out.resize(n);
    if (EVP_DecryptInit_ex(ctx_.get(), nullptr, nullptr, nullptr, nonce.data()) != 1) return false;
    int len = 0;
    if (EVP_DecryptUpdate(ctx_.get(), nullptr, &len, aad.data(), static_cast<int>(aad.size())) != 1) return false;
    if (EVP_DecryptUpdate(ctx_.get(), out.data(), &len, sealed.data(), static_cast<int>(n)) != 1) return false;
    std::array<std::uint8_t, kTagBytes> tag{};
    std::copy(sealed.begin() + static_cast<std::ptrdiff_t>(n), sealed.end(), tag.begin());
    if (EVP_CIPHER_CTX_ctrl(ctx_.get(), EVP_CTRL_GCM_SET_TAG, static_cast<int>(kTagBytes), tag.data()) != 1)
      return false;
    int fin = 0;
    return EVP_DecryptFinal_ex(ctx_.get(), out.data() + len, &fin) == 1;
  }

 private:
  CipherCtx ctx_;
  bool encrypt_;
};

}  // namespace detail

/// Seals the model: planned cores, the mandatory first/last layers and the
/// bias of any fully planned TT layer become AES-256-GCM records; the rest is
/// stored as plain float32. Nonces come from the (seed, record index) stream,
/// so the output is byte-deterministic for (model, plan, key, seed).
inline Bytes seal(const Model& model, const EncryptionPlan& plan, const KeyMaterial& key,
                  std::uint64_t rng_seed) {
  const auto hidden = hidden_blocks(model, plan.selected);
  ByteWriter w;
  w.raw(kContainerMagic);
  w.u32(kFormatVersion);
  w.u64(detail::key_check(key.bytes));
  w.u64(plan.fingerprint());
  ByteWriter manifest;
  detail::write_manifest(manifest, model);
  w.u32(static_cast<std::uint32_t>(manifest.size()));
  w.raw(manifest.bytes());

  const auto keys = model.parameter_keys();
  w.u32(static_cast<std::uint32_t>(keys.size()));
  detail::GcmCipher cipher(key, true);
  std::set<std::array<std::uint8_t, kNonceBytes>> nonces;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const auto& k = keys[i];
    const bool enc = hidden.count(k) > 0;
    const Bytes plain = detail::to_f32_bytes(model.block(k));
    w.u32(k.layer);
    w.u8(static_cast<std::uint8_t>(k.kind));
    w.u32(k.index);
    w.u8(enc ? 1 : 0);
    if (!enc) {
      w.u64(plain.size());
      w.raw(plain);
      continue;
    }
    const std::uint64_t payload_len = plain.size() + kTagBytes;
    const Bytes aad = detail::record_aad(k, true, payload_len);
    const auto nonce = detail::synthetic_nonce(key, derive_seed(rng_seed, {stream::nonce, i}), aad, plain);
    require(nonces.insert(nonce).second, ErrorKind::internal, "duplicate nonce within container");
    const Bytes sealed = cipher.seal(plain, nonce, aad);
    w.raw(nonce);
    w.u64(payload_len);
    w.raw(sealed);
  }
  return std::move(w).take();
}

/// Parses the container structure without any key.
inline ParsedContainer parse_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const auto magic = r.raw(8);
  require(std::equal(magic.begin(), magic.end(), kContainerMagic.begin()), ErrorKind::format,
          "not a sealed container (bad magic)");
  ParsedContainer c;
  c.version = r.u32();
  require(c.version == kFormatVersion, ErrorKind::format,
          "unsupported container version " + std::to_string(c.version));
  c.key_check = r.u64();
  c.plan_fingerprint = r.u64();
  const auto mlen = r.u32();
  ByteReader mr(r.raw(mlen));
  c.skeleton = detail::read_manifest(mr);
  require(mr.done(), ErrorKind::format, "trailing bytes in manifest");

  const auto keys = c.skeleton.parameter_keys();
  const auto count = r.u32();
  require(count == keys.size(), ErrorKind::format, "record count does not match the manifest");
  std::set<std::array<std::uint8_t, kNonceBytes>> nonces;
  for (const auto& expected : keys) {
    ContainerRecord rec;
    rec.key.layer = r.u32();
    rec.key.kind = static_cast<BlockKind>(r.u8());
    rec.key.index = r.u32();
    require(rec.key == expected, ErrorKind::format, "record order does not match the manifest");
    const auto flag = r.u8();
    require(flag <= 1, ErrorKind::format, "bad encrypted flag");
    rec.encrypted = flag == 1;
    if (rec.encrypted) {
      auto n = r.raw(kNonceBytes);
      std::copy(n.begin(), n.end(), rec.nonce.begin());
      require(nonces.insert(rec.nonce).second, ErrorKind::format, "repeated nonce in container");
    }
    const auto len = r.u64();
    const std::size_t plain_len = c.skeleton.block(expected).size() * sizeof(float);
    require(len == plain_len + (rec.encrypted ? kTagBytes : 0), ErrorKind::format,
            "record " + expected.str() + " has the wrong payload length");
    auto payload = r.raw(static_cast<std::size_t>(len));
    rec.payload.assign(payload.begin(), payload.end());
    rec.aad = detail::record_aad(rec.key, rec.encrypted, len);
    c.records.push_back(std::move(rec));
  }
  require(r.done(), ErrorKind::format, "trailing bytes after the last record");
  return c;
}

namespace detail {

inline void fill_block(Model& model, const ParamKey& key, std::span<const std::uint8_t> f32_bytes) {
  ByteReader r(f32_bytes);
  for (auto& v : model.mutable_block(key)) v = static_cast<double>(r.f32());
}

// Decrypts every encrypted record; throws on the first failure.
inline std::vector<Bytes> decrypt_records(const ParsedContainer& c, const KeyMaterial& key) {
  require(detail::key_check(key.bytes) == c.key_check, ErrorKind::wrong_key,
          "key " + key.key_id + " does not match the container");
  GcmCipher cipher(key, false);
  std::vector<Bytes> plain(c.records.size());
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& rec = c.records[i];
    if (!rec.encrypted) continue;
    require(cipher.open(rec.payload, rec.nonce, rec.aad, plain[i]), ErrorKind::authentication,
            "authentication failed for record " + rec.key.str());
  }
  return plain;
}

}  // namespace detail

/// Authenticated decryption of every record; returns the full model (float32
/// fidelity) or throws without a partial model.
inline Model unseal(std::span<const std::uint8_t> bytes, const KeyMaterial& key) {
  const auto c = parse_container(bytes);
  const auto plain = detail::decrypt_records(c, key);
  Model model = c.skeleton;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& rec = c.records[i];
    detail::fill_block(model, rec.key, rec.encrypted ? std::span<const std::uint8_t>(plain[i])
                                                     : std::span<const std::uint8_t>(rec.payload));
  }
  return model;
}

/// What an attacker without the key can build: plaintext blocks as stored,
/// encrypted blocks replaced by the seeded default initialization.
inline Model attacker_view(std::span<const std::uint8_t> bytes, std::uint64_t rng_seed) {
  const auto c = parse_container(bytes);
  Model model = c.skeleton;
  for (const auto& rec : c.records) {
    if (rec.encrypted)
      init_block(model, rec.key, rng_seed);
    else
      detail::fill_block(model, rec.key, rec.payload);
  }
  return model;
}

inline std::set<ParamKey> encrypted_blocks(const ParsedContainer& c) {
  std::set<ParamKey> out;
  for (const auto& rec : c.records)
    if (rec.encrypted) out.insert(rec.key);
  return out;
}

// ---------------------------------------------------------------------------
// decryption timing

struct TimingReport {
  std::uint64_t t_seal_decrypt_ns = 0;  // decrypt only the planned records
  std::uint64_t t_bb_decrypt_ns = 0;    // decrypt a fully encrypted variant
  std::uint64_t t_inference_ns = 0;     // decrypt + TT decode + forward, selective
  std::uint64_t t_bb_inference_ns = 0;  // same with the fully encrypted variant
  std::size_t seal_bytes = 0;
  std::size_t bb_bytes = 0;
  std::size_t total_bytes = 0;
  std::size_t repetitions = 0;

  double decrypt_ratio() const { return static_cast<double>(t_seal_decrypt_ns) / static_cast<double>(t_bb_decrypt_ns); }
  double seal_share() const { return static_cast<double>(t_seal_decrypt_ns) / static_cast<double>(t_inference_ns); }
  double bb_share() const { return static_cast<double>(t_bb_decrypt_ns) / static_cast<double>(t_bb_inference_ns); }
  double byte_ratio() const { return static_cast<double>(seal_bytes) / static_cast<double>(bb_bytes); }

  std::string to_csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "category,bytes,median_ns,ratio\n";
    out << "seal_decrypt," << seal_bytes << ',' << t_seal_decrypt_ns << ',' << decrypt_ratio() << '\n';
    out << "bb_decrypt," << bb_bytes << ',' << t_bb_decrypt_ns << ",1\n";
    out << "seal_inference," << total_bytes << ',' << t_inference_ns << ',' << seal_share() << '\n';
    out << "bb_inference," << total_bytes << ',' << t_bb_inference_ns << ',' << bb_share() << '\n';
    return out.str();
  }
};

namespace detail {

template <class F>
std::uint64_t median_ns(std::size_t reps, F&& f) {
  std::vector<std::uint64_t> samples;
  for (std::size_t i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(static_cast<std::uint64_t>(
        std::max<std::int64_t>(1, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count())));
  }
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(samples.size() / 2), samples.end());
  return samples[samples.size() / 2];
}

inline double run_inference(const ParsedContainer& c, const KeyMaterial& key, const Dataset& batch) {
  const auto plain = decrypt_records(c, key);
  Model model = c.skeleton;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto& rec = c.records[i];
    fill_block(model, rec.key, rec.encrypted ? std::span<const std::uint8_t>(plain[i])
                                             : std::span<const std::uint8_t>(rec.payload));
  }
  const Model decoded = densify(model);
  double checksum = 0.0;
  for (const auto& x : batch.inputs) checksum += forward(decoded, x).output()[0];
  return checksum;
}

}  // namespace detail

/// Median wall-clock times over `repetitions` (>= 10) runs of: decrypting the
/// container's encrypted records; decrypting a fully encrypted re-seal of the
/// same model; and end-to-end decrypt + TT decode + forward over the batch for
/// both containers.
inline TimingReport bench_decrypt(std::span<const std::uint8_t> container, const KeyMaterial& key,
                                  const Dataset& eval_batch, std::size_t repetitions = 10) {
  require(repetitions >= 10, ErrorKind::config, "bench needs at least 10 repetitions");
  require(!eval_batch.empty(), ErrorKind::empty, "bench_decrypt: empty eval batch");
  const auto selective = parse_container(container);
  const Model model = unseal(container, key);
  EncryptionPlan full;
  full.selected = model.core_ids();
  const Bytes bb_bytes = seal(model, full, key, 0x5eed);
  const auto bb = parse_container(bb_bytes);

  TimingReport rep;
  rep.repetitions = repetitions;
  rep.seal_bytes = selective.encrypted_bytes();
  rep.bb_bytes = bb.encrypted_bytes();
  rep.total_bytes = selective.total_bytes();
  volatile std::size_t sink = 0;
  rep.t_seal_decrypt_ns = detail::median_ns(repetitions, [&] { sink = sink + detail::decrypt_records(selective, key).size(); });
  rep.t_bb_decrypt_ns = detail::median_ns(repetitions, [&] { sink = sink + detail::decrypt_records(bb, key).size(); });
  volatile double dsink = 0.0;
  rep.t_inference_ns = detail::median_ns(repetitions, [&] { dsink = dsink + detail::run_inference(selective, key, eval_batch); });
  rep.t_bb_inference_ns = detail::median_ns(repetitions, [&] { dsink = dsink + detail::run_inference(bb, key, eval_batch); });
  return rep;
}

}  // namespace ttseal
