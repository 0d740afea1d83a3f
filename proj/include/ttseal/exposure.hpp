#pragma once

// Which parameter blocks an attacker cannot read for a given set of encrypted
// cores, and the attacker's starting model built from the readable rest.

#include <algorithm>
#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "ttseal/nnet.hpp"

namespace ttseal {

/// Blocks of the first and last parameterized layers. They are always
/// encrypted, whatever the plan says.
inline std::set<ParamKey> mandatory_blocks(const Model& model) {
  const auto [first, last] = model.boundary_layers();
  std::set<ParamKey> out;
  for (const auto& key : model.parameter_keys())
    if (key.layer == first || key.layer == last) out.insert(key);
  return out;
}

/// Mandatory blocks, the planned cores, and the bias of every TT layer whose
/// cores are all planned.
inline std::set<ParamKey> hidden_blocks(const Model& model, std::span<const CoreId> encrypted_cores) {
  auto hidden = mandatory_blocks(model);
  for (auto id : encrypted_cores) {
    const auto key = ParamKey::of(id);
    require(model.contains(key), ErrorKind::unknown_core, "plan names unknown core " + id.str());
    hidden.insert(key);
  }
  for (std::size_t l = 0; l < model.layers().size(); ++l) {
    const auto* tt = std::get_if<TTLinearLayer>(&model.layers()[l]);
    if (tt == nullptr) continue;
    bool all = true;
    for (std::uint32_t k = 0; k < tt->tt.order(); ++k)
      all = all && hidden.count({static_cast<std::uint32_t>(l), BlockKind::core, k}) > 0;
    if (all) hidden.insert({static_cast<std::uint32_t>(l), BlockKind::bias, 0});
  }
  return hidden;
}

/// The attacker's substitute starting point: readable blocks copied as-is,
/// hidden blocks replaced by the seeded default initialization.
inline Model expose(const Model& model, const std::set<ParamKey>& hidden, std::uint64_t seed) {
  Model out = model;
  for (const auto& key : hidden) init_block(out, key, seed);
  return out;
}

}  // namespace ttseal
