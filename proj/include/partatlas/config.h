#ifndef PARTATLAS_CONFIG_H_
#define PARTATLAS_CONFIG_H_

#include <cstdint>
#include <string>
#include <string_view>

#include "partatlas/anchors.h"
#include "partatlas/embedding.h"
#include "partatlas/io.h"
#include "partatlas/mil.h"
#include "partatlas/overlap.h"
#include "partatlas/synthetic.h"

namespace partatlas {

// Config sections are JSON objects. Readers start from the defaults, apply
// the given keys, and throw ConfigError on unknown keys or wrong types.

Json to_json(const OverlapConfig& c);
OverlapConfig overlap_config_from_json(const Json& j);

Json to_json(const MilConfig& c);
MilConfig mil_config_from_json(const Json& j);

AnchorHyperparams anchor_config_from_json(const Json& j);

Json to_json(const SyntheticProfile& p);
SyntheticProfile synthetic_profile_from_json(const Json& j);

// Section `name` of a config document, or an empty object.
Json config_section(const Json& config, std::string_view name);

uint64_t fnv1a64(std::string_view bytes);
// FNV-1a of the compact dump (object keys sorted), as 16 hex digits.
std::string config_hash(const Json& config);

inline constexpr std::string_view kToolVersion = "1.0.0";

// Reproducibility block written by every CLI run.
Json run_block(std::string_view verb, uint64_t seed, const Json& config,
               std::string_view command, int threads);

}  // namespace partatlas

#endif  // PARTATLAS_CONFIG_H_
