#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spanrule/label_model.hpp"

namespace spanrule {

/// -sum p ln p with 0 ln 0 = 0. Throws on negative components or when p does
/// not sum to 1 within 1e-9.
double entropy(std::span<const double> p);

enum class SamplerPolicy { kEntropy, kRandom, kEntropyEps };

std::string_view to_string(SamplerPolicy p);
SamplerPolicy sampler_policy_from_string(std::string_view name);

struct SamplerState {
  SamplerPolicy policy = SamplerPolicy::kEntropy;
  std::set<std::string> shown;
  std::uint64_t seed = 42;
  double epsilon = 0.1;  // kEntropyEps: chance of serving an uncovered document

  bool operator==(const SamplerState&) const = default;
};

/// The document the policy would serve next, without recording it. The
/// random stream is a function of (seed, number of shown documents), so
/// repeated peeks agree. `covered[i]` marks rows with at least one vote;
/// when empty every row counts as uncovered. Throws Error{kUnavailable} when
/// every uid has been shown.
std::string peek_next(std::span<const std::string> uids, const ProbabilityRows& posteriors,
                      const SamplerState& state, const std::vector<bool>& covered = {});

/// peek_next, then records the uid as shown.
std::string next_example(std::span<const std::string> uids, const ProbabilityRows& posteriors,
                         SamplerState& state, const std::vector<bool>& covered = {});

nlohmann::json to_json(const SamplerState& s);
SamplerState sampler_state_from_json(const nlohmann::json& j);

}  // namespace spanrule
