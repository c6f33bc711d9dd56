#include "spanrule/sampler.hpp"

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

constexpr double kTieTolerance = 1e-12;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// mt19937_64 output is fixed by the standard; the distributions are not, so
// both draws below are done by hand.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

double entropy(std::span<const double> p) {
  double sum = 0.0;
  double h = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) fail(ErrorCode::kInvalidArgument, "negative probability");
    sum += x;
    if (x > 0.0) h -= x * std::log(x);
  }
  if (std::abs(sum - 1.0) > 1e-9) fail(ErrorCode::kInvalidArgument, "probabilities do not sum to 1");
  return h;
}

std::string_view to_string(SamplerPolicy p) {
  switch (p) {
    case SamplerPolicy::kEntropy: return "entropy";
    case SamplerPolicy::kRandom: return "random";
    case SamplerPolicy::kEntropyEps: return "entropy_eps";
  }
  return "entropy";
}

SamplerPolicy sampler_policy_from_string(std::string_view name) {
  if (name == "entropy") return SamplerPolicy::kEntropy;
  if (name == "random") return SamplerPolicy::kRandom;
  if (name == "entropy_eps") return SamplerPolicy::kEntropyEps;
  fail(ErrorCode::kInvalidArgument, "unknown sampler policy '" + std::string(name) + "'");
}

std::string peek_next(std::span<const std::string> uids, const ProbabilityRows& posteriors,
                      const SamplerState& state, const std::vector<bool>& covered) {
  if (posteriors.size() != uids.size())
    fail(ErrorCode::kInvalidArgument, "one posterior row per document required");
  if (!covered.empty() && covered.size() != uids.size())
    fail(ErrorCode::kInvalidArgument, "coverage flags do not match documents");

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < uids.size(); ++i)
    if (!state.shown.contains(uids[i])) pool.push_back(i);
  if (pool.empty()) fail(ErrorCode::kUnavailable, "sampling pool exhausted");

  std::mt19937_64 rng(splitmix64(state.seed ^ splitmix64(state.shown.size())));

  if (state.policy == SamplerPolicy::kRandom) return uids[pool[uniform_index(rng, pool.size())]];

  if (state.policy == SamplerPolicy::kEntropyEps) {
    double u = uniform_unit(rng);
    if (u < state.epsilon) {
      std::vector<std::size_t> uncovered;
      for (std::size_t i : pool)
        if (covered.empty() || !covered[i]) uncovered.push_back(i);
      if (!uncovered.empty()) return uids[uncovered[uniform_index(rng, uncovered.size())]];
    }
  }

  std::vector<double> h(pool.size());
  double best = -1.0;
  for (std::size_t k = 0; k < pool.size(); ++k) {
    h[k] = entropy(posteriors[pool[k]]);
    best = std::max(best, h[k]);
  }
  std::vector<std::size_t> ties;
  for (std::size_t k = 0; k < pool.size(); ++k)
    if (h[k] >= best - kTieTolerance) ties.push_back(pool[k]);
  return uids[ties.size() == 1 ? ties[0] : ties[uniform_index(rng, ties.size())]];
}

std::string next_example(std::span<const std::string> uids, const ProbabilityRows& posteriors,
                         SamplerState& state, const std::vector<bool>& covered) {
  std::string uid = peek_next(uids, posteriors, state, covered);
  state.shown.insert(uid);
  return uid;
}

nlohmann::json to_json(const SamplerState& s) {
  return {{"policy", to_string(s.policy)},
          {"shown", s.shown},
          {"seed", s.seed},
          {"epsilon", s.epsilon}};
}

SamplerState sampler_state_from_json(const nlohmann::json& j) {
  SamplerState s;
  s.policy = sampler_policy_from_string(j.value("policy", std::string("entropy")));
  s.shown = j.value("shown", std::set<std::string>{});
  s.seed = j.value("seed", s.seed);
  s.epsilon = j.value("epsilon", s.epsilon);
  if (s.epsilon < 0.0 || s.epsilon > 1.0) fail(ErrorCode::kInvalidArgument, "epsilon must be in [0,1]");
  return s;
}

}  // namespace spanrule
