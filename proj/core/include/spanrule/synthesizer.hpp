#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "spanrule/corpus.hpp"
#include "spanrule/glm.hpp"
#include "spanrule/rule.hpp"

namespace spanrule {

struct SynthesisOptions {
  std::size_t k = 5;                 // suggestions returned by rank()
  std::size_t max_vars = 3;          // variable cap for subset rules
  std::size_t max_candidates = 256;  // expansion cap, applied before ranking
  double entity_factor = 10.0;       // G contribution of an entity-tag predicate
};

struct Candidate {
  Rule rule;
  double score = 0.0;     // generalization score
  double coverage = 0.0;  // fraction of the seed's variables retained
};

struct CandidateSet {
  Rule seed;
  std::vector<Candidate> candidates;
};

/// For each seed variable, the entity tags whose spans cover every token of
/// the annotated span.
std::vector<std::vector<std::string>> entity_cover(const SeedRule& seed, const Document& doc);

/// Generalizations of the seed, seed first, deduplicated by id:
///  - a literal (v = w) may become (v ∈ c) for each concept c holding w as a
///    token element, or (v ∈ E) for each covering entity tag E;
///  - a linked pair keeps its own relation or takes any of
///    {before + same sentence, same sentence, same document};
///  - any non-empty subset of at most max_vars variables.
/// Enumeration stops at max_candidates rules.
std::vector<Rule> expand(const SeedRule& seed, const ConceptStore& store,
                         const std::vector<std::vector<std::string>>& entity_tags,
                         const SynthesisOptions& options = {});

/// Product over conditions of the right-hand-side cardinality: concept size
/// for concept sets, entity_factor for entity tags, 1 otherwise.
double generalization_score(const Rule& rule, const ConceptStore& store,
                            const SynthesisOptions& options = {});

/// Orders by coverage desc, score desc, condition count asc (predicates plus
/// sentence-scope pairs), id asc; keeps the first k.
CandidateSet rank(const std::vector<Rule>& rules, const Rule& seed, const ConceptStore& store,
                  const SynthesisOptions& options = {});

/// compile -> expand -> rank.
CandidateSet synthesize(const Interaction& ix, const Document& doc, const ConceptStore& store,
                        const SynthesisOptions& options = {},
                        const CompileOptions& compile_options = {});

}  // namespace spanrule
