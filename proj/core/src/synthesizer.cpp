#include "spanrule/synthesizer.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

enum class PairRelation { kBeforeSentence, kSentence, kDocument, kBeforeDocument };

struct PairInfo {
  std::size_t first = 0;   // earlier in the text
  std::size_t second = 0;
  PairRelation own = PairRelation::kDocument;
  bool linked = false;
};

std::size_t condition_count(const Rule& r) {
  return r.conditions.size() + r.sentence_pairs.size();
}

}  // namespace

std::vector<std::vector<std::string>> entity_cover(const SeedRule& seed, const Document& doc) {
  std::vector<std::vector<std::string>> out(seed.var_spans.size());
  std::set<std::string> tags;
  for (const auto& e : doc.entities) tags.insert(e.type);
  for (std::size_t v = 0; v < seed.var_spans.size(); ++v) {
    TokenRange r = seed.var_spans[v];
    if (r.empty()) continue;
    for (const auto& tag : tags) {
      bool all = true;
      for (std::size_t t = r.begin; t < r.end && all; ++t) {
        all = std::any_of(doc.entities.begin(), doc.entities.end(), [&](const EntitySpan& e) {
          return e.type == tag && e.range.begin <= t && t < e.range.end;
        });
      }
      if (all) out[v].push_back(tag);
    }
  }
  return out;
}

std::vector<Rule> expand(const SeedRule& seed, const ConceptStore& store,
                         const std::vector<std::vector<std::string>>& entity_tags,
                         const SynthesisOptions& options) {
  const Rule& s = seed.rule;
  const std::size_t n = s.n_vars;

  // Per-variable alternatives: each is a list of unary predicates (on var 0,
  // re-targeted later).
  std::vector<std::vector<std::vector<Predicate>>> alts(n);
  for (std::size_t v = 0; v < n; ++v) {
    std::vector<std::vector<Predicate>> acc{{}};
    for (const auto& p : s.conditions) {
      if (!p.unary() || p.lhs != v) continue;
      std::vector<Predicate> options_for_p{p};
      if (p.op == PredicateOp::kEq && p.rhs.find(' ') == std::string::npos) {
        for (const auto& name : store.names())
          if (store.has_literal(name, p.rhs)) options_for_p.push_back(in_concept(v, name));
      }
      if (p.op == PredicateOp::kEq && v < entity_tags.size()) {
        for (const auto& tag : entity_tags[v]) options_for_p.push_back(in_entity(v, tag));
      }
      std::vector<std::vector<Predicate>> next;
      for (const auto& partial : acc) {
        for (const auto& choice : options_for_p) {
          auto extended = partial;
          extended.push_back(choice);
          next.push_back(std::move(extended));
        }
      }
      acc = std::move(next);
    }
    alts[v] = std::move(acc);
  }

  // Pairwise relations between bound variables.
  std::vector<PairInfo> pairs;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      PairInfo info;
      bool a_first = a < seed.var_spans.size() && b < seed.var_spans.size()
                         ? seed.var_spans[a].begin <= seed.var_spans[b].begin
                         : true;
      info.first = a_first ? a : b;
      info.second = a_first ? b : a;
      bool sentence = s.sentence_pairs.count({a, b}) > 0;
      bool before = false;
      for (const auto& p : s.conditions) {
        if (p.unary()) continue;
        if ((p.lhs == a && p.rhs_var == b) || (p.lhs == b && p.rhs_var == a)) {
          before = true;
          info.first = p.lhs;
          info.second = p.rhs_var;
        }
      }
      info.linked = (sentence || before) && !s.is_guard(a) && !s.is_guard(b);
      info.own = before ? (sentence ? PairRelation::kBeforeSentence : PairRelation::kBeforeDocument)
                        : (sentence ? PairRelation::kSentence : PairRelation::kDocument);
      pairs.push_back(info);
    }
  }

  std::vector<Rule> out;
  std::set<std::string> seen;
  auto emit = [&](Rule r) {
    if (out.size() >= options.max_candidates) return;
    if (seen.insert(r.id).second) out.push_back(std::move(r));
  };
  emit(s);

  // Subsets by decreasing size, then lexicographic bitmask order.
  std::vector<std::vector<std::size_t>> subsets;
  if (n <= 16) {
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      std::vector<std::size_t> vars;
      for (std::size_t v = 0; v < n; ++v)
        if (mask & (1u << v)) vars.push_back(v);
      if (vars.size() <= options.max_vars || vars.size() == n) subsets.push_back(std::move(vars));
    }
  } else {
    std::vector<std::size_t> all(n);
    for (std::size_t v = 0; v < n; ++v) all[v] = v;
    subsets.push_back(std::move(all));
  }
  std::stable_sort(subsets.begin(), subsets.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  for (const auto& vars : subsets) {
    if (out.size() >= options.max_candidates) break;
    std::vector<std::size_t> local(n, n);
    for (std::size_t i = 0; i < vars.size(); ++i) local[vars[i]] = i;

    std::vector<const PairInfo*> kept_pairs;
    for (const auto& p : pairs)
      if (local[p.first] < n && local[p.second] < n) kept_pairs.push_back(&p);
    std::vector<std::vector<PairRelation>> pair_choices;
    for (const PairInfo* p : kept_pairs) {
      std::vector<PairRelation> c{p->own};
      if (p->linked) {
        for (PairRelation r : {PairRelation::kBeforeSentence, PairRelation::kSentence,
                               PairRelation::kDocument})
          if (r != p->own) c.push_back(r);
      }
      pair_choices.push_back(std::move(c));
    }

    std::vector<std::size_t> var_idx(vars.size(), 0);
    std::vector<std::size_t> pair_idx(kept_pairs.size(), 0);
    while (out.size() < options.max_candidates) {
      std::vector<Predicate> conds;
      std::set<VarPair> sentence;
      for (std::size_t i = 0; i < vars.size(); ++i) {
        for (Predicate p : alts[vars[i]][var_idx[i]]) {
          p.lhs = i;
          conds.push_back(std::move(p));
        }
      }
      for (std::size_t k = 0; k < kept_pairs.size(); ++k) {
        std::size_t a = local[kept_pairs[k]->first];
        std::size_t b = local[kept_pairs[k]->second];
        PairRelation rel = pair_choices[k][pair_idx[k]];
        if (rel == PairRelation::kBeforeSentence || rel == PairRelation::kBeforeDocument)
          conds.push_back(precedes(a, b));
        if (rel == PairRelation::kBeforeSentence || rel == PairRelation::kSentence)
          sentence.insert({std::min(a, b), std::max(a, b)});
      }
      try {
        emit(make_rule(vars.size(), std::move(conds), std::move(sentence), s.label));
      } catch (const Error& e) {
        // A subset may strand a variable that only had positional predicates.
        if (e.code() != ErrorCode::kInvalidArgument) throw;
      }

      // Odometer: pair relations fastest, then variable alternatives.
      bool advanced = false;
      for (std::size_t k = kept_pairs.size(); k-- > 0 && !advanced;) {
        if (++pair_idx[k] < pair_choices[k].size()) {
          advanced = true;
        } else {
          pair_idx[k] = 0;
        }
      }
      for (std::size_t i = vars.size(); i-- > 0 && !advanced;) {
        if (++var_idx[i] < alts[vars[i]].size()) {
          advanced = true;
        } else {
          var_idx[i] = 0;
        }
      }
      if (!advanced) break;
    }
  }
  return out;
}

double generalization_score(const Rule& rule, const ConceptStore& store,
                            const SynthesisOptions& options) {
  double g = 1.0;
  for (const auto& p : rule.conditions) {
    if (p.op != PredicateOp::kIn && p.op != PredicateOp::kNotIn) continue;
    if (p.rhs_kind == RhsKind::kEntity) {
      g *= options.entity_factor;
    } else {
      const Concept* c = store.find(p.rhs);
      if (!c) fail(ErrorCode::kNotFound, "unknown concept '" + p.rhs + "'");
      g *= static_cast<double>(c->elements.size());
    }
  }
  return g;
}

CandidateSet rank(const std::vector<Rule>& rules, const Rule& seed, const ConceptStore& store,
                  const SynthesisOptions& options) {
  if (options.k < 1) fail(ErrorCode::kInvalidArgument, "k must be at least 1");
  CandidateSet set;
  set.seed = seed;
  std::set<std::string> seen;
  for (const auto& r : rules) {
    if (!seen.insert(r.id).second) continue;
    Candidate c;
    c.rule = r;
    c.score = generalization_score(r, store, options);
    c.coverage = seed.n_vars == 0
                     ? 0.0
                     : std::min(1.0, static_cast<double>(r.n_vars) / static_cast<double>(seed.n_vars));
    set.candidates.push_back(std::move(c));
  }
  std::sort(set.candidates.begin(), set.candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              auto ka = std::make_tuple(-a.coverage, -a.score, condition_count(a.rule), std::cref(a.rule.id));
              auto kb = std::make_tuple(-b.coverage, -b.score, condition_count(b.rule), std::cref(b.rule.id));
              return ka < kb;
            });
  if (set.candidates.size() > options.k) set.candidates.resize(options.k);
  return set;
}

CandidateSet synthesize(const Interaction& ix, const Document& doc, const ConceptStore& store,
                        const SynthesisOptions& options, const CompileOptions& compile_options) {
  SeedRule seed = compile_interaction(ix, doc, store, compile_options);
  auto rules = expand(seed, store, entity_cover(seed, doc), options);
  return rank(rules, seed.rule, store, options);
}

}  // namespace spanrule
