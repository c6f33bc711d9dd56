#include <doctest.h>

#include <algorithm>
#include <random>

#include "spanrule/error.hpp"
#include "spanrule/synthesizer.hpp"
#include "testkit.hpp"

using namespace spanrule;

namespace {

Rule rule1() { return make_rule(2, {in_concept(0, "item"), in_concept(1, "padj")}, {}, 1); }
Rule rule2() {
  return make_rule(2, {in_concept(0, "item"), in_concept(1, "padj"), precedes(0, 1)}, {{0, 1}}, 1);
}
Rule rule5() { return make_rule(2, {literal_eq(0, "book"), in_concept(1, "padj")}, {}, 1); }

bool contains(const std::vector<Rule>& rules, const Rule& r) {
  return std::any_of(rules.begin(), rules.end(), [&](const Rule& x) { return x.id == r.id; });
}

}  // namespace

TEST_CASE("expand: walkthrough generalizations") {
  auto a = testkit::amazon();
  auto seed = compile_interaction(a.ix, a.doc, a.store);
  auto rules = expand(seed, a.store, entity_cover(seed, a.doc));
  CHECK(rules.front().id == seed.rule.id);
  CHECK(contains(rules, rule1()));
  CHECK(contains(rules, rule2()));
  CHECK(contains(rules, rule5()));
  // Subsets: each variable alone.
  CHECK(contains(rules, make_rule(1, {in_concept(0, "padj")}, {}, 1)));
  CHECK(contains(rules, make_rule(1, {literal_eq(0, "book")}, {}, 1)));
  for (const auto& r : rules) CHECK(r.label == 1);
  std::vector<std::string> ids;
  for (const auto& r : rules) ids.push_back(r.id);
  std::sort(ids.begin(), ids.end());
  CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
}

TEST_CASE("expand: nothing to generalize") {
  auto a = testkit::amazon();
  Interaction ix{a.doc.uid, {{1, {2, 3}, std::nullopt}}, {}, 0};  // "was"
  auto seed = compile_interaction(ix, a.doc, a.store);
  auto rules = expand(seed, a.store, entity_cover(seed, a.doc));
  REQUIRE(rules.size() == 1);
  CHECK(rules[0].id == seed.rule.id);
}

TEST_CASE("expand: entity cover lifts a literal") {
  auto doc = make_document("e", "Alice loved it");
  ConceptStore store;
  Interaction ix{"e", {{1, {0, 1}, std::nullopt}}, {}, 1};
  auto seed = compile_interaction(ix, doc, store);
  auto tags = entity_cover(seed, doc);
  CHECK(tags == std::vector<std::vector<std::string>>{{"PERSON"}});
  auto rules = expand(seed, store, tags);
  CHECK(contains(rules, make_rule(1, {in_entity(0, "PERSON")}, {}, 1)));
}

TEST_CASE("expand respects the candidate cap") {
  auto a = testkit::amazon();
  auto seed = compile_interaction(a.ix, a.doc, a.store);
  SynthesisOptions o;
  o.max_candidates = 3;
  CHECK(expand(seed, a.store, entity_cover(seed, a.doc), o).size() == 3);
}

TEST_CASE("generalization score") {
  auto a = testkit::amazon();
  CHECK(generalization_score(rule1(), a.store) == 4.0);
  CHECK(generalization_score(rule2(), a.store) == 4.0);
  CHECK(generalization_score(rule5(), a.store) == 2.0);
  CHECK(generalization_score(make_rule(1, {in_entity(0, "PERSON")}, {}, 1), a.store) == 10.0);
  a.store.create("empty");
  CHECK(generalization_score(make_rule(1, {in_concept(0, "empty")}, {}, 1), a.store) == 0.0);
  CHECK_THROWS_AS(generalization_score(make_rule(1, {in_concept(0, "ghost")}, {}, 1), a.store), Error);
}

TEST_CASE("rank: walkthrough ordering and truncation") {
  auto a = testkit::amazon();
  auto seed = compile_interaction(a.ix, a.doc, a.store).rule;
  SynthesisOptions o;
  auto set = rank({rule5(), rule2(), rule1()}, seed, a.store, o);
  REQUIRE(set.candidates.size() == 3);
  CHECK(set.candidates[0].rule.id == rule1().id);
  CHECK(set.candidates[1].rule.id == rule2().id);
  CHECK(set.candidates[2].rule.id == rule5().id);
  CHECK(set.candidates[0].coverage == 1.0);
  CHECK(set.candidates[0].score == 4.0);

  o.k = 1;
  auto top = rank({rule5(), rule2(), rule1()}, seed, a.store, o);
  REQUIRE(top.candidates.size() == 1);
  CHECK(top.candidates[0].rule.id == rule1().id);

  auto dup = make_rule(2, {in_concept(1, "padj"), in_concept(0, "item")}, {}, 1);
  CHECK(rank({rule1(), dup}, seed, a.store).candidates.size() == 1);
}

TEST_CASE("rank is a pure function of its inputs") {
  auto a = testkit::amazon();
  auto seed = compile_interaction(a.ix, a.doc, a.store);
  auto rules = expand(seed, a.store, entity_cover(seed, a.doc));
  SynthesisOptions o;
  o.k = 100;
  auto first = rank(rules, seed.rule, a.store, o);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(rules.begin(), rules.end(), rng);
    auto again = rank(rules, seed.rule, a.store, o);
    REQUIRE(again.candidates.size() == first.candidates.size());
    for (std::size_t c = 0; c < first.candidates.size(); ++c)
      CHECK(again.candidates[c].rule.id == first.candidates[c].rule.id);
  }
  // The key is lexicographic and non-increasing along the list.
  for (std::size_t c = 1; c < first.candidates.size(); ++c) {
    const auto& p = first.candidates[c - 1];
    const auto& q = first.candidates[c];
    CHECK(p.coverage >= q.coverage);
    if (p.coverage == q.coverage) CHECK(p.score >= q.score);
  }
}

TEST_CASE("synthesize: rule (1) first for the walkthrough") {
  auto a = testkit::amazon();
  auto set = synthesize(a.ix, a.doc, a.store);
  REQUIRE(!set.candidates.empty());
  CHECK(set.candidates.size() <= 5);
  CHECK(set.candidates[0].rule.id == rule1().id);
  CHECK(render(set.candidates[0].rule, a.labels) == "t1 ∈ item AND t2 ∈ padj, same document ⇒ POSITIVE");
}

TEST_CASE("substitution and relaxation never lose a seed match") {
  std::mt19937_64 rng(31);
  const std::vector<std::string> words = {"book", "great", "movie", "bad", "alice", "paris", "good"};
  int checked = 0;
  for (int trial = 0; trial < 150; ++trial) {
    auto doc = testkit::random_document(rng, 0);
    if (doc.tokens.size() < 2) continue;
    ConceptStore store;
    store.create("k");
    for (int e = 0; e < 3; ++e) {
      std::string w = words[rng() % words.size()];
      if (!store.has_literal("k", w)) store.add_element("k", {ElementKind::kLiteral, w});
    }
    std::size_t a = rng() % doc.tokens.size();
    std::size_t b = rng() % doc.tokens.size();
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    Interaction ix{doc.uid, {{1, {a, a + 1}, std::nullopt}, {2, {b, b + 1}, std::nullopt}}, {}, 1};
    if (rng() % 2) ix.links.push_back({1, 2, true});  // directed or none: every kept relation is weaker
    SeedRule seed;
    try {
      seed = compile_interaction(ix, doc, store);
    } catch (const Error&) {
      continue;
    }
    auto rules = expand(seed, store, entity_cover(seed, doc));
    std::vector<Document> corpus;
    for (int i = 0; i < 30; ++i) corpus.push_back(testkit::random_document(rng, static_cast<std::size_t>(i)));
    corpus.push_back(doc);
    for (const auto& r : rules) {
      if (r.bound_vars() != seed.rule.bound_vars()) continue;  // subsets are exempt
      for (const auto& d : corpus) {
        if (evaluate_rule(seed.rule, d, store) == kAbstain) continue;
        CHECK(evaluate_rule(r, d, store) == seed.rule.label);
        ++checked;
      }
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("G is multiplicative in concept predicates") {
  std::mt19937_64 rng(37);
  int checked = 0;
  while (checked < 300) {
    auto store = testkit::random_concepts(rng);
    auto rule = testkit::random_rule(rng, store);
    if (!rule) continue;
    store.create("extra");
    std::size_t m = 1 + rng() % 5;
    for (std::size_t i = 0; i < m; ++i) store.add_element("extra", {ElementKind::kLiteral, "w" + std::to_string(i)});
    auto conds = rule->conditions;
    std::size_t v = rng() % rule->n_vars;
    if (rule->is_guard(v)) continue;
    conds.push_back(in_concept(v, "extra"));
    auto bigger = make_rule(rule->n_vars, conds, rule->sentence_pairs, rule->label);
    CHECK(generalization_score(bigger, store) ==
          doctest::Approx(generalization_score(*rule, store) * static_cast<double>(m)));
    ++checked;
  }
}
