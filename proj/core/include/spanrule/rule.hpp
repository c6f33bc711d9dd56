#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spanrule/corpus.hpp"
#include "spanrule/glm.hpp"

namespace spanrule {

inline constexpr int kAbstain = -1;

enum class PredicateOp { kEq, kNe, kIn, kNotIn, kIdxLt };
enum class RhsKind { kLiteral, kConcept, kVariable, kEntity };

/// One conjunct `(transform, lhs, op, rhs)`. Variables are indices into the
/// owning rule's variable list.
///
///   kEq / kNe     rhs literal phrase (normalized, space-separated)
///   kIn / kNotIn  rhs concept name or entity-type tag
///   kIdxLt        rhs variable; lhs starts strictly before rhs
struct Predicate {
  std::string transform;  // "", "lower" (literals) or "entity" (entity tags)
  std::size_t lhs = 0;
  PredicateOp op = PredicateOp::kEq;
  RhsKind rhs_kind = RhsKind::kLiteral;
  std::string rhs;         // literal, concept or tag
  std::size_t rhs_var = 0; // kVariable only

  bool unary() const { return op != PredicateOp::kIdxLt; }

  bool operator==(const Predicate&) const = default;
};

Predicate literal_eq(std::size_t var, std::string phrase);
Predicate literal_ne(std::size_t var, std::string phrase);
Predicate in_concept(std::size_t var, std::string concept_name);
Predicate not_in_concept(std::size_t var, std::string concept_name);
Predicate in_entity(std::size_t var, std::string tag);
Predicate not_in_entity(std::size_t var, std::string tag);
Predicate precedes(std::size_t a, std::size_t b);

using VarPair = std::pair<std::size_t, std::size_t>;

/// Conjunctive labeling rule `{t1..tn | conditions} => label`.
///
/// Rules are always held in canonical form: variables renamed so that
/// logically equal rules (up to condition order and variable naming) share
/// one serialization, conditions sorted and deduplicated. Variables whose
/// predicates are all kNotIn are guards: they bind nothing and assert that
/// the concept (or tag) is absent from the rule's scope.
struct Rule {
  std::size_t n_vars = 0;
  std::vector<Predicate> conditions;
  std::set<VarPair> sentence_pairs;  // (a < b); other pairs share the document
  int label = 0;
  std::string id;  // 16 lowercase hex digits

  std::string variable_name(std::size_t v) const { return "t" + std::to_string(v + 1); }
  bool is_guard(std::size_t v) const;
  std::size_t bound_vars() const;

  bool operator==(const Rule& o) const { return id == o.id; }
};

/// Validates, canonicalizes and assigns the id. Throws Error on a malformed
/// rule (unused variable, op/rhs mismatch, guard used positionally, ...).
Rule make_rule(std::size_t n_vars, std::vector<Predicate> conditions,
               std::set<VarPair> sentence_pairs, int label);

/// Canonical JSON: object keys sorted, predicates in canonical order.
nlohmann::json canonical_json(const Rule& rule);
Rule rule_from_json(const nlohmann::json& j);

/// FNV-1a (64-bit, offset 0xcbf29ce484222325, prime 0x100000001b3) over the
/// compact dump of canonical_json(), as 16 lowercase hex digits.
std::string stable_hash_hex(std::string_view bytes);

/// Relational-calculus form, e.g.
///   {t1, t2 | t1 = book ∧ t2 ∈ padj ∧ idx(t1) < idx(t2)} ⇒ positive
/// Scope is not part of this form; see scope_clause().
std::string notation(const Rule& rule, std::span<const std::string> label_names = {});

/// "same sentence", "same document", "t1 and t2 in same sentence", or ""
/// for rules with fewer than two bound variables.
std::string scope_clause(const Rule& rule);

/// UI rendering:
///   cond (" AND " cond)* [", " scope_clause] " ⇒ " LABEL
/// with cond one of `t1 = "w"`, `t1 ≠ "w"`, `t1 ∈ c`, `t1 ∉ c`,
/// `t1 before t2`, and LABEL the upper-cased label name (or LABEL_<n>).
std::string render(const Rule& rule, std::span<const std::string> label_names = {});

struct CompileOptions {
  /// Directed links also constrain both spans to one sentence.
  bool positional_implies_sentence = true;
};

/// A compiled interaction: the seed rule plus, per variable, the annotated
/// span it came from.
struct SeedRule {
  Rule rule;
  std::vector<TokenRange> var_spans;
};

/// One variable per span (ordered by span position); concept spans become
/// (v ∈ c), others (v = phrase). Directed links add idx(a) < idx(b) and,
/// by default, sentence scope; undirected links add sentence scope.
SeedRule compile_interaction(const Interaction& ix, const Document& doc,
                             const ConceptStore& store,
                             const CompileOptions& options = {});

/// Label if some assignment of distinct token ranges to the bound variables
/// satisfies every condition under the rule's scopes, else kAbstain. Throws
/// Error{kEvaluation} if the rule names an unknown concept.
int evaluate_rule(const Rule& rule, const Document& doc, const ConceptStore& store);

struct LabelingFunction {
  Rule rule;
  std::uint64_t accepted_at = 0;
  bool enabled = true;
  std::optional<std::string> error;
};

/// Documents x enabled functions grid of class indices or kAbstain.
class LabelMatrix {
 public:
  LabelMatrix() = default;
  LabelMatrix(std::size_t n_rows, std::vector<std::string> column_ids,
              std::vector<std::vector<int>> columns);

  std::size_t rows() const { return n_rows_; }
  std::size_t cols() const { return columns_.size(); }
  int at(std::size_t row, std::size_t col) const { return columns_[col][row]; }
  const std::vector<int>& column(std::size_t col) const { return columns_[col]; }
  const std::vector<std::string>& column_ids() const { return column_ids_; }
  std::vector<int> row(std::size_t r) const;
  bool row_abstains(std::size_t r) const;

  /// Columns reordered by `order` (new column k = old column order[k]).
  LabelMatrix permuted(std::span<const std::size_t> order) const;

  bool operator==(const LabelMatrix&) const = default;

 private:
  std::size_t n_rows_ = 0;
  std::vector<std::string> column_ids_;
  std::vector<std::vector<int>> columns_;
};

/// Column cache for one corpus. A cached column is reused while the versions
/// of every concept its rule names are unchanged.
class ColumnCache {
 public:
  const std::vector<int>* lookup(const Rule& rule, const ConceptStore& store) const;
  void store(const Rule& rule, const ConceptStore& store, std::vector<int> column);
  void erase(const std::string& rule_id) { entries_.erase(rule_id); }
  std::size_t size() const { return entries_.size(); }
  std::size_t misses() const { return misses_; }

 private:
  struct Entry {
    std::vector<int> column;
    std::map<std::string, std::uint64_t> versions;
  };
  std::map<std::string, Entry> entries_;
  mutable std::size_t misses_ = 0;
};

/// cell[i][j] = evaluate_rule(f_j, doc_i) for enabled functions in the given
/// order. A function whose evaluation fails is disabled, its `error` set, and
/// left out of the matrix.
LabelMatrix evaluate_all(std::span<LabelingFunction> functions, const Corpus& corpus,
                         const ConceptStore& store, ColumnCache* cache = nullptr);

nlohmann::json to_json(const LabelMatrix& m);

std::string_view to_string(PredicateOp op);

}  // namespace spanrule
