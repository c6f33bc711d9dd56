#include "spanrule/rule.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <tuple>

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

constexpr std::size_t kMaxCanonicalPermutations = 5040;

int op_rank(PredicateOp op) { return static_cast<int>(op); }

std::string_view kind_name(RhsKind k) {
  switch (k) {
    case RhsKind::kLiteral: return "literal";
    case RhsKind::kConcept: return "concept";
    case RhsKind::kVariable: return "variable";
    case RhsKind::kEntity: return "entity";
  }
  return "literal";
}

RhsKind kind_from_name(std::string_view s) {
  if (s == "literal") return RhsKind::kLiteral;
  if (s == "concept") return RhsKind::kConcept;
  if (s == "variable") return RhsKind::kVariable;
  if (s == "entity") return RhsKind::kEntity;
  fail(ErrorCode::kInvalidArgument, "unknown rhs kind '" + std::string(s) + "'");
}

PredicateOp op_from_name(std::string_view s) {
  if (s == "eq") return PredicateOp::kEq;
  if (s == "ne") return PredicateOp::kNe;
  if (s == "in") return PredicateOp::kIn;
  if (s == "not_in") return PredicateOp::kNotIn;
  if (s == "idx_lt") return PredicateOp::kIdxLt;
  fail(ErrorCode::kInvalidArgument, "unknown predicate op '" + std::string(s) + "'");
}

auto predicate_key(const Predicate& p) {
  return std::make_tuple(!p.unary(), p.lhs, op_rank(p.op), static_cast<int>(p.rhs_kind),
                         std::cref(p.rhs), p.rhs_var, std::cref(p.transform));
}

bool predicate_less(const Predicate& a, const Predicate& b) {
  return predicate_key(a) < predicate_key(b);
}

std::string normalize_phrase(std::string_view text) {
  std::string out;
  for (const Token& t : tokenize(text)) {
    if (!out.empty()) out += ' ';
    out += t.normalized;
  }
  return out;
}

nlohmann::json predicate_json(const Predicate& p) {
  nlohmann::json j;
  j["lhs"] = p.lhs;
  j["op"] = to_string(p.op);
  nlohmann::json rhs;
  rhs["kind"] = kind_name(p.rhs_kind);
  if (p.rhs_kind == RhsKind::kVariable) {
    rhs["var"] = p.rhs_var;
  } else {
    rhs["value"] = p.rhs;
  }
  j["rhs"] = rhs;
  if (!p.transform.empty()) j["transform"] = p.transform;
  return j;
}

nlohmann::json rule_json(std::size_t n_vars, const std::vector<Predicate>& conds,
                         const std::set<VarPair>& pairs, int label) {
  nlohmann::json j;
  j["label"] = label;
  j["variables"] = n_vars;
  auto& preds = j["predicates"] = nlohmann::json::array();
  for (const auto& p : conds) preds.push_back(predicate_json(p));
  auto& scopes = j["sentence_scope"] = nlohmann::json::array();
  for (const auto& [a, b] : pairs) scopes.push_back({a, b});
  return j;
}

void validate_predicate(Predicate& p, std::size_t n_vars) {
  if (p.lhs >= n_vars) fail(ErrorCode::kInvalidArgument, "predicate lhs out of range");
  switch (p.op) {
    case PredicateOp::kEq:
    case PredicateOp::kNe: {
      if (p.rhs_kind != RhsKind::kLiteral)
        fail(ErrorCode::kInvalidArgument, "= and ≠ take a literal right-hand side");
      if (!p.transform.empty() && p.transform != "lower")
        fail(ErrorCode::kInvalidArgument, "unknown literal transform '" + p.transform + "'");
      p.rhs = normalize_phrase(p.rhs);
      if (p.rhs.empty())
        fail(ErrorCode::kInvalidArgument, "literal has no word characters");
      break;
    }
    case PredicateOp::kIn:
    case PredicateOp::kNotIn:
      if (p.rhs_kind == RhsKind::kConcept) {
        if (!p.transform.empty())
          fail(ErrorCode::kInvalidArgument, "concept predicates take no transform");
      } else if (p.rhs_kind == RhsKind::kEntity) {
        p.transform = "entity";
      } else {
        fail(ErrorCode::kInvalidArgument, "∈ and ∉ take a concept or entity tag");
      }
      if (p.rhs.empty()) fail(ErrorCode::kInvalidArgument, "empty set name");
      break;
    case PredicateOp::kIdxLt:
      if (p.rhs_kind != RhsKind::kVariable)
        fail(ErrorCode::kInvalidArgument, "idx< takes a variable right-hand side");
      if (p.rhs_var >= n_vars) fail(ErrorCode::kInvalidArgument, "predicate rhs out of range");
      if (p.rhs_var == p.lhs) fail(ErrorCode::kInvalidArgument, "idx(t) < idx(t) is unsatisfiable");
      p.rhs.clear();
      p.transform.clear();
      break;
  }
  if (p.rhs_kind != RhsKind::kVariable) p.rhs_var = 0;
}

struct Canonical {
  Rule rule;
  std::vector<std::size_t> perm;  // old var -> new var
};

Canonical canonicalize(std::size_t n_vars, std::vector<Predicate> conds,
                       std::set<VarPair> pairs, int label) {
  if (n_vars == 0) fail(ErrorCode::kInvalidArgument, "rule has no variables");
  if (conds.empty()) fail(ErrorCode::kInvalidArgument, "rule has no conditions");
  if (label < 0) fail(ErrorCode::kInvalidArgument, "rule label must be non-negative");

  std::vector<bool> used(n_vars, false);
  std::vector<bool> has_not_in(n_vars, false);
  std::vector<bool> has_positive(n_vars, false);
  for (auto& p : conds) {
    validate_predicate(p, n_vars);
    used[p.lhs] = true;
    if (p.op == PredicateOp::kIdxLt) {
      used[p.rhs_var] = true;
      has_positive[p.lhs] = has_positive[p.rhs_var] = true;
    } else if (p.op == PredicateOp::kNotIn) {
      has_not_in[p.lhs] = true;
    } else {
      has_positive[p.lhs] = true;
    }
  }
  for (std::size_t v = 0; v < n_vars; ++v) {
    if (!used[v]) fail(ErrorCode::kInvalidArgument, "variable t" + std::to_string(v + 1) +
                                                        " appears in no predicate");
    if (has_not_in[v] && has_positive[v])
      fail(ErrorCode::kInvalidArgument,
           "t" + std::to_string(v + 1) + " mixes ∉ with binding predicates");
  }
  for (const auto& [a, b] : pairs) {
    if (a >= n_vars || b >= n_vars || a == b)
      fail(ErrorCode::kInvalidArgument, "invalid sentence-scope pair");
  }

  // Order variables by their unary predicates; permute only inside ties.
  std::vector<std::string> sig(n_vars);
  {
    std::vector<std::vector<std::string>> parts(n_vars);
    for (const auto& p : conds) {
      if (!p.unary()) continue;
      parts[p.lhs].push_back(std::to_string(op_rank(p.op)) + '\x1f' +
                             std::string(kind_name(p.rhs_kind)) + '\x1f' + p.rhs + '\x1f' +
                             p.transform);
    }
    for (std::size_t v = 0; v < n_vars; ++v) {
      std::sort(parts[v].begin(), parts[v].end());
      for (const auto& s : parts[v]) sig[v] += s + '\x1e';
    }
  }
  std::vector<std::size_t> order(n_vars);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sig[a] < sig[b]; });
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [first, last) in order
  for (std::size_t i = 0; i < n_vars;) {
    std::size_t j = i + 1;
    while (j < n_vars && sig[order[j]] == sig[order[i]]) ++j;
    groups.push_back({i, j});
    i = j;
  }

  Canonical best;
  std::string best_dump;
  std::size_t tried = 0;
  auto try_order = [&]() {
    std::vector<std::size_t> perm(n_vars);
    for (std::size_t k = 0; k < n_vars; ++k) perm[order[k]] = k;
    std::vector<Predicate> renamed = conds;
    for (auto& p : renamed) {
      p.lhs = perm[p.lhs];
      if (p.rhs_kind == RhsKind::kVariable) p.rhs_var = perm[p.rhs_var];
    }
    std::sort(renamed.begin(), renamed.end(), predicate_less);
    renamed.erase(std::unique(renamed.begin(), renamed.end()), renamed.end());
    std::set<VarPair> rp;
    for (const auto& [a, b] : pairs) rp.insert({std::min(perm[a], perm[b]), std::max(perm[a], perm[b])});
    std::string dump = rule_json(n_vars, renamed, rp, label).dump();
    if (tried == 0 || dump < best_dump) {
      best_dump = dump;
      best.rule.n_vars = n_vars;
      best.rule.conditions = std::move(renamed);
      best.rule.sentence_pairs = std::move(rp);
      best.rule.label = label;
      best.perm = std::move(perm);
    }
    ++tried;
  };

  // Odometer over per-group permutations.
  auto advance = [&]() {
    for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
      auto first = order.begin() + static_cast<std::ptrdiff_t>(it->first);
      auto last = order.begin() + static_cast<std::ptrdiff_t>(it->second);
      if (std::next_permutation(first, last)) return true;
    }
    return false;
  };
  for (auto& g : groups)
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(g.first),
              order.begin() + static_cast<std::ptrdiff_t>(g.second));
  do {
    try_order();
  } while (tried < kMaxCanonicalPermutations && advance());

  best.rule.id = stable_hash_hex(best_dump);
  return best;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

bool bare_word(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || c == '\'';
  });
}

std::string label_name(int label, std::span<const std::string> names) {
  if (label >= 0 && static_cast<std::size_t>(label) < names.size()) return names[label];
  return std::to_string(label);
}

}  // namespace

std::string_view to_string(PredicateOp op) {
  switch (op) {
    case PredicateOp::kEq: return "eq";
    case PredicateOp::kNe: return "ne";
    case PredicateOp::kIn: return "in";
    case PredicateOp::kNotIn: return "not_in";
    case PredicateOp::kIdxLt: return "idx_lt";
  }
  return "eq";
}

Predicate literal_eq(std::size_t var, std::string phrase) {
  return {"", var, PredicateOp::kEq, RhsKind::kLiteral, std::move(phrase), 0};
}
Predicate literal_ne(std::size_t var, std::string phrase) {
  return {"", var, PredicateOp::kNe, RhsKind::kLiteral, std::move(phrase), 0};
}
Predicate in_concept(std::size_t var, std::string name) {
  return {"", var, PredicateOp::kIn, RhsKind::kConcept, std::move(name), 0};
}
Predicate not_in_concept(std::size_t var, std::string name) {
  return {"", var, PredicateOp::kNotIn, RhsKind::kConcept, std::move(name), 0};
}
Predicate in_entity(std::size_t var, std::string tag) {
  return {"entity", var, PredicateOp::kIn, RhsKind::kEntity, std::move(tag), 0};
}
Predicate not_in_entity(std::size_t var, std::string tag) {
  return {"entity", var, PredicateOp::kNotIn, RhsKind::kEntity, std::move(tag), 0};
}
Predicate precedes(std::size_t a, std::size_t b) {
  return {"", a, PredicateOp::kIdxLt, RhsKind::kVariable, "", b};
}

bool Rule::is_guard(std::size_t v) const {
  bool any = false;
  for (const auto& p : conditions) {
    if (p.lhs == v) {
      if (p.op != PredicateOp::kNotIn) return false;
      any = true;
    }
    if (!p.unary() && p.rhs_var == v) return false;
  }
  return any;
}

std::size_t Rule::bound_vars() const {
  std::size_t n = 0;
  for (std::size_t v = 0; v < n_vars; ++v)
    if (!is_guard(v)) ++n;
  return n;
}

Rule make_rule(std::size_t n_vars, std::vector<Predicate> conditions,
               std::set<VarPair> sentence_pairs, int label) {
  return canonicalize(n_vars, std::move(conditions), std::move(sentence_pairs), label).rule;
}

nlohmann::json canonical_json(const Rule& rule) {
  return rule_json(rule.n_vars, rule.conditions, rule.sentence_pairs, rule.label);
}

Rule rule_from_json(const nlohmann::json& j) {
  try {
    std::vector<Predicate> conds;
    for (const auto& jp : j.at("predicates")) {
      Predicate p;
      p.lhs = jp.at("lhs").get<std::size_t>();
      p.op = op_from_name(jp.at("op").get<std::string>());
      const auto& rhs = jp.at("rhs");
      p.rhs_kind = kind_from_name(rhs.at("kind").get<std::string>());
      if (p.rhs_kind == RhsKind::kVariable) {
        p.rhs_var = rhs.at("var").get<std::size_t>();
      } else {
        p.rhs = rhs.at("value").get<std::string>();
      }
      p.transform = jp.value("transform", std::string());
      conds.push_back(std::move(p));
    }
    std::set<VarPair> pairs;
    for (const auto& s : j.value("sentence_scope", nlohmann::json::array()))
      pairs.insert({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    return make_rule(j.at("variables").get<std::size_t>(), std::move(conds), std::move(pairs),
                     j.at("label").get<int>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed rule: ") + e.what());
  }
}

std::string stable_hash_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string notation(const Rule& rule, std::span<const std::string> label_names) {
  std::string out = "{";
  for (std::size_t v = 0; v < rule.n_vars; ++v) {
    if (v > 0) out += ", ";
    out += rule.variable_name(v);
  }
  out += " | ";
  for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
    const auto& p = rule.conditions[i];
    if (i > 0) out += " ∧ ";
    std::string lhs = rule.variable_name(p.lhs);
    switch (p.op) {
      case PredicateOp::kEq:
        out += lhs + " = " + (bare_word(p.rhs) ? p.rhs : quote(p.rhs));
        break;
      case PredicateOp::kNe:
        out += lhs + " ≠ " + (bare_word(p.rhs) ? p.rhs : quote(p.rhs));
        break;
      case PredicateOp::kIn: out += lhs + " ∈ " + p.rhs; break;
      case PredicateOp::kNotIn: out += lhs + " ∉ " + p.rhs; break;
      case PredicateOp::kIdxLt:
        out += "idx(" + lhs + ") < idx(" + rule.variable_name(p.rhs_var) + ")";
        break;
    }
  }
  out += "} ⇒ " + label_name(rule.label, label_names);
  return out;
}

std::string scope_clause(const Rule& rule) {
  std::vector<std::size_t> bound;
  for (std::size_t v = 0; v < rule.n_vars; ++v)
    if (!rule.is_guard(v)) bound.push_back(v);
  if (bound.size() < 2 && rule.sentence_pairs.empty()) return "";
  std::size_t bound_pairs = bound.size() * (bound.size() - (bound.empty() ? 0 : 1)) / 2;
  std::size_t sentence_bound = 0;
  for (const auto& [a, b] : rule.sentence_pairs)
    if (!rule.is_guard(a) && !rule.is_guard(b)) ++sentence_bound;
  if (rule.sentence_pairs.empty()) return "same document";
  if (sentence_bound == bound_pairs && sentence_bound == rule.sentence_pairs.size())
    return "same sentence";
  std::string out;
  for (const auto& [a, b] : rule.sentence_pairs) {
    if (!out.empty()) out += "; ";
    out += rule.variable_name(a) + " and " + rule.variable_name(b) + " in same sentence";
  }
  return out;
}

std::string render(const Rule& rule, std::span<const std::string> label_names) {
  std::string out;
  for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
    const auto& p = rule.conditions[i];
    if (i > 0) out += " AND ";
    std::string lhs = rule.variable_name(p.lhs);
    switch (p.op) {
      case PredicateOp::kEq: out += lhs + " = " + quote(p.rhs); break;
      case PredicateOp::kNe: out += lhs + " ≠ " + quote(p.rhs); break;
      case PredicateOp::kIn: out += lhs + " ∈ " + p.rhs; break;
      case PredicateOp::kNotIn: out += lhs + " ∉ " + p.rhs; break;
      case PredicateOp::kIdxLt: out += lhs + " before " + rule.variable_name(p.rhs_var); break;
    }
  }
  std::string scope = scope_clause(rule);
  if (!scope.empty()) out += ", " + scope;
  std::string name = rule.label >= 0 && static_cast<std::size_t>(rule.label) < label_names.size()
                         ? label_names[rule.label]
                         : "LABEL_" + std::to_string(rule.label);
  for (char& c : name)
    if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  out += " ⇒ " + name;
  return out;
}

SeedRule compile_interaction(const Interaction& ix, const Document& doc,
                             const ConceptStore& store, const CompileOptions& options) {
  if (ix.spans.empty()) fail(ErrorCode::kInvalidArgument, "interaction has no spans");
  if (ix.doc_uid != doc.uid)
    fail(ErrorCode::kInvalidArgument, "interaction targets '" + ix.doc_uid +
                                          "' but document is '" + doc.uid + "'");
  validate_interaction(ix, doc.tokens.size(), std::max(ix.label + 1, 1));

  std::vector<std::size_t> by_pos(ix.spans.size());
  std::iota(by_pos.begin(), by_pos.end(), 0);
  std::sort(by_pos.begin(), by_pos.end(), [&](std::size_t a, std::size_t b) {
    return ix.spans[a].range < ix.spans[b].range;
  });
  std::map<int, std::size_t> var_of;  // span id -> variable
  std::vector<TokenRange> spans(ix.spans.size());
  std::vector<Predicate> conds;
  for (std::size_t v = 0; v < by_pos.size(); ++v) {
    const auto& s = ix.spans[by_pos[v]];
    var_of[s.id] = v;
    spans[v] = s.range;
    if (s.concept_name) {
      if (!store.contains(*s.concept_name))
        fail(ErrorCode::kNotFound, "unknown concept '" + *s.concept_name + "'");
      conds.push_back(in_concept(v, *s.concept_name));
    } else {
      conds.push_back(literal_eq(v, doc.phrase(s.range)));
    }
  }
  std::set<VarPair> pairs;
  for (const auto& l : ix.links) {
    std::size_t a = var_of.at(l.a);
    std::size_t b = var_of.at(l.b);
    if (l.directed) {
      conds.push_back(precedes(a, b));
      if (options.positional_implies_sentence) pairs.insert({std::min(a, b), std::max(a, b)});
    } else {
      pairs.insert({std::min(a, b), std::max(a, b)});
    }
  }
  Canonical c = canonicalize(spans.size(), std::move(conds), std::move(pairs), ix.label);
  SeedRule seed;
  seed.rule = std::move(c.rule);
  seed.var_spans.resize(spans.size());
  for (std::size_t v = 0; v < spans.size(); ++v) seed.var_spans[c.perm[v]] = spans[v];
  return seed;
}

namespace {

class Evaluator {
 public:
  Evaluator(const Rule& rule, const Document& doc, const ConceptStore& store)
      : rule_(rule), doc_(doc), store_(store) {}

  bool satisfied() {
    const std::size_t n = rule_.n_vars;
    guard_.assign(n, false);
    for (std::size_t v = 0; v < n; ++v) guard_[v] = rule_.is_guard(v);

    for (std::size_t v = 0; v < n; ++v)
      if (guard_[v]) guard_scoped_.push_back(v);
    // Guards with no sentence link to a bound variable are document-wide.
    std::vector<std::size_t> deferred;
    for (std::size_t g : guard_scoped_) {
      if (sentence_partners(g).empty()) {
        if (!absent_in(g, std::nullopt)) return false;
      } else {
        deferred.push_back(g);
      }
    }
    guard_scoped_ = std::move(deferred);

    for (std::size_t v = 0; v < n; ++v) {
      if (guard_[v]) continue;
      candidates_[v] = candidates(v);
      if (candidates_[v].empty()) return false;
      order_.push_back(v);
    }
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return candidates_[a].size() < candidates_[b].size();
    });
    assigned_.assign(n, std::nullopt);
    return search(0);
  }

 private:
  std::vector<std::size_t> sentence_partners(std::size_t g) const {
    std::vector<std::size_t> out;
    for (const auto& [a, b] : rule_.sentence_pairs) {
      if (a == g && !guard_[b]) out.push_back(b);
      if (b == g && !guard_[a]) out.push_back(a);
    }
    return out;
  }

  const std::vector<TokenRange>& concept_ranges(const std::string& name) {
    auto it = concept_cache_.find(name);
    if (it != concept_cache_.end()) return it->second;
    if (!store_.contains(name))
      fail(ErrorCode::kEvaluation, "rule " + rule_.id + " references unknown concept '" +
                                       name + "'");
    return concept_cache_.emplace(name, store_.matches(name, doc_)).first->second;
  }

  const std::vector<bool>& entity_cover(const std::string& tag) {
    auto it = entity_cache_.find(tag);
    if (it != entity_cache_.end()) return it->second;
    std::vector<bool> cover(doc_.tokens.size(), false);
    for (const auto& e : doc_.entities)
      if (e.type == tag)
        for (std::size_t t = e.range.begin; t < e.range.end; ++t) cover[t] = true;
    return entity_cache_.emplace(tag, std::move(cover)).first->second;
  }

  bool unary_holds(const Predicate& p, TokenRange r) {
    switch (p.op) {
      case PredicateOp::kEq: return doc_.phrase(r) == p.rhs;
      case PredicateOp::kNe: return doc_.phrase(r) != p.rhs;
      case PredicateOp::kIn:
        if (p.rhs_kind == RhsKind::kConcept) {
          const auto& m = concept_ranges(p.rhs);
          return std::binary_search(m.begin(), m.end(), r);
        } else {
          const auto& cover = entity_cover(p.rhs);
          for (std::size_t t = r.begin; t < r.end; ++t)
            if (!cover[t]) return false;
          return !r.empty();
        }
      default: return true;
    }
  }

  std::vector<TokenRange> candidates(std::size_t v) {
    const Predicate* eq = nullptr;
    const Predicate* in = nullptr;
    std::vector<const Predicate*> unary;
    for (const auto& p : rule_.conditions) {
      if (p.lhs != v || !p.unary()) continue;
      unary.push_back(&p);
      if (p.op == PredicateOp::kEq && !eq) eq = &p;
      if (p.op == PredicateOp::kIn && p.rhs_kind == RhsKind::kConcept && !in) in = &p;
    }
    std::vector<TokenRange> pool;
    const std::size_t n = doc_.tokens.size();
    if (eq) {
      std::size_t len = static_cast<std::size_t>(std::count(eq->rhs.begin(), eq->rhs.end(), ' ')) + 1;
      for (std::size_t i = 0; i + len <= n; ++i) pool.push_back({i, i + len});
    } else if (in) {
      pool = concept_ranges(in->rhs);
    } else {
      for (std::size_t i = 0; i < n; ++i) pool.push_back({i, i + 1});
    }
    std::vector<TokenRange> out;
    for (TokenRange r : pool) {
      bool ok = true;
      for (const Predicate* p : unary) {
        if (!unary_holds(*p, r)) {
          ok = false;
          break;
        }
      }
      if (ok) out.push_back(r);
    }
    return out;
  }

  // True when no match of v's ∉ sets touches `sentences` (whole document when
  // nullopt).
  bool absent_in(std::size_t g, const std::optional<std::vector<std::size_t>>& sentences) {
    auto in_scope = [&](TokenRange r) {
      if (!sentences) return true;
      for (std::size_t t = r.begin; t < r.end; ++t)
        if (std::find(sentences->begin(), sentences->end(), doc_.sentence_of[t]) != sentences->end())
          return true;
      return false;
    };
    for (const auto& p : rule_.conditions) {
      if (p.lhs != g || p.op != PredicateOp::kNotIn) continue;
      if (p.rhs_kind == RhsKind::kConcept) {
        for (TokenRange r : concept_ranges(p.rhs))
          if (in_scope(r)) return false;
      } else {
        const auto& cover = entity_cover(p.rhs);
        for (std::size_t t = 0; t < cover.size(); ++t)
          if (cover[t] && in_scope({t, t + 1})) return false;
      }
    }
    return true;
  }

  bool consistent(std::size_t v, TokenRange r) {
    for (std::size_t u = 0; u < rule_.n_vars; ++u) {
      if (!assigned_[u] || u == v) continue;
      if (*assigned_[u] == r) return false;
    }
    for (const auto& [a, b] : rule_.sentence_pairs) {
      if (a != v && b != v) continue;
      std::size_t u = a == v ? b : a;
      if (guard_[u] || !assigned_[u]) continue;
      auto su = doc_.sentence_containing(*assigned_[u]);
      auto sv = doc_.sentence_containing(r);
      if (!su || !sv || *su != *sv) return false;
    }
    for (const auto& p : rule_.conditions) {
      if (p.unary()) continue;
      if (p.lhs == v && assigned_[p.rhs_var] && !(r.begin < assigned_[p.rhs_var]->begin))
        return false;
      if (p.rhs_var == v && assigned_[p.lhs] && !(assigned_[p.lhs]->begin < r.begin))
        return false;
    }
    return true;
  }

  bool guards_hold() {
    for (std::size_t g : guard_scoped_) {
      std::vector<std::size_t> sentences;
      for (std::size_t u : sentence_partners(g))
        for (std::size_t t = assigned_[u]->begin; t < assigned_[u]->end; ++t)
          sentences.push_back(doc_.sentence_of[t]);
      if (!absent_in(g, sentences)) return false;
    }
    return true;
  }

  bool search(std::size_t depth) {
    if (depth == order_.size()) return guards_hold();
    std::size_t v = order_[depth];
    for (TokenRange r : candidates_[v]) {
      if (!consistent(v, r)) continue;
      assigned_[v] = r;
      if (search(depth + 1)) return true;
      assigned_[v].reset();
    }
    return false;
  }

  const Rule& rule_;
  const Document& doc_;
  const ConceptStore& store_;
  std::vector<bool> guard_;
  std::vector<std::size_t> guard_scoped_;
  std::vector<std::size_t> order_;
  std::map<std::size_t, std::vector<TokenRange>> candidates_;
  std::vector<std::optional<TokenRange>> assigned_;
  std::map<std::string, std::vector<TokenRange>> concept_cache_;
  std::map<std::string, std::vector<bool>> entity_cache_;
};

std::vector<std::string> referenced_concepts(const Rule& rule) {
  std::vector<std::string> out;
  for (const auto& p : rule.conditions)
    if (p.rhs_kind == RhsKind::kConcept) out.push_back(p.rhs);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace

int evaluate_rule(const Rule& rule, const Document& doc, const ConceptStore& store) {
  Evaluator ev(rule, doc, store);
  return ev.satisfied() ? rule.label : kAbstain;
}

LabelMatrix::LabelMatrix(std::size_t n_rows, std::vector<std::string> column_ids,
                         std::vector<std::vector<int>> columns)
    : n_rows_(n_rows), column_ids_(std::move(column_ids)), columns_(std::move(columns)) {
  if (column_ids_.size() != columns_.size())
    fail(ErrorCode::kInternal, "label matrix id/column count mismatch");
  for (const auto& c : columns_)
    if (c.size() != n_rows_) fail(ErrorCode::kInternal, "label matrix column has wrong length");
}

std::vector<int> LabelMatrix::row(std::size_t r) const {
  std::vector<int> out(columns_.size());
  for (std::size_t j = 0; j < columns_.size(); ++j) out[j] = columns_[j][r];
  return out;
}

bool LabelMatrix::row_abstains(std::size_t r) const {
  return std::all_of(columns_.begin(), columns_.end(),
                     [&](const std::vector<int>& c) { return c[r] == kAbstain; });
}

LabelMatrix LabelMatrix::permuted(std::span<const std::size_t> order) const {
  std::vector<std::string> ids;
  std::vector<std::vector<int>> cols;
  for (std::size_t k : order) {
    ids.push_back(column_ids_.at(k));
    cols.push_back(columns_.at(k));
  }
  return LabelMatrix(n_rows_, std::move(ids), std::move(cols));
}

const std::vector<int>* ColumnCache::lookup(const Rule& rule, const ConceptStore& store) const {
  auto it = entries_.find(rule.id);
  if (it != entries_.end()) {
    bool fresh = std::all_of(it->second.versions.begin(), it->second.versions.end(),
                             [&](const auto& kv) { return store.version(kv.first) == kv.second; });
    if (fresh) return &it->second.column;
  }
  ++misses_;
  return nullptr;
}

void ColumnCache::store(const Rule& rule, const ConceptStore& store, std::vector<int> column) {
  Entry e;
  e.column = std::move(column);
  for (const auto& name : referenced_concepts(rule)) e.versions[name] = store.version(name);
  entries_[rule.id] = std::move(e);
}

LabelMatrix evaluate_all(std::span<LabelingFunction> functions, const Corpus& corpus,
                         const ConceptStore& store, ColumnCache* cache) {
  std::vector<std::string> ids;
  std::vector<std::vector<int>> cols;
  for (auto& f : functions) {
    if (!f.enabled) continue;
    if (cache) {
      if (const auto* hit = cache->lookup(f.rule, store)) {
        ids.push_back(f.rule.id);
        cols.push_back(*hit);
        continue;
      }
    }
    std::vector<int> col;
    col.reserve(corpus.documents.size());
    try {
      for (const auto& d : corpus.documents) col.push_back(evaluate_rule(f.rule, d, store));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kEvaluation) throw;
      f.enabled = false;
      f.error = e.what();
      continue;
    }
    if (cache) cache->store(f.rule, store, col);
    ids.push_back(f.rule.id);
    cols.push_back(std::move(col));
  }
  return LabelMatrix(corpus.documents.size(), std::move(ids), std::move(cols));
}

nlohmann::json to_json(const LabelMatrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["column_ids"] = m.column_ids();
  auto& cols = j["columns"] = nlohmann::json::array();
  for (std::size_t c = 0; c < m.cols(); ++c) cols.push_back(m.column(c));
  return j;
}

}  // namespace spanrule
