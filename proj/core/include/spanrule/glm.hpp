#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "spanrule/corpus.hpp"
#include "spanrule/regex.hpp"

namespace spanrule {

enum class ElementKind { kLiteral, kRegex };

struct ConceptElement {
  ElementKind kind = ElementKind::kLiteral;
  std::string pattern;

  auto operator<=>(const ConceptElement&) const = default;
};

struct Concept {
  std::string name;
  std::vector<ConceptElement> elements;  // ordered, unique
  int color_hint = 0;

  bool operator==(const Concept&) const = default;
};

/// Token ranges of `doc` matched by any element of `c`, sorted and
/// deduplicated. Literals match whole tokens case-insensitively; regexes run
/// over the raw text and each match is widened to the tokens it touches.
/// Matches touching no token are dropped.
std::vector<TokenRange> concept_matches(const Concept& c, const Document& doc);

/// Project-wide set of concepts, referenced by name from rules.
class ConceptStore {
 public:
  const Concept* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }

  /// Bumped on every edit of the named concept; never reused, even after
  /// delete and re-create. 0 for unknown names.
  std::uint64_t version(std::string_view name) const;

  /// True when `word` equals (case-insensitively) a literal element.
  bool has_literal(std::string_view name, std::string_view word) const;

  /// Same as concept_matches() but reuses compiled regexes.
  std::vector<TokenRange> matches(std::string_view name, const Document& doc) const;

  void create(std::string name, std::optional<int> color_hint = std::nullopt);
  void restore(Concept c);
  Concept remove(std::string_view name);
  /// Inserts at `position` (end when absent). Returns the index used.
  std::size_t add_element(std::string_view name, ConceptElement element,
                          std::optional<std::size_t> position = std::nullopt);
  /// Returns the index the element occupied.
  std::size_t remove_element(std::string_view name, const ConceptElement& element);

  /// Content equality; version counters are bookkeeping and not compared.
  bool operator==(const ConceptStore& other) const;

 private:
  struct Entry {
    Concept concept_;
    std::vector<std::shared_ptr<const Regex>> compiled;  // parallel to elements
    std::uint64_t version = 0;
  };
  Entry& entry(std::string_view name);

  std::map<std::string, Entry, std::less<>> entries_;
  std::uint64_t next_version_ = 1;
  int next_color_ = 0;
};

/// Validates an element: literals are non-empty without whitespace; regexes
/// must compile. Throws Error.
void validate_element(const ConceptElement& element);

struct SpanAnnotation {
  int id = 0;
  TokenRange range;
  std::optional<std::string> concept_name;

  bool operator==(const SpanAnnotation&) const = default;
};

struct LinkAnnotation {
  int a = 0;
  int b = 0;
  bool directed = false;  // a precedes b

  bool operator==(const LinkAnnotation&) const = default;
};

struct Interaction {
  std::string doc_uid;
  std::vector<SpanAnnotation> spans;
  std::vector<LinkAnnotation> links;
  int label = 0;

  const SpanAnnotation* span(int id) const;
  bool operator==(const Interaction&) const = default;
};

/// Checks the structural invariants: at least one span, non-empty
/// non-overlapping ranges inside the document, unique span ids, links
/// between distinct existing spans, label in [0, n_classes).
void validate_interaction(const Interaction& ix, std::size_t n_tokens, int n_classes);

// Labeling-interface operations. Every operation has an inverse, returned by
// apply_operation().
namespace op {
struct Select { TokenRange range; std::optional<int> id; };
struct Deselect { int id = 0; };
struct AssignConcept { int span = 0; std::optional<std::string> concept_name; };
struct CreateConcept { std::string name; std::optional<int> color_hint; };
/// Fails while a span of the interaction is assigned to the concept.
struct DeleteConcept { std::string name; };
struct RestoreConcept { Concept concept_; };
struct AddElement {
  std::string concept_name;
  ConceptElement element;
  std::optional<std::size_t> position;
};
struct DeleteElement { std::string concept_name; ConceptElement element; };
struct Link { int a = 0; int b = 0; };
struct DirectTo { int a = 0; int b = 0; };
struct Unlink { int a = 0; int b = 0; };
}  // namespace op

using Operation =
    std::variant<op::Select, op::Deselect, op::AssignConcept, op::CreateConcept,
                 op::DeleteConcept, op::RestoreConcept, op::AddElement,
                 op::DeleteElement, op::Link, op::DirectTo, op::Unlink>;

/// An interaction being built against one document plus the concept store
/// it edits.
struct EditorState {
  Interaction interaction;
  ConceptStore concepts;
  std::size_t doc_tokens = 0;

  bool operator==(const EditorState&) const = default;
};

/// Applies `op` and returns its inverse. State is unchanged when it throws.
Operation apply_operation(EditorState& state, const Operation& op);

nlohmann::json to_json(const ConceptElement& e);
ConceptElement element_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Concept& c);
Concept concept_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ConceptStore& store);
ConceptStore concept_store_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Interaction& ix);
Interaction interaction_from_json(const nlohmann::json& j);

std::string_view to_string(ElementKind kind);
ElementKind element_kind_from_string(std::string_view s);

}  // namespace spanrule
