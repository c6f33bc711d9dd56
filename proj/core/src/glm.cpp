#include "spanrule/glm.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

std::vector<TokenRange> match_elements(
    const Concept& c, const std::vector<std::shared_ptr<const Regex>>& compiled,
    const Document& doc) {
  std::vector<TokenRange> out;
  for (std::size_t i = 0; i < c.elements.size(); ++i) {
    const auto& el = c.elements[i];
    if (el.kind == ElementKind::kLiteral) {
      std::string want = normalize(el.pattern);
      for (const auto& t : doc.tokens)
        if (t.normalized == want) out.push_back({t.index, t.index + 1});
    } else {
      for (const auto& m : compiled[i]->find_all(doc.text)) {
        TokenRange r = snap_to_tokens(doc, m.begin, m.end);
        if (!r.empty()) out.push_back(r);
      }
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::shared_ptr<const Regex>> compile_all(const Concept& c) {
  std::vector<std::shared_ptr<const Regex>> out;
  out.reserve(c.elements.size());
  for (const auto& el : c.elements) {
    out.push_back(el.kind == ElementKind::kRegex
                      ? std::make_shared<const Regex>(Regex::compile(el.pattern))
                      : nullptr);
  }
  return out;
}

const LinkAnnotation* find_link(const Interaction& ix, int a, int b) {
  for (const auto& l : ix.links)
    if ((l.a == a && l.b == b) || (l.a == b && l.b == a)) return &l;
  return nullptr;
}

}  // namespace

std::string_view to_string(ElementKind kind) {
  return kind == ElementKind::kLiteral ? "token" : "regex";
}

ElementKind element_kind_from_string(std::string_view s) {
  if (s == "token" || s == "literal") return ElementKind::kLiteral;
  if (s == "regex") return ElementKind::kRegex;
  fail(ErrorCode::kInvalidArgument, "unknown concept element kind '" + std::string(s) + "'");
}

std::vector<TokenRange> concept_matches(const Concept& c, const Document& doc) {
  return match_elements(c, compile_all(c), doc);
}

void validate_element(const ConceptElement& element) {
  if (element.pattern.empty())
    fail(ErrorCode::kInvalidArgument, "concept element pattern is empty");
  if (element.kind == ElementKind::kLiteral) {
    if (element.pattern.find_first_of(" \t\r\n\f\v") != std::string::npos)
      fail(ErrorCode::kInvalidArgument,
           "token element '" + element.pattern + "' contains whitespace");
  } else {
    Regex::compile(element.pattern);
  }
}

const Concept* ConceptStore::find(std::string_view name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? nullptr : &it->second.concept_;
}

std::vector<std::string> ConceptStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::uint64_t ConceptStore::version(std::string_view name) const {
  auto it = entries_.find(name);
  return it == entries_.end() ? 0 : it->second.version;
}

bool ConceptStore::has_literal(std::string_view name, std::string_view word) const {
  const Concept* c = find(name);
  if (!c) return false;
  std::string w = normalize(word);
  return std::any_of(c->elements.begin(), c->elements.end(), [&](const ConceptElement& e) {
    return e.kind == ElementKind::kLiteral && normalize(e.pattern) == w;
  });
}

std::vector<TokenRange> ConceptStore::matches(std::string_view name,
                                              const Document& doc) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    fail(ErrorCode::kNotFound, "unknown concept '" + std::string(name) + "'");
  return match_elements(it->second.concept_, it->second.compiled, doc);
}

ConceptStore::Entry& ConceptStore::entry(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    fail(ErrorCode::kNotFound, "unknown concept '" + std::string(name) + "'");
  return it->second;
}

void ConceptStore::create(std::string name, std::optional<int> color_hint) {
  if (name.empty()) fail(ErrorCode::kInvalidArgument, "concept name is empty");
  if (contains(name)) fail(ErrorCode::kConflict, "concept '" + name + "' already exists");
  Entry e;
  e.concept_.name = name;
  e.concept_.color_hint = color_hint.value_or(next_color_);
  next_color_ = std::max(next_color_, e.concept_.color_hint + 1);
  e.version = next_version_++;
  entries_.emplace(std::move(name), std::move(e));
}

void ConceptStore::restore(Concept c) {
  if (contains(c.name)) fail(ErrorCode::kConflict, "concept '" + c.name + "' already exists");
  for (const auto& el : c.elements) validate_element(el);
  Entry e;
  e.compiled = compile_all(c);
  e.concept_ = std::move(c);
  e.version = next_version_++;
  std::string name = e.concept_.name;
  entries_.emplace(std::move(name), std::move(e));
}

Concept ConceptStore::remove(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    fail(ErrorCode::kNotFound, "unknown concept '" + std::string(name) + "'");
  Concept c = std::move(it->second.concept_);
  entries_.erase(it);
  return c;
}

std::size_t ConceptStore::add_element(std::string_view name, ConceptElement element,
                                      std::optional<std::size_t> position) {
  Entry& e = entry(name);
  validate_element(element);
  auto& els = e.concept_.elements;
  if (std::find(els.begin(), els.end(), element) != els.end())
    fail(ErrorCode::kConflict, "element '" + element.pattern + "' already in concept '" +
                                   std::string(name) + "'");
  std::size_t at = std::min(position.value_or(els.size()), els.size());
  std::shared_ptr<const Regex> re;
  if (element.kind == ElementKind::kRegex)
    re = std::make_shared<const Regex>(Regex::compile(element.pattern));
  els.insert(els.begin() + static_cast<std::ptrdiff_t>(at), std::move(element));
  e.compiled.insert(e.compiled.begin() + static_cast<std::ptrdiff_t>(at), std::move(re));
  e.version = next_version_++;
  return at;
}

std::size_t ConceptStore::remove_element(std::string_view name,
                                         const ConceptElement& element) {
  Entry& e = entry(name);
  auto& els = e.concept_.elements;
  auto it = std::find(els.begin(), els.end(), element);
  if (it == els.end())
    fail(ErrorCode::kNotFound, "element '" + element.pattern + "' not in concept '" +
                                   std::string(name) + "'");
  std::size_t at = static_cast<std::size_t>(it - els.begin());
  els.erase(it);
  e.compiled.erase(e.compiled.begin() + static_cast<std::ptrdiff_t>(at));
  e.version = next_version_++;
  return at;
}

bool ConceptStore::operator==(const ConceptStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto a = entries_.begin();
  auto b = other.entries_.begin();
  for (; a != entries_.end(); ++a, ++b)
    if (a->first != b->first || !(a->second.concept_ == b->second.concept_)) return false;
  return true;
}

const SpanAnnotation* Interaction::span(int id) const {
  for (const auto& s : spans)
    if (s.id == id) return &s;
  return nullptr;
}

void validate_interaction(const Interaction& ix, std::size_t n_tokens, int n_classes) {
  if (ix.spans.empty()) fail(ErrorCode::kInvalidArgument, "interaction has no spans");
  if (ix.label < 0 || ix.label >= n_classes)
    fail(ErrorCode::kInvalidArgument, "label " + std::to_string(ix.label) +
                                          " outside [0, " + std::to_string(n_classes) + ")");
  for (std::size_t i = 0; i < ix.spans.size(); ++i) {
    const auto& s = ix.spans[i];
    if (s.range.empty() || s.range.end > n_tokens)
      fail(ErrorCode::kInvalidArgument, "span " + std::to_string(s.id) + " has an invalid range");
    for (std::size_t j = 0; j < i; ++j) {
      if (ix.spans[j].id == s.id)
        fail(ErrorCode::kInvalidArgument, "duplicate span id " + std::to_string(s.id));
      if (ix.spans[j].range.overlaps(s.range))
        fail(ErrorCode::kConflict, "spans " + std::to_string(ix.spans[j].id) + " and " +
                                       std::to_string(s.id) + " overlap");
    }
  }
  for (std::size_t i = 0; i < ix.links.size(); ++i) {
    const auto& l = ix.links[i];
    if (l.a == l.b) fail(ErrorCode::kInvalidArgument, "link endpoints must differ");
    const SpanAnnotation* a = ix.span(l.a);
    const SpanAnnotation* b = ix.span(l.b);
    if (!a || !b) fail(ErrorCode::kNotFound, "link references an unknown span");
    if (l.directed && a->range.begin >= b->range.begin)
      fail(ErrorCode::kInvalidArgument, "directed link must point forward in the text");
    for (std::size_t j = 0; j < i; ++j) {
      const auto& o = ix.links[j];
      if ((o.a == l.a && o.b == l.b) || (o.a == l.b && o.b == l.a))
        fail(ErrorCode::kConflict, "duplicate link");
    }
  }
}

namespace {

struct Applier {
  EditorState& s;

  Interaction& ix() { return s.interaction; }

  SpanAnnotation& span(int id) {
    for (auto& sp : ix().spans)
      if (sp.id == id) return sp;
    fail(ErrorCode::kNotFound, "unknown span id " + std::to_string(id));
  }

  Operation operator()(const op::Select& o) {
    if (o.range.empty() || o.range.end > s.doc_tokens)
      fail(ErrorCode::kInvalidArgument, "selection outside the document");
    for (const auto& sp : ix().spans)
      if (sp.range.overlaps(o.range))
        fail(ErrorCode::kConflict, "selection overlaps span " + std::to_string(sp.id));
    int id = 0;
    if (o.id) {
      id = *o.id;
      if (ix().span(id)) fail(ErrorCode::kConflict, "span id already used");
    } else {
      for (const auto& sp : ix().spans) id = std::max(id, sp.id + 1);
    }
    // Spans stay in text order and links in (a, b) order, so an operation
    // followed by its inverse restores the state exactly.
    auto& spans = ix().spans;
    auto at = std::find_if(spans.begin(), spans.end(),
                           [&](const SpanAnnotation& sp) { return o.range.begin < sp.range.begin; });
    spans.insert(at, {id, o.range, std::nullopt});
    return op::Deselect{id};
  }

  Operation operator()(const op::Deselect& o) {
    auto& spans = ix().spans;
    auto it = std::find_if(spans.begin(), spans.end(),
                           [&](const SpanAnnotation& sp) { return sp.id == o.id; });
    if (it == spans.end()) fail(ErrorCode::kNotFound, "unknown span id " + std::to_string(o.id));
    for (const auto& l : ix().links)
      if (l.a == o.id || l.b == o.id)
        fail(ErrorCode::kConflict, "span " + std::to_string(o.id) + " is linked");
    if (it->concept_name)
      fail(ErrorCode::kConflict, "span " + std::to_string(o.id) + " has a concept");
    TokenRange r = it->range;
    spans.erase(it);
    return op::Select{r, o.id};
  }

  Operation operator()(const op::AssignConcept& o) {
    SpanAnnotation& sp = span(o.span);
    if (o.concept_name && !s.concepts.contains(*o.concept_name))
      fail(ErrorCode::kNotFound, "unknown concept '" + *o.concept_name + "'");
    op::AssignConcept inverse{o.span, sp.concept_name};
    sp.concept_name = o.concept_name;
    return inverse;
  }

  Operation operator()(const op::CreateConcept& o) {
    s.concepts.create(o.name, o.color_hint);
    return op::DeleteConcept{o.name};
  }

  Operation operator()(const op::DeleteConcept& o) {
    for (const auto& sp : ix().spans)
      if (sp.concept_name == o.name)
        fail(ErrorCode::kConflict, "concept '" + o.name + "' is assigned to span " + std::to_string(sp.id));
    return op::RestoreConcept{s.concepts.remove(o.name)};
  }

  Operation operator()(const op::RestoreConcept& o) {
    s.concepts.restore(o.concept_);
    return op::DeleteConcept{o.concept_.name};
  }

  Operation operator()(const op::AddElement& o) {
    s.concepts.add_element(o.concept_name, o.element, o.position);
    return op::DeleteElement{o.concept_name, o.element};
  }

  Operation operator()(const op::DeleteElement& o) {
    std::size_t at = s.concepts.remove_element(o.concept_name, o.element);
    return op::AddElement{o.concept_name, o.element, at};
  }

  void check_link(int a, int b, bool directed) {
    if (a == b) fail(ErrorCode::kInvalidArgument, "link endpoints must differ");
    const SpanAnnotation* sa = ix().span(a);
    const SpanAnnotation* sb = ix().span(b);
    if (!sa || !sb) fail(ErrorCode::kNotFound, "link references an unknown span");
    if (find_link(ix(), a, b)) fail(ErrorCode::kConflict, "spans are already linked");
    if (directed && sa->range.begin >= sb->range.begin)
      fail(ErrorCode::kInvalidArgument, "directed link must point forward in the text");
  }

  void insert_link(LinkAnnotation l) {
    auto& links = ix().links;
    auto at = std::find_if(links.begin(), links.end(), [&](const LinkAnnotation& x) {
      return std::pair(l.a, l.b) < std::pair(x.a, x.b);
    });
    links.insert(at, l);
  }

  Operation operator()(const op::Link& o) {
    check_link(o.a, o.b, false);
    insert_link({o.a, o.b, false});
    return op::Unlink{o.a, o.b};
  }

  Operation operator()(const op::DirectTo& o) {
    check_link(o.a, o.b, true);
    insert_link({o.a, o.b, true});
    return op::Unlink{o.a, o.b};
  }

  Operation operator()(const op::Unlink& o) {
    auto& links = ix().links;
    auto it = std::find_if(links.begin(), links.end(), [&](const LinkAnnotation& l) {
      return (l.a == o.a && l.b == o.b) || (l.a == o.b && l.b == o.a);
    });
    if (it == links.end()) fail(ErrorCode::kNotFound, "no such link");
    LinkAnnotation l = *it;
    links.erase(it);
    if (l.directed) return op::DirectTo{l.a, l.b};
    return op::Link{l.a, l.b};
  }
};

}  // namespace

Operation apply_operation(EditorState& state, const Operation& op) {
  EditorState scratch = state;
  Operation inverse = std::visit(Applier{scratch}, op);
  state = std::move(scratch);
  return inverse;
}

nlohmann::json to_json(const ConceptElement& e) {
  return {{"kind", to_string(e.kind)}, {"pattern", e.pattern}};
}

ConceptElement element_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("pattern") || !j["pattern"].is_string())
    fail(ErrorCode::kInvalidArgument, "concept element needs a string 'pattern'");
  ConceptElement e;
  e.kind = element_kind_from_string(j.value("kind", std::string("token")));
  e.pattern = j["pattern"].get<std::string>();
  return e;
}

nlohmann::json to_json(const Concept& c) {
  nlohmann::json els = nlohmann::json::array();
  for (const auto& e : c.elements) els.push_back(to_json(e));
  return {{"name", c.name}, {"elements", els}, {"color_hint", c.color_hint}};
}

Concept concept_from_json(const nlohmann::json& j) {
  Concept c;
  c.name = j.at("name").get<std::string>();
  c.color_hint = j.value("color_hint", 0);
  for (const auto& e : j.value("elements", nlohmann::json::array()))
    c.elements.push_back(element_from_json(e));
  return c;
}

nlohmann::json to_json(const ConceptStore& store) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& name : store.names()) arr.push_back(to_json(*store.find(name)));
  return arr;
}

ConceptStore concept_store_from_json(const nlohmann::json& j) {
  ConceptStore store;
  for (const auto& c : j) store.restore(concept_from_json(c));
  return store;
}

nlohmann::json to_json(const Interaction& ix) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& s : ix.spans) {
    nlohmann::json js = {{"id", s.id}, {"start", s.range.begin}, {"end", s.range.end}};
    js["concept"] = s.concept_name ? nlohmann::json(*s.concept_name) : nlohmann::json();
    spans.push_back(std::move(js));
  }
  nlohmann::json links = nlohmann::json::array();
  for (const auto& l : ix.links)
    links.push_back({{"a", l.a}, {"b", l.b}, {"directed", l.directed}});
  return {{"doc_uid", ix.doc_uid}, {"spans", spans}, {"links", links}, {"label", ix.label}};
}

Interaction interaction_from_json(const nlohmann::json& j) {
  try {
    Interaction ix;
    ix.doc_uid = j.at("doc_uid").get<std::string>();
    ix.label = j.at("label").get<int>();
    for (const auto& s : j.at("spans")) {
      SpanAnnotation sp;
      sp.id = s.at("id").get<int>();
      sp.range = {s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>()};
      if (s.contains("concept") && !s["concept"].is_null())
        sp.concept_name = s["concept"].get<std::string>();
      ix.spans.push_back(std::move(sp));
    }
    for (const auto& l : j.value("links", nlohmann::json::array()))
      ix.links.push_back({l.at("a").get<int>(), l.at("b").get<int>(), l.value("directed", false)});
    return ix;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidArgument, std::string("malformed interaction: ") + e.what());
  }
}

}  // namespace spanrule
