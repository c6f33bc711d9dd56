#include "spanrule/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spanrule/error.hpp"
#include "spanrule/regex.hpp"

namespace spanrule {
namespace {

bool is_alpha(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_entity_type(std::string_view t) {
  if (t.empty() || !(t[0] >= 'A' && t[0] <= 'Z')) return false;
  return std::all_of(t.begin(), t.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  });
}

void sort_entities(std::vector<EntitySpan>& spans) {
  std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
    return std::tie(a.range, a.type) < std::tie(b.range, b.type);
  });
}

constexpr const char* kPersons[] = {
    "alice", "bob", "carol", "david", "emma", "frank", "grace", "henry",
    "isabel", "jack", "james", "john", "justin", "katy", "linda", "maria",
    "mary", "michael", "olivia", "paul", "peter", "robert", "sarah",
    "shakira", "taylor", "thomas", "william", "eminem", "rihanna", "psy",
};

constexpr const char* kLocations[] = {
    "africa", "america", "amsterdam", "asia", "australia", "berlin",
    "brazil", "california", "canada", "chicago", "china", "egypt",
    "england", "europe", "france", "germany", "india", "italy", "japan",
    "korea", "london", "los angeles", "mexico", "new york", "paris",
    "russia", "seoul", "spain", "sydney", "texas", "tokyo", "uk", "usa",
};

constexpr const char* kNumbers[] = {
    "one",     "two",      "three",   "four",     "five",    "six",
    "seven",   "eight",    "nine",    "ten",      "eleven",  "twelve",
    "twenty",  "thirty",   "forty",   "fifty",    "hundred", "thousand",
    "million", "billion",
};

}  // namespace

std::string Document::phrase(TokenRange r) const {
  std::string out;
  for (std::size_t i = r.begin; i < r.end && i < tokens.size(); ++i) {
    if (i > r.begin) out += ' ';
    out += tokens[i].normalized;
  }
  return out;
}

std::optional<std::size_t> Document::sentence_containing(TokenRange r) const {
  if (r.empty() || r.end > sentence_of.size()) return std::nullopt;
  std::size_t s = sentence_of[r.begin];
  if (sentence_of[r.end - 1] != s) return std::nullopt;
  return s;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kUnlabeled: return "unlabeled";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
    case Split::kValid: return "valid";
  }
  return "unlabeled";
}

Split split_from_string(std::string_view name) {
  if (name == "unlabeled" || name == "train") return Split::kUnlabeled;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  if (name == "valid") return Split::kValid;
  fail(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "'");
}

const Document* Corpus::find(std::string_view uid) const {
  for (const auto& d : documents)
    if (d.uid == uid) return &d;
  return nullptr;
}

std::string normalize(std::string_view surface) {
  std::string out(surface);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    if (!is_alpha(text[i])) {
      ++i;
      continue;
    }
    std::size_t start = i;
    while (i < n && is_alpha(text[i])) ++i;
    if (i + 1 < n && text[i] == '\'' && is_alpha(text[i + 1])) {
      ++i;
      while (i < n && is_alpha(text[i])) ++i;
    }
    Token t;
    t.index = tokens.size();
    t.start = start;
    t.end = i;
    t.surface = std::string(text.substr(start, i - start));
    t.normalized = normalize(t.surface);
    tokens.push_back(std::move(t));
  }
  return tokens;
}

std::vector<TokenRange> split_sentences(const Document& doc) {
  std::vector<TokenRange> out;
  const auto& toks = doc.tokens;
  std::size_t begin = 0;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    std::size_t gap_end = i + 1 < toks.size() ? toks[i + 1].start : doc.text.size();
    std::string_view gap =
        std::string_view(doc.text).substr(toks[i].end, gap_end - toks[i].end);
    bool last = i + 1 == toks.size();
    if (last || gap.find_first_of(".!?") != std::string_view::npos) {
      out.push_back({begin, i + 1});
      begin = i + 1;
    }
  }
  return out;
}

TokenRange snap_to_tokens(const Document& doc, std::size_t begin, std::size_t end) {
  const auto& toks = doc.tokens;
  auto first = std::lower_bound(toks.begin(), toks.end(), begin,
                                [](const Token& t, std::size_t b) { return t.end <= b; });
  TokenRange r{static_cast<std::size_t>(first - toks.begin()),
               static_cast<std::size_t>(first - toks.begin())};
  while (r.end < toks.size() && toks[r.end].start < end) ++r.end;
  return r;
}

GazetteerTagger::GazetteerTagger()
    : tags_{"PERSON", "LOCATION", "NUMBER", "URL", "EMAIL"} {
  for (const char* p : kPersons) add_entry(p, "PERSON");
  for (const char* p : kLocations) add_entry(p, "LOCATION");
  for (const char* p : kNumbers) add_entry(p, "NUMBER");
}

void GazetteerTagger::add_entry(std::string_view phrase, std::string type) {
  if (std::find(tags_.begin(), tags_.end(), type) == tags_.end())
    fail(ErrorCode::kInvalidArgument, "tag '" + type + "' is not in the tag set");
  std::string key;
  std::size_t n_tokens = 0;
  for (const Token& t : tokenize(phrase)) {
    if (n_tokens++ > 0) key += ' ';
    key += t.normalized;
  }
  if (n_tokens == 0) fail(ErrorCode::kInvalidArgument, "empty gazetteer phrase");
  max_phrase_tokens_ = std::max(max_phrase_tokens_, n_tokens);
  gazetteer_[key] = std::move(type);
}

std::vector<EntitySpan> GazetteerTagger::annotate(const Document& doc) const {
  static const Regex kUrl =
      Regex::compile(R"((?i)\b(?:https?://|www\.)[^\s<>"]+)");
  static const Regex kEmail =
      Regex::compile(R"(\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]+\b)");

  std::vector<EntitySpan> out;
  std::vector<bool> taken(doc.tokens.size(), false);
  auto claim = [&](TokenRange r, const std::string& type) {
    if (r.empty()) return;
    for (std::size_t i = r.begin; i < r.end; ++i)
      if (taken[i]) return;
    for (std::size_t i = r.begin; i < r.end; ++i) taken[i] = true;
    out.push_back({r, type});
  };
  for (const auto& m : kEmail.find_all(doc.text))
    claim(snap_to_tokens(doc, m.begin, m.end), "EMAIL");
  for (const auto& m : kUrl.find_all(doc.text))
    claim(snap_to_tokens(doc, m.begin, m.end), "URL");

  const std::size_t n = doc.tokens.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i]) continue;
    for (std::size_t len = std::min(max_phrase_tokens_, n - i); len >= 1; --len) {
      auto it = gazetteer_.find(doc.phrase({i, i + len}));
      if (it == gazetteer_.end()) continue;
      std::size_t before = out.size();
      claim({i, i + len}, it->second);
      if (out.size() > before) {
        i += len - 1;
        break;
      }
    }
  }
  sort_entities(out);
  return out;
}

const GazetteerTagger& default_tagger() {
  static const GazetteerTagger tagger;
  return tagger;
}

std::vector<EntitySpan> annotate_entities(const Document& doc,
                                          const TransformationProvider& provider) {
  std::vector<EntitySpan> merged = doc.entities;
  const auto& tags = provider.tag_set();
  for (auto& span : provider.annotate(doc)) {
    if (std::find(tags.begin(), tags.end(), span.type) == tags.end())
      fail(ErrorCode::kInvalidArgument,
           "provider emitted tag '" + span.type + "' outside its tag set");
    if (span.range.empty() || span.range.end > doc.tokens.size())
      fail(ErrorCode::kInvalidArgument, "provider emitted an invalid token range");
    bool shadowed = std::any_of(doc.entities.begin(), doc.entities.end(),
                                [&](const EntitySpan& p) { return p.range.overlaps(span.range); });
    if (!shadowed) merged.push_back(std::move(span));
  }
  sort_entities(merged);
  return merged;
}

Document make_document(std::string uid, std::string text, std::optional<int> gold_label,
                       std::vector<EntitySpan> precomputed,
                       const TransformationProvider& provider) {
  Document doc;
  doc.uid = std::move(uid);
  doc.text = std::move(text);
  doc.gold_label = gold_label;
  doc.tokens = tokenize(doc.text);
  doc.sentences = split_sentences(doc);
  doc.sentence_of.assign(doc.tokens.size(), 0);
  for (std::size_t s = 0; s < doc.sentences.size(); ++s)
    for (std::size_t t = doc.sentences[s].begin; t < doc.sentences[s].end; ++t)
      doc.sentence_of[t] = s;

  sort_entities(precomputed);
  for (std::size_t i = 1; i < precomputed.size(); ++i) {
    if (precomputed[i - 1].range.overlaps(precomputed[i].range))
      fail(ErrorCode::kInvalidArgument, "overlapping entities at uid=" + doc.uid);
  }
  doc.entities = std::move(precomputed);
  doc.entities = annotate_entities(doc, provider);
  return doc;
}

Corpus parse_corpus(std::istream& in, Split split, std::string_view source,
                    const TransformationProvider& provider) {
  Corpus corpus;
  corpus.split = split;
  const bool labeled = split != Split::kUnlabeled;
  std::set<std::string> uids;
  std::size_t ignored_labels = 0;
  std::string line;
  std::size_t line_no = 0;
  auto where = [&] { return std::string(source) + ":" + std::to_string(line_no) + ": "; };

  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kParse, where() + "malformed JSON: " + e.what());
    }
    if (!rec.is_object()) fail(ErrorCode::kParse, where() + "record is not an object");
    if (!rec.contains("uid") || !rec["uid"].is_string())
      fail(ErrorCode::kParse, where() + "missing string field 'uid'");
    if (!rec.contains("text") || !rec["text"].is_string())
      fail(ErrorCode::kParse, where() + "missing string field 'text'");
    std::string uid = rec["uid"].get<std::string>();
    if (!uids.insert(uid).second)
      fail(ErrorCode::kParse, where() + "duplicate uid '" + uid + "'");

    std::optional<int> label;
    if (rec.contains("label") && !rec["label"].is_null()) {
      if (!rec["label"].is_number_integer() || rec["label"].get<long long>() < 0)
        fail(ErrorCode::kParse, where() + "'label' must be a non-negative integer");
      if (labeled) {
        label = rec["label"].get<int>();
      } else {
        ++ignored_labels;
      }
    } else if (labeled) {
      fail(ErrorCode::kParse, where() + "schema error: " + std::string(to_string(split)) +
                                  " record '" + uid + "' is missing 'label'");
    }

    std::string text = rec["text"].get<std::string>();
    Document shell;
    shell.text = text;
    shell.tokens = tokenize(text);
    std::vector<EntitySpan> precomputed;
    if (rec.contains("entities") && !rec["entities"].is_null()) {
      if (!rec["entities"].is_array())
        fail(ErrorCode::kParse, where() + "'entities' must be an array");
      for (const auto& e : rec["entities"]) {
        if (!e.is_object() || !e.contains("start") || !e.contains("end") ||
            !e.contains("type") || !e["start"].is_number_integer() ||
            !e["end"].is_number_integer() || !e["type"].is_string())
          fail(ErrorCode::kParse, where() + "entity needs integer start/end and string type");
        long long s = e["start"].get<long long>();
        long long t = e["end"].get<long long>();
        std::string type = e["type"].get<std::string>();
        if (s < 0 || t <= s || static_cast<std::size_t>(t) > text.size())
          fail(ErrorCode::kParse, where() + "entity offsets out of bounds");
        if (!is_entity_type(type))
          fail(ErrorCode::kParse, where() + "entity type '" + type + "' is not an upper-case tag");
        TokenRange r = snap_to_tokens(shell, static_cast<std::size_t>(s),
                                      static_cast<std::size_t>(t));
        if (r.empty()) {
          corpus.warnings.push_back(where() + "entity covers no token, dropped");
          continue;
        }
        precomputed.push_back({r, std::move(type)});
      }
    }
    try {
      corpus.documents.push_back(make_document(std::move(uid), std::move(text), label,
                                               std::move(precomputed), provider));
    } catch (const Error& e) {
      fail(e.code(), where() + e.what());
    }
  }
  if (ignored_labels > 0) {
    corpus.warnings.push_back(std::string(source) + ": ignored 'label' on " +
                              std::to_string(ignored_labels) +
                              " record(s) of the unlabeled split");
  }
  return corpus;
}

Corpus load_corpus(const std::string& path, Split split,
                   const TransformationProvider& provider) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kNotFound, "cannot open corpus file '" + path + "'");
  return parse_corpus(in, split, path, provider);
}

nlohmann::json to_json(const Document& doc) {
  nlohmann::json j;
  j["uid"] = doc.uid;
  j["text"] = doc.text;
  auto& toks = j["tokens"] = nlohmann::json::array();
  for (const auto& t : doc.tokens) toks.push_back({t.start, t.end});
  auto& sents = j["sentences"] = nlohmann::json::array();
  for (const auto& s : doc.sentences) sents.push_back({s.begin, s.end});
  auto& ents = j["entities"] = nlohmann::json::array();
  for (const auto& e : doc.entities)
    ents.push_back({{"start_token", e.range.begin}, {"end_token", e.range.end}, {"type", e.type}});
  if (doc.gold_label) j["label"] = *doc.gold_label;
  return j;
}

nlohmann::json to_json(const Corpus& corpus) {
  nlohmann::json j;
  j["split"] = to_string(corpus.split);
  auto& docs = j["documents"] = nlohmann::json::array();
  for (const auto& d : corpus.documents) docs.push_back(to_json(d));
  j["warnings"] = corpus.warnings;
  return j;
}

}  // namespace spanrule
