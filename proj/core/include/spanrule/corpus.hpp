#pragma once

#include <cstddef>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace spanrule {

/// Half-open range of token indices.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  bool empty() const noexcept { return end <= begin; }
  bool overlaps(const TokenRange& o) const noexcept {
    return begin < o.end && o.begin < end;
  }
  bool contains(const TokenRange& o) const noexcept {
    return begin <= o.begin && o.end <= end;
  }

  auto operator<=>(const TokenRange&) const = default;
};

struct Token {
  std::size_t index = 0;
  std::size_t start = 0;  // byte offsets into Document::text, half-open
  std::size_t end = 0;
  std::string surface;
  std::string normalized;

  bool operator==(const Token&) const = default;
};

struct EntitySpan {
  TokenRange range;
  std::string type;

  bool operator==(const EntitySpan&) const = default;
};

struct Document {
  std::string uid;
  std::string text;
  std::vector<Token> tokens;
  std::vector<TokenRange> sentences;
  std::vector<EntitySpan> entities;
  std::optional<int> gold_label;
  /// sentence_of[t] is the index into `sentences` holding token t.
  std::vector<std::size_t> sentence_of;

  /// Normalized tokens of `r` joined by single spaces.
  std::string phrase(TokenRange r) const;

  /// Index of the sentence holding every token of `r`, or nullopt when the
  /// range crosses a sentence boundary.
  std::optional<std::size_t> sentence_containing(TokenRange r) const;

  bool operator==(const Document&) const = default;
};

enum class Split { kUnlabeled, kDev, kTest, kValid };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Corpus {
  Split split = Split::kUnlabeled;
  std::vector<Document> documents;
  std::vector<std::string> warnings;

  const Document* find(std::string_view uid) const;
  bool operator==(const Corpus&) const = default;
};

/// Maximal runs of ASCII letters, allowing one interior apostrophe between
/// letters. Everything else (digits, punctuation, non-ASCII bytes) separates
/// tokens. Normalized form is ASCII lower case.
std::vector<Token> tokenize(std::string_view text);

std::string normalize(std::string_view surface);

/// A sentence ends after any token whose trailing text, up to the next token
/// or end of text, contains '.', '!' or '?'.
std::vector<TokenRange> split_sentences(const Document& doc);

/// Token range covering the byte range [begin, end); empty when no token
/// overlaps it.
TokenRange snap_to_tokens(const Document& doc, std::size_t begin, std::size_t end);

/// Source of entity-type transformations (NER-like tags over token ranges).
class TransformationProvider {
 public:
  virtual ~TransformationProvider() = default;
  virtual const std::vector<std::string>& tag_set() const = 0;
  virtual std::vector<EntitySpan> annotate(const Document& doc) const = 0;
};

/// Built-in tagger: a phrase gazetteer (PERSON, LOCATION, NUMBER words) and
/// regexes for URL and EMAIL, snapped to tokens. Digit strings are not
/// tokens, so numbers are only tagged when spelled out. Gazetteer
/// lookups take the longest phrase at each position; regex hits win over
/// gazetteer hits on overlap.
class GazetteerTagger : public TransformationProvider {
 public:
  /// Ships with a small English gazetteer.
  GazetteerTagger();

  /// `phrase` is normalized before insertion. Throws if `type` is not in
  /// the tag set.
  void add_entry(std::string_view phrase, std::string type);

  const std::vector<std::string>& tag_set() const override { return tags_; }
  std::vector<EntitySpan> annotate(const Document& doc) const override;

 private:
  std::vector<std::string> tags_;
  std::map<std::string, std::string> gazetteer_;
  std::size_t max_phrase_tokens_ = 1;
};

const GazetteerTagger& default_tagger();

/// Merges the document's precomputed entities (held in doc.entities) with
/// the provider's output. Precomputed spans win; provider spans overlapping
/// one are dropped. Throws when the provider emits a tag outside its tag set.
std::vector<EntitySpan> annotate_entities(const Document& doc,
                                          const TransformationProvider& provider);

/// Builds a fully tokenized, sentence-split, entity-annotated document.
Document make_document(std::string uid, std::string text,
                       std::optional<int> gold_label = std::nullopt,
                       std::vector<EntitySpan> precomputed = {},
                       const TransformationProvider& provider = default_tagger());

/// Reads the JSONL corpus format. `source` names the input in errors.
Corpus parse_corpus(std::istream& in, Split split, std::string_view source,
                    const TransformationProvider& provider = default_tagger());

Corpus load_corpus(const std::string& path, Split split,
                   const TransformationProvider& provider = default_tagger());

nlohmann::json to_json(const Document& doc);
nlohmann::json to_json(const Corpus& corpus);

}  // namespace spanrule
