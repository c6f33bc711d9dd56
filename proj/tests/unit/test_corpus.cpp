#include <doctest.h>

#include <random>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spanrule/corpus.hpp"
#include "spanrule/error.hpp"

using namespace spanrule;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& toks) {
  std::vector<std::string> out;
  for (const auto& t : toks) out.push_back(t.surface);
  return out;
}

// Reference tokenizer: the documented pattern applied left to right.
std::vector<std::string> reference_tokens(const std::string& text) {
  static const std::regex re("[A-Za-z]+(?:'[A-Za-z]+)?");
  std::vector<std::string> out;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it)
    out.push_back(it->str());
  return out;
}

class FixedTags : public TransformationProvider {
 public:
  explicit FixedTags(std::vector<EntitySpan> spans, std::vector<std::string> tags = {"PERSON", "ORG"})
      : spans_(std::move(spans)), tags_(std::move(tags)) {}
  const std::vector<std::string>& tag_set() const override { return tags_; }
  std::vector<EntitySpan> annotate(const Document&) const override { return spans_; }

 private:
  std::vector<EntitySpan> spans_;
  std::vector<std::string> tags_;
};

}  // namespace

TEST_CASE("tokenize: whole words with offsets") {
  auto toks = tokenize("This book was so great!");
  CHECK(surfaces(toks) == std::vector<std::string>{"This", "book", "was", "so", "great"});
  std::vector<std::pair<std::size_t, std::size_t>> offs;
  for (const auto& t : toks) offs.emplace_back(t.start, t.end);
  CHECK(offs == std::vector<std::pair<std::size_t, std::size_t>>{{0, 4}, {5, 9}, {10, 13}, {14, 16}, {17, 22}});
  CHECK(toks[0].normalized == "this");
  CHECK(tokenize("").empty());
}

TEST_CASE("tokenize: apostrophes and hyphens") {
  CHECK(surfaces(tokenize("don't re-read")) == std::vector<std::string>{"don't", "re", "read"});
  CHECK(surfaces(tokenize("'quoted' it's rock'n'roll")) == reference_tokens("'quoted' it's rock'n'roll"));
  CHECK(surfaces(tokenize("abc123def 42")) == std::vector<std::string>{"abc", "def"});
}

TEST_CASE("tokenize agrees with the reference pattern on random text") {
  std::mt19937_64 rng(3);
  const std::string alphabet = "abAB' -.!?1\xc3\xa9";
  for (int trial = 0; trial < 2000; ++trial) {
    std::string s;
    std::size_t n = rng() % 24;
    for (std::size_t i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
    auto toks = tokenize(s);
    REQUIRE(surfaces(toks) == reference_tokens(s));
    for (std::size_t i = 0; i < toks.size(); ++i) {
      CHECK(s.substr(toks[i].start, toks[i].end - toks[i].start) == toks[i].surface);
      CHECK(toks[i].index == i);
      if (i) CHECK(toks[i - 1].end < toks[i].start);
    }
  }
}

TEST_CASE("tokenize is idempotent over surfaces") {
  std::mt19937_64 rng(5);
  const std::string alphabet = "abcXYZ' ,.!-9";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    for (std::size_t i = 0, n = rng() % 30; i < n; ++i) s += alphabet[rng() % alphabet.size()];
    auto first = surfaces(tokenize(s));
    std::string joined;
    for (const auto& w : first) joined += (joined.empty() ? "" : " ") + w;
    CHECK(surfaces(tokenize(joined)) == first);
  }
}

TEST_CASE("split_sentences") {
  auto doc = make_document("a", "Great book. Buy it!");
  CHECK(doc.sentences == std::vector<TokenRange>{{0, 2}, {2, 4}});
  CHECK(make_document("b", "no terminal punctuation here").sentences == std::vector<TokenRange>{{0, 4}});
  CHECK(make_document("c", "").sentences.empty());
  auto d = make_document("d", "Wait... what?! ok");
  CHECK(d.sentences == std::vector<TokenRange>{{0, 1}, {1, 2}, {2, 3}});
}

TEST_CASE("sentences partition the tokens") {
  std::mt19937_64 rng(11);
  const std::string alphabet = "ab .!?,";
  for (int trial = 0; trial < 500; ++trial) {
    std::string s;
    for (std::size_t i = 0, n = rng() % 40; i < n; ++i) s += alphabet[rng() % alphabet.size()];
    auto doc = make_document("x", s);
    std::size_t next = 0;
    for (const auto& r : doc.sentences) {
      CHECK(r.begin == next);
      CHECK(!r.empty());
      next = r.end;
    }
    CHECK(next == doc.tokens.size());
    for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
      const auto& r = doc.sentences[doc.sentence_of[t]];
      CHECK((r.begin <= t && t < r.end));
    }
  }
}

TEST_CASE("snap_to_tokens and phrase") {
  auto doc = make_document("a", "This book was so great!");
  CHECK(snap_to_tokens(doc, 6, 8) == TokenRange{1, 2});
  CHECK(snap_to_tokens(doc, 14, 22) == TokenRange{3, 5});
  CHECK(snap_to_tokens(doc, 22, 23).empty());
  CHECK(doc.phrase({3, 5}) == "so great");
  CHECK(doc.sentence_containing({0, 5}) == std::optional<std::size_t>(0));
}

TEST_CASE("gazetteer tagging") {
  auto doc = make_document("a", "I met Alice in Paris");
  REQUIRE(doc.entities.size() == 2);
  CHECK(doc.entities[0] == EntitySpan{{2, 3}, "PERSON"});
  CHECK(doc.entities[1] == EntitySpan{{4, 5}, "LOCATION"});
  CHECK(make_document("b", "nothing to see").entities.empty());

  auto multi = make_document("c", "flying to New York with two friends");
  CHECK(multi.entities == std::vector<EntitySpan>{{{2, 4}, "LOCATION"}, {{5, 6}, "NUMBER"}});
}

TEST_CASE("precomputed entities win over the provider") {
  auto doc = make_document("a", "I met Alice in Paris", std::nullopt, {{{2, 3}, "ORG"}});
  REQUIRE(doc.entities.size() == 2);
  CHECK(doc.entities[0] == EntitySpan{{2, 3}, "ORG"});
  CHECK(doc.entities[1] == EntitySpan{{4, 5}, "LOCATION"});
}

TEST_CASE("provider tags outside the tag set are rejected") {
  FixedTags bad({{{0, 1}, "WEAPON"}});
  CHECK_THROWS_AS(make_document("a", "hello there", std::nullopt, {}, bad), Error);
  FixedTags good({{{0, 1}, "PERSON"}});
  CHECK(make_document("a", "hello there", std::nullopt, {}, good).entities.size() == 1);
}

TEST_CASE("parse_corpus: labeled split") {
  std::istringstream in(R"({"uid":"d1","text":"Good movie.","label":1}
{"uid":"d2","text":"Bad movie.","label":0}
)");
  auto c = parse_corpus(in, Split::kDev, "dev.jsonl");
  REQUIRE(c.documents.size() == 2);
  CHECK(c.documents[0].gold_label == 1);
  CHECK(c.documents[1].gold_label == 0);
  CHECK(c.documents[1].uid == "d2");
  CHECK(c.warnings.empty());
}

TEST_CASE("parse_corpus: labels on the unlabeled split are ignored with a warning") {
  std::istringstream in(R"({"uid":"d1","text":"Good movie.","label":1}
{"uid":"d2","text":"Bad movie.","label":0}
)");
  auto c = parse_corpus(in, Split::kUnlabeled, "u.jsonl");
  REQUIRE(c.documents.size() == 2);
  CHECK_FALSE(c.documents[0].gold_label.has_value());
  CHECK_FALSE(c.warnings.empty());
}

TEST_CASE("parse_corpus: errors name the line") {
  std::istringstream bad_json("{\"uid\":\"a\",\"text\":\"x\"}\n{not json\n");
  try {
    parse_corpus(bad_json, Split::kUnlabeled, "f.jsonl");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }

  std::istringstream missing_label("{\"uid\":\"a\",\"text\":\"x\"}\n");
  CHECK_THROWS_AS(parse_corpus(missing_label, Split::kTest, "t.jsonl"), Error);

  std::istringstream dup("{\"uid\":\"a\",\"text\":\"x\"}\n{\"uid\":\"a\",\"text\":\"y\"}\n");
  CHECK_THROWS_AS(parse_corpus(dup, Split::kUnlabeled, "d.jsonl"), Error);
}

TEST_CASE("parse_corpus: overlapping precomputed entities") {
  std::istringstream in(
      R"({"uid":"e1","text":"Alice Smith here","entities":[{"start":0,"end":11,"type":"PERSON"},{"start":6,"end":11,"type":"ORG"}]})"
      "\n");
  try {
    parse_corpus(in, Split::kUnlabeled, "e.jsonl");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("overlapping entities at uid=e1") != std::string::npos);
  }
}

TEST_CASE("parse_corpus is deterministic") {
  const std::string text =
      "{\"uid\":\"a\",\"text\":\"Meet Bob in London. Call now!\"}\n{\"uid\":\"b\",\"text\":\"www.example.com\"}\n";
  std::istringstream a(text), b(text);
  auto ca = parse_corpus(a, Split::kUnlabeled, "x");
  auto cb = parse_corpus(b, Split::kUnlabeled, "x");
  CHECK(ca == cb);
  CHECK(to_json(ca).dump() == to_json(cb).dump());
}
