#pragma once

#include <bitset>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace spanrule {

/// Byte range [begin, end) of a regex match inside the searched text.
struct RegexMatch {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const RegexMatch&) const = default;
};

/// Concept regexes use a small dialect that compiles to a Thompson NFA and
/// is simulated in lock-step, so matching cost is O(|text| * |program|)
/// with no backtracking.
///
/// Supported:
///   literals, `.` (any byte but newline), escapes `\.` `\\` `\n` `\t` `\r`
///   classes `[a-z]`, `[^...]`, shorthands `\d \D \w \W \s \S`
///   grouping `( )`, `(?: )`, alternation `|`
///   repetition `*` `+` `?` `{m}` `{m,}` `{m,n}` (n <= 255)
///   anchors `^` `$` `\b` `\B`
///   leading `(?i)` for ASCII case-insensitive matching
///
/// Rejected at compile time: backreferences, lookaround, lazy or possessive
/// quantifiers. Matches are leftmost-longest (POSIX), over raw bytes.
class Regex {
 public:
  /// Throws Error{kParse} with the offending offset in the message.
  static Regex compile(std::string_view pattern);

  const std::string& pattern() const noexcept { return pattern_; }

  /// Leftmost-longest match starting at or after `from`. May be empty.
  std::optional<RegexMatch> search(std::string_view text,
                                   std::size_t from = 0) const;

  /// All non-overlapping, non-empty leftmost-longest matches, in order.
  std::vector<RegexMatch> find_all(std::string_view text) const;

  bool full_match(std::string_view text) const;

  std::size_t program_size() const noexcept { return program_.size(); }

  enum class Op : unsigned char { kClass, kSplit, kJump, kAssert, kMatch };
  enum class Assertion : unsigned char {
    kBegin,
    kEnd,
    kWordBoundary,
    kNotWordBoundary
  };

  struct Inst {
    Op op = Op::kMatch;
    Assertion assertion = Assertion::kBegin;
    std::size_t x = 0;
    std::size_t y = 0;
    std::bitset<256> bytes;
  };

 private:
  Regex() = default;

  std::string pattern_;
  std::vector<Inst> program_;
};

}  // namespace spanrule
