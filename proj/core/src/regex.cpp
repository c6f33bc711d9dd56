#include "spanrule/regex.hpp"

#include <cctype>
#include <limits>
#include <utility>

#include "spanrule/error.hpp"

namespace spanrule {
namespace {

constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();
constexpr std::size_t kMaxRepeat = 255;
constexpr std::size_t kMaxProgram = 20000;

using ByteSet = std::bitset<256>;

struct Node {
  enum class Kind { kEmpty, kClass, kConcat, kAlt, kRepeat, kAssert };
  Kind kind = Kind::kEmpty;
  ByteSet bytes;
  Regex::Assertion assertion = Regex::Assertion::kBegin;
  std::size_t min = 0;
  std::size_t max = 0;
  std::vector<std::size_t> children;
};

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '_'; }

ByteSet digit_set() {
  ByteSet s;
  for (int c = '0'; c <= '9'; ++c) s.set(c);
  return s;
}

ByteSet word_set() {
  ByteSet s;
  for (int c = 0; c < 256; ++c)
    if (is_word_byte(static_cast<unsigned char>(c))) s.set(c);
  return s;
}

ByteSet space_set() {
  ByteSet s;
  for (char c : std::string_view(" \t\n\r\f\v")) s.set(static_cast<unsigned char>(c));
  return s;
}

class Parser {
 public:
  Parser(std::string_view pattern, std::vector<Node>& nodes)
      : src_(pattern), nodes_(nodes) {
    if (src_.substr(0, 4) == "(?i)") {
      icase_ = true;
      pos_ = 4;
    }
  }

  std::size_t parse() {
    std::size_t root = parse_alt();
    if (pos_ != src_.size()) error("unexpected ')'");
    return root;
  }

 private:
  [[noreturn]] void error(const std::string& what) const {
    fail(ErrorCode::kParse,
         "regex error at offset " + std::to_string(pos_) + ": " + what);
  }

  bool eof() const { return pos_ >= src_.size(); }
  char peek() const { return src_[pos_]; }

  std::size_t add(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::size_t make_class(ByteSet s) {
    if (icase_) {
      for (int c = 'a'; c <= 'z'; ++c) {
        int up = c - 'a' + 'A';
        if (s.test(c) || s.test(up)) {
          s.set(c);
          s.set(up);
        }
      }
    }
    Node n;
    n.kind = Node::Kind::kClass;
    n.bytes = s;
    return add(std::move(n));
  }

  std::size_t parse_alt() {
    std::vector<std::size_t> branches{parse_concat()};
    while (!eof() && peek() == '|') {
      ++pos_;
      branches.push_back(parse_concat());
    }
    if (branches.size() == 1) return branches.front();
    Node n;
    n.kind = Node::Kind::kAlt;
    n.children = std::move(branches);
    return add(std::move(n));
  }

  std::size_t parse_concat() {
    Node n;
    n.kind = Node::Kind::kConcat;
    while (!eof() && peek() != '|' && peek() != ')') {
      n.children.push_back(parse_repeat());
    }
    if (n.children.empty()) return add(Node{});
    if (n.children.size() == 1) return n.children.front();
    return add(std::move(n));
  }

  // Parses `{m}`, `{m,}` or `{m,n}` at pos_. Leaves pos_ untouched and
  // returns false when the brace does not start a repetition.
  bool parse_braces(std::size_t& lo, std::size_t& hi) {
    std::size_t p = pos_ + 1;
    auto number = [&](std::size_t& out) {
      std::size_t start = p;
      out = 0;
      while (p < src_.size() && std::isdigit(static_cast<unsigned char>(src_[p]))) {
        out = out * 10 + static_cast<std::size_t>(src_[p] - '0');
        if (out > 100000) out = 100000;
        ++p;
      }
      return p > start;
    };
    if (!number(lo)) return false;
    hi = lo;
    if (p < src_.size() && src_[p] == ',') {
      ++p;
      if (!number(hi)) hi = kUnbounded;
    }
    if (p >= src_.size() || src_[p] != '}') return false;
    pos_ = p + 1;
    return true;
  }

  std::size_t parse_repeat() {
    std::size_t atom = parse_atom();
    if (eof()) return atom;
    std::size_t lo = 0;
    std::size_t hi = 0;
    char c = peek();
    if (c == '*') {
      lo = 0, hi = kUnbounded, ++pos_;
    } else if (c == '+') {
      lo = 1, hi = kUnbounded, ++pos_;
    } else if (c == '?') {
      lo = 0, hi = 1, ++pos_;
    } else if (c == '{' && parse_braces(lo, hi)) {
      if (hi != kUnbounded && hi < lo) error("repetition bounds out of order");
      if (lo > kMaxRepeat || (hi != kUnbounded && hi > kMaxRepeat))
        error("repetition bound exceeds 255");
    } else {
      return atom;
    }
    if (!eof()) {
      char q = peek();
      if (q == '?' || q == '+') error("lazy and possessive quantifiers are not supported");
      if (q == '*') error("nested quantifier");
      std::size_t a = 0;
      std::size_t b = 0;
      std::size_t save = pos_;
      if (q == '{' && parse_braces(a, b)) {
        pos_ = save;
        error("nested quantifier");
      }
    }
    if (nodes_[atom].kind == Node::Kind::kAssert) error("quantified anchor");
    Node n;
    n.kind = Node::Kind::kRepeat;
    n.min = lo;
    n.max = hi;
    n.children = {atom};
    return add(std::move(n));
  }

  std::size_t parse_atom() {
    char c = peek();
    switch (c) {
      case '(': {
        ++pos_;
        if (!eof() && peek() == '?') {
          if (src_.substr(pos_, 2) != "?:")
            error("only (?:...) groups are supported");
          pos_ += 2;
        }
        std::size_t inner = parse_alt();
        if (eof() || peek() != ')') error("missing ')'");
        ++pos_;
        return inner;
      }
      case '[':
        return parse_class();
      case '.': {
        ++pos_;
        ByteSet s;
        s.set();
        s.reset('\n');
        return make_class(s);
      }
      case '^':
        ++pos_;
        return make_assert(Regex::Assertion::kBegin);
      case '$':
        ++pos_;
        return make_assert(Regex::Assertion::kEnd);
      case '*':
      case '+':
      case '?':
        error("quantifier without operand");
      case '\\':
        return parse_escape();
      default: {
        ++pos_;
        ByteSet s;
        s.set(static_cast<unsigned char>(c));
        return make_class(s);
      }
    }
  }

  std::size_t make_assert(Regex::Assertion a) {
    Node n;
    n.kind = Node::Kind::kAssert;
    n.assertion = a;
    return add(std::move(n));
  }

  // Escape outside a class; pos_ is at the backslash.
  std::size_t parse_escape() {
    ++pos_;
    if (eof()) error("trailing backslash");
    char c = src_[pos_++];
    if (c == 'b') return make_assert(Regex::Assertion::kWordBoundary);
    if (c == 'B') return make_assert(Regex::Assertion::kNotWordBoundary);
    return make_class(escape_set(c));
  }

  ByteSet escape_set(char c) {
    ByteSet s;
    switch (c) {
      case 'd': return digit_set();
      case 'D': return ~digit_set();
      case 'w': return word_set();
      case 'W': return ~word_set();
      case 's': return space_set();
      case 'S': return ~space_set();
      case 'n': s.set('\n'); return s;
      case 't': s.set('\t'); return s;
      case 'r': s.set('\r'); return s;
      default:
        if (std::isalnum(static_cast<unsigned char>(c))) {
          --pos_;
          error(std::string("unsupported escape \\") + c);
        }
        s.set(static_cast<unsigned char>(c));
        return s;
    }
  }

  std::size_t parse_class() {
    ++pos_;  // '['
    bool negate = false;
    if (!eof() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    ByteSet s;
    bool first = true;
    while (true) {
      if (eof()) error("missing ']'");
      char c = peek();
      if (c == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      int lo = -1;
      if (c == '\\') {
        ++pos_;
        if (eof()) error("trailing backslash");
        char e = src_[pos_++];
        ByteSet es = escape_set(e);
        if (es.count() != 1) {
          s |= es;
          continue;
        }
        for (int b = 0; b < 256; ++b)
          if (es.test(b)) lo = b;
      } else {
        lo = static_cast<unsigned char>(c);
        ++pos_;
      }
      if (pos_ + 1 < src_.size() && peek() == '-' && src_[pos_ + 1] != ']') {
        ++pos_;
        int hi = static_cast<unsigned char>(peek());
        if (peek() == '\\') {
          ++pos_;
          if (eof()) error("trailing backslash");
          ByteSet es = escape_set(src_[pos_]);
          if (es.count() != 1) error("class shorthand as range bound");
          for (int b = 0; b < 256; ++b)
            if (es.test(b)) hi = b;
        }
        ++pos_;
        if (hi < lo) error("class range out of order");
        for (int b = lo; b <= hi; ++b) s.set(b);
      } else {
        s.set(lo);
      }
    }
    if (negate) s = ~s;
    return make_class(s);
  }

  std::string_view src_;
  std::vector<Node>& nodes_;
  std::size_t pos_ = 0;
  bool icase_ = false;
};

class Emitter {
 public:
  Emitter(const std::vector<Node>& nodes, std::vector<Regex::Inst>& out)
      : nodes_(nodes), out_(out) {}

  void emit(std::size_t id) {
    if (out_.size() > kMaxProgram)
      fail(ErrorCode::kParse, "regex error: program exceeds size limit");
    const Node& n = nodes_[id];
    switch (n.kind) {
      case Node::Kind::kEmpty:
        break;
      case Node::Kind::kClass: {
        Regex::Inst i;
        i.op = Regex::Op::kClass;
        i.bytes = n.bytes;
        out_.push_back(i);
        break;
      }
      case Node::Kind::kAssert: {
        Regex::Inst i;
        i.op = Regex::Op::kAssert;
        i.assertion = n.assertion;
        out_.push_back(i);
        break;
      }
      case Node::Kind::kConcat:
        for (std::size_t c : n.children) emit(c);
        break;
      case Node::Kind::kAlt: {
        std::vector<std::size_t> jumps;
        for (std::size_t k = 0; k < n.children.size(); ++k) {
          bool last = k + 1 == n.children.size();
          std::size_t split = 0;
          if (!last) {
            split = push(Regex::Op::kSplit);
            out_[split].x = out_.size();
          }
          emit(n.children[k]);
          if (!last) {
            jumps.push_back(push(Regex::Op::kJump));
            out_[split].y = out_.size();
          }
        }
        for (std::size_t j : jumps) out_[j].x = out_.size();
        break;
      }
      case Node::Kind::kRepeat: {
        std::size_t child = n.children.front();
        for (std::size_t k = 0; k < n.min; ++k) emit(child);
        if (n.max == kUnbounded) {
          std::size_t split = push(Regex::Op::kSplit);
          out_[split].x = out_.size();
          emit(child);
          std::size_t jump = push(Regex::Op::kJump);
          out_[jump].x = split;
          out_[split].y = out_.size();
        } else {
          std::vector<std::size_t> splits;
          for (std::size_t k = n.min; k < n.max; ++k) {
            std::size_t split = push(Regex::Op::kSplit);
            out_[split].x = out_.size();
            splits.push_back(split);
            emit(child);
          }
          for (std::size_t s : splits) out_[s].y = out_.size();
        }
        break;
      }
    }
  }

 private:
  std::size_t push(Regex::Op op) {
    Regex::Inst i;
    i.op = op;
    out_.push_back(i);
    return out_.size() - 1;
  }

  const std::vector<Node>& nodes_;
  std::vector<Regex::Inst>& out_;
};

// Sparse set of program counters, each tagged with the start offset of the
// thread that reached it first.
class ThreadList {
 public:
  explicit ThreadList(std::size_t n) : sparse_(n, 0), start_(n, 0) {
    dense_.reserve(n);
  }

  bool contains(std::size_t pc) const {
    std::size_t i = sparse_[pc];
    return i < dense_.size() && dense_[i] == pc;
  }

  void insert(std::size_t pc, std::size_t start) {
    sparse_[pc] = dense_.size();
    dense_.push_back(pc);
    start_[pc] = start;
  }

  void clear() { dense_.clear(); }
  bool empty() const { return dense_.empty(); }
  const std::vector<std::size_t>& pcs() const { return dense_; }
  std::size_t start(std::size_t pc) const { return start_[pc]; }

 private:
  std::vector<std::size_t> dense_;
  std::vector<std::size_t> sparse_;
  std::vector<std::size_t> start_;
};

bool assertion_holds(Regex::Assertion a, std::string_view text, std::size_t pos) {
  auto word_at = [&](std::size_t p) {
    return p < text.size() && is_word_byte(static_cast<unsigned char>(text[p]));
  };
  bool before = pos > 0 && word_at(pos - 1);
  bool after = word_at(pos);
  switch (a) {
    case Regex::Assertion::kBegin: return pos == 0;
    case Regex::Assertion::kEnd: return pos == text.size();
    case Regex::Assertion::kWordBoundary: return before != after;
    case Regex::Assertion::kNotWordBoundary: return before == after;
  }
  return false;
}

struct Simulation {
  const std::vector<Regex::Inst>& program;
  std::string_view text;
  std::optional<RegexMatch> best;
  std::vector<std::size_t> stack;

  void add(ThreadList& list, std::size_t pc0, std::size_t start, std::size_t pos) {
    stack.clear();
    stack.push_back(pc0);
    while (!stack.empty()) {
      std::size_t pc = stack.back();
      stack.pop_back();
      if (list.contains(pc)) continue;
      list.insert(pc, start);
      const Regex::Inst& inst = program[pc];
      switch (inst.op) {
        case Regex::Op::kJump:
          stack.push_back(inst.x);
          break;
        case Regex::Op::kSplit:
          stack.push_back(inst.y);
          stack.push_back(inst.x);
          break;
        case Regex::Op::kAssert:
          if (assertion_holds(inst.assertion, text, pos)) stack.push_back(pc + 1);
          break;
        case Regex::Op::kMatch:
          if (!best || start < best->begin ||
              (start == best->begin && pos > best->end)) {
            best = RegexMatch{start, pos};
          }
          break;
        case Regex::Op::kClass:
          break;
      }
    }
  }

  std::optional<RegexMatch> run(std::size_t from, bool anchored) {
    const std::size_t n = text.size();
    ThreadList clist(program.size());
    ThreadList nlist(program.size());
    add(clist, 0, from, from);
    for (std::size_t pos = from; pos < n; ++pos) {
      if (clist.empty() && (best || anchored)) break;
      nlist.clear();
      auto c = static_cast<unsigned char>(text[pos]);
      for (std::size_t pc : clist.pcs()) {
        std::size_t start = clist.start(pc);
        if (best && start > best->begin) continue;
        const Regex::Inst& inst = program[pc];
        if (inst.op == Regex::Op::kClass && inst.bytes.test(c)) {
          add(nlist, pc + 1, start, pos + 1);
        }
      }
      if (!best && !anchored) add(nlist, 0, pos + 1, pos + 1);
      std::swap(clist, nlist);
    }
    return best;
  }
};

}  // namespace

Regex Regex::compile(std::string_view pattern) {
  std::vector<Node> nodes;
  Parser parser(pattern, nodes);
  std::size_t root = parser.parse();
  Regex re;
  re.pattern_ = std::string(pattern);
  Emitter(nodes, re.program_).emit(root);
  Inst match;
  match.op = Op::kMatch;
  re.program_.push_back(match);
  if (re.program_.size() > kMaxProgram)
    fail(ErrorCode::kParse, "regex error: program exceeds size limit");
  return re;
}

std::optional<RegexMatch> Regex::search(std::string_view text,
                                        std::size_t from) const {
  if (from > text.size()) return std::nullopt;
  Simulation sim{program_, text, std::nullopt, {}};
  return sim.run(from, false);
}

std::vector<RegexMatch> Regex::find_all(std::string_view text) const {
  std::vector<RegexMatch> out;
  std::size_t from = 0;
  while (from <= text.size()) {
    auto m = search(text, from);
    if (!m) break;
    if (m->end == m->begin) {
      from = m->begin + 1;
      continue;
    }
    out.push_back(*m);
    from = m->end;
  }
  return out;
}

bool Regex::full_match(std::string_view text) const {
  Simulation sim{program_, text, std::nullopt, {}};
  auto m = sim.run(0, true);
  return m && m->begin == 0 && m->end == text.size();
}

}  // namespace spanrule
