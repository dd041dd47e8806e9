#pragma once

// Commands, continuations and thread pools of the toy language, plus its
// concrete syntax:
//
//   cmd  ::= atom (";" cmd)?
//   atom ::= "exit" | "loop" "skip" | "fork" "{" cmd "}"
//
// Whitespace is insignificant and `#` starts a comment running to the end of
// the line.

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace obcred {

using ThreadId = std::uint64_t;

class Command {
public:
  enum class Kind { Exit, LoopSkip, Fork, Seq };

  static Command exit() { return Command(Kind::Exit, nullptr, nullptr); }
  static Command loop_skip() { return Command(Kind::LoopSkip, nullptr, nullptr); }
  static Command fork(Command body) {
    return Command(Kind::Fork, std::make_shared<const Command>(std::move(body)), nullptr);
  }
  static Command seq(Command first, Command second) {
    return Command(Kind::Seq, std::make_shared<const Command>(std::move(first)),
                   std::make_shared<const Command>(std::move(second)));
  }

  Kind kind() const { return kind_; }
  bool is_atom() const { return kind_ != Kind::Seq; }

  // Fork: the forked body. Seq: the first component.
  const Command& body() const { return *first_; }
  const Command& first() const { return *first_; }
  const Command& second() const { return *second_; }

  friend bool operator==(const Command& a, const Command& b) {
    if (a.kind_ != b.kind_) return false;
    switch (a.kind_) {
    case Kind::Exit:
    case Kind::LoopSkip:
      return true;
    case Kind::Fork:
      return a.first_ == b.first_ || *a.first_ == *b.first_;
    case Kind::Seq:
      return (a.first_ == b.first_ || *a.first_ == *b.first_) &&
             (a.second_ == b.second_ || *a.second_ == *b.second_);
    }
    return false;
  }

private:
  Command(Kind kind, std::shared_ptr<const Command> first,
          std::shared_ptr<const Command> second)
      : kind_(kind), first_(std::move(first)), second_(std::move(second)) {}

  Kind kind_;
  std::shared_ptr<const Command> first_;
  std::shared_ptr<const Command> second_;
};

/// The atoms of `c` in execution order with every Seq flattened away.
inline void collect_atoms(const Command& c, std::vector<Command>& out) {
  if (c.kind() == Command::Kind::Seq) {
    collect_atoms(c.first(), out);
    collect_atoms(c.second(), out);
  } else {
    out.push_back(c);
  }
}

inline std::vector<Command> atoms_of(const Command& c) {
  std::vector<Command> out;
  collect_atoms(c, out);
  return out;
}

/// Number of Exit, LoopSkip and Fork nodes, fork bodies included.
inline std::size_t atom_count(const Command& c) {
  switch (c.kind()) {
  case Command::Kind::Exit:
  case Command::Kind::LoopSkip:
    return 1;
  case Command::Kind::Fork:
    return 1 + atom_count(c.body());
  case Command::Kind::Seq:
    return atom_count(c.first()) + atom_count(c.second());
  }
  return 0;
}

inline std::size_t node_count(const Command& c) {
  switch (c.kind()) {
  case Command::Kind::Fork:
    return 1 + node_count(c.body());
  case Command::Kind::Seq:
    return 1 + node_count(c.first()) + node_count(c.second());
  default:
    return 1;
  }
}

/// Right-associated sequence of already-normalized atoms. `atoms` must be
/// non-empty.
inline Command seq_of(const std::vector<Command>& atoms, std::size_t from = 0) {
  if (from >= atoms.size()) throw std::invalid_argument("seq_of: empty atom list");
  Command result = atoms.back();
  for (std::size_t i = atoms.size() - 1; i-- > from;) result = Command::seq(atoms[i], result);
  return result;
}

/// Right-associates every Seq, recursively inside fork bodies.
inline Command normalize(const Command& c) {
  std::vector<Command> atoms;
  for (const Command& a : atoms_of(c)) {
    atoms.push_back(a.kind() == Command::Kind::Fork ? Command::fork(normalize(a.body())) : a);
  }
  return seq_of(atoms);
}

inline bool is_normalized(const Command& c) {
  switch (c.kind()) {
  case Command::Kind::Fork:
    return is_normalized(c.body());
  case Command::Kind::Seq:
    return c.first().kind() != Command::Kind::Seq && is_normalized(c.first()) &&
           is_normalized(c.second());
  default:
    return true;
  }
}

inline void pretty_to(std::ostream& os, const Command& c) {
  switch (c.kind()) {
  case Command::Kind::Exit:
    os << "exit";
    break;
  case Command::Kind::LoopSkip:
    os << "loop skip";
    break;
  case Command::Kind::Fork:
    os << "fork { ";
    pretty_to(os, c.body());
    os << " }";
    break;
  case Command::Kind::Seq:
    pretty_to(os, c.first());
    os << "; ";
    pretty_to(os, c.second());
    break;
  }
}

/// Concrete syntax. A left-nested Seq prints the same as its right-associated
/// form, so parse(pretty(c)) == normalize(c).
inline std::string pretty(const Command& c) {
  std::ostringstream os;
  pretty_to(os, c);
  return os.str();
}

// ---------------------------------------------------------------------------
// Parsing

class ParseError : public std::runtime_error {
public:
  ParseError(std::size_t line, std::size_t column, std::string token, const std::string& what)
      : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + what +
                           (token.empty() ? std::string(" at end of input")
                                          : " near '" + token + "'")),
        line_(line), column_(column), token_(std::move(token)) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::string& token() const { return token_; }

private:
  std::size_t line_;
  std::size_t column_;
  std::string token_;
};

namespace detail {

struct Token {
  std::string text; // empty at end of input
  std::size_t line = 1;
  std::size_t column = 1;
};

/// Splits program or assertion text into identifier/number words and single
/// punctuation characters, dropping whitespace and `#` comments.
inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t line = 1, column = 1, i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
  };
  while (i < text.size()) {
    const unsigned char ch = static_cast<unsigned char>(text[i]);
    if (std::isspace(ch)) {
      advance(1);
    } else if (ch == '#') {
      while (i < text.size() && text[i] != '\n') advance(1);
    } else if (std::isalnum(ch) || ch == '_') {
      std::size_t j = i;
      while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '_'))
        ++j;
      tokens.push_back({std::string(text.substr(i, j - i)), line, column});
      advance(j - i);
    } else {
      tokens.push_back({std::string(1, static_cast<char>(ch)), line, column});
      advance(1);
    }
  }
  tokens.push_back({"", line, column});
  return tokens;
}

class TokenStream {
public:
  explicit TokenStream(std::string_view text) : tokens_(tokenize(text)) {}

  const Token& peek() const { return tokens_[pos_]; }
  bool at_end() const { return peek().text.empty(); }
  Token next() {
    Token t = tokens_[pos_];
    if (!at_end()) ++pos_;
    return t;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(peek().line, peek().column, peek().text, what);
  }
  void expect(std::string_view text) {
    if (peek().text != text) fail("expected '" + std::string(text) + "'");
    next();
  }

private:
  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
};

inline Command parse_cmd(TokenStream& ts);

inline Command parse_atom(TokenStream& ts) {
  const std::string& word = ts.peek().text;
  if (word == "exit") {
    ts.next();
    return Command::exit();
  }
  if (word == "loop") {
    ts.next();
    ts.expect("skip");
    return Command::loop_skip();
  }
  if (word == "fork") {
    ts.next();
    ts.expect("{");
    Command body = parse_cmd(ts);
    ts.expect("}");
    return Command::fork(std::move(body));
  }
  ts.fail("expected 'exit', 'loop skip' or 'fork'");
}

inline Command parse_cmd(TokenStream& ts) {
  std::vector<Command> atoms{parse_atom(ts)};
  while (ts.peek().text == ";") {
    ts.next();
    atoms.push_back(parse_atom(ts));
  }
  return seq_of(atoms);
}

} // namespace detail

inline Command parse(std::string_view text) {
  detail::TokenStream ts(text);
  Command c = detail::parse_cmd(ts);
  if (!ts.at_end()) ts.fail("unexpected trailing input");
  return c;
}

// ---------------------------------------------------------------------------
// Continuations

/// `done` or `c; k`. Tails are shared between continuations, so copying is
/// cheap and suffixes compare by pointer first.
class Continuation {
public:
  Continuation() = default; // done

  static Continuation done() { return {}; }
  static Continuation cons(Command head, Continuation tail);

  bool is_done() const { return node_ == nullptr; }
  const Command& head() const;
  const Continuation& tail() const;

  std::size_t length() const {
    std::size_t n = 0;
    for (const Continuation* k = this; !k->is_done(); k = &k->tail()) ++n;
    return n;
  }

  friend bool operator==(const Continuation& a, const Continuation& b) {
    const Continuation* x = &a;
    const Continuation* y = &b;
    while (true) {
      if (x->node_ == y->node_) return true;
      if (x->is_done() || y->is_done()) return false;
      if (!(x->head() == y->head())) return false;
      x = &x->tail();
      y = &y->tail();
    }
  }

private:
  struct Node;
  std::shared_ptr<const Node> node_;
};

struct Continuation::Node {
  Command head;
  Continuation tail;
};

inline Continuation Continuation::cons(Command head, Continuation tail) {
  Continuation k;
  k.node_ = std::make_shared<const Node>(Node{std::move(head), std::move(tail)});
  return k;
}
inline const Command& Continuation::head() const { return node_->head; }
inline const Continuation& Continuation::tail() const { return node_->tail; }

/// `c; k` with nested sequencing flattened, so every head is an atom.
inline Continuation prepend(const Command& c, Continuation k) {
  if (c.kind() == Command::Kind::Seq) return prepend(c.first(), prepend(c.second(), std::move(k)));
  if (c.kind() == Command::Kind::Fork) return Continuation::cons(Command::fork(normalize(c.body())), std::move(k));
  return Continuation::cons(c, std::move(k));
}

/// `c; done`.
inline Continuation to_continuation(const Command& c) { return prepend(c, Continuation::done()); }

inline void pretty_to(std::ostream& os, const Continuation& k) {
  for (const Continuation* it = &k; !it->is_done(); it = &it->tail()) {
    pretty_to(os, it->head());
    os << "; ";
  }
  os << "done";
}

inline std::string pretty(const Continuation& k) {
  std::ostringstream os;
  pretty_to(os, k);
  return os.str();
}

inline std::size_t hash_value(const Command& c) {
  std::size_t h = static_cast<std::size_t>(c.kind()) + 0x9e3779b9u;
  auto mix = [&h](std::size_t v) { h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2); };
  if (c.kind() == Command::Kind::Fork) mix(hash_value(c.body()));
  if (c.kind() == Command::Kind::Seq) {
    mix(hash_value(c.first()));
    mix(hash_value(c.second()));
  }
  return h;
}

inline std::size_t hash_value(const Continuation& k) {
  std::size_t h = 0xcbf29ce484222325ull;
  for (const Continuation* it = &k; !it->is_done(); it = &it->tail())
    h ^= hash_value(it->head()) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  return h;
}

// ---------------------------------------------------------------------------
// Thread pools

using ThreadPool = std::map<ThreadId, Continuation>;

/// Pool holding one thread running `c; done`.
inline ThreadPool initial_pool(const Command& c, ThreadId first = 0) {
  return ThreadPool{{first, to_continuation(c)}};
}

/// Id given to the next forked thread: max(dom) + 1, or 0 for the empty pool.
template <class Pool>
ThreadId fresh_id(const Pool& pool) {
  return pool.empty() ? 0 : pool.rbegin()->first + 1;
}

inline std::string render_pool(const ThreadPool& pool) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& [tid, k] : pool) {
    if (!first) os << ',';
    first = false;
    os << tid << ':';
    pretty_to(os, k);
  }
  os << '}';
  return os.str();
}

} // namespace obcred

template <>
struct std::hash<obcred::Continuation> {
  std::size_t operator()(const obcred::Continuation& k) const { return obcred::hash_value(k); }
};
