#pragma once

// Ghost resources and the assertion language over them.
//
// A resource bundle is a multiset of obligations-chunk values plus a credit
// count. Assertions are `true`, `false`, `obs(n)`, `credit` and separating
// conjunction `*`. The model is affine: a bundle satisfies an assertion if
// some sub-bundle carries exactly what the atoms name.

#include "obcred/lang.hpp"

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace obcred {

using Nat = std::uint32_t;

struct ResourceBundle {
  std::vector<Nat> chunks; // sorted; each entry is one chunk's obligation count
  Nat credits = 0;

  ResourceBundle() = default;
  ResourceBundle(std::vector<Nat> cs, Nat k) : chunks(std::move(cs)), credits(k) {
    std::sort(chunks.begin(), chunks.end());
  }

  bool complete() const { return chunks.size() == 1; }

  friend ResourceBundle operator+(const ResourceBundle& a, const ResourceBundle& b) {
    std::vector<Nat> cs = a.chunks;
    cs.insert(cs.end(), b.chunks.begin(), b.chunks.end());
    return ResourceBundle(std::move(cs), a.credits + b.credits);
  }
  friend bool operator==(const ResourceBundle&, const ResourceBundle&) = default;
};

class Assertion {
public:
  enum class Kind { True, False, Star, Obs, Credit };

  static Assertion tt() { return Assertion(Kind::True); }
  static Assertion ff() { return Assertion(Kind::False); }
  static Assertion credit() { return Assertion(Kind::Credit); }
  static Assertion obs(Nat n) {
    Assertion a(Kind::Obs);
    a.value_ = n;
    return a;
  }
  static Assertion star(Assertion l, Assertion r) {
    Assertion a(Kind::Star);
    a.left_ = std::make_shared<const Assertion>(std::move(l));
    a.right_ = std::make_shared<const Assertion>(std::move(r));
    return a;
  }

  Kind kind() const { return kind_; }
  Nat value() const { return value_; }
  const Assertion& left() const { return *left_; }
  const Assertion& right() const { return *right_; }

  friend bool operator==(const Assertion& a, const Assertion& b) {
    if (a.kind_ != b.kind_) return false;
    if (a.kind_ == Kind::Obs) return a.value_ == b.value_;
    if (a.kind_ == Kind::Star) return a.left() == b.left() && a.right() == b.right();
    return true;
  }

private:
  explicit Assertion(Kind k) : kind_(k) {}

  Kind kind_;
  Nat value_ = 0;
  std::shared_ptr<const Assertion> left_;
  std::shared_ptr<const Assertion> right_;
};

/// obs(o) * credit * ... * credit with k credits.
inline Assertion holding(Nat obligations, Nat credits) {
  Assertion a = Assertion::obs(obligations);
  for (Nat i = 0; i < credits; ++i) a = Assertion::star(a, Assertion::credit());
  return a;
}

inline void print_to(std::ostream& os, const Assertion& a) {
  switch (a.kind()) {
  case Assertion::Kind::True: os << "true"; break;
  case Assertion::Kind::False: os << "false"; break;
  case Assertion::Kind::Credit: os << "credit"; break;
  case Assertion::Kind::Obs: os << "obs(" << a.value() << ")"; break;
  case Assertion::Kind::Star:
    // `*` is left-associative, so only a right operand needs parentheses.
    print_to(os, a.left());
    os << " * ";
    if (a.right().kind() == Assertion::Kind::Star) os << '(';
    print_to(os, a.right());
    if (a.right().kind() == Assertion::Kind::Star) os << ')';
    break;
  }
}

inline std::string to_string(const Assertion& a) {
  std::ostringstream os;
  print_to(os, a);
  return os.str();
}

namespace detail {

inline Assertion parse_assertion_atom(TokenStream& ts);

inline Assertion parse_assertion_expr(TokenStream& ts) {
  Assertion a = parse_assertion_atom(ts);
  while (ts.peek().text == "*") {
    ts.next();
    a = Assertion::star(std::move(a), parse_assertion_atom(ts));
  }
  return a;
}

inline Assertion parse_assertion_atom(TokenStream& ts) {
  const std::string word = ts.peek().text;
  if (word == "true") return ts.next(), Assertion::tt();
  if (word == "false") return ts.next(), Assertion::ff();
  if (word == "credit") return ts.next(), Assertion::credit();
  if (word == "(") {
    ts.next();
    Assertion a = parse_assertion_expr(ts);
    ts.expect(")");
    return a;
  }
  if (word == "obs") {
    ts.next();
    ts.expect("(");
    const std::string num = ts.peek().text;
    if (num.empty() || !std::all_of(num.begin(), num.end(), [](char ch) { return ch >= '0' && ch <= '9'; }))
      ts.fail("expected a natural number");
    if (num.size() > 9) ts.fail("obligation count too large");
    ts.next();
    ts.expect(")");
    return Assertion::obs(static_cast<Nat>(std::stoul(num)));
  }
  ts.fail("expected 'true', 'false', 'credit', 'obs(N)' or '('");
}

} // namespace detail

inline Assertion parse_assertion(std::string_view text) {
  detail::TokenStream ts(text);
  Assertion a = detail::parse_assertion_expr(ts);
  if (!ts.at_end()) ts.fail("unexpected trailing input");
  return a;
}

// ---------------------------------------------------------------------------
// Satisfaction

namespace detail {

// All ways to write `b` as b1 ⊎ b2, enumerated over per-value multiplicities.
template <class F>
bool any_split(const ResourceBundle& b, F&& f) {
  std::vector<std::pair<Nat, std::size_t>> groups;
  for (Nat v : b.chunks) {
    if (!groups.empty() && groups.back().first == v) ++groups.back().second;
    else groups.emplace_back(v, 1);
  }
  std::vector<std::size_t> take(groups.size(), 0);
  while (true) {
    std::vector<Nat> left, right;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      left.insert(left.end(), take[g], groups[g].first);
      right.insert(right.end(), groups[g].second - take[g], groups[g].first);
    }
    for (Nat c = 0; c <= b.credits; ++c)
      if (f(ResourceBundle(left, c), ResourceBundle(right, b.credits - c))) return true;
    std::size_t g = 0;
    while (g < groups.size() && take[g] == groups[g].second) take[g++] = 0;
    if (g == groups.size()) return false;
    ++take[g];
  }
}

} // namespace detail

/// The modeling relation, read clause by clause: `*` by existence of a split.
inline bool satisfies(const ResourceBundle& b, const Assertion& a) {
  switch (a.kind()) {
  case Assertion::Kind::True: return true;
  case Assertion::Kind::False: return false;
  case Assertion::Kind::Credit: return b.credits >= 1;
  case Assertion::Kind::Obs:
    return std::find(b.chunks.begin(), b.chunks.end(), a.value()) != b.chunks.end();
  case Assertion::Kind::Star:
    return detail::any_split(b, [&a](const ResourceBundle& l, const ResourceBundle& r) {
      return satisfies(l, a.left()) && satisfies(r, a.right());
    });
  }
  return false;
}

// ---------------------------------------------------------------------------
// Normal forms

/// Bottom, or the multiset of obs atoms and the number of credit atoms.
struct NormalizedAssertion {
  bool bottom = false;
  std::vector<Nat> obs; // sorted
  Nat credits = 0;

  static NormalizedAssertion make_bottom() { return {true, {}, 0}; }
  static NormalizedAssertion flat(std::vector<Nat> obs, Nat credits) {
    std::sort(obs.begin(), obs.end());
    return {false, std::move(obs), credits};
  }
  static NormalizedAssertion single(Nat obligations, Nat credits) { return flat({obligations}, credits); }

  bool is_single() const { return !bottom && obs.size() == 1; }
  friend bool operator==(const NormalizedAssertion&, const NormalizedAssertion&) = default;
};

inline NormalizedAssertion normalize(const Assertion& a) {
  switch (a.kind()) {
  case Assertion::Kind::True: return NormalizedAssertion::flat({}, 0);
  case Assertion::Kind::False: return NormalizedAssertion::make_bottom();
  case Assertion::Kind::Credit: return NormalizedAssertion::flat({}, 1);
  case Assertion::Kind::Obs: return NormalizedAssertion::flat({a.value()}, 0);
  case Assertion::Kind::Star: {
    NormalizedAssertion l = normalize(a.left());
    NormalizedAssertion r = normalize(a.right());
    if (l.bottom || r.bottom) return NormalizedAssertion::make_bottom();
    l.obs.insert(l.obs.end(), r.obs.begin(), r.obs.end());
    return NormalizedAssertion::flat(std::move(l.obs), l.credits + r.credits);
  }
  }
  return NormalizedAssertion::make_bottom();
}

/// Canonical assertion for a normal form.
inline Assertion to_assertion(const NormalizedAssertion& n) {
  if (n.bottom) return Assertion::ff();
  std::optional<Assertion> a;
  auto add = [&a](Assertion x) { a = a ? Assertion::star(*a, std::move(x)) : std::move(x); };
  for (Nat v : n.obs) add(Assertion::obs(v));
  for (Nat i = 0; i < n.credits; ++i) add(Assertion::credit());
  return a ? *a : Assertion::tt();
}

inline std::string to_string(const NormalizedAssertion& n) { return to_string(to_assertion(n)); }

inline bool multiset_includes(const std::vector<Nat>& super, const std::vector<Nat>& sub) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

inline bool satisfies(const ResourceBundle& b, const NormalizedAssertion& n) {
  return !n.bottom && multiset_includes(b.chunks, n.obs) && b.credits >= n.credits;
}

inline bool entails(const NormalizedAssertion& a, const NormalizedAssertion& b) {
  if (a.bottom) return true;
  if (b.bottom) return false;
  return multiset_includes(a.obs, b.obs) && b.credits <= a.credits;
}

/// Semantic implication over all bundles, decided on normal forms.
inline bool entails(const Assertion& a, const Assertion& b) { return entails(normalize(a), normalize(b)); }

// ---------------------------------------------------------------------------
// View shifts
//
// Closure of: pair introduction obs(n) ⇛ obs(n+1) * credit on any one obs
// atom and its inverse (cancellation), semantic entailment, and chaining.

enum class ShiftVerdict { Holds, Refuted, Unknown };

inline const char* verdict_name(ShiftVerdict v) {
  switch (v) {
  case ShiftVerdict::Holds: return "holds";
  case ShiftVerdict::Refuted: return "fails";
  case ShiftVerdict::Unknown: return "unknown";
  }
  return "?";
}

/// obs(n) * credit^k ⇛ obs(n') * credit^k'. Pair moves keep n − k fixed and
/// dropping credits only raises it.
inline bool view_shift_closed_form(std::int64_t n, std::int64_t k, std::int64_t n2, std::int64_t k2) {
  return n - k <= n2 - k2;
}

inline std::size_t saturation_budget(const NormalizedAssertion& from, const NormalizedAssertion& to) {
  return 2 * (from.obs.size() + from.credits + to.obs.size() + to.credits) + 4;
}

struct SaturationResult {
  bool found = false;
  bool budget_exhausted = false; // frontier still non-empty when the step budget ran out
  std::size_t states = 0;
};

/// Breadth-first search over flats reachable by pair introduction and
/// cancellation on individual atoms, testing entailment of the target at
/// every state. Obs values and credits are capped at their largest
/// occurrence plus the budget.
inline SaturationResult saturate_view_shift(const NormalizedAssertion& from, const NormalizedAssertion& to,
                                            std::size_t budget) {
  SaturationResult result;
  if (from.bottom) return {true, false, 1};
  if (to.bottom) return {false, false, 1};

  Nat cap = std::max(from.credits, to.credits);
  for (Nat v : from.obs) cap = std::max(cap, v);
  for (Nat v : to.obs) cap = std::max(cap, v);
  cap += static_cast<Nat>(budget);

  using State = std::pair<std::vector<Nat>, Nat>;
  std::set<State> seen{{from.obs, from.credits}};
  std::deque<std::pair<State, std::size_t>> frontier{{{from.obs, from.credits}, 0}};
  while (!frontier.empty()) {
    auto [state, depth] = frontier.front();
    frontier.pop_front();
    const auto& [obs, credits] = state;
    if (entails(NormalizedAssertion::flat(obs, credits), to)) {
      result.found = true;
      break;
    }
    if (depth == budget) {
      result.budget_exhausted = true;
      continue;
    }
    for (std::size_t i = 0; i < obs.size(); ++i) {
      if (i > 0 && obs[i] == obs[i - 1]) continue;
      if (obs[i] < cap && credits < cap) {
        State up{obs, credits + 1};
        ++up.first[i];
        std::sort(up.first.begin(), up.first.end());
        if (seen.insert(up).second) frontier.push_back({up, depth + 1});
      }
      if (obs[i] >= 1 && credits >= 1) {
        State down{obs, credits - 1};
        --down.first[i];
        std::sort(down.first.begin(), down.first.end());
        if (seen.insert(down).second) frontier.push_back({down, depth + 1});
      }
    }
  }
  result.states = seen.size();
  return result;
}

inline ShiftVerdict decide_view_shift(const NormalizedAssertion& from, const NormalizedAssertion& to) {
  if (from.bottom) return ShiftVerdict::Holds;
  if (to.bottom) return ShiftVerdict::Refuted; // flats are always satisfiable
  // No rule creates an obligations chunk.
  if (to.obs.size() > from.obs.size()) return ShiftVerdict::Refuted;
  if (from.obs.size() <= 1 && to.obs.size() <= 1) {
    if (to.obs.empty()) {
      // Intro on a spare atom yields any number of credits.
      return (!from.obs.empty() || to.credits <= from.credits) ? ShiftVerdict::Holds : ShiftVerdict::Refuted;
    }
    return view_shift_closed_form(from.obs[0], from.credits, to.obs[0], to.credits) ? ShiftVerdict::Holds
                                                                                   : ShiftVerdict::Refuted;
  }
  SaturationResult s = saturate_view_shift(from, to, saturation_budget(from, to));
  return s.found ? ShiftVerdict::Holds : ShiftVerdict::Unknown;
}

inline ShiftVerdict decide_view_shift(const Assertion& from, const Assertion& to) {
  return decide_view_shift(normalize(from), normalize(to));
}

inline bool view_shift(const Assertion& from, const Assertion& to) {
  return decide_view_shift(from, to) == ShiftVerdict::Holds;
}

/// Names the view-shift rule that justifies a (valid) shift: plain
/// entailment, pair moves alone, or a chain of both.
inline const char* classify_view_shift(const NormalizedAssertion& from, const NormalizedAssertion& to) {
  if (entails(from, to)) return "VS-SemImp";
  if (!from.bottom && !to.bottom && from.obs.size() == to.obs.size()) {
    std::int64_t lhs = -static_cast<std::int64_t>(from.credits);
    std::int64_t rhs = -static_cast<std::int64_t>(to.credits);
    for (Nat v : from.obs) lhs += v;
    for (Nat v : to.obs) rhs += v;
    if (lhs == rhs) return "VS-ObCredIntro";
  }
  return "VS-Trans";
}

} // namespace obcred
