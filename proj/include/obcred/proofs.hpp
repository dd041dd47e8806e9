#pragma once

// Hoare-style proofs that a program discharges its exit obligations.
//
// Rule schemas (assertions compared modulo normalization):
//
//   Exit      {obs(n)} exit {false}
//   Loop      {obs(0) * credit} loop skip {false}
//   Fork      {obs(nf) * credit^kf} b {obs(0)}
//             ------------------------------------------------------------
//             {obs(nf+nm) * credit^(kf+km)} fork { b } {obs(nm) * credit^km}
//   Seq       {P} c1 {R}   {R} c2 {Q}   /   {P} c1; c2 {Q}
//   ViewShift P ⇛ P'   {P'} c {Q'}   Q' ⇛ Q   /   {P} c {Q}
//   Frame     {P} c {Q}   /   {P * F} c {Q * F}     (F holds no obs atom)

#include "obcred/assertions.hpp"
#include "obcred/lang.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace obcred {

struct HoareTriple {
  Assertion pre;
  Command cmd;
  Assertion post;
};

inline std::string to_string(const HoareTriple& t) {
  return "{" + to_string(t.pre) + "} " + pretty(t.cmd) + " {" + to_string(t.post) + "}";
}

enum class ProofRule { Frame, Exit, Loop, Fork, Seq, ViewShift };

inline const char* rule_name(ProofRule r) {
  switch (r) {
  case ProofRule::Frame: return "Frame";
  case ProofRule::Exit: return "Exit";
  case ProofRule::Loop: return "Loop";
  case ProofRule::Fork: return "Fork";
  case ProofRule::Seq: return "Seq";
  case ProofRule::ViewShift: return "ViewShift";
  }
  return "?";
}

inline std::optional<ProofRule> proof_rule_from_name(std::string_view name) {
  for (ProofRule r : {ProofRule::Frame, ProofRule::Exit, ProofRule::Loop, ProofRule::Fork, ProofRule::Seq,
                      ProofRule::ViewShift})
    if (name == rule_name(r)) return r;
  return std::nullopt;
}

inline std::size_t premise_count(ProofRule r) {
  switch (r) {
  case ProofRule::Exit:
  case ProofRule::Loop:
    return 0;
  case ProofRule::Seq:
    return 2;
  default:
    return 1;
  }
}

struct FrameData {
  Assertion frame;
};

/// Optional names of the view-shift rules used on each side.
struct ViewShiftData {
  std::optional<std::string> pre_hint;
  std::optional<std::string> post_hint;
};

/// Resources handed to the forked thread and kept by the forking one.
struct ForkSplit {
  Nat child_obligations = 0;
  Nat child_credits = 0;
  Nat kept_obligations = 0;
  Nat kept_credits = 0;
  friend bool operator==(const ForkSplit&, const ForkSplit&) = default;
};

using RuleData = std::variant<std::monostate, FrameData, ViewShiftData, ForkSplit>;

struct ProofTree {
  HoareTriple conclusion;
  ProofRule rule;
  std::vector<ProofTree> premises;
  RuleData data;
};

inline std::size_t proof_size(const ProofTree& t) {
  std::size_t n = 1;
  for (const ProofTree& p : t.premises) n += proof_size(p);
  return n;
}

// ---------------------------------------------------------------------------
// Checking

struct RuleViolation {
  std::vector<std::size_t> path; // premise indices from the root
  ProofRule rule;
  std::string reason;

  std::string where() const {
    std::string s = "root";
    for (std::size_t i : path) s += "." + std::to_string(i);
    return s;
  }
};

struct CheckResult {
  std::optional<RuleViolation> violation;
  bool ok() const { return !violation.has_value(); }
};

namespace detail {

inline bool same(const Assertion& a, const Assertion& b) { return normalize(a) == normalize(b); }

inline bool same(const Command& a, const Command& b) { return normalize(a) == normalize(b); }

/// obs(n) * credit^k in normal form, or nullopt.
inline std::optional<std::pair<Nat, Nat>> as_holding(const Assertion& a) {
  NormalizedAssertion n = normalize(a);
  if (!n.is_single()) return std::nullopt;
  return std::make_pair(n.obs[0], n.credits);
}

inline std::optional<std::string> shift_problem(const Assertion& from, const Assertion& to,
                                                const std::optional<std::string>& hint, const char* side) {
  switch (decide_view_shift(from, to)) {
  case ShiftVerdict::Holds: break;
  case ShiftVerdict::Refuted:
    return std::string(side) + ": " + to_string(from) + " does not view-shift to " + to_string(to);
  case ShiftVerdict::Unknown:
    return std::string(side) + ": view shift " + to_string(from) + " => " + to_string(to) +
           " unknown (search budget exhausted)";
  }
  if (hint) {
    const NormalizedAssertion f = normalize(from), t = normalize(to);
    const std::string expected = f == t ? "" : classify_view_shift(f, t);
    if (*hint != expected)
      return std::string(side) + ": hint '" + *hint + "' does not match the shift (expected '" + expected + "')";
  }
  return std::nullopt;
}

inline std::optional<std::string> check_node(const ProofTree& t) {
  const HoareTriple& c = t.conclusion;
  if (t.premises.size() != premise_count(t.rule))
    return "expects " + std::to_string(premise_count(t.rule)) + " premise(s), got " +
           std::to_string(t.premises.size());

  switch (t.rule) {
  case ProofRule::Exit: {
    if (c.cmd.kind() != Command::Kind::Exit) return "command is not 'exit'";
    auto pre = as_holding(c.pre);
    if (!pre || pre->second != 0) return "precondition must be obs(n), got " + to_string(c.pre);
    if (!normalize(c.post).bottom) return "postcondition must be false, got " + to_string(c.post);
    return std::nullopt;
  }
  case ProofRule::Loop: {
    if (c.cmd.kind() != Command::Kind::LoopSkip) return "command is not 'loop skip'";
    if (!same(c.pre, holding(0, 1)))
      return "precondition must be obs(0) * credit, got " + to_string(c.pre);
    if (!normalize(c.post).bottom) return "postcondition must be false, got " + to_string(c.post);
    return std::nullopt;
  }
  case ProofRule::Fork: {
    if (c.cmd.kind() != Command::Kind::Fork) return "command is not a fork";
    const HoareTriple& p = t.premises[0].conclusion;
    if (!same(p.cmd, c.cmd.body())) return "premise command is not the fork body";
    auto child = as_holding(p.pre);
    if (!child) return "premise precondition must be obs(n) * credit^k, got " + to_string(p.pre);
    if (!same(p.post, Assertion::obs(0))) return "premise postcondition must be obs(0), got " + to_string(p.post);
    auto kept = as_holding(c.post);
    if (!kept) return "postcondition must be obs(n) * credit^k, got " + to_string(c.post);
    const ForkSplit split{child->first, child->second, kept->first, kept->second};
    if (!same(c.pre, holding(split.child_obligations + split.kept_obligations,
                             split.child_credits + split.kept_credits)))
      return "precondition " + to_string(c.pre) + " is not the sum of the child's and the kept resources";
    if (const auto* d = std::get_if<ForkSplit>(&t.data); d && !(*d == split))
      return "ruleData split disagrees with the premise and conclusion";
    return std::nullopt;
  }
  case ProofRule::Seq: {
    const HoareTriple& p1 = t.premises[0].conclusion;
    const HoareTriple& p2 = t.premises[1].conclusion;
    if (!same(c.cmd, Command::seq(p1.cmd, p2.cmd))) return "premise commands do not compose to the command";
    if (!same(c.pre, p1.pre)) return "first premise precondition differs from the precondition";
    if (!same(p1.post, p2.pre)) return "intermediate assertions differ: " + to_string(p1.post) + " vs " + to_string(p2.pre);
    if (!same(p2.post, c.post)) return "second premise postcondition differs from the postcondition";
    return std::nullopt;
  }
  case ProofRule::ViewShift: {
    const HoareTriple& p = t.premises[0].conclusion;
    if (!same(p.cmd, c.cmd)) return "premise command differs";
    const auto* d = std::get_if<ViewShiftData>(&t.data);
    const std::optional<std::string> none;
    if (auto e = shift_problem(c.pre, p.pre, d ? d->pre_hint : none, "pre")) return e;
    if (auto e = shift_problem(p.post, c.post, d ? d->post_hint : none, "post")) return e;
    return std::nullopt;
  }
  case ProofRule::Frame: {
    const auto* d = std::get_if<FrameData>(&t.data);
    if (!d) return "missing frame assertion";
    NormalizedAssertion f = normalize(d->frame);
    if (f.bottom || !f.obs.empty()) return "frame " + to_string(d->frame) + " must not hold obligations";
    const HoareTriple& p = t.premises[0].conclusion;
    if (!same(p.cmd, c.cmd)) return "premise command differs";
    if (!same(c.pre, Assertion::star(p.pre, d->frame))) return "precondition is not premise precondition * frame";
    if (!same(c.post, Assertion::star(p.post, d->frame))) return "postcondition is not premise postcondition * frame";
    return std::nullopt;
  }
  }
  return "unknown rule";
}

inline std::optional<RuleViolation> check_rec(const ProofTree& t, std::vector<std::size_t>& path) {
  if (auto reason = check_node(t)) return RuleViolation{path, t.rule, *reason};
  for (std::size_t i = 0; i < t.premises.size(); ++i) {
    path.push_back(i);
    if (auto v = check_rec(t.premises[i], path)) return v;
    path.pop_back();
  }
  return std::nullopt;
}

} // namespace detail

/// Checks every node against its rule schema, root first; reports the first
/// failing node.
inline CheckResult check_proof(const ProofTree& t) {
  std::vector<std::size_t> path;
  return {detail::check_rec(t, path)};
}

// ---------------------------------------------------------------------------
// Building blocks

inline ProofTree make_view_shift(Assertion pre, ProofTree premise, Assertion post) {
  ViewShiftData data;
  const NormalizedAssertion p = normalize(pre), pp = normalize(premise.conclusion.pre);
  const NormalizedAssertion q = normalize(post), qq = normalize(premise.conclusion.post);
  if (!(p == pp)) data.pre_hint = classify_view_shift(p, pp);
  if (!(qq == q)) data.post_hint = classify_view_shift(qq, q);
  Command cmd = premise.conclusion.cmd;
  return ProofTree{{std::move(pre), std::move(cmd), std::move(post)}, ProofRule::ViewShift, {std::move(premise)},
                   std::move(data)};
}

/// Wraps `t` in a ViewShift only when one of the sides actually changes.
inline ProofTree shift_if_needed(const Assertion& pre, ProofTree t, const Assertion& post) {
  if (detail::same(pre, t.conclusion.pre) && detail::same(post, t.conclusion.post)) return t;
  return make_view_shift(pre, std::move(t), post);
}

inline ProofTree make_frame(ProofTree premise, Assertion frame) {
  HoareTriple c{Assertion::star(premise.conclusion.pre, frame), premise.conclusion.cmd,
                Assertion::star(premise.conclusion.post, frame)};
  return ProofTree{std::move(c), ProofRule::Frame, {std::move(premise)}, FrameData{std::move(frame)}};
}

/// Rule hints in program-text order: a ViewShift contributes its pre-side
/// hint before its body and its post-side hint after; fork bodies are nested.
struct SketchItem {
  std::string rule;
  std::vector<SketchItem> nested; // fork body
  friend bool operator==(const SketchItem&, const SketchItem&) = default;
};

inline void sketch_hints_into(const ProofTree& t, std::vector<SketchItem>& out) {
  switch (t.rule) {
  case ProofRule::ViewShift: {
    const auto* d = std::get_if<ViewShiftData>(&t.data);
    const ProofTree& p = t.premises[0];
    const NormalizedAssertion pre = normalize(t.conclusion.pre), ppre = normalize(p.conclusion.pre);
    const NormalizedAssertion post = normalize(t.conclusion.post), ppost = normalize(p.conclusion.post);
    if (!(pre == ppre)) out.push_back({d && d->pre_hint ? *d->pre_hint : classify_view_shift(pre, ppre), {}});
    sketch_hints_into(p, out);
    if (!(post == ppost)) out.push_back({d && d->post_hint ? *d->post_hint : classify_view_shift(ppost, post), {}});
    break;
  }
  case ProofRule::Fork: {
    SketchItem item{"Fork", {}};
    sketch_hints_into(t.premises[0], item.nested);
    out.push_back(std::move(item));
    break;
  }
  case ProofRule::Seq:
    sketch_hints_into(t.premises[0], out);
    sketch_hints_into(t.premises[1], out);
    break;
  case ProofRule::Frame:
    sketch_hints_into(t.premises[0], out);
    break;
  default:
    out.push_back({rule_name(t.rule), {}});
  }
}

inline std::vector<SketchItem> sketch_hints(const ProofTree& t) {
  std::vector<SketchItem> out;
  sketch_hints_into(t, out);
  return out;
}

inline std::string to_string(const std::vector<SketchItem>& items) {
  std::string s;
  for (const SketchItem& it : items) {
    if (!s.empty()) s += ", ";
    s += it.rule;
    if (!it.nested.empty()) s += " [" + to_string(it.nested) + "]";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Proof search
//
// A thread holding obs(o) * credit^k can view-shift to obs(o') * credit^k'
// exactly when o − k <= o' − k', so the search only tracks the deficit
// d = o − k. For a suffix r of a thread's atoms let
//
//   D(r)  = the largest deficit from which {.} r {obs(0)} is derivable,
//   Lo(r) = the smallest deficit the thread can carry through r without
//           being left with spare credits when it reaches `done`.
//
//   D(ε) = Lo(ε) = 0
//   D(exit; r) = +∞,   Lo(exit; r) = −∞
//   D(loop skip; r) = −1,   Lo(loop skip; r) = −∞
//   D(fork b; r) = D(b) + D(r),   Lo(fork b; r) = Lo(b) + Lo(r)
//
// Derivability from obs(n) is n <= D(c). Proofs are built keeping the
// deficit inside [Lo, D] at every atom, which is always possible from 0.

namespace detail {

using Deficit = std::int64_t;
constexpr Deficit kPlusInf = std::numeric_limits<Deficit>::max() / 4;
constexpr Deficit kMinusInf = -kPlusInf;

inline Deficit add_bounds(Deficit a, Deficit b) {
  if (a >= kPlusInf || b >= kPlusInf) return kPlusInf;
  if (a <= kMinusInf || b <= kMinusInf) return kMinusInf;
  return a + b;
}

struct Window {
  Deficit lo;
  Deficit hi;
};

/// Canonical holding with the given deficit.
inline Assertion holding_for(Deficit d) {
  return d >= 0 ? holding(static_cast<Nat>(d), 0) : holding(0, static_cast<Nat>(-d));
}

inline std::pair<Nat, Nat> resources_for(Deficit d) {
  return d >= 0 ? std::make_pair(static_cast<Nat>(d), Nat{0}) : std::make_pair(Nat{0}, static_cast<Nat>(-d));
}

/// Value in [lo, hi] of smallest magnitude.
inline Deficit closest_to_zero(Deficit lo, Deficit hi) {
  if (lo > 0) return lo;
  if (hi < 0) return hi;
  return 0;
}

class Deriver {
public:
  Window window(const std::vector<Command>& atoms, std::size_t from) {
    Window w{0, 0};
    for (std::size_t i = atoms.size(); i-- > from;) {
      const Command& a = atoms[i];
      switch (a.kind()) {
      case Command::Kind::Exit: w = {kMinusInf, kPlusInf}; break;
      case Command::Kind::LoopSkip: w = {kMinusInf, -1}; break;
      case Command::Kind::Fork: {
        Window b = body_window(a.body());
        w = {add_bounds(b.lo, w.lo), add_bounds(b.hi, w.hi)};
        break;
      }
      case Command::Kind::Seq: break; // atoms_of never yields Seq
      }
    }
    return w;
  }

  Window body_window(const Command& body) {
    const std::string key = pretty(body);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    Window w = window(atoms_of(body), 0);
    memo_.emplace(key, w);
    return w;
  }

  /// Proof of {holding_for(d)} c {obs(0)}; d must lie in window(c).
  ProofTree thread_proof(const Command& c, Deficit d) {
    const std::vector<Command> atoms = atoms_of(c);
    ProofTree core = suffix_proof(atoms, 0, d);
    return shift_if_needed(holding_for(d), std::move(core), Assertion::obs(0));
  }

private:
  // Proof of {ready} atoms[i..] {post}: `ready` is exactly what atom i needs
  // when the thread carries deficit d, and post is false when the suffix ends
  // at a loop or exit, obs(0) otherwise.
  ProofTree suffix_proof(const std::vector<Command>& atoms, std::size_t i, Deficit d) {
    const Command& a = atoms[i];
    const bool last = i + 1 == atoms.size();

    ProofTree head = [&]() -> ProofTree {
      switch (a.kind()) {
      case Command::Kind::Exit: {
        const auto [o, k] = resources_for(d);
        ProofTree exit{{Assertion::obs(o), a, Assertion::ff()}, ProofRule::Exit, {}, {}};
        if (k == 0) return exit;
        return make_frame(std::move(exit), holding_credits(k));
      }
      case Command::Kind::LoopSkip:
        return ProofTree{{holding(0, 1), a, Assertion::ff()}, ProofRule::Loop, {}, {}};
      case Command::Kind::Fork: {
        const Window child = body_window(a.body());
        const Window rest = last ? Window{0, 0} : window(atoms, i + 1);
        const Deficit lo = std::max(child.lo, rest.hi >= kPlusInf ? kMinusInf : d - rest.hi);
        const Deficit hi = std::min(child.hi, rest.lo <= kMinusInf ? kPlusInf : d - rest.lo);
        const Deficit df = closest_to_zero(lo, hi);
        const Deficit dm = d - df;
        const auto [cf, kf] = resources_for(df);
        const auto [cm, km] = resources_for(dm);
        return ProofTree{{holding(cf + cm, kf + km), a, holding(cm, km)},
                         ProofRule::Fork,
                         {thread_proof(a.body(), df)},
                         ForkSplit{cf, kf, cm, km}};
      }
      case Command::Kind::Seq: break;
      }
      throw std::logic_error("suffix_proof: non-atomic command");
    }();

    if (last) return head;

    const bool dead = normalize(head.conclusion.post).bottom;
    ProofTree tail = [&] {
      if (dead) {
        // Unreachable code after a loop or exit; start it from false with
        // whatever it needs.
        const Window rest = window(atoms, i + 1);
        ProofTree t = suffix_proof(atoms, i + 1, closest_to_zero(rest.lo, rest.hi));
        Assertion post = t.conclusion.post;
        return shift_if_needed(Assertion::ff(), std::move(t), post);
      }
      const auto kept = as_holding(head.conclusion.post);
      const Deficit next = static_cast<Deficit>(kept->first) - static_cast<Deficit>(kept->second);
      ProofTree t = suffix_proof(atoms, i + 1, next);
      Assertion post = t.conclusion.post;
      return shift_if_needed(head.conclusion.post, std::move(t), post);
    }();
    HoareTriple c{head.conclusion.pre, Command::seq(a, seq_of(atoms, i + 1)), tail.conclusion.post};
    return ProofTree{std::move(c), ProofRule::Seq, {std::move(head), std::move(tail)}, {}};
  }

  static Assertion holding_credits(Nat k) {
    Assertion a = Assertion::credit();
    for (Nat j = 1; j < k; ++j) a = Assertion::star(a, Assertion::credit());
    return a;
  }

  std::unordered_map<std::string, Window> memo_;
};

} // namespace detail

/// Largest n for which {obs(n)} c {obs(0)} is derivable is unbounded when
/// this returns nullopt; otherwise derivability from obs(n) is n <= value.
inline std::optional<std::int64_t> derivability_bound(const Command& c) {
  detail::Deriver d;
  const auto w = d.window(atoms_of(normalize(c)), 0);
  if (w.hi >= detail::kPlusInf) return std::nullopt;
  return w.hi;
}

struct NotDerivable {
  std::int64_t max_obligations; // derivable only from obs(n) with n <= this; negative means never
};

using DeriveResult = std::variant<ProofTree, NotDerivable>;

/// Searches for a proof of {obs(n)} c {obs(0)}.
inline DeriveResult derive(const Command& c, Nat n) {
  detail::Deriver d;
  const Command cmd = normalize(c);
  const detail::Window w = d.window(atoms_of(cmd), 0);
  if (static_cast<detail::Deficit>(n) > w.hi) return NotDerivable{w.hi};
  // n >= 0 >= lo always holds: lo is either 0 or -inf.
  ProofTree t = d.thread_proof(cmd, static_cast<detail::Deficit>(n));
  return t;
}

struct Verified {
  ProofTree proof;
};
struct Rejected {};
using Verdict = std::variant<Verified, Rejected>;

inline Verdict verify(const Command& c) {
  DeriveResult r = derive(c, 0);
  if (auto* t = std::get_if<ProofTree>(&r)) return Verified{std::move(*t)};
  return Rejected{};
}

inline bool is_verified(const Command& c) { return std::holds_alternative<Verified>(verify(c)); }

} // namespace obcred
