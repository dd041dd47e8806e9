#pragma once

// Annotated execution: every thread carries a complete resource bundle (one
// obligations chunk plus credits). Ghost steps spawn or cancel an
// obligation-credit pair; real steps mirror the plain semantics but get
// stuck when a looping thread holds obligations or lacks a credit, or when a
// terminating thread still holds obligations.

#include "obcred/assertions.hpp"
#include "obcred/lang.hpp"
#include "obcred/proofs.hpp"
#include "obcred/semantics.hpp"

#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace obcred {

/// A complete bundle: one obligations chunk and a credit count.
struct ThreadBundle {
  Nat obligations = 0;
  Nat credits = 0;

  ResourceBundle as_resource_bundle() const { return ResourceBundle({obligations}, credits); }
  friend ThreadBundle operator+(ThreadBundle a, ThreadBundle b) {
    return {a.obligations + b.obligations, a.credits + b.credits};
  }
  friend bool operator==(const ThreadBundle&, const ThreadBundle&) = default;
};

inline std::string render(const ThreadBundle& b) {
  return "(<" + std::to_string(b.obligations) + ">|" + std::to_string(b.credits) + ")";
}

struct AnnotatedThread {
  ThreadBundle bundle;
  Continuation cont;
  friend bool operator==(const AnnotatedThread&, const AnnotatedThread&) = default;
};

using AnnotatedPool = std::map<ThreadId, AnnotatedThread>;

enum class AnnotatedRule { GsIntro, GsCancel, RaLoop, RaFork, RaSeq, RaExit, RaThreadTerm };

inline const char* rule_name(AnnotatedRule r) {
  switch (r) {
  case AnnotatedRule::GsIntro: return "GS-Intro";
  case AnnotatedRule::GsCancel: return "GS-Cancel";
  case AnnotatedRule::RaLoop: return "RA-Loop";
  case AnnotatedRule::RaFork: return "RA-Fork";
  case AnnotatedRule::RaSeq: return "RA-Seq-lift";
  case AnnotatedRule::RaExit: return "RA-Exit";
  case AnnotatedRule::RaThreadTerm: return "RA-ThreadTerm";
  }
  return "?";
}

inline bool is_ghost(AnnotatedRule r) { return r == AnnotatedRule::GsIntro || r == AnnotatedRule::GsCancel; }

/// The plain rule a real annotated rule mirrors.
inline Rule plain_rule(AnnotatedRule r) {
  switch (r) {
  case AnnotatedRule::RaLoop: return Rule::StLoop;
  case AnnotatedRule::RaFork: return Rule::StFork;
  case AnnotatedRule::RaSeq: return Rule::StSeq;
  case AnnotatedRule::RaExit: return Rule::TpExit;
  case AnnotatedRule::RaThreadTerm: return Rule::TpThreadTerm;
  default: throw std::invalid_argument("ghost steps have no plain counterpart");
  }
}

inline AnnotatedRule annotated_rule(Rule r) {
  switch (r) {
  case Rule::StLoop: return AnnotatedRule::RaLoop;
  case Rule::StFork: return AnnotatedRule::RaFork;
  case Rule::StSeq: return AnnotatedRule::RaSeq;
  case Rule::TpExit: return AnnotatedRule::RaExit;
  case Rule::TpThreadTerm: return AnnotatedRule::RaThreadTerm;
  }
  return AnnotatedRule::RaLoop;
}

struct AnnotatedStep {
  ThreadId tid = 0;
  AnnotatedRule kind = AnnotatedRule::RaLoop;
  friend bool operator==(const AnnotatedStep&, const AnnotatedStep&) = default;
};

inline AnnotatedPool annotate_pool(const ThreadPool& pool, ThreadBundle bundle) {
  AnnotatedPool r;
  for (const auto& [tid, k] : pool) r.emplace(tid, AnnotatedThread{bundle, k});
  return r;
}

inline ThreadPool erase_bundles(const AnnotatedPool& pool) {
  ThreadPool p;
  for (const auto& [tid, t] : pool) p.emplace(tid, t.cont);
  return p;
}

/// Σ obligations == Σ credits over all threads.
inline bool check_balance(const AnnotatedPool& pool) {
  std::uint64_t obligations = 0, credits = 0;
  for (const auto& entry : pool) {
    obligations += entry.second.bundle.obligations;
    credits += entry.second.bundle.credits;
  }
  return obligations == credits;
}

// ---------------------------------------------------------------------------
// Steps

class CancelUnderflow : public std::runtime_error {
public:
  explicit CancelUnderflow(ThreadId tid)
      : std::runtime_error("thread " + std::to_string(tid) + " has no obligation-credit pair to cancel") {}
};

enum class GhostKind { Intro, Cancel };

inline AnnotatedPool ghost_step(AnnotatedPool pool, ThreadId tid, GhostKind kind) {
  auto it = pool.find(tid);
  if (it == pool.end()) throw UnknownThread(tid);
  ThreadBundle& b = it->second.bundle;
  if (kind == GhostKind::Intro) {
    ++b.obligations;
    ++b.credits;
  } else {
    if (b.obligations == 0 || b.credits == 0) throw CancelUnderflow(tid);
    --b.obligations;
    --b.credits;
  }
  return pool;
}

enum class StuckReason { LoopNeedsCredit, LoopHoldsObligation, TermHoldsObligation };

inline const char* reason_name(StuckReason r) {
  switch (r) {
  case StuckReason::LoopNeedsCredit: return "LoopNeedsCredit";
  case StuckReason::LoopHoldsObligation: return "LoopHoldsObligation";
  case StuckReason::TermHoldsObligation: return "TermHoldsObligation";
  }
  return "?";
}

struct Stuck {
  StuckReason reason;
};

struct RealStep {
  AnnotatedPool pool;
  AnnotatedStep step;
};

class InvalidSplit : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// One non-ghost step of `tid`. A fork hands `child` to the new thread and
/// keeps the rest; `child` is ignored for other steps.
inline std::variant<RealStep, Stuck> real_step(const AnnotatedPool& pool, ThreadId tid,
                                               std::optional<ThreadBundle> child = std::nullopt) {
  auto it = pool.find(tid);
  if (it == pool.end()) throw UnknownThread(tid);
  const AnnotatedThread& th = it->second;

  if (th.cont.is_done()) {
    if (th.bundle.obligations != 0) return Stuck{StuckReason::TermHoldsObligation};
    AnnotatedPool next = pool;
    next.erase(tid);
    return RealStep{std::move(next), {tid, AnnotatedRule::RaThreadTerm}};
  }

  switch (th.cont.head().kind()) {
  case Command::Kind::Exit:
    return RealStep{AnnotatedPool{}, {tid, AnnotatedRule::RaExit}};
  case Command::Kind::LoopSkip:
    if (th.bundle.obligations != 0) return Stuck{StuckReason::LoopHoldsObligation};
    if (th.bundle.credits == 0) return Stuck{StuckReason::LoopNeedsCredit};
    return RealStep{pool, {tid, AnnotatedRule::RaLoop}};
  case Command::Kind::Fork: {
    if (!child) throw InvalidSplit("fork step of thread " + std::to_string(tid) + " needs a resource split");
    if (child->obligations > th.bundle.obligations || child->credits > th.bundle.credits)
      throw InvalidSplit("split " + render(*child) + " exceeds bundle " + render(th.bundle) + " of thread " +
                         std::to_string(tid));
    AnnotatedPool next = pool;
    const ThreadId fresh = fresh_id(pool);
    AnnotatedThread& parent = next.at(tid);
    parent.bundle = {th.bundle.obligations - child->obligations, th.bundle.credits - child->credits};
    parent.cont = th.cont.tail();
    next.emplace(fresh, AnnotatedThread{*child, to_continuation(th.cont.head().body())});
    return RealStep{std::move(next), {tid, AnnotatedRule::RaFork}};
  }
  case Command::Kind::Seq: {
    AnnotatedPool next = pool;
    const Command& head = th.cont.head();
    next.at(tid).cont = Continuation::cons(head.first(), Continuation::cons(head.second(), th.cont.tail()));
    return RealStep{std::move(next), {tid, AnnotatedRule::RaSeq}};
  }
  }
  throw std::logic_error("real_step: unreachable");
}

// ---------------------------------------------------------------------------
// Annotated traces

struct AnnotatedEntry {
  AnnotatedPool before;
  AnnotatedStep step;
  std::optional<ThreadBundle> split; // bundle handed to a forked thread
};

struct AnnotatedTrace {
  std::vector<AnnotatedEntry> steps;
  AnnotatedPool final_pool;

  std::size_t size() const { return steps.size(); }
  const AnnotatedPool& after(std::size_t i) const {
    return i + 1 < steps.size() ? steps[i + 1].before : final_pool;
  }
};

inline std::string render_pool(const AnnotatedPool& pool) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (const auto& [tid, t] : pool) {
    if (!first) os << ',';
    first = false;
    os << tid << ':' << render(t.bundle) << ' ';
    pretty_to(os, t.cont);
  }
  os << '}';
  return os.str();
}

/// Plain trace format with each thread's bundle rendered `(<n>|<c>)`.
inline std::string serialize(const AnnotatedTrace& trace) {
  std::ostringstream os;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const AnnotatedEntry& e = trace.steps[i];
    os << i << '\t' << e.step.tid << '\t' << rule_name(e.step.kind) << '\t' << render_pool(e.before) << '\n';
  }
  return os.str();
}

/// Drops ghost steps and bundles.
inline PlainTrace project(const AnnotatedTrace& trace) {
  PlainTrace plain;
  for (const AnnotatedEntry& e : trace.steps)
    if (!is_ghost(e.step.kind)) plain.steps.push_back({erase_bundles(e.before), {e.step.tid, plain_rule(e.step.kind)}});
  plain.final_pool = erase_bundles(trace.final_pool);
  return plain;
}

// ---------------------------------------------------------------------------
// Scheduled runs

struct StepRequest {
  ThreadId tid = 0;
  AnnotatedRule kind = AnnotatedRule::RaLoop;
  std::optional<ThreadBundle> child; // for forks
};

struct AnnotatedTerminated {
  std::size_t steps;
};
struct AnnotatedAbruptExit {
  std::size_t steps;
};
struct AnnotatedStuck {
  std::size_t step_index;
  StuckReason reason;
};
struct AnnotatedFuelExhausted {};

using AnnotatedOutcome =
    std::variant<AnnotatedTerminated, AnnotatedAbruptExit, AnnotatedStuck, AnnotatedFuelExhausted>;

inline std::string describe(const AnnotatedOutcome& o) {
  if (const auto* t = std::get_if<AnnotatedTerminated>(&o)) return "Terminated after " + std::to_string(t->steps) + " steps";
  if (const auto* t = std::get_if<AnnotatedAbruptExit>(&o)) return "AbruptExit after " + std::to_string(t->steps) + " steps";
  if (const auto* s = std::get_if<AnnotatedStuck>(&o))
    return std::string("Stuck(") + reason_name(s->reason) + ") at step " + std::to_string(s->step_index);
  return "FuelExhausted";
}

struct AnnotatedRunResult {
  AnnotatedOutcome outcome;
  AnnotatedTrace trace;
};

/// Executes the requested steps in order. A real request must name the rule
/// the thread's next step actually uses; otherwise std::invalid_argument.
inline AnnotatedRunResult run_annotated(AnnotatedPool pool, const std::vector<StepRequest>& schedule,
                                        std::size_t fuel) {
  AnnotatedTrace trace;
  bool exited = false;
  std::optional<AnnotatedOutcome> stop;
  for (const StepRequest& req : schedule) {
    if (pool.empty() || trace.steps.size() >= fuel) break;
    if (!pool.count(req.tid)) throw UnknownThread(req.tid);
    if (is_ghost(req.kind)) {
      AnnotatedPool next = ghost_step(pool, req.tid, req.kind == AnnotatedRule::GsIntro ? GhostKind::Intro : GhostKind::Cancel);
      trace.steps.push_back({std::move(pool), {req.tid, req.kind}, std::nullopt});
      pool = std::move(next);
      continue;
    }
    auto r = real_step(pool, req.tid, req.child);
    if (auto* s = std::get_if<Stuck>(&r)) {
      stop = AnnotatedStuck{trace.steps.size(), s->reason};
      break;
    }
    RealStep& st = std::get<RealStep>(r);
    if (st.step.kind != req.kind)
      throw std::invalid_argument(std::string("schedule asks for ") + rule_name(req.kind) + " but thread " +
                                  std::to_string(req.tid) + " performs " + rule_name(st.step.kind));
    exited = st.step.kind == AnnotatedRule::RaExit;
    const bool forked = st.step.kind == AnnotatedRule::RaFork;
    trace.steps.push_back({std::move(pool), st.step, forked ? req.child : std::nullopt});
    pool = std::move(st.pool);
  }
  trace.final_pool = pool;
  if (stop) return {*stop, std::move(trace)};
  const std::size_t n = trace.steps.size();
  if (!pool.empty()) return {AnnotatedFuelExhausted{}, std::move(trace)};
  if (exited) return {AnnotatedAbruptExit{n}, std::move(trace)};
  return {AnnotatedTerminated{n}, std::move(trace)};
}

// ---------------------------------------------------------------------------
// Proof-guided annotation
//
// A proof tree is flattened into a per-thread script: view-shift targets
// interleaved with the atoms the thread executes. Before each real step the
// thread runs the ghost steps that move its chunk to the next target; a fork
// hands the child exactly the precondition its subproof starts from.

class AnnotationFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

struct ScriptItem;
using Script = std::vector<ScriptItem>;

struct ScriptItem {
  enum class Kind { Shift, Exit, Loop, Fork };
  Kind kind;
  NormalizedAssertion target;               // Shift
  std::shared_ptr<const Script> child;      // Fork
  ThreadBundle child_bundle;                // Fork
};

inline NormalizedAssertion add_credits(NormalizedAssertion n, Nat k) {
  if (!n.bottom) n.credits += k;
  return n;
}

inline void compile(const ProofTree& t, Nat framed, Script& out) {
  switch (t.rule) {
  case ProofRule::ViewShift:
    out.push_back({ScriptItem::Kind::Shift, add_credits(normalize(t.premises[0].conclusion.pre), framed), {}, {}});
    compile(t.premises[0], framed, out);
    out.push_back({ScriptItem::Kind::Shift, add_credits(normalize(t.conclusion.post), framed), {}, {}});
    break;
  case ProofRule::Frame:
    compile(t.premises[0], framed + normalize(std::get<FrameData>(t.data).frame).credits, out);
    break;
  case ProofRule::Seq:
    compile(t.premises[0], framed, out);
    compile(t.premises[1], framed, out);
    break;
  case ProofRule::Exit:
    out.push_back({ScriptItem::Kind::Exit, {}, {}, {}});
    break;
  case ProofRule::Loop:
    out.push_back({ScriptItem::Kind::Loop, {}, {}, {}});
    break;
  case ProofRule::Fork: {
    auto child = std::make_shared<Script>();
    compile(t.premises[0], 0, *child);
    const NormalizedAssertion pre = normalize(t.premises[0].conclusion.pre);
    if (!pre.is_single()) throw AnnotationFailure("fork premise does not start from obs(n) * credit^k");
    out.push_back({ScriptItem::Kind::Fork, {}, std::move(child), {pre.obs[0], pre.credits}});
    break;
  }
  }
}

struct Cursor {
  std::shared_ptr<const Script> script;
  std::size_t pos = 0;
};

class Annotator {
public:
  Annotator(AnnotatedPool initial, std::map<ThreadId, Cursor> cursors)
      : pool_(std::move(initial)), cursors_(std::move(cursors)) {}

  void real(const TraceEntry& plain) {
    const ThreadId tid = plain.label.tid;
    if (erase_bundles(pool_) != plain.before)
      throw AnnotationFailure("plain trace diverges from the annotated run at step " + std::to_string(real_steps_));
    auto cur = cursors_.find(tid);
    if (cur == cursors_.end()) throw AnnotationFailure("no script for thread " + std::to_string(tid));
    Cursor& c = cur->second;
    const Script& script = *c.script;

    // Ghost steps for every view shift ahead of the next atom.
    while (c.pos < script.size() && script[c.pos].kind == ScriptItem::Kind::Shift) {
      reach(tid, script[c.pos].target);
      ++c.pos;
    }

    std::optional<ThreadBundle> child;
    std::shared_ptr<const Script> child_script;
    switch (plain.label.rule) {
    case Rule::TpThreadTerm:
      if (c.pos != script.size()) throw AnnotationFailure("thread " + std::to_string(tid) + " ends before its proof");
      break;
    case Rule::StSeq:
      break;
    case Rule::TpExit:
      expect(c, ScriptItem::Kind::Exit, tid);
      ++c.pos;
      break;
    case Rule::StLoop:
      expect(c, ScriptItem::Kind::Loop, tid); // the loop atom stays current
      break;
    case Rule::StFork:
      expect(c, ScriptItem::Kind::Fork, tid);
      child = script[c.pos].child_bundle;
      child_script = script[c.pos].child;
      ++c.pos;
      break;
    }

    const ThreadId fresh = fresh_id(pool_);
    auto r = real_step(pool_, tid, child);
    if (const auto* s = std::get_if<Stuck>(&r))
      throw AnnotationFailure(std::string("annotated step gets stuck: ") + reason_name(s->reason));
    RealStep& st = std::get<RealStep>(r);
    if (plain_rule(st.step.kind) != plain.label.rule) throw AnnotationFailure("rule mismatch with plain trace");
    trace_.steps.push_back({std::move(pool_), st.step, child});
    pool_ = std::move(st.pool);
    ++real_steps_;
    if (st.step.kind == AnnotatedRule::RaExit) cursors_.clear();
    if (st.step.kind == AnnotatedRule::RaThreadTerm) cursors_.erase(tid);
    if (child_script) cursors_[fresh] = Cursor{child_script, 0};
  }

  AnnotatedTrace finish() && {
    trace_.final_pool = pool_;
    return std::move(trace_);
  }

private:
  void expect(const Cursor& c, ScriptItem::Kind kind, ThreadId tid) const {
    if (c.pos >= c.script->size() || (*c.script)[c.pos].kind != kind)
      throw AnnotationFailure("proof of thread " + std::to_string(tid) + " does not match its next step");
  }

  void ghost(ThreadId tid, AnnotatedRule kind) {
    AnnotatedPool next = ghost_step(pool_, tid, kind == AnnotatedRule::GsIntro ? GhostKind::Intro : GhostKind::Cancel);
    trace_.steps.push_back({std::move(pool_), {tid, kind}, std::nullopt});
    pool_ = std::move(next);
  }

  // Moves the thread's chunk to the target's obligation count. Credits left
  // over beyond the target are kept; the assertion just forgets them.
  void reach(ThreadId tid, const NormalizedAssertion& target) {
    if (target.bottom) throw AnnotationFailure("thread " + std::to_string(tid) + " runs past a false postcondition");
    if (target.obs.size() > 1) throw AnnotationFailure("target holds more than one obligations chunk");
    if (!target.obs.empty()) {
      const Nat want = target.obs[0];
      while (pool_.at(tid).bundle.obligations < want) ghost(tid, AnnotatedRule::GsIntro);
      while (pool_.at(tid).bundle.obligations > want) {
        if (pool_.at(tid).bundle.credits == 0)
          throw AnnotationFailure("thread " + std::to_string(tid) + " cannot cancel towards " + to_string(target));
        ghost(tid, AnnotatedRule::GsCancel);
      }
    }
    if (pool_.at(tid).bundle.credits < target.credits)
      throw AnnotationFailure("thread " + std::to_string(tid) + " lacks credits for " + to_string(target));
  }

  AnnotatedPool pool_;
  std::map<ThreadId, Cursor> cursors_;
  AnnotatedTrace trace_;
  std::size_t real_steps_ = 0;
};

} // namespace detail

/// Lifts a plain run of {θ0 ↦ c; done} to an annotated run guided by a
/// checked proof of {obs(n) * credit^k} c {obs(0)}. The result projects back
/// onto `plain` step for step.
inline AnnotatedTrace annotate(const Command& c, const ProofTree& proof, const PlainTrace& plain) {
  if (auto v = check_proof(proof).violation)
    throw AnnotationFailure("proof rejected at " + v->where() + ": " + v->reason);
  if (!detail::same(proof.conclusion.cmd, c)) throw AnnotationFailure("proof is about a different command");
  const NormalizedAssertion pre = normalize(proof.conclusion.pre);
  if (!pre.is_single()) throw AnnotationFailure("proof precondition must be obs(n) * credit^k");
  if (!detail::same(proof.conclusion.post, Assertion::obs(0)))
    throw AnnotationFailure("proof postcondition must be obs(0)");

  const ThreadPool start = plain.steps.empty() ? plain.final_pool : plain.steps.front().before;
  if (start.size() != 1 || !(start.begin()->second == to_continuation(c)))
    throw AnnotationFailure("plain trace does not start from a single thread running the command");
  const ThreadId root = start.begin()->first;

  auto script = std::make_shared<detail::Script>();
  detail::compile(proof, 0, *script);
  detail::Annotator annotator(annotate_pool(start, {pre.obs[0], pre.credits}), {{root, detail::Cursor{script, 0}}});
  for (const TraceEntry& e : plain.steps) annotator.real(e);
  return std::move(annotator).finish();
}

} // namespace obcred
