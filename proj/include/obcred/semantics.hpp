#pragma once

// Plain small-step semantics over thread pools.
//
// Single-thread rules: a `loop skip` head steps to itself; `fork { b }` steps
// to its tail and spawns `b; done`; a Seq head is re-associated into the
// continuation. Pool rules lift those, clear the whole pool on `exit`, and
// remove a thread that reached `done`.

#include "obcred/lang.hpp"

#include <algorithm>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

namespace obcred {

enum class Rule { StLoop, StFork, StSeq, TpExit, TpThreadTerm };

inline const char* rule_name(Rule r) {
  switch (r) {
  case Rule::StLoop: return "ST-Loop";
  case Rule::StFork: return "ST-Fork";
  case Rule::StSeq: return "ST-Seq-lift";
  case Rule::TpExit: return "TP-Exit";
  case Rule::TpThreadTerm: return "TP-ThreadTerm";
  }
  return "?";
}

struct StepLabel {
  ThreadId tid = 0;
  Rule rule = Rule::StLoop;
  friend bool operator==(const StepLabel&, const StepLabel&) = default;
};

struct ThreadStep {
  Continuation next;
  std::optional<Continuation> forked;
  Rule rule;
};

/// Single-thread reduction. nullopt for `done` and exit-headed continuations,
/// which only step at pool level.
inline std::optional<ThreadStep> step_thread(const Continuation& k) {
  if (k.is_done()) return std::nullopt;
  const Command& head = k.head();
  switch (head.kind()) {
  case Command::Kind::Exit:
    return std::nullopt;
  case Command::Kind::LoopSkip:
    return ThreadStep{k, std::nullopt, Rule::StLoop};
  case Command::Kind::Fork:
    return ThreadStep{k.tail(), to_continuation(head.body()), Rule::StFork};
  case Command::Kind::Seq:
    return ThreadStep{Continuation::cons(head.first(), Continuation::cons(head.second(), k.tail())),
                      std::nullopt, Rule::StSeq};
  }
  return std::nullopt;
}

class UnknownThread : public std::out_of_range {
public:
  explicit UnknownThread(ThreadId tid)
      : std::out_of_range("thread " + std::to_string(tid) + " is not in the pool"), tid_(tid) {}
  ThreadId tid() const { return tid_; }

private:
  ThreadId tid_;
};

struct PoolStep {
  ThreadPool pool;
  StepLabel label;
};

/// Total on dom(pool); throws UnknownThread otherwise.
inline PoolStep step_pool(const ThreadPool& pool, ThreadId tid) {
  auto it = pool.find(tid);
  if (it == pool.end()) throw UnknownThread(tid);
  const Continuation& k = it->second;
  if (k.is_done()) {
    ThreadPool next = pool;
    next.erase(tid);
    return {std::move(next), {tid, Rule::TpThreadTerm}};
  }
  if (k.head().kind() == Command::Kind::Exit) return {ThreadPool{}, {tid, Rule::TpExit}};

  ThreadStep st = *step_thread(k);
  ThreadPool next = pool;
  if (st.forked) next.emplace(fresh_id(pool), std::move(*st.forked));
  next[tid] = std::move(st.next);
  return {std::move(next), {tid, st.rule}};
}

// ---------------------------------------------------------------------------
// Traces

struct TraceEntry {
  ThreadPool before;
  StepLabel label;
};

struct PlainTrace {
  std::vector<TraceEntry> steps;
  ThreadPool final_pool;

  std::size_t size() const { return steps.size(); }
  /// Pool after step i.
  const ThreadPool& after(std::size_t i) const {
    return i + 1 < steps.size() ? steps[i + 1].before : final_pool;
  }
};

/// One line per step: index, tid, rule, pool before the step (tab separated).
inline std::string serialize(const PlainTrace& trace) {
  std::ostringstream os;
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const TraceEntry& e = trace.steps[i];
    os << i << '\t' << e.label.tid << '\t' << rule_name(e.label.rule) << '\t'
       << render_pool(e.before) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Schedulers

/// Picks the next thread to step. Stateful, but its state is a function of
/// the picks made so far; randomness only enters through an explicit seed.
class Scheduler {
public:
  virtual ~Scheduler() = default;
  /// `pool` is non-empty.
  virtual ThreadId next(const ThreadPool& pool) = 0;
  virtual std::string name() const = 0;
};

class RoundRobin final : public Scheduler {
public:
  explicit RoundRobin(std::size_t offset = 0) : offset_(offset) {}

  ThreadId next(const ThreadPool& pool) override {
    if (!last_) {
      auto it = pool.begin();
      std::advance(it, static_cast<std::ptrdiff_t>(offset_ % pool.size()));
      last_ = it->first;
      return *last_;
    }
    auto it = pool.upper_bound(*last_);
    if (it == pool.end()) it = pool.begin();
    last_ = it->first;
    return *last_;
  }

  std::string name() const override {
    return offset_ == 0 ? "round-robin" : "rotated-round-robin(" + std::to_string(offset_) + ")";
  }

private:
  std::size_t offset_;
  std::optional<ThreadId> last_;
};

/// Uniformly random picks, overridden by earliest-deadline-first whenever a
/// random pick would make some live thread miss its window.
class RandomFair final : public Scheduler {
public:
  RandomFair(std::uint64_t seed, std::size_t window)
      : seed_(seed), window_(std::max<std::size_t>(window, 1)), rng_(seed) {}

  ThreadId next(const ThreadPool& pool) override {
    // Threads seen for the first time become due `window` steps from now.
    for (auto it = deadline_.begin(); it != deadline_.end();) {
      it = pool.count(it->first) ? std::next(it) : deadline_.erase(it);
    }
    for (const auto& entry : pool) deadline_.try_emplace(entry.first, now_ + window_);

    std::vector<ThreadId> ids;
    ids.reserve(pool.size());
    for (const auto& entry : pool) ids.push_back(entry.first);

    std::uniform_int_distribution<std::size_t> dist(0, ids.size() - 1);
    ThreadId pick = ids[dist(rng_)];
    if (!feasible_without(pick)) pick = earliest_deadline();

    deadline_[pick] = now_ + 1 + window_;
    ++now_;
    return pick;
  }

  std::string name() const override {
    return "random-fair(seed=" + std::to_string(seed_) + ",window=" + std::to_string(window_) + ")";
  }

private:
  // After serving `served` at step now_, can the rest be served one per step
  // in deadline order with each step index strictly below its deadline?
  bool feasible_without(ThreadId served) const {
    std::vector<std::size_t> due;
    for (const auto& [tid, d] : deadline_)
      if (tid != served) due.push_back(d);
    std::sort(due.begin(), due.end());
    for (std::size_t i = 0; i < due.size(); ++i)
      if (now_ + 1 + i >= due[i]) return false;
    return true;
  }

  ThreadId earliest_deadline() const {
    auto best = deadline_.begin();
    for (auto it = deadline_.begin(); it != deadline_.end(); ++it)
      if (it->second < best->second) best = it;
    return best->first;
  }

  std::uint64_t seed_;
  std::size_t window_;
  std::mt19937_64 rng_;
  std::size_t now_ = 0;
  std::map<ThreadId, std::size_t> deadline_;
};

/// Replays a fixed list of thread ids, then falls back to round-robin.
class Replay final : public Scheduler {
public:
  explicit Replay(std::vector<ThreadId> picks) : picks_(std::move(picks)) {}

  ThreadId next(const ThreadPool& pool) override {
    if (pos_ < picks_.size()) {
      ThreadId t = picks_[pos_++];
      fallback_last_ = t;
      return t;
    }
    auto it = fallback_last_ ? pool.upper_bound(*fallback_last_) : pool.begin();
    if (it == pool.end()) it = pool.begin();
    fallback_last_ = it->first;
    return it->first;
  }

  std::string name() const override { return "replay"; }

private:
  std::vector<ThreadId> picks_;
  std::size_t pos_ = 0;
  std::optional<ThreadId> fallback_last_;
};

inline std::unique_ptr<Scheduler> round_robin() { return std::make_unique<RoundRobin>(0); }
inline std::unique_ptr<Scheduler> rotated_round_robin(std::size_t offset) {
  return std::make_unique<RoundRobin>(offset);
}
inline std::unique_ptr<Scheduler> random_fair(std::uint64_t seed, std::size_t window) {
  return std::make_unique<RandomFair>(seed, window);
}
inline std::unique_ptr<Scheduler> replay(std::vector<ThreadId> picks) {
  return std::make_unique<Replay>(std::move(picks));
}

// ---------------------------------------------------------------------------
// Runs

struct Terminated {
  std::size_t steps;
};
struct AbruptExit {
  std::size_t steps;
};
struct FuelExhausted {
  ThreadPool last_pool;
};
using RunOutcome = std::variant<Terminated, AbruptExit, FuelExhausted>;

inline std::string describe(const RunOutcome& outcome) {
  struct {
    std::string operator()(const Terminated& t) const {
      return "Terminated after " + std::to_string(t.steps) + " steps";
    }
    std::string operator()(const AbruptExit& t) const {
      return "AbruptExit after " + std::to_string(t.steps) + " steps";
    }
    std::string operator()(const FuelExhausted& f) const {
      return "FuelExhausted in " + render_pool(f.last_pool);
    }
  } visitor;
  return std::visit(visitor, outcome);
}

struct RunResult {
  RunOutcome outcome;
  PlainTrace trace;
};

inline RunResult run(ThreadPool pool, Scheduler& scheduler, std::size_t fuel) {
  PlainTrace trace;
  bool exited = false;
  while (!pool.empty() && trace.steps.size() < fuel) {
    const ThreadId tid = scheduler.next(pool);
    PoolStep st = step_pool(pool, tid);
    exited = st.label.rule == Rule::TpExit;
    trace.steps.push_back({std::move(pool), st.label});
    pool = std::move(st.pool);
  }
  trace.final_pool = pool;
  const std::size_t n = trace.steps.size();
  if (!pool.empty()) return {FuelExhausted{std::move(pool)}, std::move(trace)};
  if (exited) return {AbruptExit{n}, std::move(trace)};
  return {Terminated{n}, std::move(trace)};
}

/// Every thread alive before step k is stepped, or gone, within steps
/// [k, k + window). Windows reaching past the end of the trace are only
/// judged by what the trace shows.
inline bool is_fair_prefix(const PlainTrace& trace, std::size_t window) {
  if (window == 0) throw std::invalid_argument("window must be >= 1");
  const std::size_t n = trace.steps.size();
  for (std::size_t k = 0; k < n; ++k) {
    if (k + window > n) break;
    for (const auto& entry : trace.steps[k].before) {
      const ThreadId tid = entry.first;
      bool served = false;
      for (std::size_t j = k; j < k + window && !served; ++j)
        served = trace.steps[j].label.tid == tid || !trace.after(j).count(tid);
      if (!served) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Divergence oracle

struct OracleResult {
  bool diverges = false;
  std::size_t reachable_states = 0;
  std::size_t max_threads = 0;

  /// Fuel large enough for any fair run of a non-diverging program to finish.
  std::size_t sufficient_fuel() const {
    return std::max<std::size_t>(reachable_states, 1) * std::max<std::size_t>(max_threads, 1) * 4;
  }
};

/// Exhaustive search of the pool states reachable from {first ↦ c; done}.
/// A fair infinite run exists iff some reachable non-empty pool has every
/// thread at a `loop skip` head: from such a state all threads can self-loop
/// forever, and every other step strictly shrinks the remaining program.
inline OracleResult explore(const Command& c, ThreadId first = 0) {
  std::unordered_map<Continuation, std::size_t> interned;
  auto intern = [&interned](const Continuation& k) {
    return interned.try_emplace(k, interned.size()).first->second;
  };
  using Key = std::vector<std::pair<ThreadId, std::size_t>>;
  struct KeyHash {
    std::size_t operator()(const Key& key) const {
      std::size_t h = key.size();
      for (const auto& [t, id] : key) h ^= (t * 31 + id) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
      return h;
    }
  };
  auto key_of = [&intern](const ThreadPool& pool) {
    Key key;
    key.reserve(pool.size());
    for (const auto& [t, k] : pool) key.emplace_back(t, intern(k));
    return key;
  };

  OracleResult result;
  std::unordered_set<Key, KeyHash> seen;
  std::deque<ThreadPool> frontier;
  ThreadPool start = initial_pool(c, first);
  seen.insert(key_of(start));
  frontier.push_back(std::move(start));

  while (!frontier.empty()) {
    ThreadPool pool = std::move(frontier.front());
    frontier.pop_front();
    result.max_threads = std::max(result.max_threads, pool.size());
    if (pool.empty()) continue;

    const bool all_looping = std::all_of(pool.begin(), pool.end(), [](const auto& entry) {
      return !entry.second.is_done() && entry.second.head().kind() == Command::Kind::LoopSkip;
    });
    if (all_looping) result.diverges = true;

    for (const auto& entry : pool) {
      PoolStep st = step_pool(pool, entry.first);
      if (seen.insert(key_of(st.pool)).second) frontier.push_back(std::move(st.pool));
    }
  }
  result.reachable_states = seen.size();
  return result;
}

inline bool oracle_diverges(const Command& c) { return explore(c).diverges; }

} // namespace obcred
