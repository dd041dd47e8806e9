#pragma once

// Program order graphs over finite annotated traces.
//
// Node i is step i. Step i links to the next step of the same thread and, if
// it forked, to the first step of the new thread. Edges carry the rule of
// step i, so a loop edge leaves a loop step. Successors lying past the end of
// the trace are counted as pending.

#include "obcred/ghost.hpp"

#include <algorithm>
#include <deque>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace obcred {

struct PogNode {
  ThreadId tid = 0;
  AnnotatedRule rule = AnnotatedRule::RaLoop;
  ThreadBundle bundle; // of `tid`, before the step
  Continuation cont;
};

struct PogEdge {
  std::size_t from = 0;
  ThreadId tid = 0; // thread stepping at `to`
  AnnotatedRule rule = AnnotatedRule::RaLoop;
  std::size_t to = 0;
  friend bool operator==(const PogEdge&, const PogEdge&) = default;
};

struct ProgramOrderGraph {
  std::vector<PogNode> nodes;
  std::vector<PogEdge> edges;
  std::vector<std::vector<std::size_t>> successors;
  std::vector<std::optional<std::size_t>> predecessor;
  std::vector<std::size_t> pending; // successors beyond the trace
  bool single_thread_start = false;

  std::size_t size() const { return nodes.size(); }
};

class MalformedTrace : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class PreconditionError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

inline ProgramOrderGraph build_pog(const AnnotatedTrace& trace) {
  ProgramOrderGraph g;
  const std::size_t n = trace.size();
  g.nodes.reserve(n);
  g.successors.assign(n, {});
  g.predecessor.assign(n, std::nullopt);
  g.pending.assign(n, 0);
  if (n > 0) g.single_thread_start = trace.steps[0].before.size() == 1;

  // Backwards scan; `upcoming` maps each thread to its next step. n + 1 marks
  // a successor past the end of the trace.
  std::vector<std::size_t> next_same(n, n);
  std::map<ThreadId, std::size_t> upcoming;
  std::vector<std::optional<std::size_t>> next_child(n);
  for (std::size_t i = n; i-- > 0;) {
    const AnnotatedEntry& e = trace.steps[i];
    const auto it = e.before.find(e.step.tid);
    if (it == e.before.end())
      throw MalformedTrace("step " + std::to_string(i) + " is taken by thread " + std::to_string(e.step.tid) +
                           ", which is not in the pool");
    if (i + 1 < n && !(trace.steps[i + 1].before == trace.after(i)))
      throw MalformedTrace("pool mismatch after step " + std::to_string(i));
    const AnnotatedPool& after = trace.after(i);
    if (after.count(e.step.tid)) {
      auto u = upcoming.find(e.step.tid);
      next_same[i] = u == upcoming.end() ? n + 1 : u->second;
    }
    for (const auto& entry : after) {
      if (e.before.count(entry.first)) continue;
      auto u = upcoming.find(entry.first);
      next_child[i] = u == upcoming.end() ? n + 1 : u->second;
      break;
    }
    upcoming[e.step.tid] = i;
  }

  for (std::size_t i = 0; i < n; ++i) {
    const AnnotatedEntry& e = trace.steps[i];
    g.nodes.push_back({e.step.tid, e.step.kind, e.before.at(e.step.tid).bundle, e.before.at(e.step.tid).cont});
  }
  auto link = [&](std::size_t i, std::size_t j) {
    if (j == n + 1) {
      ++g.pending[i];
      return;
    }
    if (g.predecessor[j]) throw MalformedTrace("step " + std::to_string(j) + " has two predecessors");
    g.edges.push_back({i, g.nodes[j].tid, g.nodes[i].rule, j});
    g.successors[i].push_back(j);
    g.predecessor[j] = i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (next_same[i] != n) link(i, next_same[i]);
    if (next_child[i]) link(i, *next_child[i]);
  }
  return g;
}

inline bool is_loop_edge(const PogEdge& e) { return e.rule == AnnotatedRule::RaLoop; }

/// Contains the root and the predecessor of every member.
inline bool downward_closed(const std::set<std::size_t>& prefix, const ProgramOrderGraph& g) {
  if (prefix.empty()) return true;
  if (!prefix.count(0)) return false;
  for (std::size_t v : prefix) {
    if (v >= g.size()) return false;
    if (v != 0 && (!g.predecessor[v] || !prefix.count(*g.predecessor[v]))) return false;
  }
  return true;
}

/// Every member's siblings (the successors of its predecessor) are members.
/// A pending sibling can never be a member.
inline bool sibling_closed(const std::set<std::size_t>& prefix, const ProgramOrderGraph& g) {
  for (std::size_t v : prefix) {
    if (v >= g.size()) return false;
    if (!g.predecessor[v]) continue;
    const std::size_t p = *g.predecessor[v];
    if (g.pending[p] > 0) return false;
    for (std::size_t s : g.successors[p])
      if (!prefix.count(s)) return false;
  }
  return true;
}

inline bool loop_edge_free(const std::set<std::size_t>& prefix, const ProgramOrderGraph& g) {
  for (const PogEdge& e : g.edges)
    if (is_loop_edge(e) && prefix.count(e.from) && prefix.count(e.to)) return false;
  return true;
}

/// Whether all successors of v may join a loop-free sibling-closed prefix.
inline bool expandable(std::size_t v, const ProgramOrderGraph& g) {
  return g.nodes[v].rule != AnnotatedRule::RaLoop && g.pending[v] == 0 && !g.successors[v].empty();
}

inline std::set<std::size_t> max_loopfree_sc_prefix(const ProgramOrderGraph& g) {
  std::set<std::size_t> prefix;
  if (g.size() == 0) return prefix;
  std::deque<std::size_t> todo{0};
  prefix.insert(0);
  while (!todo.empty()) {
    const std::size_t v = todo.front();
    todo.pop_front();
    if (!expandable(v, g)) continue;
    for (std::size_t s : g.successors[v]) {
      prefix.insert(s);
      todo.push_back(s);
    }
  }
  return prefix;
}

/// A random downward- and sibling-closed loop-free prefix: starting from the
/// root, expands random expandable leaves, stopping with probability
/// 1/(frontier + 1) at each round.
template <class Rng>
std::set<std::size_t> random_loopfree_sc_prefix(const ProgramOrderGraph& g, Rng& rng) {
  std::set<std::size_t> prefix;
  if (g.size() == 0) return prefix;
  prefix.insert(0);
  std::vector<std::size_t> frontier;
  if (expandable(0, g)) frontier.push_back(0);
  while (!frontier.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, frontier.size());
    const std::size_t k = pick(rng);
    if (k == frontier.size()) break;
    const std::size_t v = frontier[k];
    frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t s : g.successors[v]) {
      prefix.insert(s);
      if (expandable(s, g)) frontier.push_back(s);
    }
  }
  return prefix;
}

struct LeafData {
  std::size_t node;
  ThreadId tid;
  Nat obligations;
  Nat credits;
  Continuation cont;
};

struct PrefixAnalysis {
  std::vector<LeafData> leaves;
  std::uint64_t sum_obligations = 0;
  std::uint64_t sum_credits = 0;
  bool equal() const { return sum_obligations == sum_credits; }
};

inline std::vector<std::size_t> leaves_of(const std::set<std::size_t>& prefix, const ProgramOrderGraph& g) {
  std::vector<std::size_t> out;
  for (std::size_t v : prefix) {
    const auto& succ = g.successors[v];
    if (std::none_of(succ.begin(), succ.end(), [&](std::size_t s) { return prefix.count(s) > 0; })) out.push_back(v);
  }
  return out;
}

/// Sums the bundles held by the leaf-stepping threads at their leaf steps.
/// Requires a non-empty downward- and sibling-closed prefix of a run that
/// starts from one thread with a balanced bundle.
inline PrefixAnalysis check_leaf_balance(const ProgramOrderGraph& g, const std::set<std::size_t>& prefix) {
  if (prefix.empty()) throw PreconditionError("empty prefix");
  if (!downward_closed(prefix, g)) throw PreconditionError("prefix is not downward closed");
  if (!sibling_closed(prefix, g)) throw PreconditionError("prefix is not sibling closed");
  if (!g.single_thread_start) throw PreconditionError("run does not start from a single thread");
  if (g.nodes[0].bundle.obligations != g.nodes[0].bundle.credits)
    throw PreconditionError("initial bundle " + render(g.nodes[0].bundle) + " is not balanced");

  PrefixAnalysis a;
  for (std::size_t v : leaves_of(prefix, g)) {
    const PogNode& node = g.nodes[v];
    a.leaves.push_back({v, node.tid, node.bundle.obligations, node.bundle.credits, node.cont});
    a.sum_obligations += node.bundle.obligations;
    a.sum_credits += node.bundle.credits;
  }
  return a;
}

inline std::size_t depth(std::size_t v, const ProgramOrderGraph& g) {
  std::size_t d = 0;
  while (g.predecessor[v]) {
    v = *g.predecessor[v];
    ++d;
  }
  return d;
}

struct LoopLeafCheck {
  std::optional<std::size_t> loop_leaf; // shallowest loop step among the leaves
  std::optional<std::size_t> holder;    // another leaf whose chunk is >= 1
  bool holds() const { return !loop_leaf || holder.has_value(); }
};

/// In the maximal loop-free sibling-closed prefix, the shallowest loop leaf
/// must be matched by another leaf whose thread holds an obligation.
inline LoopLeafCheck check_loop_leaf(const ProgramOrderGraph& g) {
  LoopLeafCheck r;
  const std::set<std::size_t> prefix = max_loopfree_sc_prefix(g);
  const std::vector<std::size_t> leaves = leaves_of(prefix, g);
  std::size_t best = 0;
  for (std::size_t v : leaves) {
    if (g.nodes[v].rule != AnnotatedRule::RaLoop) continue;
    const std::size_t d = depth(v, g);
    if (!r.loop_leaf || d < best) {
      r.loop_leaf = v;
      best = d;
    }
  }
  if (!r.loop_leaf) return r;
  for (std::size_t v : leaves)
    if (v != *r.loop_leaf && g.nodes[v].bundle.obligations >= 1) {
      r.holder = v;
      break;
    }
  return r;
}

inline std::string to_dot(const ProgramOrderGraph& g, const std::set<std::size_t>* shade = nullptr) {
  std::ostringstream os;
  os << "digraph pog {\n  node [shape=box, fontname=\"monospace\"];\n";
  auto node_line = [&](std::size_t v, const char* indent) {
    os << indent << 'n' << v << " [label=\"" << v << ": " << g.nodes[v].tid << '/' << rule_name(g.nodes[v].rule)
       << "\"];\n";
  };
  if (shade) {
    os << "  subgraph cluster_prefix {\n    style=filled;\n    color=lightgrey;\n    label=\"prefix\";\n";
    for (std::size_t v : *shade)
      if (v < g.size()) node_line(v, "    ");
    os << "  }\n";
  }
  for (std::size_t v = 0; v < g.size(); ++v)
    if (!shade || !shade->count(v)) node_line(v, "  ");
  for (const PogEdge& e : g.edges) {
    os << "  n" << e.from << " -> n" << e.to << " [label=\"" << e.tid << ", " << rule_name(e.rule) << '"';
    if (is_loop_edge(e)) os << ", style=dashed";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

} // namespace obcred
