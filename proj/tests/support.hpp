#pragma once

// Hand-rolled generators and brute-force oracles shared by the test suites.
// Nothing here calls into the code paths it is used to check.

#include "obcred/obcred.hpp"

#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace testsupport {

using namespace obcred;

using Rng = std::mt19937_64;

inline std::size_t below(Rng& rng, std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); }

// Arbitrary (not necessarily right-associated) command with `atoms` atoms.
inline Command random_command(Rng& rng, std::size_t atoms) {
  if (atoms == 1) return below(rng, 2) ? Command::exit() : Command::loop_skip();
  switch (below(rng, 3)) {
  case 0:
    return Command::fork(random_command(rng, atoms - 1));
  default: {
    const std::size_t left = 1 + below(rng, atoms - 1);
    return Command::seq(random_command(rng, left), random_command(rng, atoms - left));
  }
  }
}

inline Command random_command(Rng& rng) { return random_command(rng, 1 + below(rng, 7)); }

inline Assertion random_assertion(Rng& rng, std::size_t size, Nat max_value) {
  if (size <= 1) {
    switch (below(rng, 8)) {
    case 0: return Assertion::tt();
    case 1: return Assertion::ff();
    case 2:
    case 3: return Assertion::credit();
    default: return Assertion::obs(static_cast<Nat>(below(rng, max_value + 1)));
    }
  }
  const std::size_t left = 1 + below(rng, size - 1);
  return Assertion::star(random_assertion(rng, left, max_value), random_assertion(rng, size - left, max_value));
}

// Atom sequence of a command, read off by structural recursion.
inline void atoms_oracle(const Command& c, std::vector<std::string>& out) {
  switch (c.kind()) {
  case Command::Kind::Seq:
    atoms_oracle(c.first(), out);
    atoms_oracle(c.second(), out);
    break;
  case Command::Kind::Exit: out.push_back("exit"); break;
  case Command::Kind::LoopSkip: out.push_back("loop skip"); break;
  case Command::Kind::Fork: {
    std::vector<std::string> body;
    atoms_oracle(c.body(), body);
    std::string s = "fork {";
    for (std::size_t i = 0; i < body.size(); ++i) s += (i ? "; " : " ") + body[i];
    out.push_back(s + " }");
    break;
  }
  }
}

inline std::vector<std::string> atoms_oracle(const Command& c) {
  std::vector<std::string> out;
  atoms_oracle(c, out);
  return out;
}

// Satisfaction by brute force: a star holds if some split of the chunk list
// (by position) and of the credits satisfies both sides.
inline bool models(const std::vector<Nat>& chunks, Nat credits, const Assertion& a) {
  switch (a.kind()) {
  case Assertion::Kind::True: return true;
  case Assertion::Kind::False: return false;
  case Assertion::Kind::Credit: return credits >= 1;
  case Assertion::Kind::Obs:
    for (Nat v : chunks)
      if (v == a.value()) return true;
    return false;
  case Assertion::Kind::Star:
    for (std::size_t mask = 0; mask < (std::size_t{1} << chunks.size()); ++mask) {
      std::vector<Nat> l, r;
      for (std::size_t i = 0; i < chunks.size(); ++i) (mask >> i & 1 ? l : r).push_back(chunks[i]);
      for (Nat c = 0; c <= credits; ++c)
        if (models(l, c, a.left()) && models(r, credits - c, a.right())) return true;
    }
    return false;
  }
  return false;
}

// Every bundle with up to `max_chunks` chunks of value <= max_value and up
// to max_credits credits.
inline void for_each_bundle(std::size_t max_chunks, Nat max_value, Nat max_credits,
                            const std::function<void(const std::vector<Nat>&, Nat)>& f) {
  std::vector<Nat> chunks;
  std::function<void(Nat)> rec = [&](Nat from) {
    for (Nat k = 0; k <= max_credits; ++k) f(chunks, k);
    if (chunks.size() == max_chunks) return;
    for (Nat v = from; v <= max_value; ++v) {
      chunks.push_back(v);
      rec(v);
      chunks.pop_back();
    }
  };
  rec(0);
}

inline bool entails_oracle(const Assertion& a, const Assertion& b, std::size_t max_chunks, Nat max_value,
                           Nat max_credits) {
  bool ok = true;
  for_each_bundle(max_chunks, max_value, max_credits, [&](const std::vector<Nat>& ch, Nat k) {
    if (ok && models(ch, k, a) && !models(ch, k, b)) ok = false;
  });
  return ok;
}

// Divergence by depth-first search over rendered pools: some reachable
// non-empty pool where every thread sits at a loop head.
inline bool diverges_oracle(const Command& c) {
  std::set<std::string> seen;
  std::vector<ThreadPool> stack{initial_pool(c)};
  while (!stack.empty()) {
    ThreadPool p = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(render_pool(p)).second) continue;
    if (p.empty()) continue;
    bool all_loop = true;
    for (const auto& [tid, k] : p)
      all_loop = all_loop && !k.is_done() && k.head().kind() == Command::Kind::LoopSkip;
    if (all_loop) return true;
    for (const auto& entry : p) stack.push_back(step_pool(p, entry.first).pool);
  }
  return false;
}

inline PlainTrace replay_run(const Command& c, std::vector<ThreadId> picks) {
  auto s = replay(picks);
  return run(initial_pool(c), *s, picks.size()).trace;
}

} // namespace testsupport
