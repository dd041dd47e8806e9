#pragma once

// Random and exhaustive program generation plus the soundness campaign:
// every verified program must not diverge, and its annotated round-robin run
// must stay balanced with balanced sibling-closed prefixes.

#include "obcred/ghost.hpp"
#include "obcred/pog.hpp"
#include "obcred/proofs.hpp"
#include "obcred/semantics.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace obcred {

struct GenConfig {
  std::size_t max_atoms = 12;
  double fork_weight = 2.0;
  double loop_weight = 1.0;
  double exit_weight = 1.0;
  std::uint64_t seed = 42;
  std::size_t count = 500;

  void validate() const {
    if (max_atoms == 0) throw std::invalid_argument("max_atoms must be >= 1");
    if (!(fork_weight > 0 && loop_weight > 0 && exit_weight > 0))
      throw std::invalid_argument("generator weights must be positive");
  }
};

namespace detail {

class Generator {
public:
  explicit Generator(const GenConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

  Command program() {
    std::uniform_int_distribution<std::size_t> size(1, cfg_.max_atoms);
    return exact(size(rng_));
  }

  // A program with exactly n atoms, fork bodies counted.
  Command exact(std::size_t n) {
    std::vector<Command> atoms;
    while (n > 0) {
      const bool fork_allowed = n >= 2;
      std::discrete_distribution<int> kind(
          {fork_allowed ? cfg_.fork_weight : 0.0, cfg_.loop_weight, cfg_.exit_weight});
      switch (kind(rng_)) {
      case 0: {
        std::uniform_int_distribution<std::size_t> body(1, n - 1);
        const std::size_t b = body(rng_);
        atoms.push_back(Command::fork(exact(b)));
        n -= b + 1;
        break;
      }
      case 1:
        atoms.push_back(Command::loop_skip());
        --n;
        break;
      default:
        atoms.push_back(Command::exit());
        --n;
        break;
      }
    }
    return seq_of(atoms);
  }

private:
  GenConfig cfg_;
  std::mt19937_64 rng_;
};

} // namespace detail

inline std::vector<Command> gen_program(const GenConfig& cfg) {
  cfg.validate();
  detail::Generator g(cfg);
  std::vector<Command> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) out.push_back(g.program());
  return out;
}

/// All normalized programs with between 1 and max_atoms atoms.
inline std::vector<Command> enumerate_programs(std::size_t max_atoms) {
  // seqs[n]: atom lists with exactly n atoms in total.
  std::vector<std::vector<std::vector<Command>>> seqs(max_atoms + 1);
  std::vector<std::vector<Command>> atoms(max_atoms + 1);
  seqs[0] = {{}};
  for (std::size_t n = 1; n <= max_atoms; ++n) {
    if (n == 1) {
      atoms[1] = {Command::exit(), Command::loop_skip()};
    } else {
      for (const auto& body : seqs[n - 1]) atoms[n].push_back(Command::fork(seq_of(body)));
    }
    for (std::size_t first = 1; first <= n; ++first)
      for (const Command& a : atoms[first])
        for (const auto& rest : seqs[n - first]) {
          std::vector<Command> s{a};
          s.insert(s.end(), rest.begin(), rest.end());
          seqs[n].push_back(std::move(s));
        }
  }
  std::vector<Command> out;
  for (std::size_t n = 1; n <= max_atoms; ++n)
    for (const auto& s : seqs[n]) out.push_back(seq_of(s));
  return out;
}

// ---------------------------------------------------------------------------
// Campaign

struct Witness {
  std::size_t index = 0;
  std::string program;
  std::string kind;
  std::string detail;
};

struct CampaignReport {
  std::size_t total = 0;
  std::size_t verified = 0;
  std::size_t rejected = 0;
  std::size_t oracle_diverges = 0;
  std::size_t soundness_violations = 0;
  std::size_t rejected_terminating = 0; // incompleteness, informational
  std::size_t annotated_traces = 0;
  std::size_t annotation_failures = 0;
  std::size_t balance_checks = 0;
  std::size_t balance_failures = 0;
  std::size_t leaf_balance_checks = 0;
  std::size_t leaf_balance_failures = 0;
  std::size_t loop_leaf_checks = 0;
  std::size_t loop_leaf_failures = 0;
  double wall_time_ms = 0;
  std::vector<Witness> witnesses;

  bool clean() const {
    return soundness_violations == 0 && annotation_failures == 0 && balance_failures == 0 && leaf_balance_failures == 0 &&
           loop_leaf_failures == 0;
  }

  CampaignReport& operator+=(const CampaignReport& o) {
    total += o.total;
    verified += o.verified;
    rejected += o.rejected;
    oracle_diverges += o.oracle_diverges;
    soundness_violations += o.soundness_violations;
    rejected_terminating += o.rejected_terminating;
    annotated_traces += o.annotated_traces;
    annotation_failures += o.annotation_failures;
    balance_checks += o.balance_checks;
    balance_failures += o.balance_failures;
    leaf_balance_checks += o.leaf_balance_checks;
    leaf_balance_failures += o.leaf_balance_failures;
    loop_leaf_checks += o.loop_leaf_checks;
    loop_leaf_failures += o.loop_leaf_failures;
    witnesses.insert(witnesses.end(), o.witnesses.begin(), o.witnesses.end());
    std::sort(witnesses.begin(), witnesses.end(),
              [](const Witness& a, const Witness& b) { return a.index < b.index; });
    return *this;
  }
};

struct CampaignConfig {
  GenConfig gen;
  std::size_t exhaustive_max_atoms = 0; // 0: no exhaustive sweep
  std::size_t prefixes_per_trace = 3;
  std::size_t threads = 1;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

} // namespace detail

/// Annotated round-robin run of a verified program, with every check the
/// campaign applies to it. Results are added to `report`.
inline void check_annotated_run(const Command& c, const ProofTree& proof, std::size_t fuel, std::uint64_t seed,
                                std::size_t prefixes, std::size_t index, CampaignReport& report) {
  auto witness = [&](const char* kind, std::string detail) {
    report.witnesses.push_back({index, pretty(c), kind, std::move(detail)});
  };
  RoundRobin rr;
  const RunResult plain = run(initial_pool(c), rr, fuel);
  AnnotatedTrace trace;
  try {
    trace = annotate(c, proof, plain.trace);
  } catch (const std::exception& e) {
    ++report.annotation_failures;
    witness("annotation", e.what());
    return;
  }
  ++report.annotated_traces;

  for (std::size_t i = 0; i <= trace.size(); ++i) {
    const AnnotatedPool& pool = i < trace.size() ? trace.steps[i].before : trace.final_pool;
    ++report.balance_checks;
    if (!check_balance(pool)) {
      ++report.balance_failures;
      witness("balance", "unbalanced pool before step " + std::to_string(i) + ": " + render_pool(pool));
      break;
    }
  }

  const ProgramOrderGraph g = build_pog(trace);
  std::mt19937_64 rng(detail::mix_seed(seed, index));
  for (std::size_t k = 0; k < prefixes; ++k) {
    const auto prefix = random_loopfree_sc_prefix(g, rng);
    ++report.leaf_balance_checks;
    try {
      const PrefixAnalysis a = check_leaf_balance(g, prefix);
      if (!a.equal()) {
        ++report.leaf_balance_failures;
        witness("leaf-balance", "leaf obligations " + std::to_string(a.sum_obligations) + " != leaf credits " +
                              std::to_string(a.sum_credits));
      }
    } catch (const PreconditionError& e) {
      ++report.leaf_balance_failures;
      witness("leaf-balance", e.what());
    }
  }

  ++report.loop_leaf_checks;
  const LoopLeafCheck ll = check_loop_leaf(g);
  if (!ll.holds()) {
    ++report.loop_leaf_failures;
    witness("loop-leaf", "no leaf holds an obligation opposite loop step " + std::to_string(*ll.loop_leaf));
  }
}

inline CampaignReport check_program(const Command& c, std::uint64_t seed, std::size_t prefixes, std::size_t index) {
  CampaignReport r;
  r.total = 1;
  const OracleResult oracle = explore(c);
  if (oracle.diverges) ++r.oracle_diverges;
  Verdict v = verify(c);
  if (auto* ok = std::get_if<Verified>(&v)) {
    ++r.verified;
    if (oracle.diverges) {
      ++r.soundness_violations;
      r.witnesses.push_back({index, pretty(c), "soundness", "verified but a fair run diverges"});
    }
    check_annotated_run(c, ok->proof, oracle.sufficient_fuel(), seed, prefixes, index, r);
  } else {
    ++r.rejected;
    if (!oracle.diverges) ++r.rejected_terminating;
  }
  return r;
}

inline std::vector<Command> campaign_programs(const CampaignConfig& cfg) {
  std::vector<Command> programs = gen_program(cfg.gen);
  if (cfg.exhaustive_max_atoms > 0) {
    std::vector<Command> all = enumerate_programs(cfg.exhaustive_max_atoms);
    programs.insert(programs.end(), all.begin(), all.end());
  }
  return programs;
}

inline CampaignReport run_campaign(const std::vector<Command>& programs, std::uint64_t seed, std::size_t prefixes,
                                   std::size_t threads) {
  const auto start = std::chrono::steady_clock::now();
  threads = std::max<std::size_t>(1, std::min(threads, programs.size()));
  std::vector<CampaignReport> parts(threads);
  auto work = [&](std::size_t t) {
    for (std::size_t i = t; i < programs.size(); i += threads) parts[t] += check_program(programs[i], seed, prefixes, i);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  CampaignReport total;
  for (const auto& p : parts) total += p;
  total.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return total;
}

inline CampaignReport soundness_campaign(const CampaignConfig& cfg) {
  return run_campaign(campaign_programs(cfg), cfg.gen.seed, cfg.prefixes_per_trace, cfg.threads);
}

inline nlohmann::json to_json(const CampaignReport& r) {
  nlohmann::json j;
  j["total"] = r.total;
  j["verified"] = r.verified;
  j["rejected"] = r.rejected;
  j["oracleDiverges"] = r.oracle_diverges;
  j["soundnessViolations"] = r.soundness_violations;
  j["rejectedTerminating"] = r.rejected_terminating;
  j["annotatedTraces"] = r.annotated_traces;
  j["annotationFailures"] = r.annotation_failures;
  j["balanceChecks"] = r.balance_checks;
  j["balanceFailures"] = r.balance_failures;
  j["lemma3Checks"] = r.leaf_balance_checks;
  j["lemma3Failures"] = r.leaf_balance_failures;
  j["loopLeafChecks"] = r.loop_leaf_checks;
  j["loopLeafFailures"] = r.loop_leaf_failures;
  j["wallTimeMs"] = r.wall_time_ms;
  j["witnesses"] = nlohmann::json::array();
  for (const Witness& w : r.witnesses)
    j["witnesses"].push_back({{"index", w.index}, {"program", w.program}, {"kind", w.kind}, {"detail", w.detail}});
  return j;
}

inline std::string summary_table(const CampaignReport& r) {
  std::ostringstream os;
  auto row = [&os](const char* name, std::size_t v) { os << std::left << std::setw(24) << name << v << '\n'; };
  row("programs", r.total);
  row("verified", r.verified);
  row("rejected", r.rejected);
  row("oracle diverges", r.oracle_diverges);
  row("soundness violations", r.soundness_violations);
  row("rejected, terminating", r.rejected_terminating);
  row("annotated traces", r.annotated_traces);
  row("annotation failures", r.annotation_failures);
  row("balance checks", r.balance_checks);
  row("balance failures", r.balance_failures);
  row("leaf-balance checks", r.leaf_balance_checks);
  row("leaf-balance failures", r.leaf_balance_failures);
  row("loop-leaf checks", r.loop_leaf_checks);
  row("loop-leaf failures", r.loop_leaf_failures);
  if (r.rejected > 0)
    os << std::left << std::setw(24) << "incompleteness" << std::fixed << std::setprecision(3)
       << static_cast<double>(r.rejected_terminating) / static_cast<double>(r.rejected) << '\n';
  for (const Witness& w : r.witnesses) os << "witness #" << w.index << " [" << w.kind << "] " << w.program << ": " << w.detail << '\n';
  return os.str();
}

} // namespace obcred
