// obcred: command-line front end.
//
// exit codes: 0 ok / Verified / Ok, 1 Rejected / RuleViolation / divergence
// witness / campaign violation, 2 usage or input error.

#include "obcred/obcred.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

using namespace obcred;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spill(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << text;
}

struct ProgramArgs {
  std::string inline_text;
  std::string path;

  void attach(CLI::App* sub) {
    auto* e = sub->add_option("-e,--expr", inline_text, "program text");
    auto* f = sub->add_option("file", path, "program file");
    e->excludes(f);
    f->excludes(e);
  }

  Command load() const {
    if (inline_text.empty() && path.empty()) throw UsageError("no program given (use -e TEXT or FILE)");
    return parse(inline_text.empty() ? slurp(path) : inline_text);
  }
};

struct SchedArgs {
  std::string family = "round-robin";
  std::size_t offset = 0;
  std::uint64_t seed = 1;
  std::size_t window = 0;
  std::string picks;
  std::size_t fuel = 0;

  void attach(CLI::App* sub) {
    sub->add_option("--sched", family, "round-robin | rotated | random | replay")
        ->check(CLI::IsMember({"round-robin", "rotated", "random", "replay"}));
    sub->add_option("--offset", offset, "rotation offset for --sched rotated");
    sub->add_option("--seed", seed, "seed for --sched random");
    sub->add_option("--window", window, "fairness window for --sched random (default: atoms + 1)");
    sub->add_option("--picks", picks, "comma-separated thread ids for --sched replay");
    sub->add_option("--fuel", fuel, "step budget (default: enough for any terminating run)");
  }

  std::unique_ptr<Scheduler> make(const Command& c) const {
    if (family == "rotated") return rotated_round_robin(offset);
    if (family == "random") return random_fair(seed, window ? window : atom_count(c) + 1);
    if (family == "replay") {
      std::vector<ThreadId> ids;
      std::stringstream ss(picks);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) ids.push_back(std::stoull(item));
      return replay(std::move(ids));
    }
    return round_robin();
  }

  std::size_t fuel_for(const Command& c) const { return fuel ? fuel : explore(c).sufficient_fuel(); }
};

AnnotatedTrace annotated_run(const Command& c, const ProofTree& proof, const SchedArgs& sched) {
  auto s = sched.make(c);
  const RunResult r = run(initial_pool(c), *s, sched.fuel_for(c));
  return annotate(c, proof, r.trace);
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Obligations/credits termination verifier and semantics workbench"};
  app.require_subcommand(1);

  ProgramArgs prog;
  SchedArgs sched;
  bool json = false;
  bool show_trace = false;
  bool shade = false;
  std::string out_path;
  std::string cert_path;
  std::string from_text, to_text;
  CampaignConfig campaign;

  auto* parse_cmd = app.add_subcommand("parse", "print the normalized program");
  prog.attach(parse_cmd);

  auto* run_cmd = app.add_subcommand("run", "run the plain semantics");
  prog.attach(run_cmd);
  sched.attach(run_cmd);
  run_cmd->add_flag("--trace", show_trace, "print every step");
  run_cmd->add_flag("--json", json, "JSON output");

  auto* verify_cmd = app.add_subcommand("verify", "search for a termination proof");
  prog.attach(verify_cmd);
  verify_cmd->add_option("--emit-cert", cert_path, "write the proof certificate to FILE");
  verify_cmd->add_flag("--json", json, "JSON output");

  auto* check_cmd = app.add_subcommand("check-proof", "check a proof certificate");
  check_cmd->add_option("cert", cert_path, "certificate file")->required();

  auto* trace_cmd = app.add_subcommand("trace", "annotated trace of a verified program");
  prog.attach(trace_cmd);
  sched.attach(trace_cmd);
  trace_cmd->add_option("-o,--output", out_path, "output file");

  auto* graph_cmd = app.add_subcommand("graph", "program order graph (DOT) of an annotated trace");
  prog.attach(graph_cmd);
  sched.attach(graph_cmd);
  graph_cmd->add_flag("--prefix", shade, "shade the maximal loop-free sibling-closed prefix");
  graph_cmd->add_option("-o,--output", out_path, "output file");

  auto* fuzz_cmd = app.add_subcommand("fuzz", "soundness campaign on random programs");
  fuzz_cmd->add_option("--count", campaign.gen.count, "random programs");
  fuzz_cmd->add_option("--max-atoms", campaign.gen.max_atoms, "largest random program");
  fuzz_cmd->add_option("--seed", campaign.gen.seed, "generator seed");
  fuzz_cmd->add_option("--fork-weight", campaign.gen.fork_weight);
  fuzz_cmd->add_option("--loop-weight", campaign.gen.loop_weight);
  fuzz_cmd->add_option("--exit-weight", campaign.gen.exit_weight);
  fuzz_cmd->add_option("--exhaustive", campaign.exhaustive_max_atoms, "also check every program up to N atoms");
  fuzz_cmd->add_option("--prefixes", campaign.prefixes_per_trace, "random prefixes per annotated trace");
  fuzz_cmd->add_option("--threads", campaign.threads, "worker threads");
  fuzz_cmd->add_flag("--json", json, "JSON report");

  auto* vs_cmd = app.add_subcommand("view-shift", "decide FROM ==> TO");
  vs_cmd->add_option("from", from_text)->required();
  vs_cmd->add_option("to", to_text)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (parse_cmd->parsed()) {
      std::cout << pretty(normalize(prog.load())) << '\n';
      return 0;
    }

    if (run_cmd->parsed()) {
      const Command c = prog.load();
      auto s = sched.make(c);
      const RunResult r = run(initial_pool(c), *s, sched.fuel_for(c));
      const bool exhausted = std::holds_alternative<FuelExhausted>(r.outcome);
      const bool witness = exhausted && oracle_diverges(c);
      if (json) {
        nlohmann::json j{{"outcome", describe(r.outcome)}, {"steps", r.trace.size()}, {"scheduler", s->name()}};
        if (exhausted) j["divergenceWitness"] = witness;
        if (show_trace) j["trace"] = serialize(r.trace);
        std::cout << j.dump(2) << '\n';
      } else {
        if (show_trace) std::cout << serialize(r.trace);
        std::cout << describe(r.outcome) << '\n';
      }
      return witness ? 1 : 0;
    }

    if (verify_cmd->parsed()) {
      const Command c = prog.load();
      Verdict v = verify(c);
      const auto* ok = std::get_if<Verified>(&v);
      if (ok && !cert_path.empty()) spill(cert_path, write_certificate(ok->proof));
      if (json) {
        nlohmann::json j{{"verdict", ok ? "Verified" : "Rejected"}};
        if (ok) j["certificate"] = to_json(ok->proof);
        if (auto bound = derivability_bound(c)) j["maxObligations"] = *bound;
        std::cout << j.dump(2) << '\n';
      } else {
        std::cout << (ok ? "Verified" : "Rejected") << '\n';
        if (ok) std::cout << "sketch: " << to_string(sketch_hints(ok->proof)) << '\n';
      }
      return ok ? 0 : 1;
    }

    if (check_cmd->parsed()) {
      const ProofTree t = read_certificate(slurp(cert_path));
      const CheckResult r = check_proof(t);
      if (r.ok()) {
        std::cout << "Ok\n";
        return 0;
      }
      std::cout << "RuleViolation at " << r.violation->where() << " (" << rule_name(r.violation->rule)
                << "): " << r.violation->reason << '\n';
      return 1;
    }

    if (trace_cmd->parsed() || graph_cmd->parsed()) {
      const Command c = prog.load();
      Verdict v = verify(c);
      auto* ok = std::get_if<Verified>(&v);
      if (!ok) {
        std::cout << "Rejected\n";
        return 1;
      }
      const AnnotatedTrace t = annotated_run(c, ok->proof, sched);
      if (trace_cmd->parsed()) {
        spill(out_path, serialize(t));
      } else {
        const ProgramOrderGraph g = build_pog(t);
        const auto prefix = max_loopfree_sc_prefix(g);
        spill(out_path, to_dot(g, shade ? &prefix : nullptr));
      }
      return 0;
    }

    if (fuzz_cmd->parsed()) {
      const CampaignReport r = soundness_campaign(campaign);
      if (json)
        std::cout << to_json(r).dump(2) << '\n';
      else
        std::cout << summary_table(r);
      return r.clean() ? 0 : 1;
    }

    if (vs_cmd->parsed()) {
      const NormalizedAssertion from = normalize(parse_assertion(from_text));
      const NormalizedAssertion to = normalize(parse_assertion(to_text));
      const ShiftVerdict v = decide_view_shift(from, to);
      std::cout << verdict_name(v);
      if (v == ShiftVerdict::Holds) std::cout << " (" << classify_view_shift(from, to) << ')';
      std::cout << '\n';
      return v == ShiftVerdict::Holds ? 0 : 1;
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const CertificateError& e) {
    std::cerr << "bad certificate: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
