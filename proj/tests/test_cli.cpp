#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(OBCRED_CLI) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "obcred_cli_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

TEST(Cli, Parse) {
  const Result r = cli("parse -e 'exit ;loop   skip; fork{exit}  # tail'");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "exit; loop skip; fork { exit }\n");
  EXPECT_EQ(cli("parse -e 'fork { exit ; }'").code, 2);
  EXPECT_EQ(cli("parse -e '(exit)'").code, 2);
  EXPECT_EQ(cli("parse").code, 2);
  EXPECT_EQ(cli("parse /nonexistent/file.prog").code, 2);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
}

TEST(Cli, ParseFile) {
  const fs::path p = scratch("prog.prog");
  std::ofstream(p) << "# two threads\nfork { exit };\nloop skip\n";
  const Result r = cli("parse " + p.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out, "fork { exit }; loop skip\n");
  EXPECT_EQ(cli("parse -e exit " + p.string()).code, 2);
}

TEST(Cli, Verify) {
  const Result ok = cli("verify -e 'fork { exit }; loop skip'");
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out, "Verified\nsketch: VS-ObCredIntro, Fork [Exit, VS-SemImp], Loop, VS-SemImp\n");
  const Result no = cli("verify -e 'loop skip'");
  EXPECT_EQ(no.code, 1);
  EXPECT_EQ(no.out, "Rejected\n");
  const Result j = cli("verify --json -e 'fork { loop skip }'");
  EXPECT_EQ(j.code, 1);
  const auto doc = nlohmann::json::parse(j.out);
  EXPECT_EQ(doc["verdict"], "Rejected");
  EXPECT_EQ(doc["maxObligations"], -1);
}

TEST(Cli, CertificateRoundTrip) {
  const fs::path cert = scratch("cert.json");
  ASSERT_EQ(cli("verify -e 'fork { fork { loop skip }; exit }; loop skip' --emit-cert " + cert.string()).code, 0);
  const Result ok = cli("check-proof " + cert.string());
  EXPECT_EQ(ok.code, 0);
  EXPECT_EQ(ok.out, "Ok\n");

  // Tamper with the fork split so the child gets the wrong chunk.
  auto doc = nlohmann::json::parse(read_file(cert));
  bool changed = false;
  std::function<void(nlohmann::json&)> walk = [&](nlohmann::json& n) {
    if (!changed && n["rule"] == "Fork") {
      n["ruleData"]["child"][0] = n["ruleData"]["child"][0].get<int>() + 1;
      changed = true;
      return;
    }
    if (n.contains("premises"))
      for (auto& p : n["premises"]) walk(p);
  };
  walk(doc);
  ASSERT_TRUE(changed);
  const fs::path bad = scratch("bad.json");
  std::ofstream(bad) << doc.dump(2);
  const Result v = cli("check-proof " + bad.string());
  EXPECT_EQ(v.code, 1);
  EXPECT_EQ(v.out.rfind("RuleViolation at root", 0), 0u) << v.out;
  EXPECT_NE(v.out.find("(Fork)"), std::string::npos) << v.out;

  std::ofstream(scratch("junk.json")) << "{ not json";
  EXPECT_EQ(cli("check-proof " + scratch("junk.json").string()).code, 2);
}

TEST(Cli, Run) {
  const Result a = cli("run -e 'fork { exit }; loop skip' --sched round-robin --fuel 100");
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, "AbruptExit after 2 steps\n");
  const Result b = cli("run -e 'loop skip' --sched round-robin --fuel 10000");
  EXPECT_EQ(b.code, 1);
  EXPECT_EQ(b.out, "FuelExhausted in {0:loop skip; done}\n");
  const Result c = cli("run -e 'fork { exit }; loop skip' --sched replay --picks 0,1 --trace");
  EXPECT_EQ(c.code, 0);
  EXPECT_EQ(c.out,
            "0\t0\tST-Fork\t{0:fork { exit }; loop skip; done}\n"
            "1\t1\tTP-Exit\t{0:loop skip; done,1:exit; done}\n"
            "AbruptExit after 2 steps\n");
  const Result j = cli("run --json -e 'fork { loop skip }; loop skip' --fuel 50");
  EXPECT_EQ(j.code, 1);
  const auto doc = nlohmann::json::parse(j.out);
  EXPECT_EQ(doc["divergenceWitness"], true);
  EXPECT_EQ(doc["steps"], 50);
  EXPECT_EQ(cli("run -e exit --sched sideways").code, 2);
  // Running out of fuel on a terminating program is not a divergence witness.
  EXPECT_EQ(cli("run -e 'fork { exit }; loop skip' --sched replay --picks 0,0,0,0 --fuel 4").code, 0);
}

TEST(Cli, TraceMatchesGolden) {
  const Result r = cli("trace -e 'fork { fork { loop skip }; exit }; loop skip' --sched replay --picks 0,1,2,0,0,0 --fuel 6");
  EXPECT_EQ(r.code, 0);
  std::istringstream golden(read_file(fs::path(OBCRED_TEST_DIR) / "golden" / "nested_fork.trace"));
  std::string line, want;
  while (std::getline(golden, line))
    if (!line.empty() && line[0] != '#') want += line + "\n";
  EXPECT_EQ(r.out, want);

  const fs::path out = scratch("trace.tsv");
  EXPECT_EQ(cli("trace -e 'fork { exit }; loop skip' -o " + out.string()).code, 0);
  EXPECT_FALSE(read_file(out).empty());
  const Result no = cli("trace -e 'loop skip'");
  EXPECT_EQ(no.code, 1);
  EXPECT_EQ(no.out, "Rejected\n");
}

TEST(Cli, Graph) {
  const Result r =
      cli("graph --prefix -e 'fork { fork { loop skip }; exit }; loop skip' --sched replay --picks 0,1,2,0,0,0 --fuel 6");
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("digraph", 0), 0u);
  EXPECT_NE(r.out.find("cluster_prefix"), std::string::npos);
  EXPECT_EQ(cli("graph -e 'fork { exit }; loop skip'").out.find("cluster_prefix"), std::string::npos);
  EXPECT_EQ(cli("graph -e 'loop skip'").code, 1);
}

TEST(Cli, Fuzz) {
  const Result r = cli("fuzz --count 40 --seed 3 --exhaustive 3 --threads 2 --json");
  EXPECT_EQ(r.code, 0);
  const auto doc = nlohmann::json::parse(r.out);
  EXPECT_EQ(doc["total"], 40 + 30);
  EXPECT_EQ(doc["soundnessViolations"], 0);
  const Result t = cli("fuzz --count 10");
  EXPECT_EQ(t.code, 0);
  EXPECT_EQ(t.out.rfind("programs", 0), 0u);
  EXPECT_EQ(cli("fuzz --count 10 --max-atoms 0").code, 2);
  EXPECT_EQ(cli("fuzz --count ten").code, 2);
}

TEST(Cli, ViewShift) {
  const Result a = cli("view-shift 'obs(0)' 'obs(1) * credit'");
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, "holds (VS-ObCredIntro)\n");
  const Result b = cli("view-shift 'obs(1)' 'obs(0)'");
  EXPECT_EQ(b.code, 1);
  EXPECT_EQ(b.out, "fails\n");
  EXPECT_EQ(cli("view-shift 'obs(' 'true'").code, 2);
}

TEST(Cli, HelpExitsCleanly) {
  const Result r = cli("--help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("verify"), std::string::npos);
}

TEST(Cli, SamplePrograms) {
  const fs::path dir = fs::path(OBCRED_TEST_DIR).parent_path() / "programs";
  const std::map<std::string, int> want{{"fork_exit_loop.prog", 0}, {"nested_fork.prog", 0},
                                        {"three_threads.prog", 0},  {"spin_then_exit.prog", 1},
                                        {"two_spinners.prog", 1}};
  for (const auto& [name, code] : want) EXPECT_EQ(cli("verify " + (dir / name).string()).code, code) << name;
}
