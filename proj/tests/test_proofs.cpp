#include "support.hpp"

#include <gtest/gtest.h>

using namespace obcred;
using namespace testsupport;

namespace {

ProofTree proof_of(const char* program) {
  Verdict v = verify(parse(program));
  EXPECT_TRUE(std::holds_alternative<Verified>(v)) << program;
  return std::get<Verified>(v).proof;
}

ProofTree leaf(ProofRule r, const char* pre, const char* cmd, const char* post) {
  return ProofTree{{parse_assertion(pre), parse(cmd), parse_assertion(post)}, r, {}, {}};
}

// Premise path to the first node with the given rule, depth first.
const ProofTree* find_rule(const ProofTree& t, ProofRule r) {
  if (t.rule == r) return &t;
  for (const ProofTree& p : t.premises)
    if (const ProofTree* f = find_rule(p, r)) return f;
  return nullptr;
}

ProofTree* find_rule(ProofTree& t, ProofRule r) {
  return const_cast<ProofTree*>(find_rule(static_cast<const ProofTree&>(t), r));
}

} // namespace

TEST(Checker, Axioms) {
  EXPECT_TRUE(check_proof(leaf(ProofRule::Exit, "obs(3)", "exit", "false")).ok());
  EXPECT_TRUE(check_proof(leaf(ProofRule::Loop, "credit * obs(0)", "loop skip", "false")).ok());

  const CheckResult bad_loop = check_proof(leaf(ProofRule::Loop, "obs(1) * credit", "loop skip", "false"));
  ASSERT_FALSE(bad_loop.ok());
  EXPECT_EQ(bad_loop.violation->where(), "root");
  EXPECT_EQ(bad_loop.violation->rule, ProofRule::Loop);

  EXPECT_FALSE(check_proof(leaf(ProofRule::Exit, "obs(1) * credit", "exit", "false")).ok());
  EXPECT_FALSE(check_proof(leaf(ProofRule::Exit, "obs(1)", "exit", "obs(0)")).ok());
  EXPECT_FALSE(check_proof(leaf(ProofRule::Exit, "obs(1)", "loop skip", "false")).ok());
}

TEST(Checker, ForkArithmetic) {
  ProofTree child = make_view_shift(parse_assertion("obs(1)"), leaf(ProofRule::Exit, "obs(1)", "exit", "false"),
                                    parse_assertion("obs(0)"));
  ProofTree fork{{parse_assertion("obs(1) * credit"), parse("fork { exit }"), parse_assertion("obs(0) * credit")},
                 ProofRule::Fork,
                 {child},
                 ForkSplit{1, 0, 0, 1}};
  EXPECT_TRUE(check_proof(fork).ok());

  ProofTree wrong_data = fork;
  wrong_data.data = ForkSplit{1, 1, 0, 0};
  EXPECT_FALSE(check_proof(wrong_data).ok());

  ProofTree wrong_sum = fork;
  wrong_sum.conclusion.pre = parse_assertion("obs(2) * credit");
  EXPECT_FALSE(check_proof(wrong_sum).ok());
}

TEST(Checker, FrameRejectsObligations) {
  const ProofTree base = leaf(ProofRule::Exit, "obs(1)", "exit", "false");
  EXPECT_TRUE(check_proof(make_frame(base, parse_assertion("credit * credit"))).ok());
  EXPECT_FALSE(check_proof(make_frame(base, parse_assertion("obs(0)"))).ok());
  EXPECT_FALSE(check_proof(make_frame(base, parse_assertion("false"))).ok());
}

TEST(Checker, ViewShiftHintsAreValidated) {
  ProofTree t = make_view_shift(parse_assertion("obs(0)"), leaf(ProofRule::Exit, "obs(1)", "exit", "false"),
                                parse_assertion("false"));
  EXPECT_TRUE(check_proof(t).ok());
  std::get<ViewShiftData>(t.data).pre_hint = "VS-SemImp";
  const CheckResult r = check_proof(t);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.violation->reason.find("hint"), std::string::npos);

  ProofTree down = make_view_shift(parse_assertion("obs(0)"), leaf(ProofRule::Exit, "obs(1)", "exit", "false"),
                                   parse_assertion("false"));
  down.conclusion.pre = parse_assertion("obs(2)");
  std::get<ViewShiftData>(down.data).pre_hint.reset();
  EXPECT_FALSE(check_proof(down).ok());
}

TEST(Checker, ReportsFirstFailingNode) {
  ProofTree t = proof_of("fork { exit }; loop skip");
  ProofTree* loop = find_rule(t, ProofRule::Loop);
  ASSERT_NE(loop, nullptr);
  loop->conclusion.pre = parse_assertion("obs(0)");
  const CheckResult r = check_proof(t);
  ASSERT_FALSE(r.ok());
  // Seq notices the mismatch with its first premise before the Loop leaf does.
  EXPECT_EQ(r.violation->rule, ProofRule::Seq);
  EXPECT_EQ(r.violation->where(), "root.0");
}

TEST(Checker, PremiseCount) {
  ProofTree t = leaf(ProofRule::Seq, "obs(0)", "exit; exit", "false");
  const CheckResult r = check_proof(t);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.violation->reason.find("premise"), std::string::npos);
}

TEST(Derive, ForkExitLoopShape) {
  const ProofTree t = proof_of("fork { exit }; loop skip");
  EXPECT_TRUE(check_proof(t).ok());
  EXPECT_EQ(to_string(sketch_hints(t)), "VS-ObCredIntro, Fork [Exit, VS-SemImp], Loop, VS-SemImp");

  ASSERT_EQ(t.rule, ProofRule::ViewShift);
  EXPECT_EQ(to_string(t.conclusion.pre), "obs(0)");
  EXPECT_EQ(to_string(t.conclusion.post), "obs(0)");
  const ProofTree& seq = t.premises[0];
  ASSERT_EQ(seq.rule, ProofRule::Seq);
  EXPECT_EQ(normalize(seq.conclusion.pre), NormalizedAssertion::single(1, 1));
  const ProofTree& fork = seq.premises[0];
  ASSERT_EQ(fork.rule, ProofRule::Fork);
  EXPECT_EQ(std::get<ForkSplit>(fork.data), (ForkSplit{1, 0, 0, 1}));
  const ProofTree& loop = seq.premises[1];
  ASSERT_EQ(loop.rule, ProofRule::Loop);
  EXPECT_EQ(normalize(loop.conclusion.pre), NormalizedAssertion::single(0, 1));
}

TEST(Derive, NestedForkSplits) {
  const ProofTree t = proof_of("fork { fork { loop skip }; exit }; loop skip");
  const ProofTree* outer = find_rule(t, ProofRule::Fork);
  ASSERT_NE(outer, nullptr);
  EXPECT_EQ(std::get<ForkSplit>(outer->data), (ForkSplit{1, 0, 0, 1}));
  const ProofTree* inner = find_rule(outer->premises[0], ProofRule::Fork);
  ASSERT_NE(inner, nullptr);
  EXPECT_EQ(std::get<ForkSplit>(inner->data), (ForkSplit{0, 1, 2, 0}));
}

TEST(Derive, Rejections) {
  EXPECT_FALSE(is_verified(parse("loop skip")));
  EXPECT_FALSE(is_verified(parse("fork { loop skip }; loop skip")));
  EXPECT_TRUE(is_verified(parse("exit")));
  EXPECT_TRUE(is_verified(parse("fork { exit }")));
  EXPECT_TRUE(is_verified(parse("exit; loop skip")));

  const DeriveResult r = derive(parse("loop skip"), 0);
  ASSERT_TRUE(std::holds_alternative<NotDerivable>(r));
  EXPECT_EQ(std::get<NotDerivable>(r).max_obligations, -1);
}

TEST(Derive, Bounds) {
  EXPECT_EQ(derivability_bound(parse("fork { exit }; loop skip")), std::nullopt);
  EXPECT_EQ(derivability_bound(parse("fork { loop skip }")), std::optional<std::int64_t>(-1));
  EXPECT_EQ(derivability_bound(parse("fork { fork { exit } }")), std::nullopt);
  EXPECT_EQ(derivability_bound(parse("fork { loop skip }; fork { loop skip }")), std::optional<std::int64_t>(-2));
}

TEST(Certificate, RoundTrip) {
  const ProofTree t = proof_of("fork { fork { loop skip }; exit }; loop skip");
  const std::string text = write_certificate(t);
  const ProofTree back = read_certificate(text);
  EXPECT_TRUE(check_proof(back).ok());
  EXPECT_EQ(write_certificate(back), text);
  EXPECT_EQ(proof_size(back), proof_size(t));
}

TEST(Certificate, Errors) {
  EXPECT_THROW(read_certificate("{"), CertificateError);
  EXPECT_THROW(read_certificate("[]"), CertificateError);
  EXPECT_THROW(read_certificate(R"j({"rule":"Nope","pre":"true","cmd":"exit","post":"true"})j"), CertificateError);
  EXPECT_THROW(read_certificate(R"j({"rule":"Exit","pre":"obs(","cmd":"exit","post":"false"})j"), CertificateError);
  const std::string short_split =
      R"j({"rule":"Fork","pre":"obs(1)","cmd":"fork { exit }","post":"obs(0)","premises":[],"ruleData":{"child":[1]}})j";
  EXPECT_THROW(read_certificate(short_split), CertificateError);
  const std::string missing_post =
      R"j({"rule":"Seq","pre":"obs(0)","cmd":"exit; exit","post":"false","premises":[{"rule":"Exit","pre":"obs(0)","cmd":"exit"}]})j";
  try {
    read_certificate(missing_post);
    FAIL();
  } catch (const CertificateError& e) {
    EXPECT_NE(std::string(e.what()).find("root.0"), std::string::npos) << e.what();
  }
}

// Properties.

TEST(ProofProperty, DerivedProofsCheck) {
  Rng rng(41);
  for (int i = 0; i < 1000; ++i) {
    const Command c = random_command(rng, 1 + below(rng, 10));
    const auto bound = derivability_bound(c);
    const Nat top = bound ? static_cast<Nat>(std::max<std::int64_t>(*bound, 0)) : 3;
    for (Nat n = 0; n <= top; ++n) {
      DeriveResult r = derive(c, n);
      if (auto* t = std::get_if<ProofTree>(&r)) {
        EXPECT_TRUE(check_proof(*t).ok()) << pretty(c) << " n=" << n << ": " << check_proof(*t).violation->reason;
        EXPECT_TRUE(detail::same(t->conclusion.pre, Assertion::obs(n)));
        EXPECT_TRUE(detail::same(t->conclusion.post, Assertion::obs(0)));
        EXPECT_TRUE(detail::same(t->conclusion.cmd, c));
      } else {
        EXPECT_TRUE(bound && static_cast<std::int64_t>(n) > *bound);
      }
    }
    if (bound && *bound >= 0) {
      EXPECT_TRUE(std::holds_alternative<NotDerivable>(derive(c, static_cast<Nat>(*bound + 1))));
    }
  }
}

TEST(ProofProperty, VerdictMatchesDivergenceOnSmallPrograms) {
  // Sound everywhere; on this space the search also happens to be complete.
  for (const Command& c : enumerate_programs(5)) EXPECT_EQ(is_verified(c), !diverges_oracle(c)) << pretty(c);
}

TEST(ProofProperty, CertificatesRoundTrip) {
  Rng rng(42);
  for (int i = 0; i < 300; ++i) {
    const Command c = random_command(rng, 1 + below(rng, 9));
    Verdict v = verify(c);
    if (auto* ok = std::get_if<Verified>(&v)) {
      const std::string text = write_certificate(ok->proof);
      EXPECT_EQ(write_certificate(read_certificate(text)), text);
      EXPECT_TRUE(check_proof(read_certificate(text)).ok());
    }
  }
}

TEST(ProofProperty, MutatedSplitsAreRejected) {
  Rng rng(43);
  int mutated = 0;
  for (int i = 0; i < 300; ++i) {
    const Command c = random_command(rng, 2 + below(rng, 8));
    Verdict v = verify(c);
    auto* ok = std::get_if<Verified>(&v);
    if (!ok) continue;
    ProofTree* fork = find_rule(ok->proof, ProofRule::Fork);
    if (!fork) continue;
    auto& split = std::get<ForkSplit>(fork->data);
    ++split.child_credits;
    EXPECT_FALSE(check_proof(ok->proof).ok()) << pretty(c);
    ++mutated;
  }
  EXPECT_GT(mutated, 20);
}
