#include <gtest/gtest.h>

#include <random>

#include "mvx/arbiter.hpp"
#include "mvx/filemap.hpp"
#include "support.hpp"

namespace mvx {
namespace {

SyscallEvent app_event(SyscallKind k, std::uint64_t seq, VariantId v = 0) {
  SyscallEvent e;
  e.kind = k;
  e.seq = seq;
  e.variant = v;
  return e;
}

SyscallEvent restarted(SyscallEvent e, Issuer issuer = Issuer::InProcessMonitor) {
  e.issuer = issuer;
  return e;
}

class ArbiterTest : public ::testing::Test {
 protected:
  std::shared_ptr<const SensitivityPolicy> policy = test::default_policy();
  FileMap fmap = FileMap::with_std_streams();
};

TEST_F(ArbiterTest, NonSensitiveGetsTokenSensitiveDoesNot) {
  Arbiter a(0, *policy, true, 1);
  auto r = a.intercept(app_event(SyscallKind::Getcwd, 0), fmap);
  EXPECT_EQ(r.target, RouteTarget::ToDipMon);
  EXPECT_TRUE(r.token);
  auto m = a.intercept(app_event(SyscallKind::Mprotect, 1), fmap);
  EXPECT_EQ(m.target, RouteTarget::ToDcpMon);
  EXPECT_FALSE(m.token);
  auto bad = app_event(SyscallKind::Read, 2);
  bad.args.fd = 77;
  EXPECT_EQ(a.intercept(bad, fmap).target, RouteTarget::ToDcpMon);
  EXPECT_EQ(a.crossings(), 3u);
  EXPECT_EQ(a.tokens_minted(), 1u);
  EXPECT_EQ(a.sensitive_tokens(), 0u);
}

TEST_F(ArbiterTest, WithoutInProcessMonitorEverythingIsLockstep) {
  Arbiter a(0, *policy, false, 1);
  auto r = a.intercept(app_event(SyscallKind::Getcwd, 0), fmap);
  EXPECT_EQ(r.target, RouteTarget::ToDcpMon);
  EXPECT_EQ(r.cls, Sensitivity::NonSensitive);
  EXPECT_EQ(a.tokens_minted(), 0u);
}

TEST_F(ArbiterTest, RestartChecks) {
  Arbiter a(0, *policy, true, 1);
  auto ev = app_event(SyscallKind::Getcwd, 0);
  auto tok = *a.intercept(ev, fmap).token;
  EXPECT_EQ(a.verify_restart(restarted(ev), tok), RestartVerdict::PermitDipMon);
  EXPECT_EQ(a.verify_restart(restarted(ev), tok), RestartVerdict::ForwardDcpMon);

  auto ev2 = app_event(SyscallKind::Getcwd, 1);
  auto tok2 = *a.intercept(ev2, fmap).token;
  EXPECT_EQ(a.verify_restart(restarted(ev2, Issuer::Application), tok2),
            RestartVerdict::ForwardDcpMon);
  EXPECT_EQ(a.permits(), 1u);
  ASSERT_EQ(a.security_events().size(), 2u);
  EXPECT_EQ(a.security_events()[1].seq, 1u);
  EXPECT_FALSE(a.security_events()[1].reason.empty());
}

TEST_F(ArbiterTest, DefaultTokenIsNeverAccepted) {
  Arbiter a(0, *policy, true, 1);
  auto ev = app_event(SyscallKind::Brk, 0);
  a.intercept(ev, fmap);
  EXPECT_EQ(a.verify_restart(restarted(ev), SealedToken{}), RestartVerdict::ForwardDcpMon);
}

// Fuzz: bit flips, rebinding, replay, cross-variant reuse and forged issuers.
TEST_F(ArbiterTest, TamperedTokensNeverPermit) {
  std::mt19937_64 rng(99);
  Arbiter a(0, *policy, true, 5), b(1, *policy, true, 5);
  std::uint64_t legit = 0, tampered = 0;
  std::optional<SealedToken> previous;
  for (std::uint64_t seq = 0; tampered < 10000; ++seq) {
    auto ev = app_event(SyscallKind::Getcwd, seq, 0);
    auto tok = *a.intercept(ev, fmap).token;
    auto evb = app_event(SyscallKind::Getcwd, seq, 1);
    auto tokb = *b.intercept(evb, fmap).token;
    SealedToken bad = tok;
    switch (rng() % 5) {
      case 0: bad.corrupt_value(rng() | 1); break;
      case 1: bad.corrupt_binding(1 + rng() % 100, 0); break;
      case 2: bad.corrupt_binding(0, 1); break;
      case 3: bad = previous.value_or(SealedToken{}); break;
      case 4: bad = tokb; break;
    }
    auto before = a.permits();
    ASSERT_EQ(a.verify_restart(restarted(ev), bad), RestartVerdict::ForwardDcpMon);
    ASSERT_EQ(a.permits(), before);
    ++tampered;
    // Forged issuer with the genuine token.
    ASSERT_EQ(b.verify_restart(restarted(evb, Issuer::Application), tokb),
              RestartVerdict::ForwardDcpMon);
    ++tampered;
    previous = tok;
  }
  EXPECT_EQ(a.permits(), 0u);
  EXPECT_EQ(b.permits(), 0u);

  // Genuine tokens: exactly one permit each, never two.
  Arbiter c(0, *policy, true, 8);
  for (std::uint64_t seq = 0; seq < 10000; ++seq) {
    auto ev = app_event(SyscallKind::Getcwd, seq);
    auto tok = *c.intercept(ev, fmap).token;
    ASSERT_EQ(c.verify_restart(restarted(ev), tok), RestartVerdict::PermitDipMon);
    ASSERT_EQ(c.verify_restart(restarted(ev), tok), RestartVerdict::ForwardDcpMon);
    ++legit;
  }
  EXPECT_EQ(c.permits(), legit);
  EXPECT_LE(c.permits(), c.tokens_minted());
}

}  // namespace
}  // namespace mvx
