#include <gtest/gtest.h>

#include <sstream>
#include <thread>

#include "mvx/dcpmon.hpp"
#include "support.hpp"

namespace mvx {
namespace {

using namespace std::chrono_literals;

Deposit dep(SyscallKind k, std::optional<int> fd = {}, bool finished = false,
            Escalation esc = Escalation::None) {
  Deposit d;
  d.entry.finished = finished;
  d.entry.escalation = esc;
  d.entry.call.kind = k;
  d.entry.call.args.fd = fd;
  return d;
}

TEST(EvaluateRound, IdenticalEntriesProceed) {
  auto a = dep(SyscallKind::Connect, 3);
  a.entry.call.args.endpoint = "10.0.0.2:80";
  EXPECT_EQ(evaluate_round({a, a, a}).kind, RoundOutcome::Kind::Proceed);
}

TEST(EvaluateRound, KindMismatchDiverges) {
  auto out = evaluate_round({dep(SyscallKind::Write, 4), dep(SyscallKind::Mprotect)});
  EXPECT_EQ(out.kind, RoundOutcome::Kind::Diverge);
  EXPECT_NE(out.reason.find("kind mismatch"), std::string::npos);
}

TEST(EvaluateRound, ArgumentMismatchDiverges) {
  auto out = evaluate_round({dep(SyscallKind::Write, 4), dep(SyscallKind::Write, 5)});
  EXPECT_EQ(out.kind, RoundOutcome::Kind::Diverge);
  EXPECT_NE(out.reason.find("argument mismatch"), std::string::npos);
}

TEST(EvaluateRound, FinishedHandling) {
  auto fin = dep(SyscallKind::Getcwd, {}, true);
  EXPECT_EQ(evaluate_round({fin, fin}).kind, RoundOutcome::Kind::AllFinished);
  EXPECT_EQ(evaluate_round({fin, dep(SyscallKind::Mmap)}).kind, RoundOutcome::Kind::Diverge);
  EXPECT_EQ(evaluate_round({dep(SyscallKind::Mmap), std::nullopt}).kind,
            RoundOutcome::Kind::Diverge);
}

TEST(EvaluateRound, EscalationWinsEvenWithMissingSlots) {
  auto esc = dep(SyscallKind::Read, 3, false, Escalation::TokenRejected);
  auto out = evaluate_round({std::nullopt, esc});
  EXPECT_EQ(out.kind, RoundOutcome::Kind::Diverge);
  EXPECT_NE(out.reason.find("token rejected"), std::string::npos);
}

TEST(Barrier, ReadyOnlyWhenEverySlotFilled) {
  LockstepBarrier b(3);
  std::stop_source s;
  b.deposit(0, dep(SyscallKind::Mmap));
  b.deposit(2, dep(SyscallKind::Mmap));
  EXPECT_EQ(b.wait_round(s.get_token(), 20ms), LockstepBarrier::Wait::Timeout);
  std::thread late([&] {
    std::this_thread::sleep_for(10ms);
    b.deposit(1, dep(SyscallKind::Mmap));
  });
  EXPECT_EQ(b.wait_round(s.get_token(), 2000ms), LockstepBarrier::Wait::Ready);
  late.join();
  auto round = b.take_round();
  ASSERT_EQ(round.size(), 3u);
  for (const auto& d : round) EXPECT_TRUE(d);
  EXPECT_EQ(b.epoch(), 1u);
}

TEST(Barrier, EscalationMakesRoundReadyEarly) {
  LockstepBarrier b(2);
  std::stop_source s;
  b.deposit(1, dep(SyscallKind::Read, 3, false, Escalation::ArgMismatch));
  EXPECT_EQ(b.wait_round(s.get_token(), 1000ms), LockstepBarrier::Wait::Ready);
  auto round = b.take_round();
  EXPECT_FALSE(round[0]);
}

TEST(Barrier, StopInterruptsWait) {
  LockstepBarrier b(2);
  std::stop_source s;
  std::thread stopper([&] {
    std::this_thread::sleep_for(10ms);
    s.request_stop();
  });
  EXPECT_EQ(b.wait_round(s.get_token(), 5000ms), LockstepBarrier::Wait::Stopped);
  stopper.join();
}

TEST(Verdicts, ExitCodesAndIdempotentTermination) {
  EXPECT_EQ(Verdict::clean().exit_code(), 0);
  EXPECT_EQ(Verdict::divergence("x").exit_code(), 2);
  EXPECT_EQ(Verdict::terminated("x").exit_code(), 3);
  RunControl c;
  EXPECT_TRUE(c.execute([] {}));
  auto first = c.terminate_all(Verdict::divergence("kind mismatch", 7));
  auto second = c.terminate_all(Verdict::terminated("transport"));
  EXPECT_EQ(second.status, Verdict::Status::Divergence);
  EXPECT_EQ(c.verdict().to_string(), first.to_string());
  EXPECT_EQ(first.to_string(), "Divergence(kind mismatch, round 7)");
  EXPECT_FALSE(c.execute([] { ADD_FAILURE(); }));
  EXPECT_EQ(c.executions(), 1u);
  EXPECT_EQ(c.executions_at_verdict(), 1u);
}

// --- through the whole stack -------------------------------------------------

TEST(Lockstep, ConnectIsReplicatedToFollower) {
  auto w = test::script(
      "call socket scope=public as=s\ncall connect fd=$s addr=10.0.0.9:443\n"
      "call send fd=$s data=hello\ncall recv fd=$s len=16\n");
  auto m = run_scenario(test::config(w, "rsm"));
  ASSERT_TRUE(m.verdict.clean_run()) << m.verdict.to_string();
  ASSERT_EQ(m.logs[1].size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(m.logs[1][i].result, m.logs[0][i].result);
    EXPECT_TRUE(m.logs[0][i].result.ok()) << to_string(m.logs[0][i].result);
  }
  EXPECT_GT(m.per_variant[0].external_io, 0u);
  EXPECT_EQ(m.per_variant[1].external_io, 0u);
  EXPECT_EQ(m.lockstep_rounds, 4u);
}

TEST(Lockstep, MismatchedKindDiverges) {
  auto w = test::script("call mmap len=4096\ncall mmap len=4096\ncall mmap len=4096\n");
  auto cfg = test::config(w, "rsm");
  cfg.attack = AttackSpec::parse("1:1:extra:mprotect");
  auto m = run_scenario(cfg);
  EXPECT_EQ(m.verdict.status, Verdict::Status::Divergence);
  EXPECT_NE(m.verdict.reason.find("kind mismatch"), std::string::npos);
  EXPECT_EQ(m.verdict.round, 1u);
  EXPECT_EQ(m.executions_after_verdict(), 0u);
}

TEST(Lockstep, LeaderOnlyExtraCallDiverges) {
  auto w = test::shipped("server");
  auto cfg = test::config(w, "rsm+sr");
  cfg.attack = AttackSpec::parse("0:12:extra:connect");
  auto m = run_scenario(cfg);
  EXPECT_EQ(m.verdict.status, Verdict::Status::Divergence);
  EXPECT_EQ(m.executions_after_verdict(), 0u);
}

TEST(Lockstep, ReportCitesRoundAndBothEvents) {
  auto w = test::script("loop 10\n  call mmap len=4096\nend\n");
  auto cfg = test::config(w, "baseline");
  cfg.attack = AttackSpec::parse("1:7:perturb:len:1");
  auto m = run_scenario(cfg);
  ASSERT_EQ(m.verdict.status, Verdict::Status::Divergence);
  EXPECT_EQ(m.verdict.round, 7u);
  std::ostringstream rep;
  write_run_report(m, rep);
  auto text = rep.str();
  EXPECT_NE(text.find("round 7"), std::string::npos) << text;
  EXPECT_NE(text.find("variant 0: mmap len=4096"), std::string::npos) << text;
  EXPECT_NE(text.find("variant 1: mmap len=4097"), std::string::npos) << text;
}

TEST(Lockstep, CleanRunNeverTerminates) {
  auto m = run_scenario(test::config(test::shipped("server"), "baseline"));
  EXPECT_TRUE(m.verdict.clean_run());
  EXPECT_EQ(m.verdict.to_string(), "Clean");
  EXPECT_EQ(m.executions_at_verdict, m.executions);
  EXPECT_EQ(m.executions_after_verdict(), 0u);
}

TEST(Lockstep, FollowerRoundTripsEqualMonitorRounds) {
  auto w = test::script("call socket scope=public as=s\ncall bind fd=$s addr=0.0.0.0:80\n"
                        "call listen fd=$s\ncall getcwd\n");
  auto m = run_scenario(test::config(w, "rsm"));
  ASSERT_TRUE(m.verdict.clean_run());
  EXPECT_EQ(m.sync_rtt_follower, 3u);
  EXPECT_EQ(m.lockstep_rounds, 3u);
  EXPECT_EQ(m.channel_roundtrips, 3u);
}

TEST(Lockstep, TransportTimeLowerBound) {
  auto w = test::script("loop 100\n  call mmap len=64\nend\n");
  auto m = run_scenario(test::config(w, "rsm"));
  ASSERT_TRUE(m.verdict.clean_run());
  EXPECT_EQ(m.sync_rtt_leader, 100u);
  EXPECT_GE(m.sim_time, 100 * 2 * 50'000);
}

TEST(Lockstep, ManyVariantsStayLive) {
  for (std::size_t n : {2, 3, 4, 5}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      auto cfg = test::config(test::shipped("server"), seed % 2 ? "ssm" : "rsm+sr");
      cfg.variants = n;
      cfg.seed = seed;
      auto m = run_scenario(cfg);
      ASSERT_TRUE(m.verdict.clean_run()) << n << ' ' << seed << ' ' << m.verdict.to_string();
      EXPECT_TRUE(m.fd_tables_aligned());
      for (std::size_t v = 1; v < n; ++v) EXPECT_EQ(m.sensitive_log(v), m.sensitive_log(0));
    }
  }
}

TEST(Lockstep, HungFollowerTimesOut) {
  // A follower that never reaches the barrier: the leader's script has one more
  // sensitive call than the follower's, and the follower's Finished notice is
  // absent because the channel is severed right before it.
  auto w = test::script("call mmap len=64\ncall mmap len=64\n");
  auto cfg = test::config(w, "baseline");
  cfg.timeout = std::chrono::milliseconds(100);
  cfg.attack = AttackSpec::parse("1:1:skip");
  cfg.sever_after = 3;
  auto m = run_scenario(cfg);
  EXPECT_FALSE(m.verdict.clean_run());
  EXPECT_EQ(m.executions_after_verdict(), 0u);
}

TEST(Lockstep, MispredictionWithTerminatePolicy) {
  auto cfg = test::config(test::shipped("setsockopt"), "rsm+sr");
  cfg.misprediction = MispredictionPolicy::Terminate;
  cfg.faults.push_back(FaultSpec::parse("1:5:1"));
  auto m = run_scenario(cfg);
  EXPECT_EQ(m.verdict.status, Verdict::Status::Terminated);
  EXPECT_EQ(m.verdict.reason, "misprediction");
  EXPECT_EQ(m.verdict.exit_code(), 3);
  EXPECT_EQ(m.executions_after_verdict(), 0u);
}

}  // namespace
}  // namespace mvx
