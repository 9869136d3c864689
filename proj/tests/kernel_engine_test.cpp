#include <gtest/gtest.h>

#include "mvx/attack.hpp"
#include "mvx/kernel.hpp"
#include "mvx/variant_engine.hpp"
#include "support.hpp"

namespace mvx {
namespace {

SyscallEvent ev(SyscallKind k, std::uint64_t seq = 0) {
  SyscallEvent e;
  e.kind = k;
  e.seq = seq;
  return e;
}

SyscallEvent open_ev(std::string path, std::vector<std::string> flags = {"rdonly"}) {
  auto e = ev(SyscallKind::Open);
  e.args.path = std::move(path);
  e.args.flags = std::move(flags);
  return e;
}

SyscallEvent fd_ev(SyscallKind k, int fd) {
  auto e = ev(k);
  e.args.fd = fd;
  return e;
}

TEST(Engine, FirstEventOfScript) {
  auto w = WorkloadScript::parse("call getcwd\ncall exit\n");
  VariantEngine e(w, 0);
  auto first = e.step();
  ASSERT_TRUE(first);
  EXPECT_EQ(first->kind, SyscallKind::Getcwd);
  EXPECT_EQ(first->seq, 0u);
}

TEST(Engine, EmptyScriptFinishes) {
  auto w = WorkloadScript::parse("# nothing\n");
  VariantEngine e(w, 0);
  EXPECT_FALSE(e.step());
  EXPECT_EQ(w.call_count(), 0u);
}

TEST(Engine, LoopsUnrollWithConsecutiveSeq) {
  auto w = WorkloadScript::parse("loop 3\n  call read fd=3 len=8\nend\n");
  EXPECT_EQ(w.call_count(), 3u);
  VariantEngine e(w, 1);
  for (std::uint64_t i = 0; i < 3; ++i) {
    auto x = e.step();
    ASSERT_TRUE(x);
    EXPECT_EQ(x->seq, i);
    EXPECT_EQ(x->kind, SyscallKind::Read);
    EXPECT_EQ(x->variant, 1);
    e.complete(*x, {});
  }
  EXPECT_FALSE(e.step());
}

TEST(Engine, NestedLoopsAndBindings) {
  auto w = WorkloadScript::parse(
      "file /x \"hi\"\nloop 2\n loop 3\n  call open path=/x as=f\n  call close fd=$f\n end\nend\n");
  EXPECT_EQ(w.call_count(), 12u);
  EmulatedKernel k(w.files, {});
  VariantEngine e(w, 0);
  int n = 0;
  while (auto x = e.step()) {
    auto r = k.execute(*x);
    EXPECT_TRUE(r.ok());
    if (x->kind == SyscallKind::Close) EXPECT_EQ(*x->args.fd, 3);
    e.complete(*x, r);
    ++n;
  }
  EXPECT_EQ(n, 12);
}

TEST(Engine, ParseErrorsCarryLineNumbers) {
  try {
    WorkloadScript::parse("call getcwd\nloop x\nend\n");
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
  EXPECT_THROW(WorkloadScript::parse("loop 2\ncall getcwd\n"), ScenarioError);
  EXPECT_THROW(WorkloadScript::parse("end\n"), ScenarioError);
}

TEST(Engine, AttacksPerturbExactlyOneCall) {
  auto w = WorkloadScript::parse("call getcwd\ncall brk size=10\ncall brk size=20\n");
  VariantEngine clean(w, 0), skip(w, 0), extra(w, 0), perturb(w, 0);
  skip.arm(AttackSpec::parse("0:1:skip"));
  extra.arm(AttackSpec::parse("0:1:extra:mprotect"));
  perturb.arm(AttackSpec::parse("0:1:perturb:size:5"));
  auto drain = [](VariantEngine& e) {
    std::vector<SyscallEvent> out;
    while (auto x = e.step()) {
      e.complete(*x, {});
      out.push_back(*x);
    }
    return out;
  };
  auto c = drain(clean), s = drain(skip), x = drain(extra), p = drain(perturb);
  ASSERT_EQ(c.size(), 3u);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[1].args.numbers.at("size"), 20);
  ASSERT_EQ(x.size(), 4u);
  EXPECT_EQ(x[1].kind, SyscallKind::Mprotect);
  EXPECT_EQ(x[2].kind, SyscallKind::Brk);
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p[1].args.numbers.at("size"), 15);
  EXPECT_EQ(p[2].args, c[2].args);
}

TEST(Attack, ParsesEveryForm) {
  EXPECT_EQ(AttackSpec::parse("1:4:token-flip:ff").mask, 255u);
  EXPECT_THROW(AttackSpec::parse("1:4:token-flip:0"), ScenarioError);
  EXPECT_EQ(AttackSpec::parse("1:4:token-replay").kind, AttackSpec::Kind::TokenReplay);
  EXPECT_EQ(AttackSpec::parse("1:4:forge-restart").kind, AttackSpec::Kind::ForgedRestart);
  EXPECT_EQ(AttackSpec::parse("0:2:extra:connect").extra_kind, SyscallKind::Connect);
  EXPECT_THROW(AttackSpec::parse("0:2:explode"), ScenarioError);
  EXPECT_THROW(AttackSpec::parse("x:2:skip"), ScenarioError);
  EXPECT_THROW(AttackSpec::parse("0:2:extra:ioctl"), ScenarioError);
}

TEST(Kernel, OpenReturnsLowestFreeFd) {
  EmulatedKernel k({{"/app/data/a.txt", "x"}}, {"/app", "/app"});
  EXPECT_EQ(k.fds(), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(k.execute(open_ev("/app/data/a.txt")).ret, 3);
  EXPECT_EQ(k.execute(open_ev("/app/data/a.txt")).ret, 4);
  EXPECT_TRUE(k.execute(fd_ev(SyscallKind::Close, 3)).ok());
  EXPECT_EQ(k.execute(open_ev("/app/data/a.txt")).ret, 3);
}

TEST(Kernel, ClosedFdIsBadFd) {
  EmulatedKernel k;
  auto r = fd_ev(SyscallKind::Read, 9);
  r.args.numbers["len"] = 4;
  EXPECT_EQ(k.execute(r).err, Errno::BadFd);
  EXPECT_EQ(k.execute(fd_ev(SyscallKind::Close, 9)).err, Errno::BadFd);
}

TEST(Kernel, MissingFileIsNoEnt) {
  EmulatedKernel k;
  EXPECT_EQ(k.execute(open_ev("/nope")).err, Errno::NoEnt);
  EXPECT_TRUE(k.execute(open_ev("/nope", {"create", "wronly"})).ok());
  EXPECT_TRUE(k.file_exists("/nope"));
}

TEST(Kernel, ReadYourWrites) {
  EmulatedKernel k;
  auto fd = k.execute(open_ev("/app/f", {"create", "rdwr"})).ret;
  auto w = fd_ev(SyscallKind::Write, static_cast<int>(fd));
  w.buffer = "hello";
  w.args.payload = BytePayload::of(w.buffer);
  EXPECT_EQ(k.execute(w).ret, 5);
  auto seek = fd_ev(SyscallKind::Lseek, static_cast<int>(fd));
  seek.args.numbers["offset"] = 0;
  EXPECT_EQ(k.execute(seek).ret, 0);
  auto r = fd_ev(SyscallKind::Read, static_cast<int>(fd));
  r.args.numbers["len"] = 64;
  auto got = k.execute(r);
  EXPECT_EQ(got.payload, "hello");
  EXPECT_EQ(got.ret, 5);
}

TEST(Kernel, FollowerAdoptsSocketReadWithoutExternalIo) {
  EmulatedKernel leader, follower;
  std::vector<SyscallEvent> calls;
  auto s = ev(SyscallKind::Socket, 0);
  s.args.flags = {"public"};
  calls.push_back(s);
  auto b = fd_ev(SyscallKind::Bind, 3);
  b.seq = 1;
  b.args.endpoint = "0.0.0.0:80";
  calls.push_back(b);
  auto l = fd_ev(SyscallKind::Listen, 3);
  l.seq = 2;
  calls.push_back(l);
  auto a = fd_ev(SyscallKind::Accept, 3);
  a.seq = 3;
  calls.push_back(a);
  auto r = fd_ev(SyscallKind::Read, 4);
  r.seq = 4;
  r.args.numbers["len"] = 5;
  calls.push_back(r);

  SyscallResult last;
  for (const auto& c : calls) {
    auto lr = leader.execute(c);
    ASSERT_TRUE(lr.ok()) << to_string(c.kind);
    auto fr = follower.apply_replicated(c, lr);
    EXPECT_EQ(fr, lr);
    last = lr;
  }
  EXPECT_EQ(last.payload, "GET /");
  EXPECT_GT(leader.external_io(), 0u);
  EXPECT_EQ(follower.external_io(), 0u);
  EXPECT_TRUE(follower.is_shadow(3));
  EXPECT_TRUE(follower.is_shadow(4));
  EXPECT_EQ(leader.fds(), follower.fds());
}

TEST(Kernel, ReplicatedOpenRegistersShadowAtSameNumber) {
  EmulatedKernel follower;
  SyscallResult leader{SyscallKind::Open, 5, Errno::None, {}};
  follower.apply_replicated(open_ev("/var/log/x"), leader);
  EXPECT_TRUE(follower.is_shadow(5));
  EXPECT_EQ(follower.fds(), (std::vector<int>{0, 1, 2, 5}));
  EXPECT_FALSE(follower.file_exists("/var/log/x"));
}

TEST(Kernel, ReplicationKindMismatchThrows) {
  EmulatedKernel follower;
  auto r = fd_ev(SyscallKind::Read, 0);
  r.args.numbers["len"] = 1;
  SyscallResult write_result{SyscallKind::Write, 1, Errno::None, {}};
  EXPECT_THROW(follower.apply_replicated(r, write_result), ReplicationMismatch);
}

TEST(Kernel, TransientFaultsExpire) {
  EmulatedKernel k;
  auto s = ev(SyscallKind::Socket, 7);
  k.inject_transient_failure(7, 2);
  EXPECT_EQ(k.execute(s).err, Errno::Again);
  EXPECT_EQ(k.execute(s).err, Errno::Again);
  EXPECT_TRUE(k.execute(s).ok());
}

TEST(Kernel, SetsockoptOnFileIsNotSock) {
  EmulatedKernel k({{"/f", ""}}, {});
  auto fd = k.execute(open_ev("/f")).ret;
  auto so = fd_ev(SyscallKind::Setsockopt, static_cast<int>(fd));
  so.args.numbers = {{"level", 6}, {"opt", 1}, {"value", 1}};
  EXPECT_EQ(k.execute(so).err, Errno::NotSock);
}

}  // namespace
}  // namespace mvx
