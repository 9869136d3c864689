#include <gtest/gtest.h>

#include <deque>
#include <random>
#include <thread>

#include "mvx/channel.hpp"
#include "mvx/comm_buffer.hpp"
#include "mvx/connector.hpp"
#include "mvx/wire.hpp"
#include "support.hpp"

namespace mvx {
namespace {

using namespace std::chrono_literals;

WireMessage random_message(std::mt19937_64& rng) {
  WireMessage m;
  m.type = static_cast<MsgType>(1 + rng() % 6);
  m.variant = static_cast<VariantId>(rng());
  m.seq = rng();
  std::string p(rng() % 300, '\0');
  for (auto& c : p) c = static_cast<char>(rng());
  m.payload = std::move(p);
  return m;
}

WireMessage numbered(std::uint64_t i) {
  return {MsgType::ResultReplication, 0, i, "payload-" + std::to_string(i)};
}

TEST(Wire, HeaderLayoutIsLittleEndian) {
  WireMessage m{MsgType::LockstepSubmit, 0x0102, 0x1122334455667788ull, "xy"};
  auto f = encode(m);
  ASSERT_EQ(f.size(), kFrameHeaderSize + 2);
  EXPECT_EQ(f[0], 1 + 2 + 8 + 2);
  EXPECT_EQ(f[1], 0);
  EXPECT_EQ(f[4], 3);
  EXPECT_EQ(f[5], 0x02);
  EXPECT_EQ(f[6], 0x01);
  EXPECT_EQ(f[7], 0x88);
  EXPECT_EQ(f[14], 0x11);
  EXPECT_EQ(f[15], 'x');
}

TEST(Wire, RandomMessagesRoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    auto m = random_message(rng);
    ASSERT_EQ(decode(encode(m)), m);
  }
}

TEST(Wire, AssemblerHandlesArbitrarySplits) {
  std::mt19937_64 rng(6);
  std::vector<WireMessage> sent;
  Frame stream;
  for (int i = 0; i < 500; ++i) {
    sent.push_back(random_message(rng));
    auto f = encode(sent.back());
    stream.insert(stream.end(), f.begin(), f.end());
  }
  FrameAssembler a;
  std::vector<WireMessage> got;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    std::size_t n = std::min<std::size_t>(1 + rng() % 97, stream.size() - pos);
    a.feed({stream.data() + pos, n});
    pos += n;
    while (auto m = a.next()) got.push_back(*m);
  }
  EXPECT_EQ(got, sent);
  EXPECT_EQ(a.buffered(), 0u);
}

TEST(Wire, MalformedFramesAreRejected) {
  auto f = encode({MsgType::Terminate, 1, 2, "abc"});
  f[4] = 99;
  EXPECT_THROW(decode(f), WireError);
  auto g = encode({MsgType::Terminate, 1, 2, "abc"});
  g.pop_back();
  EXPECT_THROW(decode(g), WireError);
}

TEST(Wire, PayloadCodecsRoundTrip) {
  CallDigest call{SyscallKind::Setsockopt, {}};
  call.args.fd = 4;
  call.args.numbers = {{"level", 6}, {"opt", 1}, {"value", -3}};
  call.args.path = "/app/x";
  call.args.endpoint = "10.0.0.1:80";
  call.args.flags = {"a", "b"};
  call.args.payload = BytePayload::of("zz");
  EXPECT_EQ(decode_call(encode_call(call)), call);
  SyscallResult r{SyscallKind::Read, 5, Errno::Again, std::string("a\0b", 3)};
  EXPECT_EQ(decode_result(encode_result(r)), r);
  for (auto esc : {Escalation::None, Escalation::TokenRejected, Escalation::ArgMismatch,
                   Escalation::ReplicationMismatch, Escalation::ProtocolViolation}) {
    for (bool fin : {false, true}) {
      LockstepEntry e{fin, esc, call};
      EXPECT_EQ(decode_entry(encode_entry(e)), e);
    }
  }
  LockstepRelease rel{LockstepRelease::Status::LeaderResult, r};
  auto back = decode_release(encode_release(rel));
  EXPECT_EQ(back.status, rel.status);
  EXPECT_EQ(back.result, r);
}

TEST(CommBuffer, PushThenPopSameBytes) {
  CommBuffer cb;
  auto m = numbered(7);
  ASSERT_TRUE(cb.push(Lane::Outgoing, m, 123).accepted);
  auto got = cb.pop(Lane::Outgoing);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->msg, m);
  EXPECT_EQ(got->stamp, 123);
  EXPECT_FALSE(cb.try_pop(Lane::Incoming));
}

TEST(CommBuffer, SecondPushBlocksUntilPop) {
  FrameQueue q(1);
  ASSERT_FALSE(q.push({encode(numbered(1)), 0}).blocked);
  std::atomic<bool> second_done{false};
  FrameQueue::PushOutcome out;
  std::thread producer([&] {
    out = q.push({encode(numbered(2)), 0});
    second_done = true;
  });
  std::this_thread::sleep_for(50ms);
  EXPECT_FALSE(second_done.load());
  ASSERT_TRUE(q.pop());
  producer.join();
  EXPECT_TRUE(out.accepted);
  EXPECT_TRUE(out.blocked);
  EXPECT_EQ(q.stalls(), 1u);
}

TEST(CommBuffer, StopReleasesBlockedProducer) {
  FrameQueue q(1);
  q.push({encode(numbered(1)), 0});
  std::stop_source src;
  std::thread producer([&] { EXPECT_FALSE(q.push({encode(numbered(2)), 0}, src.get_token()).accepted); });
  std::this_thread::sleep_for(20ms);
  src.request_stop();
  producer.join();
}

TEST(CommBuffer, CloseDrainsThenEnds) {
  FrameQueue q(4);
  for (int i = 0; i < 3; ++i) q.push({encode(numbered(i)), 0});
  q.close();
  EXPECT_FALSE(q.push({encode(numbered(9)), 0}).accepted);
  int n = 0;
  while (q.pop()) ++n;
  EXPECT_EQ(n, 3);
}

TEST(CommBuffer, StressExactlyOnceInOrder) {
  constexpr std::uint64_t kCount = 100000;
  CommBuffer cb(16);
  std::thread producer([&] {
    for (std::uint64_t i = 0; i < kCount; ++i) cb.push(Lane::Incoming, numbered(i), 0);
    cb.lane(Lane::Incoming).close();
  });
  std::uint64_t expected = 0;
  while (auto r = cb.pop(Lane::Incoming)) {
    ASSERT_EQ(r->msg.seq, expected);
    ASSERT_EQ(r->msg.payload, "payload-" + std::to_string(expected));
    ++expected;
  }
  producer.join();
  EXPECT_EQ(expected, kCount);
  EXPECT_EQ(cb.lane(Lane::Incoming).pushed(), kCount);
  EXPECT_EQ(cb.lane(Lane::Incoming).popped(), kCount);
}

// Tick-by-tick simulation of a bounded buffer drained by a server that needs
// `service` ticks per message. Returns (admission tick, departure tick) per message.
std::vector<std::pair<SimNanos, SimNanos>> simulate_queue(std::size_t capacity, SimNanos service,
                                                          std::vector<SimNanos> wants) {
  std::vector<std::pair<SimNanos, SimNanos>> out(wants.size());
  std::deque<std::size_t> queued;  // message ids in buffer (head is in service)
  SimNanos remaining = 0;
  std::size_t next = 0;
  for (SimNanos t = 0; next < wants.size() || !queued.empty(); ++t) {
    // Service first: a message whose last tick ends at t frees its slot at t.
    if (!queued.empty() && remaining == 0) {
      out[queued.front()].second = t;
      queued.pop_front();
      if (!queued.empty()) remaining = service;
    }
    while (next < wants.size() && queued.size() < capacity && wants[next] <= t) {
      out[next].first = t;
      if (queued.empty()) remaining = service;
      queued.push_back(next++);
      // Later messages of the producer can't be issued before this admission.
      if (next < wants.size()) wants[next] = std::max(wants[next], t);
    }
    if (!queued.empty() && remaining > 0) --remaining;
  }
  return out;
}

TEST(TransmitQueue, BurstOfTenThroughCapacityFourMatchesSimulation) {
  TransmitQueueModel model(4, 3);
  std::vector<SimNanos> wants(10, 0);
  auto oracle = simulate_queue(4, 3, wants);
  int stalls = 0;
  SimNanos now = 0;
  for (std::size_t i = 0; i < wants.size(); ++i) {
    auto a = model.admit(now);
    now = a.admitted_at;
    EXPECT_EQ(a.admitted_at, oracle[i].first) << i;
    EXPECT_EQ(a.departs_at, oracle[i].second) << i;
    stalls += a.stalled;
  }
  EXPECT_GE(stalls, 1);
  EXPECT_EQ(stalls, 6);
}

TEST(TransmitQueue, RandomArrivalsMatchSimulation) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t cap = 1 + rng() % 5;
    SimNanos service = 1 + static_cast<SimNanos>(rng() % 5);
    std::vector<SimNanos> wants;
    SimNanos t = 0;
    for (int i = 0; i < 30; ++i) {
      t += static_cast<SimNanos>(rng() % 6);
      wants.push_back(t);
    }
    auto oracle = simulate_queue(cap, service, wants);
    TransmitQueueModel model(cap, service);
    SimNanos now = 0;
    for (std::size_t i = 0; i < wants.size(); ++i) {
      // The producer's clock: its own schedule, pushed back by earlier stalls.
      now = std::max(now, wants[i]);
      auto a = model.admit(now);
      now = a.admitted_at;
      ASSERT_EQ(a.admitted_at, oracle[i].first) << trial << '/' << i;
      ASSERT_EQ(a.departs_at, oracle[i].second) << trial << '/' << i;
    }
  }
}

TEST(Channel, SpecParsing) {
  auto s = ChannelSpec::parse("sim:120");
  EXPECT_EQ(s.flavor, ChannelSpec::Flavor::Simulated);
  EXPECT_EQ(s.latency_us, 120);
  auto t = ChannelSpec::parse("tcp:0");
  EXPECT_EQ(t.flavor, ChannelSpec::Flavor::LoopbackSocket);
  EXPECT_EQ(t.latency_us, 50);
  EXPECT_THROW(ChannelSpec::parse("udp:1"), ConfigError);
  EXPECT_THROW(ChannelSpec::parse("sim:-3"), ConfigError);
  EXPECT_THROW(ChannelSpec::parse("tcp:99999"), ConfigError);
}

std::vector<SimNanos> send_pattern(Channel& ch, std::uint64_t n) {
  auto links = ch.links();
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto& l = links[i % links.size()];
    ch.send(l.from, l.to, numbered(i), static_cast<SimNanos>(i * 700));
  }
  std::vector<SimNanos> all;
  for (const auto& l : links) {
    auto a = ch.arrivals(l);
    all.insert(all.end(), a.begin(), a.end());
  }
  return all;
}

TEST(Channel, SimulatedIsBitDeterministicUnderSeed) {
  auto a = make_channel(ChannelSpec::parse("sim:50"), star_links(3), 42);
  auto b = make_channel(ChannelSpec::parse("sim:50"), star_links(3), 42);
  auto c = make_channel(ChannelSpec::parse("sim:50"), star_links(3), 43);
  auto ta = send_pattern(*a, 2000), tb = send_pattern(*b, 2000), tc = send_pattern(*c, 2000);
  EXPECT_EQ(ta, tb);
  EXPECT_NE(ta, tc);
}

TEST(Channel, ArrivalsRespectLatencyAndNeverReorder) {
  auto ch = make_channel(ChannelSpec::parse("sim:50"), star_links(2), 1);
  Link l{connector_node(0), connector_node(1)};
  for (int i = 0; i < 1000; ++i) ch->send(l.from, l.to, numbered(i), (i / 10) * 1000);
  auto arr = ch->arrivals(l);
  ASSERT_EQ(arr.size(), 1000u);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_GE(arr[i], (i / 10) * 1000 + 50'000);
    EXPECT_LE(arr[i], (i / 10) * 1000 + 50'000 + 1'000 + 1'000'000);
    if (i) EXPECT_GE(arr[i], arr[i - 1]);
  }
  std::stop_source s;
  for (int i = 0; i < 1000; ++i) {
    auto r = ch->recv(l.to, s.get_token());
    ASSERT_TRUE(r.ok());
    EXPECT_EQ(r.delivery.msg.seq, static_cast<std::uint64_t>(i));
    EXPECT_EQ(r.delivery.arrival, arr[i]);
  }
}

TEST(Channel, RoundtripCountsOnceAndDeadPeerTimesOut) {
  auto ch = make_channel(ChannelSpec::parse("sim:50"), star_links(2), 1);
  std::stop_source s;
  std::thread peer([&] {
    auto r = ch->recv(monitor_node(0), s.get_token());
    ASSERT_TRUE(r.ok());
    ch->send(monitor_node(0), monitor_node(1), {MsgType::LockstepRelease, 0, 0, {}}, r.delivery.arrival);
  });
  auto r = ch->roundtrip(monitor_node(1), monitor_node(0), {MsgType::LockstepSubmit, 1, 0, {}}, 0,
                         s.get_token(), 2000ms);
  peer.join();
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r.delivery.msg.type, MsgType::LockstepRelease);
  EXPECT_GE(r.delivery.arrival, 2 * 50'000);
  EXPECT_EQ(ch->roundtrips(), 1u);

  auto dead = ch->roundtrip(monitor_node(1), monitor_node(0), {MsgType::LockstepSubmit, 1, 1, {}}, 0,
                            s.get_token(), 30ms);
  EXPECT_EQ(dead.status, RecvStatus::Timeout);
}

TEST(Channel, SeverClosesEveryEndpoint) {
  auto ch = make_channel(ChannelSpec::parse("sim:50"), star_links(2), 1);
  ch->sever_after(3);
  Link l{connector_node(0), connector_node(1)};
  int ok = 0;
  for (int i = 0; i < 6; ++i) ok += ch->send(l.from, l.to, numbered(i), 0);
  EXPECT_EQ(ok, 3);
  EXPECT_TRUE(ch->severed());
  std::stop_source s;
  EXPECT_EQ(ch->recv(connector_node(0), s.get_token(), 100ms).status, RecvStatus::Closed);
}

TEST(Channel, LoopbackSocketCarriesTheSameArrivals) {
  auto sim = make_channel(ChannelSpec::parse("sim:50"), star_links(2), 9);
  auto tcp = make_channel(ChannelSpec::parse("tcp:0"), star_links(2), 9);
  Link l{connector_node(0), connector_node(1)};
  std::stop_source s;
  for (int i = 0; i < 200; ++i) {
    sim->send(l.from, l.to, numbered(i), i * 100);
    tcp->send(l.from, l.to, numbered(i), i * 100);
  }
  for (int i = 0; i < 200; ++i) {
    auto a = sim->recv(l.to, s.get_token());
    auto b = tcp->recv(l.to, s.get_token(), 5000ms);
    ASSERT_TRUE(a.ok());
    ASSERT_TRUE(b.ok());
    EXPECT_EQ(a.delivery.msg, b.delivery.msg);
    EXPECT_EQ(a.delivery.arrival, b.delivery.arrival);
  }
  tcp->close();
  EXPECT_EQ(tcp->recv(l.to, s.get_token(), 5000ms).status, RecvStatus::Closed);
  EXPECT_EQ(sim->bytes(), tcp->bytes());
}

struct ConnectorPair {
  std::unique_ptr<Channel> channel;
  CommBuffer a{8}, b{8};
  std::atomic<int> failures{0};
  std::unique_ptr<Connector> ca, cb;

  explicit ConnectorPair(const char* spec) {
    channel = make_channel(ChannelSpec::parse(spec), star_links(2), 3);
    ca = std::make_unique<Connector>(0, a, *channel, std::vector<NodeId>{connector_node(1)},
                                     [this] { ++failures; });
    cb = std::make_unique<Connector>(1, b, *channel, std::vector<NodeId>{connector_node(0)},
                                     [this] { ++failures; });
    ca->start();
    cb->start();
  }
  void shutdown() {
    ca->drain_outgoing();
    cb->drain_outgoing();
    channel->close();
    ca->finish_incoming();
    cb->finish_incoming();
  }
};

class ConnectorTest : public ::testing::TestWithParam<const char*> {};

TEST_P(ConnectorTest, ReplicationReachesFollowerAfterLatency) {
  ConnectorPair p(GetParam());
  p.a.push(Lane::Outgoing, numbered(1), 10'000);
  auto got = p.b.pop(Lane::Incoming);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->msg, numbered(1));
  EXPECT_GE(got->stamp, 10'000 + 50'000);
  p.shutdown();
  EXPECT_EQ(p.failures.load(), 0);
}

TEST_P(ConnectorTest, GracefulShutdownDeliversEverythingQueued) {
  ConnectorPair p(GetParam());
  constexpr std::uint64_t kPushed = 500;
  std::uint64_t consumed = 0;
  std::thread producer([&] {
    for (std::uint64_t i = 0; i < kPushed; ++i) p.a.push(Lane::Outgoing, numbered(i), 0);
  });
  // Consume part of the stream concurrently; the rest stays queued.
  while (consumed < 123) {
    auto r = p.b.pop(Lane::Incoming);
    ASSERT_TRUE(r);
    ASSERT_EQ(r->msg.seq, consumed);
    ++consumed;
  }
  producer.join();
  p.shutdown();
  std::uint64_t drained = 0;
  while (auto r = p.b.try_pop(Lane::Incoming)) {
    ASSERT_EQ(r->msg.seq, consumed + drained);
    ++drained;
  }
  EXPECT_EQ(consumed + drained, kPushed);
  EXPECT_EQ(p.ca->sent(), kPushed);
  EXPECT_EQ(p.cb->received(), kPushed);
  EXPECT_EQ(p.failures.load(), 0);
}

TEST_P(ConnectorTest, SeveredChannelInjectsTerminate) {
  ConnectorPair p(GetParam());
  p.channel->sever_after(2);
  for (int i = 0; i < 5; ++i) p.a.push(Lane::Outgoing, numbered(i), 0);
  std::vector<MsgType> seen;
  while (auto r = p.b.pop(Lane::Incoming)) {
    seen.push_back(r->msg.type);
    if (r->msg.type == MsgType::Terminate) {
      EXPECT_EQ(r->msg.payload, "transport");
      break;
    }
  }
  ASSERT_FALSE(seen.empty());
  EXPECT_EQ(seen.back(), MsgType::Terminate);
  EXPECT_GE(p.failures.load(), 1);
  p.ca->abort();
  p.cb->abort();
}

INSTANTIATE_TEST_SUITE_P(Flavors, ConnectorTest, ::testing::Values("sim:50", "tcp:0"),
                         [](const auto& info) { return std::string(info.param).substr(0, 3); });

}  // namespace
}  // namespace mvx
