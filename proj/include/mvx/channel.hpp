#pragma once

#include <atomic>
#include <chrono>
#include <compare>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "mvx/cost_model.hpp"
#include "mvx/wire.hpp"

namespace mvx {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NodeId = std::uint16_t;

/// Endpoint numbering: every variant has a connector node and a cross-process
/// monitor node.
constexpr NodeId connector_node(VariantId v) { return static_cast<NodeId>(2 * v); }
constexpr NodeId monitor_node(VariantId v) { return static_cast<NodeId>(2 * v + 1); }

struct Link {
  NodeId from = 0;
  NodeId to = 0;
  auto operator<=>(const Link&) const = default;
};

/// Links for a leader (variant 0) and `variants - 1` followers: connector and
/// monitor endpoints of each follower paired with the leader's, both ways.
std::vector<Link> star_links(std::size_t variants);

struct ChannelSpec {
  enum class Flavor : std::uint8_t { Simulated, LoopbackSocket };
  Flavor flavor = Flavor::Simulated;
  double latency_us = 50.0;
  std::uint16_t port = 0;  // 0 picks an ephemeral port

  /// `sim:<latency_us>` or `tcp:<port>`; tcp keeps the default latency model.
  static ChannelSpec parse(std::string_view text);
  std::string to_string() const;
};

/// One-way delay per link: latency plus seeded uniform jitter, never
/// reordering messages on a link.
struct LatencyModel {
  SimNanos latency = 50'000;
  SimNanos jitter = 1'000;
  std::uint64_t seed = 0;

  static LatencyModel for_latency_us(double us, std::uint64_t seed);
};

enum class RecvStatus : std::uint8_t { Ok, Closed, Stopped, Timeout };

struct Delivery {
  WireMessage msg;
  SimNanos arrival = 0;
};

struct RecvResult {
  RecvStatus status = RecvStatus::Closed;
  Delivery delivery;
  bool ok() const { return status == RecvStatus::Ok; }
};

/// Message network between endpoints. Each link has exactly one sending thread;
/// each endpoint has exactly one receiving thread.
class Channel {
 public:
  Channel(std::vector<Link> links, LatencyModel model);
  virtual ~Channel();
  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  /// False once the channel is closed or severed.
  bool send(NodeId from, NodeId to, const WireMessage& msg, SimNanos stamp);

  RecvResult recv(NodeId node, std::stop_token stop,
                  std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  /// send() followed by recv() on `from`; counts one synchronous round trip.
  RecvResult roundtrip(NodeId from, NodeId to, const WireMessage& msg,
                       SimNanos stamp, std::stop_token stop,
                       std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  /// Graceful: in-flight messages are still delivered, then recv() reports Closed.
  virtual void close();
  /// Link failure: every endpoint sees Closed immediately.
  virtual void sever();
  /// Fault injection: sever once `n` messages have been sent.
  void sever_after(std::uint64_t n) { sever_after_.store(n); }

  std::uint64_t messages() const { return messages_.load(); }
  std::uint64_t bytes() const { return bytes_.load(); }
  std::uint64_t roundtrips() const { return roundtrips_.load(); }
  bool severed() const { return severed_.load(); }

  /// Arrival times of every message sent on the link, in send order.
  std::vector<SimNanos> arrivals(Link link) const;
  const std::vector<Link>& links() const { return link_list_; }

 protected:
  virtual void transmit(const Link& link, const Frame& frame, SimNanos arrival) = 0;
  void deliver(NodeId to, Delivery d);
  /// Marks the endpoint's inbox closed once all queued messages are consumed.
  void close_inbox(NodeId node);
  void close_all_inboxes();

 private:
  struct LinkState {
    std::mt19937_64 rng;
    SimNanos last = 0;
    std::vector<SimNanos> arrivals;
  };
  struct Inbox {
    std::mutex mu;
    std::condition_variable_any cv;
    std::deque<Delivery> queue;
    bool closed = false;
  };

  Inbox& inbox(NodeId node);

  std::vector<Link> link_list_;
  LatencyModel model_;
  std::map<Link, LinkState> links_;
  std::map<NodeId, std::unique_ptr<Inbox>> inboxes_;
  std::atomic<bool> closed_{false};
  std::atomic<bool> severed_{false};
  std::atomic<std::uint64_t> messages_{0};
  std::atomic<std::uint64_t> bytes_{0};
  std::atomic<std::uint64_t> roundtrips_{0};
  std::atomic<std::uint64_t> sever_after_{0};
};

/// In-memory flavor: delivery is immediate in wall time; simulated arrival
/// times come from the latency model.
class SimulatedChannel final : public Channel {
 public:
  SimulatedChannel(std::vector<Link> links, LatencyModel model);
  void close() override;

 protected:
  void transmit(const Link& link, const Frame& frame, SimNanos arrival) override;
};

/// Real TCP over 127.0.0.1, one connection per link. Each frame travels as
/// `[u64 arrival][frame]` so simulated timing matches the in-memory flavor.
class LoopbackSocketChannel final : public Channel {
 public:
  LoopbackSocketChannel(std::vector<Link> links, LatencyModel model,
                        std::uint16_t port);
  ~LoopbackSocketChannel() override;

  void close() override;
  void sever() override;
  std::uint16_t port() const { return port_; }

 protected:
  void transmit(const Link& link, const Frame& frame, SimNanos arrival) override;

 private:
  struct Conn;
  void reader(Conn& conn);

  std::uint16_t port_ = 0;
  std::vector<std::unique_ptr<Conn>> conns_;
  std::map<Link, Conn*> by_link_;
  std::mutex close_mu_;
  std::map<NodeId, int> open_inbound_;  // live reader count per endpoint
};

std::unique_ptr<Channel> make_channel(const ChannelSpec& spec,
                                      std::vector<Link> links,
                                      std::uint64_t seed);

}  // namespace mvx
