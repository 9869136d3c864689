#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

#include "mvx/channel.hpp"
#include "mvx/comm_buffer.hpp"

namespace mvx {

/// Proxy between one variant's in-process monitor and the network. It runs
/// outside the monitored variant, so nothing it does is ever intercepted.
///
/// The egress pump drains the outgoing lane to every peer; the ingress pump
/// fills the incoming lane from the channel. Neither reorders within a lane.
class Connector {
 public:
  /// Called once if the channel closes before shutdown() was requested.
  using FailureHandler = std::function<void()>;

  Connector(VariantId variant, CommBuffer& buffer, Channel& channel,
            std::vector<NodeId> peers, FailureHandler on_failure);
  ~Connector();
  Connector(const Connector&) = delete;
  Connector& operator=(const Connector&) = delete;

  void start();

  /// First half of graceful shutdown: closes the outgoing lane and waits until
  /// everything queued has been put on the wire.
  void drain_outgoing();
  /// Second half, after the channel is closed: lets ingress deliver what is in
  /// flight, then stops. Incoming-lane capacity is lifted so this never blocks.
  void finish_incoming();
  /// Unconditional stop for aborted runs.
  void abort();

  std::uint64_t sent() const { return sent_.load(); }
  std::uint64_t received() const { return received_.load(); }
  bool failed() const { return failed_.load(); }

 private:
  void egress(std::stop_token stop);
  void ingress(std::stop_token stop);
  void fail();

  VariantId variant_;
  CommBuffer& buffer_;
  Channel& channel_;
  std::vector<NodeId> peers_;
  FailureHandler on_failure_;
  std::atomic<bool> shutting_down_{false};
  std::atomic<bool> failed_{false};
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> received_{0};
  std::jthread egress_;
  std::jthread ingress_;
};

}  // namespace mvx
