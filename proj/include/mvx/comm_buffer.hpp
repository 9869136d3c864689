#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <stop_token>
#include <vector>

#include "mvx/cost_model.hpp"
#include "mvx/wire.hpp"

namespace mvx {

/// A frame plus the simulated time it became available to the consumer.
struct Envelope {
  Frame frame;
  SimNanos stamp = 0;
};

/// Bounded single-producer/single-consumer FIFO. Producers block when full and
/// never drop; close() lets the consumer drain what is left.
class FrameQueue {
 public:
  explicit FrameQueue(std::size_t capacity);

  struct PushOutcome {
    bool accepted = false;
    bool blocked = false;  // had to wait for space
  };

  PushOutcome push(Envelope env, std::stop_token stop = {});
  std::optional<Envelope> pop(std::stop_token stop = {});
  std::optional<Envelope> try_pop();

  /// No further pushes; pop() returns nullopt once empty.
  void close();
  /// Lifts the bound so shutdown-time producers can never block.
  void release_capacity();

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  bool closed() const;
  std::uint64_t pushed() const { return pushed_.load(); }
  std::uint64_t popped() const { return popped_.load(); }
  std::uint64_t stalls() const { return stalls_.load(); }

 private:
  mutable std::mutex mu_;
  std::condition_variable_any not_empty_;
  std::condition_variable_any not_full_;
  std::vector<Envelope> ring_;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::size_t capacity_;
  std::deque<Envelope> overflow_;  // only used after release_capacity()
  bool unbounded_ = false;
  bool closed_ = false;
  std::atomic<std::uint64_t> pushed_{0};
  std::atomic<std::uint64_t> popped_{0};
  std::atomic<std::uint64_t> stalls_{0};
};

enum class Lane : std::uint8_t { Outgoing, Incoming };

struct Received {
  WireMessage msg;
  SimNanos stamp = 0;
};

/// Shared buffer between an in-process monitor and its connector: one lane
/// towards the network, one lane from it. Pushing notifies the lane's consumer.
class CommBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 64;

  explicit CommBuffer(std::size_t capacity = kDefaultCapacity);

  FrameQueue::PushOutcome push(Lane lane, const WireMessage& msg, SimNanos stamp,
                               std::stop_token stop = {});
  std::optional<Received> pop(Lane lane, std::stop_token stop = {});
  std::optional<Received> try_pop(Lane lane);

  FrameQueue& lane(Lane l) { return l == Lane::Outgoing ? outgoing_ : incoming_; }
  const FrameQueue& lane(Lane l) const {
    return l == Lane::Outgoing ? outgoing_ : incoming_;
  }

 private:
  FrameQueue outgoing_;
  FrameQueue incoming_;
};

/// Simulated-time model of the outgoing lane: the connector transmits one
/// message per `per_message` ns, and a producer that finds `capacity` messages
/// still waiting stalls until the oldest one departs.
class TransmitQueueModel {
 public:
  TransmitQueueModel(std::size_t capacity, SimNanos per_message);

  struct Admission {
    SimNanos admitted_at = 0;  // producer clock after any stall
    SimNanos departs_at = 0;   // when the connector puts it on the wire
    bool stalled = false;
  };

  Admission admit(SimNanos now);

 private:
  std::size_t capacity_;
  SimNanos per_message_;
  std::deque<SimNanos> waiting_;  // departure times of buffered messages
  SimNanos last_departure_ = 0;
};

}  // namespace mvx
