#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include "mvx/channel.hpp"
#include "mvx/replication.hpp"
#include "mvx/runtime.hpp"
#include "mvx/wire.hpp"

namespace mvx {

struct Deposit {
  LockstepEntry entry;
  SimNanos stamp = 0;  // when the submission reached the monitor
  Placement placement = Placement::LeaderOnly;  // meaningful for the leader's entry
};

/// Per-variant FIFO slots. Round k pairs each variant's k-th sensitive call.
class LockstepBarrier {
 public:
  explicit LockstepBarrier(std::size_t variants);

  void deposit(VariantId v, Deposit d);

  enum class Wait : std::uint8_t { Ready, Stopped, Timeout };

  /// Ready once every variant has an entry queued, or as soon as any queued
  /// front entry carries an escalation.
  Wait wait_round(std::stop_token stop, std::chrono::milliseconds timeout);

  /// Pops the front entry of every slot (nullopt where a slot is empty).
  std::vector<std::optional<Deposit>> take_round();

  std::uint64_t epoch() const;
  std::size_t variants() const { return slots_.size(); }

 private:
  bool ready_locked() const;

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::vector<std::deque<Deposit>> slots_;
  std::uint64_t epoch_ = 0;
};

struct RoundOutcome {
  enum class Kind : std::uint8_t { Proceed, AllFinished, Diverge };
  Kind kind = Kind::Proceed;
  std::string reason;
};

/// Pure equivalence check over one round's entries.
RoundOutcome evaluate_round(const std::vector<std::optional<Deposit>>& round);

struct LockstepConfig {
  std::chrono::milliseconds timeout{5000};
  SimNanos compare_cost = 100;
};

/// Cross-process monitor, co-located with the leader. Follower submissions
/// arrive over the channel; a dedicated monitor thread resolves rounds.
class DcpMon {
 public:
  DcpMon(Channel& channel, RunControl& control, std::size_t variants,
         LockstepConfig config);
  ~DcpMon();
  DcpMon(const DcpMon&) = delete;
  DcpMon& operator=(const DcpMon&) = delete;

  void start();
  void stop();

  struct Decision {
    enum class Kind : std::uint8_t { Proceed, Finished, Stop };
    Kind kind = Kind::Stop;
    SimNanos ready_at = 0;
  };

  /// Leader's deposit; blocks until the round resolves.
  Decision submit_leader(const LockstepEntry& entry, Placement placement,
                         SimNanos stamp);
  /// Leader's result for a LeaderOnly round, released to every follower.
  void publish(const SyscallResult& result, SimNanos done_at);

  std::uint64_t rounds() const { return rounds_.load(); }

  /// Entries of the round that produced a divergence, for the run report.
  std::vector<std::optional<Deposit>> divergent_round() const;

 private:
  void receiver(std::stop_token stop);
  void monitor(std::stop_token stop);
  void post(Decision d);
  void release_followers(LockstepRelease::Status status,
                         const SyscallResult& result, std::uint64_t round,
                         SimNanos stamp);

  Channel& channel_;
  RunControl& control_;
  std::size_t variants_;
  LockstepConfig config_;
  LockstepBarrier barrier_;

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  std::optional<Decision> decision_;
  std::optional<std::pair<SyscallResult, SimNanos>> published_;
  std::vector<std::optional<Deposit>> divergent_;

  std::atomic<std::uint64_t> rounds_{0};
  std::jthread receiver_;
  std::jthread monitor_;
};

/// Follower side of lockstep: one synchronous round trip per sensitive call.
class DcpAgent {
 public:
  DcpAgent(VariantId variant, Channel& channel, RunControl& control,
           LockstepConfig config);

  struct Outcome {
    enum class Kind : std::uint8_t { LeaderResult, ExecuteLocally, Stop };
    Kind kind = Kind::Stop;
    SyscallResult result;
    SimNanos arrival = 0;
  };

  Outcome submit(const LockstepEntry& entry, std::uint64_t index, SimNanos stamp);
  /// One-way end-of-script notice; the follower does not wait.
  void finish(std::uint64_t index, SimNanos stamp);

 private:
  VariantId variant_;
  Channel& channel_;
  RunControl& control_;
  LockstepConfig config_;
};

}  // namespace mvx
