#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <vector>

#include "mvx/cost_model.hpp"
#include "mvx/filemap.hpp"
#include "mvx/kernel.hpp"
#include "mvx/syscall_model.hpp"
#include "mvx/variant_engine.hpp"

namespace mvx {

struct Verdict {
  enum class Status : std::uint8_t { Clean, Divergence, Terminated };

  Status status = Status::Clean;
  std::string reason;
  std::optional<std::uint64_t> round;

  static Verdict clean() { return {}; }
  static Verdict divergence(std::string reason, std::optional<std::uint64_t> round = {}) {
    return {Status::Divergence, std::move(reason), round};
  }
  static Verdict terminated(std::string reason) {
    return {Status::Terminated, std::move(reason), std::nullopt};
  }

  bool clean_run() const { return status == Status::Clean; }
  /// Clean 0, Divergence 2, Terminated 3.
  int exit_code() const;
  /// `Clean`, `Divergence` or `Terminated`.
  std::string_view status_name() const;
  /// Status plus reason and round, e.g. `Divergence(kind mismatch, round 7)`.
  std::string to_string() const;
};

/// Run-wide stop authority. Every syscall execution passes through the gate;
/// once a verdict is recorded the gate admits nothing, in any variant.
class RunControl {
 public:
  /// Runs `fn` unless the run is stopped. Returns whether it ran.
  template <class F>
  bool execute(F&& fn) {
    std::shared_lock lock(gate_);
    if (stopped_) return false;
    fn();
    executions_.fetch_add(1);
    return true;
  }

  /// Records the first verdict and stops every variant. Later calls are no-ops
  /// and return the verdict already recorded.
  Verdict terminate_all(Verdict v);

  bool stopped() const;
  Verdict verdict() const;
  std::stop_token token() const { return stop_.get_token(); }

  std::uint64_t executions() const { return executions_.load(); }
  /// Gate-admitted executions at the moment the verdict was recorded.
  std::uint64_t executions_at_verdict() const;

 private:
  mutable std::shared_mutex gate_;
  bool stopped_ = false;
  Verdict verdict_;
  std::uint64_t at_verdict_ = 0;
  std::stop_source stop_;
  std::atomic<std::uint64_t> executions_{0};
};

/// Per-variant counters, written only by the variant's own thread.
struct VariantCounters {
  std::uint64_t syscalls = 0;
  std::uint64_t sensitive = 0;
  std::uint64_t nonsensitive = 0;
  std::uint64_t lockstep_rounds = 0;
  std::uint64_t dipmon_handles = 0;
  std::uint64_t sync_rtt = 0;          // lockstep rounds this variant waited on
  std::uint64_t sync_rtt_dipmon = 0;   // blocking network waits inside the in-process monitor
  std::uint64_t async_msgs = 0;        // messages pushed to the outgoing lane
  std::uint64_t arg_broadcasts = 0;
  std::array<std::uint64_t, kAllSyscallKinds.size()> replications{};  // ResultReplication by kind
  std::uint64_t consumed = 0;          // incoming-lane messages taken by the monitor
  std::uint64_t sim_stalls = 0;        // modelled outgoing-lane backpressure
  std::uint64_t cb_stalls = 0;         // real blocking pushes
  std::uint64_t mispredictions = 0;
  std::uint64_t retries = 0;
  std::uint64_t escalations = 0;
  std::uint64_t external_io = 0;       // copied from the kernel after the run

  std::uint64_t replications_of(SyscallKind k) const {
    return replications[static_cast<std::size_t>(k)];
  }
};

enum class Path : std::uint8_t { Lockstep, InProcess, Escalated };

/// One entry per intercepted call, in issue order.
struct ExecRecord {
  std::uint64_t seq = 0;
  SyscallKind kind = SyscallKind::Getcwd;
  NormalizedArgs args;
  Sensitivity cls = Sensitivity::Sensitive;
  Path path = Path::Lockstep;
  bool executed = false;
  std::uint64_t exec_index = 0;  // gate admissions preceding this execution
  SyscallResult result;
};

/// Everything a variant owns: its kernel, file map, clock, counters and log.
struct VariantState {
  VariantState(VariantId id, VariantRole role, EmulatedKernel kernel)
      : id(id), role(role), kernel(std::move(kernel)), fmap(FileMap::with_std_streams()) {}

  VariantId id;
  VariantRole role;
  EmulatedKernel kernel;
  FileMap fmap;
  SimNanos clock = 0;
  VariantCounters counters;
  std::vector<ExecRecord> log;
  std::uint64_t last_exec_index = 0;

  bool leader() const { return role == VariantRole::Leader; }

  /// Executes locally through the gate. False if the run was stopped.
  bool execute(RunControl& control, const SyscallEvent& ev, SyscallResult& out);
  /// Adopts a replicated result through the gate. Throws ReplicationMismatch.
  bool apply(RunControl& control, const SyscallEvent& ev,
             const SyscallResult& leader, SyscallResult& out);
};

}  // namespace mvx
