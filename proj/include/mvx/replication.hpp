#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mvx/filemap.hpp"
#include "mvx/syscall_model.hpp"

namespace mvx {

enum class ReplicationDecision : std::uint8_t {
  ExecuteLocallyBothSides,
  PredictNoReplicate,
  ReplicateAsync,
};

std::string_view to_string(ReplicationDecision d);

/// Where a lockstep-monitored call executes once the round is admitted.
enum class Placement : std::uint8_t { LocalAll, LeaderOnly };

std::string_view to_string(Placement p);

struct ReplicationConfig {
  bool selective_replication = false;
  std::string app_root = "/app";
};

/// Calls that touch no shared I/O state; every variant executes them itself.
bool is_non_io(SyscallKind kind);

/// The call operates on this machine's own copy of an application file:
/// selective replication is on and the path lies under the application root,
/// or the fd refers to such a copy.
bool machine_local(const SyscallEvent& event, const FileMap& fmap,
                   const ReplicationConfig& config);

/// In-process monitor's choice for a non-sensitive call.
ReplicationDecision decide_replication(const SyscallEvent& event,
                                       const FileMap& fmap,
                                       const ReplicationConfig& config);

/// Cross-process monitor's placement for a sensitive call. Uses the same
/// machine-locality rule so both monitors agree on which objects are copies.
Placement placement(const SyscallEvent& event, const FileMap& fmap,
                    const ReplicationConfig& config);

}  // namespace mvx
