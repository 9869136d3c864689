#include "mvx/replication.hpp"

namespace mvx {

std::string_view to_string(ReplicationDecision d) {
  switch (d) {
    case ReplicationDecision::ExecuteLocallyBothSides: return "local";
    case ReplicationDecision::PredictNoReplicate: return "predict";
    case ReplicationDecision::ReplicateAsync: return "replicate";
  }
  return "?";
}

std::string_view to_string(Placement p) {
  return p == Placement::LocalAll ? "local-all" : "leader-only";
}

bool is_non_io(SyscallKind kind) {
  switch (kind) {
    case SyscallKind::Getcwd:
    case SyscallKind::Brk:
    case SyscallKind::Mmap:
    case SyscallKind::Mprotect:
    case SyscallKind::Exit:
      return true;
    default:
      return false;
  }
}

bool machine_local(const SyscallEvent& event, const FileMap& fmap,
                   const ReplicationConfig& config) {
  if (!config.selective_replication) return false;
  const auto& a = event.args;
  if (a.path && (event.kind == SyscallKind::Open || event.kind == SyscallKind::Stat)) {
    return path_under(*a.path, config.app_root);
  }
  if (a.fd && takes_fd(event.kind)) {
    auto meta = fmap.find(*a.fd);
    return meta && meta->machine_copy;
  }
  return false;
}

ReplicationDecision decide_replication(const SyscallEvent& event,
                                       const FileMap& fmap,
                                       const ReplicationConfig& config) {
  if (is_non_io(event.kind)) return ReplicationDecision::ExecuteLocallyBothSides;
  if (config.selective_replication) {
    if (event.kind == SyscallKind::Setsockopt) return ReplicationDecision::PredictNoReplicate;
    if (event.kind == SyscallKind::Open && machine_local(event, fmap, config)) {
      return ReplicationDecision::PredictNoReplicate;
    }
    if (machine_local(event, fmap, config)) {
      return ReplicationDecision::ExecuteLocallyBothSides;
    }
  }
  return ReplicationDecision::ReplicateAsync;
}

Placement placement(const SyscallEvent& event, const FileMap& fmap,
                    const ReplicationConfig& config) {
  if (is_non_io(event.kind) || machine_local(event, fmap, config)) {
    return Placement::LocalAll;
  }
  return Placement::LeaderOnly;
}

}  // namespace mvx
