#pragma once

#include <cstdint>

#include "mvx/syscall_model.hpp"

namespace mvx {

/// Simulated time, in nanoseconds.
using SimNanos = std::int64_t;

constexpr SimNanos us_to_ns(double us) { return static_cast<SimNanos>(us * 1000.0); }
constexpr double ns_to_us(SimNanos ns) { return static_cast<double>(ns) / 1000.0; }

/// Fixed costs charged to a variant's simulated clock. Overhead ratios are
/// computed from these, so they are platform independent.
struct CostModel {
  SimNanos syscall = 1'000;        // one emulated kernel operation
  SimNanos public_io = 250'000;    // client-facing socket op: one client round trip
  SimNanos crossing = 50;          // arbiter intercept or restart mode switch
  SimNanos dcp_handoff = 4'000;    // ptrace stop/resume into the cross-process monitor
  SimNanos push = 200;             // copy into the comm buffer plus notification
  SimNanos transmit = 300;         // connector serialisation per message
  SimNanos compare = 100;          // argument equivalence check
  SimNanos apply = 200;            // adopting a replicated or predicted result
  // Comparison mode: the in-process monitor sends through its own system calls,
  // each of which is intercepted and monitored (four extra crossings per message).
  bool naive_monitor_syscalls = false;

  /// Native cost of executing the call locally.
  SimNanos local_cost(SyscallKind kind, FdClass fd_class) const {
    if (fd_class == FdClass::PublicSocket) {
      switch (kind) {
        case SyscallKind::Accept:
        case SyscallKind::Read:
        case SyscallKind::Write:
        case SyscallKind::Send:
        case SyscallKind::Recv:
          return public_io;
        default:
          break;
      }
    }
    return syscall;
  }
};

}  // namespace mvx
