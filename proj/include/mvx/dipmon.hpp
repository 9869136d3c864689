#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "mvx/arbiter.hpp"
#include "mvx/comm_buffer.hpp"
#include "mvx/cost_model.hpp"
#include "mvx/replication.hpp"
#include "mvx/runtime.hpp"
#include "mvx/wire.hpp"

namespace mvx {

enum class MonitoringMode : std::uint8_t { Strict, Relaxed };
enum class MispredictionPolicy : std::uint8_t { Retry, Terminate };

std::string_view to_string(MonitoringMode m);
std::string_view to_string(MispredictionPolicy p);

struct DipMonConfig {
  MonitoringMode mode = MonitoringMode::Relaxed;
  ReplicationConfig replication;
  MispredictionPolicy misprediction = MispredictionPolicy::Retry;
  int retry_budget = 16;
};

enum class MispredictionAction : std::uint8_t { RetryUntilSuccess, TerminateAll };

/// Policy for a predicted call whose local outcome differs from the prediction.
/// `attempts` counts retries already made for this call.
MispredictionAction handle_misprediction(const DipMonConfig& config, int attempts);

/// In-process monitor of one variant. It talks to the network only through
/// its comm buffer; it has no handle on any channel.
class DipMon {
 public:
  DipMon(VariantState& state, CommBuffer& buffer, RunControl& control,
         const CostModel& cost, DipMonConfig config);

  enum class Status : std::uint8_t { Completed, Escalate, Stopped };

  struct Outcome {
    Status status = Status::Stopped;
    SyscallResult result;
    Escalation escalation = Escalation::None;
  };

  /// Handles a non-sensitive call routed with `token`. The restart is checked
  /// by `arbiter` as issued by `restart_issuer`.
  Outcome handle(const SyscallEvent& event, const SealedToken& token,
                 Arbiter& arbiter, Issuer restart_issuer);

  const DipMonConfig& config() const { return config_; }

 private:
  bool push(const WireMessage& msg);
  std::optional<Received> pop_expected(MsgType type, Escalation& escalation);
  Outcome execute_local(const SyscallEvent& ev, bool predicted);
  Outcome replicate(const SyscallEvent& ev);

  VariantState& state_;
  CommBuffer& buffer_;
  RunControl& control_;
  CostModel cost_;
  DipMonConfig config_;
  TransmitQueueModel tx_;
  std::uint64_t index_ = 0;  // in-process calls handled so far
};

}  // namespace mvx
