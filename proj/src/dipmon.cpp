#include "mvx/dipmon.hpp"

#include <algorithm>

namespace mvx {

std::string_view to_string(MonitoringMode m) {
  return m == MonitoringMode::Strict ? "strict" : "relaxed";
}

std::string_view to_string(MispredictionPolicy p) {
  return p == MispredictionPolicy::Retry ? "retry" : "terminate";
}

MispredictionAction handle_misprediction(const DipMonConfig& config, int attempts) {
  if (config.misprediction == MispredictionPolicy::Terminate) {
    return MispredictionAction::TerminateAll;
  }
  return attempts < config.retry_budget ? MispredictionAction::RetryUntilSuccess
                                        : MispredictionAction::TerminateAll;
}

DipMon::DipMon(VariantState& state, CommBuffer& buffer, RunControl& control,
               const CostModel& cost, DipMonConfig config)
    : state_(state),
      buffer_(buffer),
      control_(control),
      cost_(cost),
      config_(std::move(config)),
      tx_(buffer.lane(Lane::Outgoing).capacity(), cost.transmit) {}

bool DipMon::push(const WireMessage& msg) {
  auto& c = state_.counters;
  state_.clock += cost_.push;
  if (cost_.naive_monitor_syscalls) state_.clock += 4 * cost_.crossing;
  auto adm = tx_.admit(state_.clock);
  if (adm.stalled) ++c.sim_stalls;
  state_.clock = adm.admitted_at;
  auto out = buffer_.push(Lane::Outgoing, msg, adm.departs_at, control_.token());
  if (out.blocked) ++c.cb_stalls;
  if (!out.accepted) return false;
  ++c.async_msgs;
  return true;
}

std::optional<Received> DipMon::pop_expected(MsgType type, Escalation& escalation) {
  ++state_.counters.sync_rtt_dipmon;
  for (;;) {
    auto r = buffer_.pop(Lane::Incoming, control_.token());
    if (!r) return std::nullopt;
    ++state_.counters.consumed;
    if (r->msg.type == MsgType::MispredictNotice) continue;
    if (r->msg.type == MsgType::Terminate) {
      control_.terminate_all(Verdict::terminated("transport"));
      return std::nullopt;
    }
    if (r->msg.type != type || r->msg.seq != index_) {
      escalation = Escalation::ProtocolViolation;
      return std::nullopt;
    }
    return r;
  }
}

DipMon::Outcome DipMon::handle(const SyscallEvent& ev, const SealedToken& token,
                               Arbiter& arbiter, Issuer restart_issuer) {
  ++state_.counters.dipmon_handles;
  CallDigest call{ev.kind, ev.args};
  Outcome out;

  if (config_.mode == MonitoringMode::Strict) {
    if (state_.leader()) {
      if (!push(WireMessage{MsgType::ArgBroadcast, state_.id, index_, encode_call(call)})) {
        return out;
      }
      ++state_.counters.arg_broadcasts;
    } else {
      Escalation esc = Escalation::None;
      auto r = pop_expected(MsgType::ArgBroadcast, esc);
      if (!r) {
        if (esc == Escalation::None) return out;
        return {Status::Escalate, {}, esc};
      }
      state_.clock = std::max(state_.clock, r->stamp) + cost_.compare;
      if (decode_call(r->msg.payload) != call) {
        return {Status::Escalate, {}, Escalation::ArgMismatch};
      }
    }
  }

  SyscallEvent restart = ev;
  restart.issuer = restart_issuer;
  state_.clock += cost_.crossing;
  if (arbiter.verify_restart(restart, token) != RestartVerdict::PermitDipMon) {
    return {Status::Escalate, {}, Escalation::TokenRejected};
  }

  switch (decide_replication(ev, state_.fmap, config_.replication)) {
    case ReplicationDecision::ExecuteLocallyBothSides:
      out = execute_local(ev, false);
      break;
    case ReplicationDecision::PredictNoReplicate:
      out = execute_local(ev, true);
      break;
    case ReplicationDecision::ReplicateAsync:
      out = replicate(ev);
      break;
  }
  ++index_;
  return out;
}

DipMon::Outcome DipMon::execute_local(const SyscallEvent& ev, bool predicted) {
  auto& c = state_.counters;
  std::optional<PredictedResult> prediction;
  if (predicted) {
    const auto& a = ev.args;
    if (ev.kind == SyscallKind::Open) {
      prediction = predict_open(state_.fmap, a,
                                state_.kernel.file_exists(a.path.value_or("")));
    } else if (ev.kind == SyscallKind::Setsockopt) {
      auto num = [&](const char* k, std::int64_t d) {
        auto it = a.numbers.find(k);
        return it == a.numbers.end() ? d : it->second;
      };
      prediction = predict_setsockopt(state_.fmap, a.fd.value_or(-1), num("level", -1),
                                      num("opt", -1), num("value", 1));
    }
  }
  auto fd_class = resolve_fd_class(ev, state_.fmap);
  bool copy = machine_local(ev, state_.fmap, config_.replication);

  SyscallResult res;
  for (int attempts = 0;; ++attempts) {
    if (!state_.execute(control_, ev, res)) return {};
    state_.clock += cost_.local_cost(ev.kind, fd_class);
    if (!prediction || (res.ret == prediction->ret && res.err == prediction->err)) break;
    ++c.mispredictions;
    push(WireMessage{MsgType::MispredictNotice, state_.id, ev.seq, encode_result(res)});
    if (handle_misprediction(config_, attempts) == MispredictionAction::TerminateAll) {
      control_.terminate_all(Verdict::terminated(
          config_.misprediction == MispredictionPolicy::Terminate
              ? "misprediction"
              : "misprediction retry budget exhausted"));
      return {};
    }
    ++c.retries;
    state_.clock += cost_.crossing;
  }
  if (prediction) state_.clock += cost_.apply;
  record(state_.fmap, ev, res, FdOrigin::Local, copy);
  return {Status::Completed, res, Escalation::None};
}

DipMon::Outcome DipMon::replicate(const SyscallEvent& ev) {
  auto fd_class = resolve_fd_class(ev, state_.fmap);
  SyscallResult res;
  if (state_.leader()) {
    if (!state_.execute(control_, ev, res)) return {};
    state_.clock += cost_.local_cost(ev.kind, fd_class);
    record(state_.fmap, ev, res, FdOrigin::Local, false);
    if (!push(WireMessage{MsgType::ResultReplication, state_.id, index_, encode_result(res)})) {
      return {};
    }
    ++state_.counters.replications[static_cast<std::size_t>(ev.kind)];
    return {Status::Completed, res, Escalation::None};
  }

  Escalation esc = Escalation::None;
  auto r = pop_expected(MsgType::ResultReplication, esc);
  if (!r) {
    if (esc == Escalation::None) return {};
    return {Status::Escalate, {}, esc};
  }
  state_.clock = std::max(state_.clock, r->stamp) + cost_.apply;
  SyscallResult leader;
  try {
    leader = decode_result(r->msg.payload);
    if (!state_.apply(control_, ev, leader, res)) return {};
  } catch (const ReplicationMismatch&) {
    return {Status::Escalate, {}, Escalation::ReplicationMismatch};
  } catch (const WireError&) {
    return {Status::Escalate, {}, Escalation::ProtocolViolation};
  }
  record(state_.fmap, ev, res, FdOrigin::ReplicatedShadow, false);
  return {Status::Completed, res, Escalation::None};
}

}  // namespace mvx
