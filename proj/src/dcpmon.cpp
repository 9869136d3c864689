#include "mvx/dcpmon.hpp"

#include <algorithm>
#include <sstream>

namespace mvx {

LockstepBarrier::LockstepBarrier(std::size_t variants) : slots_(variants) {}

void LockstepBarrier::deposit(VariantId v, Deposit d) {
  {
    std::lock_guard lock(mu_);
    slots_.at(v).push_back(std::move(d));
  }
  cv_.notify_all();
}

bool LockstepBarrier::ready_locked() const {
  bool all = true;
  for (const auto& s : slots_) {
    if (s.empty()) {
      all = false;
    } else if (s.front().entry.escalation != Escalation::None) {
      return true;
    }
  }
  return all;
}

LockstepBarrier::Wait LockstepBarrier::wait_round(std::stop_token stop,
                                                  std::chrono::milliseconds timeout) {
  std::unique_lock lock(mu_);
  auto queued = [&] {
    std::size_t n = 0;
    for (const auto& s : slots_) n += s.size();
    return n;
  };
  for (;;) {
    auto before = queued();
    bool ok = cv_.wait_for(lock, stop, timeout,
                           [&] { return ready_locked() || queued() != before; });
    if (stop.stop_requested()) return Wait::Stopped;
    if (ready_locked()) return Wait::Ready;
    // A deposit arrived but the round is still incomplete: the timer restarts.
    if (!ok) return Wait::Timeout;
  }
}

std::vector<std::optional<Deposit>> LockstepBarrier::take_round() {
  std::lock_guard lock(mu_);
  std::vector<std::optional<Deposit>> out(slots_.size());
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (!slots_[i].empty()) {
      out[i] = std::move(slots_[i].front());
      slots_[i].pop_front();
    }
  }
  ++epoch_;
  return out;
}

std::uint64_t LockstepBarrier::epoch() const {
  std::lock_guard lock(mu_);
  return epoch_;
}

RoundOutcome evaluate_round(const std::vector<std::optional<Deposit>>& round) {
  using K = RoundOutcome::Kind;
  for (std::size_t v = 0; v < round.size(); ++v) {
    if (round[v] && round[v]->entry.escalation != Escalation::None) {
      std::ostringstream why;
      why << to_string(round[v]->entry.escalation) << " in variant " << v << " ("
          << to_string(round[v]->entry.call.kind) << ')';
      return {K::Diverge, why.str()};
    }
  }
  for (std::size_t v = 0; v < round.size(); ++v) {
    if (!round[v]) return {K::Diverge, "variant " + std::to_string(v) + " missing from round"};
  }
  const auto& ref = round[0]->entry;
  bool all_finished = true;
  for (const auto& d : round) all_finished = all_finished && d->entry.finished;
  if (all_finished) return {K::AllFinished, {}};
  for (std::size_t v = 1; v < round.size(); ++v) {
    const auto& e = round[v]->entry;
    if (e.finished != ref.finished) {
      const auto& done = e.finished ? e : ref;
      const auto& live = e.finished ? ref : e;
      std::size_t done_v = e.finished ? v : 0;
      std::ostringstream why;
      why << "variant " << done_v << " finished while another issued "
          << to_string(live.call.kind);
      (void)done;
      return {K::Diverge, why.str()};
    }
    if (e.call.kind != ref.call.kind) {
      std::ostringstream why;
      why << "kind mismatch: variant 0 " << to_string(ref.call.kind) << ", variant "
          << v << ' ' << to_string(e.call.kind);
      return {K::Diverge, why.str()};
    }
    if (e.call.args != ref.call.args) {
      std::ostringstream why;
      why << "argument mismatch on " << to_string(ref.call.kind) << ": variant 0 "
          << to_string(ref.call.args) << ", variant " << v << ' '
          << to_string(e.call.args);
      return {K::Diverge, why.str()};
    }
  }
  return {K::Proceed, {}};
}

// ---------------------------------------------------------------------------

DcpMon::DcpMon(Channel& channel, RunControl& control, std::size_t variants,
               LockstepConfig config)
    : channel_(channel),
      control_(control),
      variants_(variants),
      config_(config),
      barrier_(variants) {}

DcpMon::~DcpMon() { stop(); }

void DcpMon::start() {
  receiver_ = std::jthread([this](std::stop_token st) { receiver(st); });
  monitor_ = std::jthread([this](std::stop_token st) { monitor(st); });
}

void DcpMon::stop() {
  receiver_.request_stop();
  monitor_.request_stop();
  if (receiver_.joinable()) receiver_.join();
  if (monitor_.joinable()) monitor_.join();
}

void DcpMon::receiver(std::stop_token stop) {
  for (;;) {
    auto r = channel_.recv(monitor_node(0), stop);
    if (!r.ok()) return;
    const auto& msg = r.delivery.msg;
    if (msg.type != MsgType::LockstepSubmit || msg.variant == 0 ||
        msg.variant >= variants_) {
      continue;
    }
    Deposit d;
    try {
      d.entry = decode_entry(msg.payload);
    } catch (const WireError&) {
      d.entry.escalation = Escalation::ProtocolViolation;
    }
    d.stamp = r.delivery.arrival;
    barrier_.deposit(msg.variant, std::move(d));
  }
}

void DcpMon::post(Decision d) {
  {
    std::lock_guard lock(mu_);
    decision_ = d;
  }
  cv_.notify_all();
}

void DcpMon::release_followers(LockstepRelease::Status status,
                               const SyscallResult& result, std::uint64_t round,
                               SimNanos stamp) {
  WireMessage msg{MsgType::LockstepRelease, 0, round,
                  encode_release(LockstepRelease{status, result})};
  for (std::size_t v = 1; v < variants_; ++v) {
    channel_.send(monitor_node(0), monitor_node(static_cast<VariantId>(v)), msg, stamp);
  }
}

void DcpMon::monitor(std::stop_token own) {
  // Either our own stop or the run's verdict ends the loop.
  std::stop_source merged;
  std::stop_callback on_own(own, [&] { merged.request_stop(); });
  std::stop_callback on_verdict(control_.token(), [&] { merged.request_stop(); });
  auto outer = merged.get_token();
  using D = Decision::Kind;
  for (std::uint64_t round = 0;; ++round) {
    auto w = barrier_.wait_round(outer, config_.timeout);
    if (w == LockstepBarrier::Wait::Stopped) {
      post({D::Stop, 0});
      return;
    }
    if (w == LockstepBarrier::Wait::Timeout) {
      control_.terminate_all(Verdict::divergence("lockstep timeout", round));
      post({D::Stop, 0});
      release_followers(LockstepRelease::Status::Stop, {}, round, 0);
      return;
    }
    auto entries = barrier_.take_round();
    auto outcome = evaluate_round(entries);
    SimNanos ready = 0;
    for (const auto& d : entries) {
      if (d) ready = std::max(ready, d->stamp);
    }
    ready += config_.compare_cost * static_cast<SimNanos>(variants_ - 1);

    if (outcome.kind == RoundOutcome::Kind::Diverge) {
      {
        std::lock_guard lock(mu_);
        divergent_ = entries;
      }
      control_.terminate_all(Verdict::divergence(outcome.reason, round));
      post({D::Stop, ready});
      release_followers(LockstepRelease::Status::Stop, {}, round, ready);
      return;
    }
    if (outcome.kind == RoundOutcome::Kind::AllFinished) {
      post({D::Finished, ready});
      return;
    }

    rounds_.fetch_add(1);
    auto where = entries[0]->placement;
    {
      std::lock_guard lock(mu_);
      published_.reset();
    }
    post({D::Proceed, ready});
    if (where == Placement::LocalAll) {
      release_followers(LockstepRelease::Status::ExecuteLocally, {}, round, ready);
      continue;
    }
    std::unique_lock lock(mu_);
    if (!cv_.wait(lock, outer, [&] { return published_.has_value(); })) return;
    auto [result, done_at] = *published_;
    lock.unlock();
    release_followers(LockstepRelease::Status::LeaderResult, result, round, done_at);
  }
}

DcpMon::Decision DcpMon::submit_leader(const LockstepEntry& entry,
                                       Placement placement, SimNanos stamp) {
  {
    std::lock_guard lock(mu_);
    decision_.reset();
  }
  barrier_.deposit(0, Deposit{entry, stamp, placement});
  std::unique_lock lock(mu_);
  auto stop = control_.token();
  if (!cv_.wait(lock, stop, [&] { return decision_.has_value(); })) {
    return {Decision::Kind::Stop, 0};
  }
  return *decision_;
}

void DcpMon::publish(const SyscallResult& result, SimNanos done_at) {
  {
    std::lock_guard lock(mu_);
    published_ = std::make_pair(result, done_at);
  }
  cv_.notify_all();
}

std::vector<std::optional<Deposit>> DcpMon::divergent_round() const {
  std::lock_guard lock(mu_);
  return divergent_;
}

// ---------------------------------------------------------------------------

DcpAgent::DcpAgent(VariantId variant, Channel& channel, RunControl& control,
                   LockstepConfig config)
    : variant_(variant), channel_(channel), control_(control), config_(config) {}

DcpAgent::Outcome DcpAgent::submit(const LockstepEntry& entry, std::uint64_t index,
                                   SimNanos stamp) {
  using K = Outcome::Kind;
  WireMessage msg{MsgType::LockstepSubmit, variant_, index, encode_entry(entry)};
  auto r = channel_.roundtrip(monitor_node(variant_), monitor_node(0), msg, stamp,
                              control_.token(), config_.timeout * 2);
  switch (r.status) {
    case RecvStatus::Ok:
      break;
    case RecvStatus::Timeout:
      control_.terminate_all(Verdict::divergence(
          "lockstep timeout in variant " + std::to_string(variant_), index));
      return {K::Stop, {}, 0};
    case RecvStatus::Closed:
      control_.terminate_all(Verdict::terminated("transport"));
      return {K::Stop, {}, 0};
    case RecvStatus::Stopped:
      return {K::Stop, {}, 0};
  }
  const auto& reply = r.delivery.msg;
  if (reply.type != MsgType::LockstepRelease || reply.seq != index) {
    control_.terminate_all(Verdict::divergence("unexpected lockstep reply", index));
    return {K::Stop, {}, 0};
  }
  auto rel = decode_release(reply.payload);
  switch (rel.status) {
    case LockstepRelease::Status::LeaderResult:
      return {K::LeaderResult, rel.result, r.delivery.arrival};
    case LockstepRelease::Status::ExecuteLocally:
      return {K::ExecuteLocally, {}, r.delivery.arrival};
    case LockstepRelease::Status::Stop:
      return {K::Stop, {}, r.delivery.arrival};
  }
  return {K::Stop, {}, 0};
}

void DcpAgent::finish(std::uint64_t index, SimNanos stamp) {
  LockstepEntry e;
  e.finished = true;
  channel_.send(monitor_node(variant_), monitor_node(0),
                WireMessage{MsgType::LockstepSubmit, variant_, index, encode_entry(e)},
                stamp);
}

}  // namespace mvx
