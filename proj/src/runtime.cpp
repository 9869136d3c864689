#include "mvx/runtime.hpp"

#include <sstream>

namespace mvx {

int Verdict::exit_code() const {
  switch (status) {
    case Status::Clean: return 0;
    case Status::Divergence: return 2;
    case Status::Terminated: return 3;
  }
  return 3;
}

std::string_view Verdict::status_name() const {
  switch (status) {
    case Status::Clean: return "Clean";
    case Status::Divergence: return "Divergence";
    case Status::Terminated: return "Terminated";
  }
  return "?";
}

std::string Verdict::to_string() const {
  if (status == Status::Clean) return "Clean";
  std::ostringstream out;
  out << status_name() << '(' << reason;
  if (round) out << ", round " << *round;
  out << ')';
  return out.str();
}

Verdict RunControl::terminate_all(Verdict v) {
  {
    std::unique_lock lock(gate_);
    if (stopped_) return verdict_;
    stopped_ = true;
    verdict_ = std::move(v);
    at_verdict_ = executions_.load();
  }
  stop_.request_stop();
  return verdict();
}

bool RunControl::stopped() const {
  std::shared_lock lock(gate_);
  return stopped_;
}

Verdict RunControl::verdict() const {
  std::shared_lock lock(gate_);
  return verdict_;
}

std::uint64_t RunControl::executions_at_verdict() const {
  std::shared_lock lock(gate_);
  return stopped_ ? at_verdict_ : executions_.load();
}

bool VariantState::execute(RunControl& control, const SyscallEvent& ev,
                           SyscallResult& out) {
  return control.execute([&] {
    last_exec_index = control.executions();
    out = kernel.execute(ev);
  });
}

bool VariantState::apply(RunControl& control, const SyscallEvent& ev,
                         const SyscallResult& leader, SyscallResult& out) {
  return control.execute([&] {
    last_exec_index = control.executions();
    out = kernel.apply_replicated(ev, leader);
  });
}

}  // namespace mvx
