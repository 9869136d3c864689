#include "mvx/arbiter.hpp"

namespace mvx {

namespace {

std::mt19937_64 seeded_rng(std::uint64_t seed, VariantId variant) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(variant), 0x61726274u};
  return std::mt19937_64(seq);
}

}  // namespace

Arbiter::Arbiter(VariantId variant, const SensitivityPolicy& policy,
                 bool dipmon_enabled, std::uint64_t seed)
    : variant_(variant),
      policy_(&policy),
      dipmon_enabled_(dipmon_enabled),
      rng_(seeded_rng(seed, variant)) {}

Route Arbiter::intercept(const SyscallEvent& event, const FileMap& fmap) {
  ++crossings_;
  Route route;
  route.cls = classify(event, fmap, *policy_);
  if (route.cls == Sensitivity::Sensitive || !dipmon_enabled_) {
    route.target = RouteTarget::ToDcpMon;
    return route;
  }
  SealedToken token;
  token.value_ = rng_();
  token.seq_ = event.seq;
  token.variant_ = variant_;
  token.present_ = true;
  issued_[event.seq] = Issued{token.value_, false};
  ++minted_;
  if (route.cls == Sensitivity::Sensitive) ++sensitive_tokens_;
  route.target = RouteTarget::ToDipMon;
  route.token = token;
  return route;
}

RestartVerdict Arbiter::reject(const SyscallEvent& event, std::string reason) {
  security_.push_back(SecurityEvent{event.variant, event.seq, std::move(reason)});
  return RestartVerdict::ForwardDcpMon;
}

RestartVerdict Arbiter::verify_restart(const SyscallEvent& event,
                                       const SealedToken& token) {
  ++crossings_;
  if (event.issuer != Issuer::InProcessMonitor) {
    return reject(event, "restart not issued by the in-process monitor");
  }
  if (!token.present_) return reject(event, "missing token");
  if (event.variant != variant_ || token.variant_ != variant_ ||
      token.seq_ != event.seq) {
    return reject(event, "token bound to a different call");
  }
  auto it = issued_.find(token.seq_);
  if (it == issued_.end()) return reject(event, "unknown token");
  if (it->second.consumed) return reject(event, "token already consumed");
  if (it->second.value != token.value_) return reject(event, "token corrupted");
  it->second.consumed = true;
  ++permits_;
  return RestartVerdict::PermitDipMon;
}

}  // namespace mvx
