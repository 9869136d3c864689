#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvx/filemap.hpp"
#include "mvx/syscall_model.hpp"

namespace mvx {

class Arbiter;

/// One-time authentication token as carried on a routed call.
///
/// Application code can hold, copy and corrupt a token (modelling memory
/// corruption or replay) but has no way to read its value or binding; only
/// the arbiter that minted it can.
class SealedToken {
 public:
  SealedToken() = default;

  void corrupt_value(std::uint64_t mask) { value_ ^= mask; }
  void corrupt_binding(std::uint64_t seq_delta, VariantId variant_xor) {
    seq_ += seq_delta;
    variant_ ^= variant_xor;
  }

 private:
  friend class Arbiter;

  std::uint64_t value_ = 0;
  std::uint64_t seq_ = 0;
  VariantId variant_ = 0;
  bool present_ = false;
};

enum class RouteTarget : std::uint8_t { ToDipMon, ToDcpMon };

struct Route {
  RouteTarget target = RouteTarget::ToDcpMon;
  Sensitivity cls = Sensitivity::Sensitive;
  std::optional<SealedToken> token;  // only for ToDipMon
};

enum class RestartVerdict : std::uint8_t { PermitDipMon, ForwardDcpMon };

struct SecurityEvent {
  VariantId variant = 0;
  std::uint64_t seq = 0;
  std::string reason;
};

/// Per-variant syscall arbiter: routes application calls by sensitivity and
/// admits in-process restarts only with an intact, unused token.
class Arbiter {
 public:
  /// With `dipmon_enabled` false every call goes to the cross-process monitor.
  Arbiter(VariantId variant, const SensitivityPolicy& policy,
          bool dipmon_enabled, std::uint64_t seed);

  Route intercept(const SyscallEvent& event, const FileMap& fmap);

  /// The restarted call's issuer is taken from `event.issuer`.
  RestartVerdict verify_restart(const SyscallEvent& event,
                                const SealedToken& token);

  std::uint64_t crossings() const { return crossings_; }
  std::uint64_t tokens_minted() const { return minted_; }
  std::uint64_t permits() const { return permits_; }
  std::uint64_t sensitive_tokens() const { return sensitive_tokens_; }
  const std::vector<SecurityEvent>& security_events() const { return security_; }

 private:
  struct Issued {
    std::uint64_t value = 0;
    bool consumed = false;
  };

  RestartVerdict reject(const SyscallEvent& event, std::string reason);

  VariantId variant_;
  const SensitivityPolicy* policy_;
  bool dipmon_enabled_;
  std::mt19937_64 rng_;
  std::unordered_map<std::uint64_t, Issued> issued_;
  std::uint64_t crossings_ = 0;
  std::uint64_t minted_ = 0;
  std::uint64_t permits_ = 0;
  std::uint64_t sensitive_tokens_ = 0;
  std::vector<SecurityEvent> security_;
};

}  // namespace mvx
