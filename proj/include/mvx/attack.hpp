#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "mvx/syscall_model.hpp"

namespace mvx {

/// Fault injected into exactly one variant, modelling an exploit that
/// compromised that variant only.
///
/// Text form `<variant>:<seq>:<mutation>` where mutation is one of
///   extra:<kind>            issue an additional call before seq
///   perturb:<field>:<delta> alter one argument of the call at seq
///   skip                    drop the call at seq
///   token-flip:<hex mask>   xor the call's auth token with mask
///   token-replay            present the previous call's token
///   forge-restart           restart the call from application code
struct AttackSpec {
  enum class Kind : std::uint8_t {
    ExtraSensitiveCall,
    ArgPerturb,
    SkipCall,
    TokenFlip,
    TokenReplay,
    ForgedRestart,
  };

  VariantId variant = 0;
  std::uint64_t seq = 0;
  Kind kind = Kind::SkipCall;
  SyscallKind extra_kind = SyscallKind::Mprotect;
  std::string field;
  std::int64_t delta = 0;
  std::uint64_t mask = 0;

  static AttackSpec parse(std::string_view text);
  std::string to_string() const;
  bool is_token_attack() const {
    return kind == Kind::TokenFlip || kind == Kind::TokenReplay ||
           kind == Kind::ForgedRestart;
  }
};

}  // namespace mvx
