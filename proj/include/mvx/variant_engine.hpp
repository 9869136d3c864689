#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvx/attack.hpp"
#include "mvx/kernel.hpp"
#include "mvx/syscall_model.hpp"

namespace mvx {

enum class VariantRole : std::uint8_t { Leader, Follower };

std::string_view to_string(VariantRole r);

/// Deterministic workload shared verbatim by every variant.
///
/// Line grammar (`#` starts a comment):
///   cwd <path>                      working directory of every variant
///   file <path> [content]           initial file in each variant's private copy
///   call <kind> <key=value>...      one syscall directive
///   loop <n> ... end                repeat the enclosed block n times
/// Values may be double-quoted with \n, \r, \t, \" and \\ escapes.
struct WorkloadScript {
  struct Loop;
  struct Instruction {
    RawCall call;
    std::shared_ptr<Loop> loop;  // set for loop blocks
  };
  struct Loop {
    std::uint64_t count = 0;
    std::vector<Instruction> body;
  };

  std::string name;
  std::string cwd = "/";
  Filesystem files;
  std::vector<Instruction> body;

  static WorkloadScript parse(std::istream& in, std::string name = "inline");
  static WorkloadScript parse(std::string_view text, std::string name = "inline");
  static WorkloadScript load(const std::string& path);

  /// Number of calls the script issues with loops unrolled.
  std::uint64_t call_count() const;
};

/// Walks a script for one variant, producing seq-numbered events. Never touches
/// kernel state; results are fed back through complete().
class VariantEngine {
 public:
  VariantEngine(const WorkloadScript& script, VariantId variant);

  /// Arms a one-shot engine-level mutation (extra call, perturbation, skip).
  /// Token attacks are ignored here; the runtime applies them.
  void arm(const AttackSpec& attack);

  /// Next event, or nullopt when the script is finished.
  std::optional<SyscallEvent> step();

  /// Feeds a result back so `as=` bindings resolve for later calls.
  void complete(const SyscallEvent& event, const SyscallResult& result);

  std::uint64_t next_seq() const { return seq_; }
  VariantId variant() const { return variant_; }

 private:
  struct Frame {
    const std::vector<WorkloadScript::Instruction>* body;
    std::size_t index;
    std::uint64_t remaining;
  };

  const RawCall* advance();
  SyscallEvent make_event(const RawCall& call);
  void perturb(SyscallEvent& ev) const;

  const WorkloadScript* script_;
  VariantId variant_;
  std::vector<Frame> stack_;
  std::uint64_t seq_ = 0;
  std::map<std::string, int> bindings_;
  std::optional<AttackSpec> attack_;
  std::optional<RawCall> pending_;  // displaced call after an injected extra
};

/// Attacker-flavoured arguments for an injected call of the given kind.
RawCall synthesize_call(SyscallKind kind);

}  // namespace mvx
