#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "mvx/harness.hpp"

namespace mvx::test {

inline std::string source_path(std::string_view rel) {
  return std::string(MVX_SOURCE_DIR) + "/" + std::string(rel);
}

inline std::shared_ptr<const SensitivityPolicy> default_policy() {
  static auto p = std::make_shared<const SensitivityPolicy>(
      SensitivityPolicy::load(source_path("policies/socket_rw_level.policy")));
  return p;
}

inline std::shared_ptr<const WorkloadScript> script(std::string_view text,
                                                     std::string name = "inline") {
  return std::make_shared<const WorkloadScript>(WorkloadScript::parse(text, std::move(name)));
}

inline std::shared_ptr<const WorkloadScript> shipped(std::string_view name) {
  return std::make_shared<const WorkloadScript>(
      WorkloadScript::load(source_path("workloads/" + std::string(name) + ".mvx")));
}

/// Single-run configuration with a short barrier timeout.
inline ScenarioConfig config(std::shared_ptr<const WorkloadScript> w, std::string_view label = "baseline") {
  ScenarioConfig c;
  c.workload = std::move(w);
  c.policy = default_policy();
  c.repeat = 1;
  c.seed = 11;
  c.timeout = std::chrono::milliseconds(1000);
  apply_label(c, label);
  return c;
}

/// Reference FNV-1a, written out independently of the library.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace mvx::test
