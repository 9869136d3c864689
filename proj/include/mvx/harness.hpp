#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvx/arbiter.hpp"
#include "mvx/attack.hpp"
#include "mvx/channel.hpp"
#include "mvx/cost_model.hpp"
#include "mvx/dcpmon.hpp"
#include "mvx/dipmon.hpp"
#include "mvx/runtime.hpp"
#include "mvx/syscall_model.hpp"
#include "mvx/variant_engine.hpp"

namespace mvx {

inline constexpr int kExitConfigError = 64;

/// Transient failures injected into one variant's kernel: the call with the
/// given seq_no fails `count` times with EAGAIN. Text form `<variant>:<seq>:<count>`.
struct FaultSpec {
  VariantId variant = 0;
  std::uint64_t seq = 0;
  int count = 1;

  static FaultSpec parse(std::string_view text);
};

struct ScenarioConfig {
  std::shared_ptr<const WorkloadScript> workload;
  std::shared_ptr<const SensitivityPolicy> policy;
  std::size_t variants = 2;
  bool ssm = false;
  bool rsm = false;
  bool sr = false;
  ChannelSpec channel;
  std::string app_root = "/app";
  MispredictionPolicy misprediction = MispredictionPolicy::Retry;
  int retry_budget = 16;
  std::uint64_t seed = 1;
  int repeat = 3;
  std::optional<AttackSpec> attack;
  std::vector<FaultSpec> faults;
  std::uint64_t sever_after = 0;  // 0 disables
  CostModel cost;
  std::chrono::milliseconds timeout{5000};
  std::size_t buffer_capacity = CommBuffer::kDefaultCapacity;

  /// Throws ConfigError on conflicting or incomplete settings.
  void validate() const;
  bool dipmon_enabled() const { return ssm || rsm; }
  /// `baseline`, `SSM`, `RSM`, `SSM+SR` or `RSM+SR`.
  std::string label() const;
};

/// Applies a `key = value` configuration file (monitoring_mode,
/// selective_replication, app_root, misprediction, retry_budget).
void apply_config_file(ScenarioConfig& config, std::istream& in);
void apply_config_file(ScenarioConfig& config, const std::string& path);

/// Sets ssm/rsm/sr from a label such as `baseline`, `ssm`, `rsm+sr`.
void apply_label(ScenarioConfig& config, std::string_view label);

struct RunMetrics {
  // CSV columns
  std::string run_id;
  std::string workload;
  bool ssm = false;
  bool rsm = false;
  bool sr = false;
  double latency_us = 0;
  std::uint64_t seed = 0;
  Verdict verdict;
  std::uint64_t syscalls_total = 0;
  std::uint64_t sensitive = 0;
  std::uint64_t nonsensitive = 0;
  std::uint64_t sync_rtt_leader = 0;
  std::uint64_t sync_rtt_follower = 0;
  std::uint64_t async_msgs = 0;
  std::uint64_t crossings = 0;
  std::uint64_t stalls = 0;
  SimNanos sim_time = 0;
  SimNanos baseline_time = 0;
  double overhead = 0;

  // Detail kept for reports and checks.
  std::vector<VariantCounters> per_variant;
  std::vector<std::vector<ExecRecord>> logs;
  std::vector<std::vector<int>> final_fds;
  std::vector<std::string> filemap_dumps;
  std::vector<SecurityEvent> security_events;
  std::vector<std::optional<Deposit>> divergent_round;
  std::uint64_t lockstep_rounds = 0;
  std::uint64_t tokens_minted = 0;
  std::uint64_t permits = 0;
  std::uint64_t sensitive_tokens = 0;
  std::uint64_t channel_messages = 0;
  std::uint64_t channel_roundtrips = 0;
  std::uint64_t connector_sent = 0;       // frames taken off outgoing lanes
  std::uint64_t connector_received = 0;   // frames put on incoming lanes
  std::uint64_t incoming_consumed = 0;    // taken by in-process monitors
  std::uint64_t incoming_drained = 0;     // left over at shutdown
  std::uint64_t executions = 0;
  std::uint64_t executions_at_verdict = 0;
  std::uint64_t monitor_issuer_classifications = 0;

  std::uint64_t leader_dipmon_sync_rtt() const;
  std::uint64_t replications_of(SyscallKind kind) const;  // leader-sent
  /// Executed records with exec_index at or after the verdict (must be 0).
  std::uint64_t executions_after_verdict() const;
  /// (kind, args) of every sensitive executed-or-submitted call of a variant.
  std::vector<CallDigest> sensitive_log(std::size_t variant) const;
  bool fd_tables_aligned() const;
};

/// Simulated time of the workload on one kernel with no monitoring at all.
SimNanos native_time(const WorkloadScript& script, const CostModel& cost,
                     const std::string& app_root);

/// One monitored run. Never throws for verdicts; throws ConfigError for
/// invalid configurations.
RunMetrics run_scenario(const ScenarioConfig& config, std::string run_id = "r0");

/// `config.repeat` runs; run ids continue from `first_run_index`.
std::vector<RunMetrics> run_repeated(const ScenarioConfig& config,
                                     std::uint64_t first_run_index = 0);

// ---------------------------------------------------------------------------
// Reports

std::string csv_header();
std::string csv_row(const RunMetrics& m);

/// Writes header plus one row per run. Appends rows (without a second header)
/// when `append` is set and the file already has content. Throws
/// std::invalid_argument for an empty list, std::runtime_error (naming the
/// path) when the file cannot be written.
void emit_report(const std::vector<RunMetrics>& runs, const std::string& path,
                 bool append = false);

/// Number of data rows already in a CSV file (0 if absent).
std::uint64_t existing_rows(const std::string& path);

/// Human-readable run report: verdict, divergent round, last events,
/// security events and file maps.
void write_run_report(const RunMetrics& m, std::ostream& out);

// ---------------------------------------------------------------------------
// Benchmark suite

/// `<dir>/suite.txt`. Global keys come first, then one `[group]` section per
/// workload:
///   policy = <file>   latency_us = <n>   seed = <n>   variants = <n>
///   app_root = <path>   repeat = <n>
///   [name]
///   workload = <file>
///   configs = baseline ssm rsm rsm+sr
///   order = strict|none      overhead strictly decreasing along configs
///   bound = <x>              maximum overhead of the last config
/// Paths are relative to the suite directory.
struct SuiteGroup {
  std::string name;
  std::string workload_path;
  std::vector<std::string> configs;
  bool strict_order = true;
  std::optional<double> bound;
};

struct SuiteSpec {
  std::string dir;
  std::string policy_path;
  double latency_us = 50;
  std::uint64_t seed = 7;
  std::size_t variants = 2;
  std::string app_root = "/app";
  int repeat = 1;
  std::vector<SuiteGroup> groups;

  static SuiteSpec load(const std::string& dir);
  static SuiteSpec parse(std::istream& in, const std::string& dir);
};

struct BenchRow {
  std::string group;
  std::string config;
  RunMetrics metrics;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

BenchReport bench_suite(const SuiteSpec& suite);
void print_bench_table(const BenchReport& report, std::ostream& out);

}  // namespace mvx
