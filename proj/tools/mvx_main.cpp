#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "mvx/harness.hpp"

namespace {

struct RunOptions {
  std::string scenario;
  std::string policy;
  std::string config_file;
  bool ssm = false;
  bool rsm = false;
  bool sr = false;
  std::string channel = "sim:50";
  std::uint64_t seed = 1;
  int repeat = 3;
  std::size_t variants = 2;
  std::string attack;
  std::vector<std::string> faults;
  std::string out;
  std::string report;
  std::string app_root;
  std::string misprediction;
  int retry_budget = -1;
  std::uint64_t sever_after = 0;
  int timeout_ms = 5000;
  bool naive_monitor_syscalls = false;
};

mvx::ScenarioConfig build_config(const RunOptions& o) {
  mvx::ScenarioConfig cfg;
  cfg.workload = std::make_shared<mvx::WorkloadScript>(mvx::WorkloadScript::load(o.scenario));
  cfg.policy = std::make_shared<mvx::SensitivityPolicy>(mvx::SensitivityPolicy::load(o.policy));
  // Command-line toggles override the config file.
  if (!o.config_file.empty()) mvx::apply_config_file(cfg, o.config_file);
  if (o.ssm) cfg.ssm = true;
  if (o.rsm) cfg.rsm = true;
  if (o.sr) cfg.sr = true;
  cfg.channel = mvx::ChannelSpec::parse(o.channel);
  cfg.seed = o.seed;
  cfg.repeat = o.repeat;
  cfg.variants = o.variants;
  if (!o.attack.empty()) cfg.attack = mvx::AttackSpec::parse(o.attack);
  for (const auto& f : o.faults) cfg.faults.push_back(mvx::FaultSpec::parse(f));
  if (!o.app_root.empty()) cfg.app_root = o.app_root;
  if (o.misprediction == "retry") {
    cfg.misprediction = mvx::MispredictionPolicy::Retry;
  } else if (o.misprediction == "terminate") {
    cfg.misprediction = mvx::MispredictionPolicy::Terminate;
  }
  if (o.retry_budget >= 0) cfg.retry_budget = o.retry_budget;
  cfg.sever_after = o.sever_after;
  cfg.timeout = std::chrono::milliseconds(o.timeout_ms);
  cfg.cost.naive_monitor_syscalls = o.naive_monitor_syscalls;
  cfg.validate();
  return cfg;
}

int run_command(const RunOptions& o) {
  mvx::ScenarioConfig cfg;
  try {
    cfg = build_config(o);
  } catch (const mvx::ConfigError& e) {
    std::cerr << "mvx: configuration error: " << e.what() << '\n';
    return mvx::kExitConfigError;
  } catch (const mvx::ScenarioError& e) {
    std::cerr << "mvx: scenario error: " << e.what() << '\n';
    return mvx::kExitConfigError;
  }

  std::uint64_t first = o.out.empty() ? 0 : mvx::existing_rows(o.out);
  auto runs = mvx::run_repeated(cfg, first);

  std::cout << mvx::csv_header() << '\n';
  for (const auto& m : runs) std::cout << mvx::csv_row(m) << '\n';
  if (!o.out.empty()) {
    try {
      mvx::emit_report(runs, o.out, true);
    } catch (const std::exception& e) {
      std::cerr << "mvx: " << e.what() << '\n';
      return 1;
    }
  }
  if (!o.report.empty()) {
    std::ofstream rep(o.report);
    if (!rep) {
      std::cerr << "mvx: cannot write report to " << o.report << '\n';
      return 1;
    }
    for (const auto& m : runs) mvx::write_run_report(m, rep);
  }

  // The worst verdict decides the exit code.
  int code = 0;
  for (const auto& m : runs) {
    if (!m.verdict.clean_run()) std::cerr << "mvx: " << m.run_id << ": " << m.verdict.to_string() << '\n';
    code = std::max(code, m.verdict.exit_code());
  }
  return code;
}

int bench_command(const std::string& dir) {
  mvx::SuiteSpec suite;
  try {
    suite = mvx::SuiteSpec::load(dir);
  } catch (const mvx::ConfigError& e) {
    std::cerr << "mvx: configuration error: " << e.what() << '\n';
    return mvx::kExitConfigError;
  }
  mvx::BenchReport report;
  try {
    report = mvx::bench_suite(suite);
  } catch (const mvx::ConfigError& e) {
    std::cerr << "mvx: configuration error: " << e.what() << '\n';
    return mvx::kExitConfigError;
  } catch (const mvx::ScenarioError& e) {
    std::cerr << "mvx: scenario error: " << e.what() << '\n';
    return mvx::kExitConfigError;
  }
  mvx::print_bench_table(report, std::cout);
  return report.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed multi-variant execution simulator"};
  app.require_subcommand(1);

  RunOptions o;
  auto* run = app.add_subcommand("run", "run one scenario");
  run->add_option("--scenario", o.scenario, "workload script")->required()->check(CLI::ExistingFile);
  run->add_option("--policy", o.policy, "sensitivity policy")->required()->check(CLI::ExistingFile);
  run->add_option("--config", o.config_file, "key = value run configuration")->check(CLI::ExistingFile);
  auto* ssm = run->add_flag("--ssm", o.ssm, "strict selective monitoring");
  auto* rsm = run->add_flag("--rsm", o.rsm, "relaxed selective monitoring");
  ssm->excludes(rsm);
  run->add_flag("--sr", o.sr, "selective replication");
  run->add_option("--channel", o.channel, "sim:<latency_us> or tcp:<port>")->capture_default_str();
  run->add_option("--seed", o.seed)->capture_default_str();
  run->add_option("--repeat", o.repeat)->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--variants", o.variants)->capture_default_str();
  run->add_option("--attack", o.attack, "<variant>:<seq>:<mutation>");
  run->add_option("--fault", o.faults, "<variant>:<seq>:<count> transient EAGAIN");
  run->add_option("--out", o.out, "CSV file; rows are appended");
  run->add_option("--report", o.report, "human-readable run report");
  run->add_option("--app-root", o.app_root, "per-machine application directory");
  run->add_option("--misprediction", o.misprediction)->check(CLI::IsMember({"retry", "terminate"}));
  run->add_option("--retry-budget", o.retry_budget);
  run->add_option("--sever-after", o.sever_after, "sever the channel after N messages");
  run->add_option("--timeout-ms", o.timeout_ms, "lockstep barrier timeout")->capture_default_str();
  run->add_flag("--naive-monitor-syscalls", o.naive_monitor_syscalls,
                "charge monitor-side send/recv as extra crossings");

  std::string suite_dir;
  auto* bench = app.add_subcommand("bench", "run a benchmark suite");
  bench->add_option("--suite", suite_dir, "directory holding suite.txt")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : mvx::kExitConfigError;
  }

  try {
    if (*run) return run_command(o);
    return bench_command(suite_dir);
  } catch (const std::exception& e) {
    std::cerr << "mvx: " << e.what() << '\n';
    return 1;
  }
}
