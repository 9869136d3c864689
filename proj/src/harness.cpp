#include "mvx/harness.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "mvx/connector.hpp"

namespace mvx {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view text, const std::string& what) {
  T v{};
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size()) {
    throw ConfigError("bad " + what + ": '" + std::string(text) + "'");
  }
  return v;
}

double parse_double(std::string_view text, const std::string& what) {
  try {
    std::size_t used = 0;
    double v = std::stod(std::string(text), &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad " + what + ": '" + std::string(text) + "'");
  }
}

bool parse_on_off(std::string_view v, const std::string& key) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError(key + " must be on or off");
}

}  // namespace

FaultSpec FaultSpec::parse(std::string_view text) {
  FaultSpec f;
  auto a = text.find(':');
  auto b = a == std::string_view::npos ? a : text.find(':', a + 1);
  if (b == std::string_view::npos) {
    throw ConfigError("fault must be <variant>:<seq>:<count>: " + std::string(text));
  }
  f.variant = parse_number<VariantId>(text.substr(0, a), "fault variant");
  f.seq = parse_number<std::uint64_t>(text.substr(a + 1, b - a - 1), "fault seq");
  f.count = parse_number<int>(text.substr(b + 1), "fault count");
  if (f.count < 1) throw ConfigError("fault count must be >= 1");
  return f;
}

void ScenarioConfig::validate() const {
  if (!workload) throw ConfigError("no workload");
  if (!policy) throw ConfigError("no policy");
  if (variants < 2) throw ConfigError("at least two variants are required");
  if (variants > 64) throw ConfigError("at most 64 variants are supported");
  if (ssm && rsm) throw ConfigError("ssm and rsm are mutually exclusive");
  if (sr && !dipmon_enabled()) {
    throw ConfigError("selective replication needs an in-process monitor (ssm or rsm)");
  }
  if (retry_budget < 0) throw ConfigError("retry_budget must be >= 0");
  if (repeat < 1) throw ConfigError("repeat must be >= 1");
  if (buffer_capacity < 1) throw ConfigError("buffer capacity must be >= 1");
  if (canonical_path(app_root) != app_root) {
    throw ConfigError("app_root must be a canonical absolute path: " + app_root);
  }
  if (attack && attack->variant >= variants) {
    throw ConfigError("attack targets variant " + std::to_string(attack->variant) +
                      " of " + std::to_string(variants));
  }
  for (const auto& f : faults) {
    if (f.variant >= variants) throw ConfigError("fault targets a missing variant");
  }
}

std::string ScenarioConfig::label() const {
  std::string out = ssm ? "SSM" : rsm ? "RSM" : "baseline";
  if (sr) out += "+SR";
  return out;
}

void apply_label(ScenarioConfig& config, std::string_view label) {
  config.ssm = config.rsm = config.sr = false;
  std::string l;
  for (char c : label) l += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::string_view rest = l;
  auto take = [&](std::string_view word) {
    if (rest.substr(0, word.size()) == word) {
      rest.remove_prefix(word.size());
      return true;
    }
    return false;
  };
  if (take("baseline")) {
  } else if (take("ssm")) {
    config.ssm = true;
  } else if (take("rsm")) {
    config.rsm = true;
  } else {
    throw ConfigError("unknown configuration label: " + std::string(label));
  }
  if (take("+sr")) config.sr = true;
  if (!rest.empty()) throw ConfigError("unknown configuration label: " + std::string(label));
}

void apply_config_file(ScenarioConfig& config, std::istream& in) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto text = trim(line);
    if (text.empty()) continue;
    auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    auto key = trim(std::string_view(text).substr(0, eq));
    auto value = trim(std::string_view(text).substr(eq + 1));
    if (key == "monitoring_mode") {
      if (value == "strict") {
        config.ssm = true;
        config.rsm = false;
      } else if (value == "relaxed") {
        config.rsm = true;
        config.ssm = false;
      } else if (value == "off") {
        config.ssm = config.rsm = false;
      } else {
        throw ConfigError("monitoring_mode must be strict, relaxed or off");
      }
    } else if (key == "selective_replication") {
      config.sr = parse_on_off(value, key);
    } else if (key == "app_root") {
      config.app_root = value;
    } else if (key == "misprediction") {
      if (value == "retry") {
        config.misprediction = MispredictionPolicy::Retry;
      } else if (value == "terminate") {
        config.misprediction = MispredictionPolicy::Terminate;
      } else {
        throw ConfigError("misprediction must be retry or terminate");
      }
    } else if (key == "retry_budget") {
      config.retry_budget = parse_number<int>(value, "retry_budget");
    } else {
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key " + key);
    }
  }
}

void apply_config_file(ScenarioConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  apply_config_file(config, in);
}

// ---------------------------------------------------------------------------

std::uint64_t RunMetrics::leader_dipmon_sync_rtt() const {
  return per_variant.empty() ? 0 : per_variant[0].sync_rtt_dipmon;
}

std::uint64_t RunMetrics::replications_of(SyscallKind kind) const {
  return per_variant.empty() ? 0 : per_variant[0].replications_of(kind);
}

std::uint64_t RunMetrics::executions_after_verdict() const {
  if (verdict.clean_run()) return 0;
  std::uint64_t n = 0;
  for (const auto& log : logs) {
    for (const auto& r : log) {
      if (r.executed && r.exec_index >= executions_at_verdict) ++n;
    }
  }
  return n;
}

std::vector<CallDigest> RunMetrics::sensitive_log(std::size_t variant) const {
  std::vector<CallDigest> out;
  for (const auto& r : logs.at(variant)) {
    if (r.cls == Sensitivity::Sensitive) out.push_back({r.kind, r.args});
  }
  return out;
}

bool RunMetrics::fd_tables_aligned() const {
  for (std::size_t v = 1; v < final_fds.size(); ++v) {
    if (final_fds[v] != final_fds[0]) return false;
  }
  return true;
}

SimNanos native_time(const WorkloadScript& script, const CostModel& cost,
                     const std::string& app_root) {
  EmulatedKernel kernel(script.files, {script.cwd, app_root});
  auto fmap = FileMap::with_std_streams();
  VariantEngine engine(script, 0);
  SimNanos t = 0;
  while (!kernel.exited()) {
    auto ev = engine.step();
    if (!ev) break;
    auto cls = resolve_fd_class(*ev, fmap);
    auto res = kernel.execute(*ev);
    t += cost.local_cost(ev->kind, cls);
    record(fmap, *ev, res, FdOrigin::Local, false);
    engine.complete(*ev, res);
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

/// Drives one variant: engine -> arbiter -> monitors, on its own thread.
class VariantRunner {
 public:
  VariantRunner(const ScenarioConfig& cfg, VariantState& state, RunControl& control,
                Arbiter& arbiter, CommBuffer& buffer, Channel& channel, DcpMon& dcp)
      : cfg_(cfg),
        st_(state),
        control_(control),
        arbiter_(arbiter),
        repl_{cfg.sr, cfg.app_root},
        lockstep_cfg_{cfg.timeout, cfg.cost.compare},
        dcp_(dcp) {
    if (cfg.dipmon_enabled()) {
      dipmon_.emplace(state, buffer, control, cfg.cost,
                      DipMonConfig{cfg.ssm ? MonitoringMode::Strict : MonitoringMode::Relaxed,
                                   repl_, cfg.misprediction, cfg.retry_budget});
    }
    if (!state.leader()) agent_.emplace(state.id, channel, control, lockstep_cfg_);
  }

  void run() {
    VariantEngine engine(*cfg_.workload, st_.id);
    const auto& attack = cfg_.attack;
    bool attacked = attack && attack->variant == st_.id;
    if (attacked && !attack->is_token_attack()) engine.arm(*attack);
    auto& c = st_.counters;

    while (!control_.stopped()) {
      std::optional<SyscallEvent> ev;
      if (!st_.kernel.exited()) ev = engine.step();
      if (!ev) {
        finish();
        return;
      }
      ++c.syscalls;
      auto route = arbiter_.intercept(*ev, st_.fmap);
      st_.clock += cfg_.cost.crossing;
      ExecRecord rec{ev->seq, ev->kind, ev->args, route.cls, Path::Lockstep, false, 0, {}};
      (route.cls == Sensitivity::Sensitive ? c.sensitive : c.nonsensitive)++;

      bool ok = false;
      if (route.target == RouteTarget::ToDcpMon) {
        ok = lockstep(*ev, Escalation::None, rec.result);
      } else {
        rec.path = Path::InProcess;
        SealedToken token = *route.token;
        Issuer issuer = Issuer::InProcessMonitor;
        if (attacked && attack->is_token_attack() && attack->seq == ev->seq) {
          switch (attack->kind) {
            case AttackSpec::Kind::TokenFlip:
              token.corrupt_value(attack->mask);
              break;
            case AttackSpec::Kind::TokenReplay:
              token = previous_.value_or(SealedToken{});
              break;
            case AttackSpec::Kind::ForgedRestart:
              issuer = Issuer::Application;
              break;
            default:
              break;
          }
        }
        previous_ = *route.token;
        auto out = dipmon_->handle(*ev, token, arbiter_, issuer);
        if (out.status == DipMon::Status::Escalate) {
          ++c.escalations;
          rec.path = Path::Escalated;
          lockstep(*ev, out.escalation, rec.result);
          st_.log.push_back(std::move(rec));
          return;
        }
        ok = out.status == DipMon::Status::Completed;
        rec.result = out.result;
      }
      rec.executed = ok;
      rec.exec_index = st_.last_exec_index;
      st_.log.push_back(std::move(rec));
      if (!ok) return;
      engine.complete(*ev, st_.log.back().result);
    }
  }

 private:
  bool lockstep(const SyscallEvent& ev, Escalation escalation, SyscallResult& result) {
    auto& c = st_.counters;
    const auto& cost = cfg_.cost;
    st_.clock += cost.dcp_handoff;
    LockstepEntry entry{false, escalation, {ev.kind, ev.args}};
    auto where = placement(ev, st_.fmap, repl_);
    auto fd_class = resolve_fd_class(ev, st_.fmap);
    bool copy = where == Placement::LocalAll && machine_local(ev, st_.fmap, repl_);
    std::uint64_t index = sensitive_index_++;

    if (st_.leader()) {
      auto d = dcp_.submit_leader(entry, where, st_.clock);
      if (d.kind != DcpMon::Decision::Kind::Proceed) return false;
      st_.clock = std::max(st_.clock, d.ready_at);
      ++c.sync_rtt;
      ++c.lockstep_rounds;
      if (!st_.execute(control_, ev, result)) return false;
      st_.clock += cost.local_cost(ev.kind, fd_class);
      record(st_.fmap, ev, result, FdOrigin::Local, copy);
      if (where == Placement::LeaderOnly) dcp_.publish(result, st_.clock);
      return true;
    }

    auto o = agent_->submit(entry, index, st_.clock);
    if (o.kind == DcpAgent::Outcome::Kind::Stop) return false;
    st_.clock = std::max(st_.clock, o.arrival);
    ++c.sync_rtt;
    ++c.lockstep_rounds;
    if (o.kind == DcpAgent::Outcome::Kind::LeaderResult) {
      try {
        if (!st_.apply(control_, ev, o.result, result)) return false;
      } catch (const ReplicationMismatch& e) {
        control_.terminate_all(Verdict::divergence(e.what(), index));
        return false;
      }
      st_.clock += cost.apply;
      record(st_.fmap, ev, result, FdOrigin::ReplicatedShadow, false);
      return true;
    }
    if (!st_.execute(control_, ev, result)) return false;
    st_.clock += cost.local_cost(ev.kind, fd_class);
    record(st_.fmap, ev, result, FdOrigin::Local, copy);
    return true;
  }

  void finish() {
    LockstepEntry done;
    done.finished = true;
    if (st_.leader()) {
      auto d = dcp_.submit_leader(done, Placement::LocalAll, st_.clock);
      if (d.kind == DcpMon::Decision::Kind::Finished) {
        st_.clock = std::max(st_.clock, d.ready_at);
      }
    } else {
      agent_->finish(sensitive_index_, st_.clock);
    }
  }

  const ScenarioConfig& cfg_;
  VariantState& st_;
  RunControl& control_;
  Arbiter& arbiter_;
  ReplicationConfig repl_;
  LockstepConfig lockstep_cfg_;
  DcpMon& dcp_;
  std::optional<DipMon> dipmon_;
  std::optional<DcpAgent> agent_;
  std::optional<SealedToken> previous_;
  std::uint64_t sensitive_index_ = 0;
};

}  // namespace

RunMetrics run_scenario(const ScenarioConfig& cfg, std::string run_id) {
  cfg.validate();
  const auto& script = *cfg.workload;
  const std::size_t n = cfg.variants;
  const auto classifications_before = monitor_issuer_classifications();

  RunControl control;
  auto channel = make_channel(cfg.channel, star_links(n), cfg.seed);
  if (cfg.sever_after > 0) channel->sever_after(cfg.sever_after);

  std::vector<std::unique_ptr<VariantState>> states;
  std::vector<std::unique_ptr<Arbiter>> arbiters;
  std::vector<std::unique_ptr<CommBuffer>> buffers;
  std::vector<std::unique_ptr<Connector>> connectors;
  for (std::size_t i = 0; i < n; ++i) {
    auto v = static_cast<VariantId>(i);
    EmulatedKernel kernel(script.files, {script.cwd, cfg.app_root});
    for (const auto& f : cfg.faults) {
      if (f.variant == v) kernel.inject_transient_failure(f.seq, f.count);
    }
    states.push_back(std::make_unique<VariantState>(
        v, i == 0 ? VariantRole::Leader : VariantRole::Follower, std::move(kernel)));
    arbiters.push_back(std::make_unique<Arbiter>(v, *cfg.policy, cfg.dipmon_enabled(), cfg.seed));
    buffers.push_back(std::make_unique<CommBuffer>(cfg.buffer_capacity));
    std::vector<NodeId> peers;
    if (i == 0) {
      for (std::size_t f = 1; f < n; ++f) peers.push_back(connector_node(static_cast<VariantId>(f)));
    } else {
      peers.push_back(connector_node(0));
    }
    connectors.push_back(std::make_unique<Connector>(
        v, *buffers.back(), *channel, std::move(peers),
        [&control] { control.terminate_all(Verdict::terminated("transport")); }));
  }
  for (auto& c : connectors) c->start();

  DcpMon dcp(*channel, control, n, LockstepConfig{cfg.timeout, cfg.cost.compare});
  dcp.start();

  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < n; ++i) {
      threads.emplace_back([&, i] {
        VariantRunner runner(cfg, *states[i], control, *arbiters[i], *buffers[i], *channel, dcp);
        runner.run();
      });
    }
  }

  dcp.stop();
  if (control.stopped()) {
    for (auto& c : connectors) c->abort();
    channel->close();
  } else {
    for (auto& c : connectors) c->drain_outgoing();
    channel->close();
    for (auto& c : connectors) c->finish_incoming();
  }

  RunMetrics m;
  m.run_id = std::move(run_id);
  m.workload = script.name;
  m.ssm = cfg.ssm;
  m.rsm = cfg.rsm;
  m.sr = cfg.sr;
  m.latency_us = cfg.channel.latency_us;
  m.seed = cfg.seed;
  m.verdict = control.verdict();

  const auto& lead = states[0]->counters;
  m.syscalls_total = lead.syscalls;
  m.sensitive = lead.sensitive;
  m.nonsensitive = lead.nonsensitive;
  m.sync_rtt_leader = lead.sync_rtt;
  m.stalls = lead.sim_stalls;
  for (std::size_t i = 0; i < n; ++i) {
    auto& st = *states[i];
    st.counters.external_io = st.kernel.external_io();
    if (i > 0) m.sync_rtt_follower += st.counters.sync_rtt;
    m.async_msgs += st.counters.async_msgs;
    m.crossings += arbiters[i]->crossings();
    m.sim_time = std::max(m.sim_time, st.clock);
    m.tokens_minted += arbiters[i]->tokens_minted();
    m.permits += arbiters[i]->permits();
    m.sensitive_tokens += arbiters[i]->sensitive_tokens();
    for (const auto& e : arbiters[i]->security_events()) m.security_events.push_back(e);
    m.incoming_consumed += st.counters.consumed;
    m.incoming_drained += buffers[i]->lane(Lane::Incoming).size();
    m.connector_sent += connectors[i]->sent();
    m.connector_received += connectors[i]->received();
    m.final_fds.push_back(st.fmap.fds());
    m.filemap_dumps.push_back(st.fmap.dump());
    m.per_variant.push_back(st.counters);
    m.logs.push_back(std::move(st.log));
  }
  m.lockstep_rounds = dcp.rounds();
  m.divergent_round = dcp.divergent_round();
  m.channel_messages = channel->messages();
  m.channel_roundtrips = channel->roundtrips();
  m.executions = control.executions();
  m.executions_at_verdict = control.executions_at_verdict();
  m.monitor_issuer_classifications = monitor_issuer_classifications() - classifications_before;
  m.baseline_time = native_time(script, cfg.cost, cfg.app_root);
  m.overhead = m.baseline_time > 0
                   ? static_cast<double>(m.sim_time) / static_cast<double>(m.baseline_time)
                   : 0.0;
  return m;
}

std::vector<RunMetrics> run_repeated(const ScenarioConfig& config,
                                     std::uint64_t first_run_index) {
  config.validate();
  std::vector<RunMetrics> out;
  for (int i = 0; i < config.repeat; ++i) {
    out.push_back(run_scenario(config, "r" + std::to_string(first_run_index + i)));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string csv_header() {
  return "run_id,workload,ssm,rsm,sr,latency_us,seed,verdict,syscalls_total,"
         "sensitive,nonsensitive,sync_rtt_leader,sync_rtt_follower,async_msgs,"
         "crossings,stalls,sim_time_us,baseline_time_us,overhead";
}

std::string csv_row(const RunMetrics& m) {
  std::ostringstream out;
  out << m.run_id << ',' << m.workload << ',' << m.ssm << ',' << m.rsm << ',' << m.sr
      << ',' << m.latency_us << ',' << m.seed << ',' << m.verdict.status_name() << ','
      << m.syscalls_total << ',' << m.sensitive << ',' << m.nonsensitive << ','
      << m.sync_rtt_leader << ',' << m.sync_rtt_follower << ',' << m.async_msgs << ','
      << m.crossings << ',' << m.stalls << ',' << std::fixed << std::setprecision(3)
      << ns_to_us(m.sim_time) << ',' << ns_to_us(m.baseline_time) << ','
      << std::setprecision(6) << m.overhead;
  return out.str();
}

std::uint64_t existing_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) return 0;
  std::uint64_t lines = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
  }
  return lines > 0 ? lines - 1 : 0;
}

void emit_report(const std::vector<RunMetrics>& runs, const std::string& path,
                 bool append) {
  if (runs.empty()) throw std::invalid_argument("emit_report: no completed runs");
  bool has_content = false;
  if (append) {
    std::error_code ec;
    has_content = std::filesystem::exists(path, ec) &&
                  std::filesystem::file_size(path, ec) > 0;
  }
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report to " + path);
  if (!has_content) out << csv_header() << '\n';
  for (const auto& m : runs) out << csv_row(m) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("error writing report to " + path);
}

void write_run_report(const RunMetrics& m, std::ostream& out) {
  out << "run " << m.run_id << " workload " << m.workload << '\n';
  out << "verdict " << m.verdict.to_string() << '\n';
  out << "lockstep rounds " << m.lockstep_rounds << ", executions " << m.executions
      << ", after verdict " << m.executions_after_verdict() << '\n';
  if (!m.divergent_round.empty()) {
    out << "divergent round entries:\n";
    for (std::size_t v = 0; v < m.divergent_round.size(); ++v) {
      out << "  variant " << v << ": ";
      const auto& d = m.divergent_round[v];
      if (!d) {
        out << "(none)\n";
      } else if (d->entry.finished) {
        out << "(finished)\n";
      } else {
        out << to_string(d->entry.call.kind) << ' ' << to_string(d->entry.call.args);
        if (d->entry.escalation != Escalation::None) {
          out << " [" << to_string(d->entry.escalation) << ']';
        }
        out << '\n';
      }
    }
  }
  for (std::size_t v = 0; v < m.logs.size(); ++v) {
    out << "variant " << v << " last events:\n";
    const auto& log = m.logs[v];
    auto from = log.size() > 3 ? log.size() - 3 : 0;
    for (auto i = from; i < log.size(); ++i) {
      const auto& r = log[i];
      out << "  seq " << r.seq << ' ' << to_string(r.kind) << ' ' << to_string(r.args)
          << ' ' << to_string(r.cls) << (r.executed ? " -> " + to_string(r.result) : " (not executed)")
          << '\n';
    }
  }
  for (const auto& e : m.security_events) {
    out << "security event: variant " << e.variant << " seq " << e.seq << ": " << e.reason
        << '\n';
  }
  for (std::size_t v = 0; v < m.filemap_dumps.size(); ++v) {
    out << "variant " << v << " file map:\n" << m.filemap_dumps[v];
  }
}

// ---------------------------------------------------------------------------

SuiteSpec SuiteSpec::parse(std::istream& in, const std::string& dir) {
  SuiteSpec s;
  s.dir = dir;
  std::string line;
  int lineno = 0;
  SuiteGroup* group = nullptr;
  auto fail = [&](const std::string& what) {
    throw ConfigError("suite line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) fail("bad section header");
      s.groups.push_back(SuiteGroup{text.substr(1, text.size() - 2), {}, {}, true, {}});
      group = &s.groups.back();
      continue;
    }
    auto eq = text.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    auto key = trim(std::string_view(text).substr(0, eq));
    auto value = trim(std::string_view(text).substr(eq + 1));
    if (!group) {
      if (key == "policy") {
        s.policy_path = value;
      } else if (key == "latency_us") {
        s.latency_us = parse_double(value, "latency_us");
      } else if (key == "seed") {
        s.seed = parse_number<std::uint64_t>(value, "seed");
      } else if (key == "variants") {
        s.variants = parse_number<std::size_t>(value, "variants");
      } else if (key == "app_root") {
        s.app_root = value;
      } else if (key == "repeat") {
        s.repeat = parse_number<int>(value, "repeat");
      } else {
        fail("unknown key " + key);
      }
      continue;
    }
    if (key == "workload") {
      group->workload_path = value;
    } else if (key == "configs") {
      std::istringstream words(value);
      std::string w;
      while (words >> w) group->configs.push_back(w);
    } else if (key == "order") {
      if (value != "strict" && value != "none") fail("order must be strict or none");
      group->strict_order = value == "strict";
    } else if (key == "bound") {
      group->bound = parse_double(value, "bound");
    } else {
      fail("unknown key " + key);
    }
  }
  if (s.policy_path.empty()) throw ConfigError("suite has no policy");
  if (s.groups.empty()) throw ConfigError("suite has no groups");
  for (const auto& g : s.groups) {
    if (g.workload_path.empty()) throw ConfigError("suite group " + g.name + " has no workload");
    if (g.configs.empty()) throw ConfigError("suite group " + g.name + " has no configs");
    for (const auto& c : g.configs) {
      ScenarioConfig probe;
      apply_label(probe, c);
    }
  }
  return s;
}

SuiteSpec SuiteSpec::load(const std::string& dir) {
  auto path = (std::filesystem::path(dir) / "suite.txt").string();
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read suite file " + path);
  return parse(in, dir);
}

BenchReport bench_suite(const SuiteSpec& suite) {
  namespace fs = std::filesystem;
  BenchReport report;
  auto resolve = [&](const std::string& p) {
    return fs::path(p).is_absolute() ? p : (fs::path(suite.dir) / p).string();
  };
  auto policy = std::make_shared<SensitivityPolicy>(
      SensitivityPolicy::load(resolve(suite.policy_path)));
  std::uint64_t run_index = 0;
  for (const auto& g : suite.groups) {
    auto script = std::make_shared<WorkloadScript>(WorkloadScript::load(resolve(g.workload_path)));
    std::vector<double> overheads;
    for (const auto& label : g.configs) {
      ScenarioConfig cfg;
      cfg.workload = script;
      cfg.policy = policy;
      cfg.variants = suite.variants;
      cfg.channel.latency_us = suite.latency_us;
      cfg.seed = suite.seed;
      cfg.app_root = suite.app_root;
      cfg.repeat = suite.repeat;
      apply_label(cfg, label);
      auto runs = run_repeated(cfg, run_index);
      run_index += runs.size();
      double mean = 0;
      for (const auto& r : runs) mean += r.overhead;
      mean /= static_cast<double>(runs.size());
      for (const auto& r : runs) {
        if (!r.verdict.clean_run()) {
          report.violations.push_back(g.name + "/" + label + ": verdict " +
                                      r.verdict.to_string());
        }
      }
      overheads.push_back(mean);
      report.rows.push_back(BenchRow{g.name, cfg.label(), runs.back()});
      report.rows.back().metrics.overhead = mean;
    }
    if (g.strict_order) {
      for (std::size_t i = 1; i < overheads.size(); ++i) {
        if (!(overheads[i - 1] > overheads[i])) {
          std::ostringstream why;
          why << g.name << ": overhead of " << g.configs[i - 1] << " (" << overheads[i - 1]
              << ") is not above " << g.configs[i] << " (" << overheads[i] << ')';
          report.violations.push_back(why.str());
        }
      }
    }
    if (g.bound && overheads.back() > *g.bound) {
      std::ostringstream why;
      why << g.name << ": overhead of " << g.configs.back() << " (" << overheads.back()
          << ") exceeds bound " << *g.bound;
      report.violations.push_back(why.str());
    }
  }
  return report;
}

void print_bench_table(const BenchReport& report, std::ostream& out) {
  out << std::left << std::setw(16) << "group" << std::setw(12) << "config"
      << std::right << std::setw(12) << "overhead" << std::setw(10) << "rtt_lead"
      << std::setw(10) << "async" << std::setw(14) << "sim_time_us" << '\n';
  for (const auto& r : report.rows) {
    out << std::left << std::setw(16) << r.group << std::setw(12) << r.config << std::right
        << std::setw(12) << std::fixed << std::setprecision(4) << r.metrics.overhead
        << std::setw(10) << r.metrics.sync_rtt_leader << std::setw(10)
        << r.metrics.async_msgs << std::setw(14) << std::setprecision(1)
        << ns_to_us(r.metrics.sim_time) << '\n';
  }
  for (const auto& v : report.violations) out << "VIOLATION: " << v << '\n';
  out << (report.ok() ? "ordering: ok" : "ordering: FAILED") << '\n';
}

}  // namespace mvx
