#include "mvx/variant_engine.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace mvx {

namespace {

struct Token {
  std::string text;
  bool quoted = false;
};

// Splits a line on whitespace, honouring double quotes (which may start
// mid-token, as in key="a b").
std::vector<std::string> tokenize(const std::string& line, int lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool in_token = false;
  bool in_quote = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (in_quote) {
      if (c == '\\' && i + 1 < line.size()) {
        char n = line[++i];
        switch (n) {
          case 'n': cur += '\n'; break;
          case 'r': cur += '\r'; break;
          case 't': cur += '\t'; break;
          default: cur += n; break;
        }
      } else if (c == '"') {
        in_quote = false;
      } else {
        cur += c;
      }
      continue;
    }
    if (c == '#') break;
    if (c == ' ' || c == '\t' || c == '\r') {
      if (in_token) {
        out.push_back(std::move(cur));
        cur.clear();
        in_token = false;
      }
      continue;
    }
    in_token = true;
    if (c == '"') {
      in_quote = true;
    } else {
      cur += c;
    }
  }
  if (in_quote) {
    throw ScenarioError("line " + std::to_string(lineno) +
                        ": unterminated quoted string");
  }
  if (in_token) out.push_back(std::move(cur));
  return out;
}

std::uint64_t parse_count(const std::string& text, int lineno) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ScenarioError("line " + std::to_string(lineno) +
                        ": loop count must be a non-negative integer");
  }
  return v;
}

std::uint64_t count_calls(const std::vector<WorkloadScript::Instruction>& body) {
  std::uint64_t n = 0;
  for (const auto& ins : body) {
    n += ins.loop ? ins.loop->count * count_calls(ins.loop->body) : 1;
  }
  return n;
}

void collect_bind_names(const std::vector<WorkloadScript::Instruction>& body,
                        std::map<std::string, int>& out) {
  for (const auto& ins : body) {
    if (ins.loop) {
      collect_bind_names(ins.loop->body, out);
    } else if (auto it = ins.call.args.find("as"); it != ins.call.args.end()) {
      out.emplace(it->second, -1);
    }
  }
}

}  // namespace

std::string_view to_string(VariantRole r) {
  return r == VariantRole::Leader ? "leader" : "follower";
}

WorkloadScript WorkloadScript::parse(std::string_view text, std::string name) {
  std::istringstream in{std::string(text)};
  return parse(in, std::move(name));
}

WorkloadScript WorkloadScript::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open workload '" + path + "'");
  auto slash = path.find_last_of('/');
  auto base = slash == std::string::npos ? path : path.substr(slash + 1);
  if (auto dot = base.find_last_of('.'); dot != std::string::npos && dot > 0) {
    base.resize(dot);
  }
  try {
    return parse(in, base);
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

WorkloadScript WorkloadScript::parse(std::istream& in, std::string name) {
  WorkloadScript script;
  script.name = std::move(name);
  std::vector<std::vector<Instruction>*> blocks{&script.body};
  std::vector<int> open_loops;
  std::map<std::string, int> known_bindings;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = tokenize(line, lineno);
    if (toks.empty()) continue;
    const auto& head = toks[0];
    auto where = "line " + std::to_string(lineno) + ": ";

    if (head == "cwd") {
      if (toks.size() != 2) throw ScenarioError(where + "cwd takes one path");
      script.cwd = canonical_path(toks[1]);
    } else if (head == "file") {
      if (toks.size() < 2 || toks.size() > 3) {
        throw ScenarioError(where + "file takes a path and optional content");
      }
      script.files[canonical_path(toks[1], script.cwd)] =
          toks.size() == 3 ? toks[2] : std::string{};
    } else if (head == "loop") {
      if (toks.size() != 2) throw ScenarioError(where + "loop takes a count");
      auto loop = std::make_shared<Loop>();
      loop->count = parse_count(toks[1], lineno);
      blocks.back()->push_back(Instruction{{}, loop});
      blocks.push_back(&loop->body);
      open_loops.push_back(lineno);
    } else if (head == "end") {
      if (toks.size() != 1) throw ScenarioError(where + "end takes no arguments");
      if (open_loops.empty()) throw ScenarioError(where + "'end' without 'loop'");
      blocks.pop_back();
      open_loops.pop_back();
    } else if (head == "call") {
      if (toks.size() < 2) throw ScenarioError(where + "call needs a syscall kind");
      auto kind = parse_kind(toks[1]);
      if (!kind) throw ScenarioError(where + "unknown syscall '" + toks[1] + "'");
      RawCall call;
      call.kind = *kind;
      call.line = lineno;
      for (std::size_t i = 2; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos || eq == 0) {
          throw ScenarioError(where + "expected key=value, got '" + toks[i] + "'");
        }
        auto key = toks[i].substr(0, eq);
        if (!call.args.emplace(key, toks[i].substr(eq + 1)).second) {
          throw ScenarioError(where + "duplicate argument '" + key + "'");
        }
      }
      // Validate arguments now so errors carry the right line number.
      NormalizeContext ctx{script.cwd, &known_bindings};
      normalize(call, ctx);
      if (auto it = call.args.find("as"); it != call.args.end()) {
        if (it->second.empty()) throw ScenarioError(where + "empty binding name");
        known_bindings.emplace(it->second, 0);
      }
      blocks.back()->push_back(Instruction{std::move(call), nullptr});
    } else {
      throw ScenarioError(where + "unknown directive '" + head + "'");
    }
  }
  if (!open_loops.empty()) {
    throw ScenarioError("line " + std::to_string(open_loops.back()) +
                        ": loop without matching 'end'");
  }
  return script;
}

std::uint64_t WorkloadScript::call_count() const { return count_calls(body); }

// ---------------------------------------------------------------------------

VariantEngine::VariantEngine(const WorkloadScript& script, VariantId variant)
    : script_(&script), variant_(variant) {
  stack_.push_back(Frame{&script.body, 0, 1});
  collect_bind_names(script.body, bindings_);
}

void VariantEngine::arm(const AttackSpec& attack) {
  if (attack.variant != variant_ || attack.is_token_attack()) return;
  attack_ = attack;
}

const RawCall* VariantEngine::advance() {
  while (!stack_.empty()) {
    auto& f = stack_.back();
    if (f.index >= f.body->size()) {
      if (--f.remaining > 0) {
        f.index = 0;
      } else {
        stack_.pop_back();
      }
      continue;
    }
    const auto& ins = (*f.body)[f.index++];
    if (ins.loop) {
      if (ins.loop->count > 0 && !ins.loop->body.empty()) {
        stack_.push_back(Frame{&ins.loop->body, 0, ins.loop->count});
      }
      continue;
    }
    return &ins.call;
  }
  return nullptr;
}

SyscallEvent VariantEngine::make_event(const RawCall& call) {
  SyscallEvent ev;
  ev.variant = variant_;
  ev.seq = seq_++;
  ev.kind = call.kind;
  ev.args = normalize(call, NormalizeContext{script_->cwd, &bindings_});
  ev.issuer = Issuer::Application;
  if (auto it = call.args.find("data"); it != call.args.end()) ev.buffer = it->second;
  if (auto it = call.args.find("as"); it != call.args.end()) ev.bind_as = it->second;
  return ev;
}

void VariantEngine::perturb(SyscallEvent& ev) const {
  const auto& field = attack_->field;
  auto delta = attack_->delta;
  if (field == "fd") {
    ev.args.fd = ev.args.fd.value_or(0) + static_cast<int>(delta);
  } else if (field == "path") {
    ev.args.path = ev.args.path.value_or("") + "_" + std::to_string(delta);
  } else if (field == "addr") {
    ev.args.endpoint = ev.args.endpoint.value_or("") + "_" + std::to_string(delta);
  } else if (field == "data") {
    ev.buffer.append(static_cast<std::size_t>(delta > 0 ? delta : 1), 'X');
    ev.args.payload = BytePayload::of(ev.buffer);
  } else {
    ev.args.numbers[field] += delta;
  }
}

std::optional<SyscallEvent> VariantEngine::step() {
  if (pending_) {
    RawCall call = std::move(*pending_);
    pending_.reset();
    return make_event(call);
  }
  const RawCall* call = advance();
  if (call == nullptr) return std::nullopt;
  if (attack_ && attack_->seq == seq_) {
    auto attack = *attack_;
    switch (attack.kind) {
      case AttackSpec::Kind::ExtraSensitiveCall:
        attack_.reset();
        pending_ = *call;
        return make_event(synthesize_call(attack.extra_kind));
      case AttackSpec::Kind::SkipCall:
        attack_.reset();
        call = advance();
        if (call == nullptr) return std::nullopt;
        break;
      case AttackSpec::Kind::ArgPerturb: {
        auto ev = make_event(*call);
        perturb(ev);
        attack_.reset();
        return ev;
      }
      default:
        break;
    }
  }
  return make_event(*call);
}

void VariantEngine::complete(const SyscallEvent& event,
                             const SyscallResult& result) {
  if (!event.bind_as.empty()) {
    bindings_[event.bind_as] = result.ok() ? static_cast<int>(result.ret) : -1;
  }
}

RawCall synthesize_call(SyscallKind kind) {
  RawCall c;
  c.kind = kind;
  switch (kind) {
    case SyscallKind::Open: c.args = {{"path", "/etc/passwd"}}; break;
    case SyscallKind::Close: c.args = {{"fd", "0"}}; break;
    case SyscallKind::Read: c.args = {{"fd", "0"}, {"len", "64"}}; break;
    case SyscallKind::Write: c.args = {{"fd", "1"}, {"data", "pwned"}}; break;
    case SyscallKind::Getcwd: break;
    case SyscallKind::Brk: c.args = {{"size", "4096"}}; break;
    case SyscallKind::Mmap:
      c.args = {{"len", "4096"}, {"prot", "read|write|exec"}};
      break;
    case SyscallKind::Mprotect:
      c.args = {{"region", "0"}, {"prot", "read|write|exec"}};
      break;
    case SyscallKind::Setsockopt:
      c.args = {{"fd", "0"}, {"level", "socket"}, {"opt", "reuseaddr"}};
      break;
    case SyscallKind::Socket: c.args = {{"scope", "public"}}; break;
    case SyscallKind::Bind: c.args = {{"fd", "0"}, {"addr", "0.0.0.0:4444"}}; break;
    case SyscallKind::Listen: c.args = {{"fd", "0"}}; break;
    case SyscallKind::Accept: c.args = {{"fd", "0"}}; break;
    case SyscallKind::Connect:
      c.args = {{"fd", "0"}, {"addr", "attacker:4444"}};
      break;
    case SyscallKind::Send: c.args = {{"fd", "0"}, {"data", "x"}}; break;
    case SyscallKind::Recv: c.args = {{"fd", "0"}, {"len", "1"}}; break;
    case SyscallKind::Stat: c.args = {{"path", "/etc/shadow"}}; break;
    case SyscallKind::Lseek: c.args = {{"fd", "0"}, {"offset", "0"}}; break;
    case SyscallKind::Exit: c.args = {{"code", "1"}}; break;
  }
  return c;
}

// ---------------------------------------------------------------------------

AttackSpec AttackSpec::parse(std::string_view text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    auto colon = text.find(':', start);
    parts.emplace_back(text.substr(start, colon == std::string_view::npos
                                              ? std::string_view::npos
                                              : colon - start));
    if (colon == std::string_view::npos) break;
    start = colon + 1;
  }
  auto bad = [&](const std::string& why) {
    return ScenarioError("attack spec '" + std::string(text) + "': " + why);
  };
  if (parts.size() < 3) throw bad("expected <variant>:<seq>:<mutation>");
  auto to_u64 = [&](const std::string& s, int base = 10) {
    std::uint64_t v = 0;
    const char* b = s.data();
    if (base == 16 && s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
      b += 2;
    }
    auto [ptr, ec] = std::from_chars(b, s.data() + s.size(), v, base);
    if (ec != std::errc{} || ptr != s.data() + s.size() || b == s.data() + s.size()) {
      throw bad("'" + s + "' is not a number");
    }
    return v;
  };
  AttackSpec a;
  auto variant = to_u64(parts[0]);
  if (variant > 0xffff) throw bad("variant out of range");
  a.variant = static_cast<VariantId>(variant);
  a.seq = to_u64(parts[1]);
  const auto& m = parts[2];
  auto expect_args = [&](std::size_t n) {
    if (parts.size() != 3 + n) throw bad("'" + m + "' takes " + std::to_string(n) + " argument(s)");
  };
  if (m == "extra") {
    expect_args(1);
    auto k = parse_kind(parts[3]);
    if (!k) throw bad("unknown syscall '" + parts[3] + "'");
    a.kind = Kind::ExtraSensitiveCall;
    a.extra_kind = *k;
  } else if (m == "perturb") {
    expect_args(2);
    a.kind = Kind::ArgPerturb;
    a.field = parts[3];
    std::int64_t d = 0;
    auto [ptr, ec] = std::from_chars(parts[4].data(), parts[4].data() + parts[4].size(), d);
    if (ec != std::errc{} || ptr != parts[4].data() + parts[4].size() || d == 0) {
      throw bad("perturbation delta must be a non-zero integer");
    }
    a.delta = d;
  } else if (m == "skip") {
    expect_args(0);
    a.kind = Kind::SkipCall;
  } else if (m == "token-flip") {
    expect_args(1);
    a.kind = Kind::TokenFlip;
    a.mask = to_u64(parts[3], 16);
    if (a.mask == 0) throw bad("token-flip mask must be non-zero");
  } else if (m == "token-replay") {
    expect_args(0);
    a.kind = Kind::TokenReplay;
  } else if (m == "forge-restart") {
    expect_args(0);
    a.kind = Kind::ForgedRestart;
  } else {
    throw bad("unknown mutation '" + m + "'");
  }
  return a;
}

std::string AttackSpec::to_string() const {
  std::ostringstream os;
  os << variant << ':' << seq << ':';
  switch (kind) {
    case Kind::ExtraSensitiveCall: os << "extra:" << mvx::to_string(extra_kind); break;
    case Kind::ArgPerturb: os << "perturb:" << field << ':' << delta; break;
    case Kind::SkipCall: os << "skip"; break;
    case Kind::TokenFlip: os << "token-flip:" << std::hex << mask; break;
    case Kind::TokenReplay: os << "token-replay"; break;
    case Kind::ForgedRestart: os << "forge-restart"; break;
  }
  return os.str();
}

}  // namespace mvx
