#include "mvx/syscall_model.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <set>
#include <sstream>

#include "mvx/filemap.hpp"

namespace mvx {

namespace {

constexpr std::array<std::string_view, kAllSyscallKinds.size()> kKindNames = {
    "open",   "close",  "read",   "write",  "getcwd", "brk",    "mmap",
    "mprotect", "setsockopt", "socket", "bind", "listen", "accept",
    "connect", "send",  "recv",   "stat",   "lseek",  "exit",
};

constexpr std::array<std::string_view, 11> kErrnoNames = {
    "OK",     "EBADF",  "ENOENT",       "ENOTSOCK",   "ENOPROTOOPT", "EINVAL",
    "EAGAIN", "ENOTCONN", "ECONNREFUSED", "EADDRINUSE", "EISDIR",
};

std::atomic<std::uint64_t> g_monitor_issuer_classifications{0};

enum class ArgType { Fd, Int, Path, Endpoint, Bytes, Flags, Bind };

struct ArgSpec {
  std::string_view key;
  ArgType type;
  bool required;
};

struct KindSchema {
  std::vector<ArgSpec> args;
  std::set<std::string_view> allowed_flags;
};

const KindSchema& schema_for(SyscallKind kind) {
  static const std::array<KindSchema, kAllSyscallKinds.size()> schemas = [] {
    std::array<KindSchema, kAllSyscallKinds.size()> s;
    auto at = [&](SyscallKind k) -> KindSchema& {
      return s[static_cast<std::size_t>(k)];
    };
    const std::set<std::string_view> open_flags = {"rdonly", "wronly", "rdwr",
                                                   "create", "trunc",  "append"};
    const std::set<std::string_view> prot_flags = {"none", "read", "write",
                                                   "exec"};
    at(SyscallKind::Open) = {{{"path", ArgType::Path, true},
                              {"flags", ArgType::Flags, false},
                              {"as", ArgType::Bind, false}},
                             open_flags};
    at(SyscallKind::Close) = {{{"fd", ArgType::Fd, true}}, {}};
    at(SyscallKind::Read) = {
        {{"fd", ArgType::Fd, true}, {"len", ArgType::Int, true}}, {}};
    at(SyscallKind::Write) = {
        {{"fd", ArgType::Fd, true}, {"data", ArgType::Bytes, true}}, {}};
    at(SyscallKind::Getcwd) = {{{"len", ArgType::Int, false}}, {}};
    at(SyscallKind::Brk) = {{{"size", ArgType::Int, true}}, {}};
    at(SyscallKind::Mmap) = {
        {{"len", ArgType::Int, true}, {"prot", ArgType::Flags, false}},
        prot_flags};
    at(SyscallKind::Mprotect) = {
        {{"region", ArgType::Int, true}, {"prot", ArgType::Flags, false}},
        prot_flags};
    at(SyscallKind::Setsockopt) = {{{"fd", ArgType::Fd, true},
                                    {"level", ArgType::Int, true},
                                    {"opt", ArgType::Int, true},
                                    {"value", ArgType::Int, false}},
                                   {}};
    at(SyscallKind::Socket) = {
        {{"scope", ArgType::Flags, false}, {"as", ArgType::Bind, false}},
        {"public", "private"}};
    at(SyscallKind::Bind) = {
        {{"fd", ArgType::Fd, true}, {"addr", ArgType::Endpoint, true}}, {}};
    at(SyscallKind::Listen) = {
        {{"fd", ArgType::Fd, true}, {"backlog", ArgType::Int, false}}, {}};
    at(SyscallKind::Accept) = {
        {{"fd", ArgType::Fd, true}, {"as", ArgType::Bind, false}}, {}};
    at(SyscallKind::Connect) = {
        {{"fd", ArgType::Fd, true}, {"addr", ArgType::Endpoint, true}}, {}};
    at(SyscallKind::Send) = {
        {{"fd", ArgType::Fd, true}, {"data", ArgType::Bytes, true}}, {}};
    at(SyscallKind::Recv) = {
        {{"fd", ArgType::Fd, true}, {"len", ArgType::Int, true}}, {}};
    at(SyscallKind::Stat) = {{{"path", ArgType::Path, true}}, {}};
    at(SyscallKind::Lseek) = {{{"fd", ArgType::Fd, true},
                               {"offset", ArgType::Int, true},
                               {"whence", ArgType::Int, false}},
                              {}};
    at(SyscallKind::Exit) = {{{"code", ArgType::Int, false}}, {}};
    return s;
  }();
  return schemas[static_cast<std::size_t>(kind)];
}

// Symbolic names accepted for integer-valued arguments.
const std::map<std::string_view, std::int64_t>& symbolic_ints() {
  static const std::map<std::string_view, std::int64_t> m = {
      // setsockopt levels
      {"socket", 1},
      {"tcp", 6},
      // setsockopt options
      {"nodelay", 1},
      {"reuseaddr", 2},
      {"sndbuf", 7},
      {"rcvbuf", 8},
      {"keepalive", 9},
      // lseek whence
      {"set", 0},
      {"cur", 1},
      {"end", 2},
  };
  return m;
}

std::int64_t parse_int(std::string_view key, std::string_view text, int line) {
  if (auto it = symbolic_ints().find(text); it != symbolic_ints().end()) {
    return it->second;
  }
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ScenarioError("line " + std::to_string(line) + ": argument '" +
                        std::string(key) + "' expects an integer, got '" +
                        std::string(text) + "'");
  }
  return v;
}

std::vector<std::string> parse_flags(const KindSchema& schema,
                                     std::string_view text, int line) {
  std::set<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto bar = text.find('|', start);
    auto tok = text.substr(start, bar == std::string_view::npos
                                      ? std::string_view::npos
                                      : bar - start);
    if (!tok.empty()) {
      if (!schema.allowed_flags.contains(tok)) {
        throw ScenarioError("line " + std::to_string(line) + ": unknown flag '" +
                            std::string(tok) + "'");
      }
      out.emplace(tok);
    }
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return {out.begin(), out.end()};
}

std::string canonical_endpoint(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool glob_matches(const std::string& glob, std::string_view name) {
  return ::fnmatch(glob.c_str(), std::string(name).c_str(), 0) == 0;
}

}  // namespace

std::string_view to_string(SyscallKind kind) {
  return kKindNames[static_cast<std::size_t>(kind)];
}

std::optional<SyscallKind> parse_kind(std::string_view name) {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == name) return kAllSyscallKinds[i];
  }
  return std::nullopt;
}

bool takes_fd(SyscallKind kind) {
  switch (kind) {
    case SyscallKind::Close:
    case SyscallKind::Read:
    case SyscallKind::Write:
    case SyscallKind::Setsockopt:
    case SyscallKind::Bind:
    case SyscallKind::Listen:
    case SyscallKind::Accept:
    case SyscallKind::Connect:
    case SyscallKind::Send:
    case SyscallKind::Recv:
    case SyscallKind::Lseek:
      return true;
    default:
      return false;
  }
}

std::string_view to_string(Errno e) {
  return kErrnoNames[static_cast<std::size_t>(e)];
}

std::optional<Errno> parse_errno(std::string_view name) {
  for (std::size_t i = 0; i < kErrnoNames.size(); ++i) {
    if (kErrnoNames[i] == name) return static_cast<Errno>(i);
  }
  return std::nullopt;
}

std::uint64_t digest64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_string(const NormalizedArgs& a) {
  std::ostringstream os;
  const char* sep = "";
  auto field = [&](std::string_view k) -> std::ostream& {
    os << sep << k << '=';
    sep = " ";
    return os;
  };
  if (a.fd) field("fd") << *a.fd;
  if (a.path) field("path") << *a.path;
  if (a.endpoint) field("addr") << *a.endpoint;
  if (!a.flags.empty()) {
    field("flags");
    for (std::size_t i = 0; i < a.flags.size(); ++i) {
      os << (i ? "|" : "") << a.flags[i];
    }
  }
  for (const auto& [k, v] : a.numbers) field(k) << v;
  if (a.payload) {
    field("payload") << a.payload->length << ':' << std::hex
                     << std::setw(16) << std::setfill('0') << a.payload->digest
                     << std::dec << std::setfill(' ');
  }
  return os.str();
}

std::string to_string(const SyscallResult& r) {
  std::ostringstream os;
  os << to_string(r.kind) << " ret=" << r.ret << " err=" << to_string(r.err);
  if (!r.payload.empty()) {
    auto p = r.normalized_payload();
    os << " payload=" << p.length << ':' << std::hex << std::setw(16)
       << std::setfill('0') << p.digest;
  }
  return os.str();
}

std::string canonical_path(std::string_view path, std::string_view cwd) {
  std::vector<std::string_view> parts;
  auto push_parts = [&parts](std::string_view p) {
    std::size_t i = 0;
    while (i < p.size()) {
      while (i < p.size() && p[i] == '/') ++i;
      std::size_t j = i;
      while (j < p.size() && p[j] != '/') ++j;
      auto seg = p.substr(i, j - i);
      if (seg.empty() || seg == ".") {
        // skip
      } else if (seg == "..") {
        if (!parts.empty()) parts.pop_back();
      } else {
        parts.push_back(seg);
      }
      i = j;
    }
  };
  if (path.empty() || path.front() != '/') push_parts(cwd);
  push_parts(path);
  std::string out;
  for (auto seg : parts) {
    out += '/';
    out += seg;
  }
  return out.empty() ? "/" : out;
}

bool path_under(std::string_view path, std::string_view root) {
  if (root.empty()) return false;
  if (root == "/") return true;
  if (path.size() < root.size() || path.substr(0, root.size()) != root) {
    return false;
  }
  return path.size() == root.size() || path[root.size()] == '/';
}

NormalizedArgs normalize(const RawCall& call, const NormalizeContext& ctx) {
  const auto& schema = schema_for(call.kind);
  auto where = [&] { return "line " + std::to_string(call.line) + ": "; };

  for (const auto& [key, _] : call.args) {
    bool known = std::any_of(schema.args.begin(), schema.args.end(),
                             [&](const ArgSpec& s) { return s.key == key; });
    if (!known) {
      throw ScenarioError(where() + "unknown argument '" + key + "' for " +
                          std::string(to_string(call.kind)));
    }
  }

  NormalizedArgs out;
  for (const auto& spec : schema.args) {
    auto it = call.args.find(std::string(spec.key));
    if (it == call.args.end()) {
      if (spec.required) {
        throw ScenarioError(where() + std::string(to_string(call.kind)) +
                            " requires '" + std::string(spec.key) + "'");
      }
      continue;
    }
    const std::string& text = it->second;
    switch (spec.type) {
      case ArgType::Fd: {
        if (!text.empty() && text.front() == '$') {
          auto name = text.substr(1);
          if (ctx.bindings == nullptr || !ctx.bindings->contains(name)) {
            throw ScenarioError(where() + "unbound fd reference '" + text + "'");
          }
          out.fd = ctx.bindings->at(name);
        } else {
          out.fd = static_cast<int>(parse_int(spec.key, text, call.line));
        }
        break;
      }
      case ArgType::Int:
        out.numbers[std::string(spec.key)] =
            parse_int(spec.key, text, call.line);
        break;
      case ArgType::Path:
        if (text.empty()) throw ScenarioError(where() + "empty path");
        out.path = canonical_path(text, ctx.cwd);
        break;
      case ArgType::Endpoint:
        if (text.empty()) throw ScenarioError(where() + "empty address");
        out.endpoint = canonical_endpoint(text);
        break;
      case ArgType::Bytes:
        out.payload = BytePayload::of(text);
        break;
      case ArgType::Flags: {
        auto flags = parse_flags(schema, text, call.line);
        out.flags.insert(out.flags.end(), flags.begin(), flags.end());
        break;
      }
      case ArgType::Bind:
        break;
    }
  }
  std::sort(out.flags.begin(), out.flags.end());
  out.flags.erase(std::unique(out.flags.begin(), out.flags.end()),
                  out.flags.end());
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Sensitivity s) {
  return s == Sensitivity::Sensitive ? "sensitive" : "nonsensitive";
}

std::string_view to_string(FdClass c) {
  switch (c) {
    case FdClass::None: return "none";
    case FdClass::File: return "file";
    case FdClass::Pipe: return "pipe";
    case FdClass::PublicSocket: return "pubsock";
    case FdClass::PrivateSocket: return "privsock";
    case FdClass::Invalid: return "invalid";
  }
  return "?";
}

std::optional<FdClass> parse_fd_class(std::string_view name) {
  for (auto c : kAllFdClasses) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

const char* const kSocketRwLevelPolicyText = R"(# SOCKET_RW_LEVEL reconstruction.
# Socket setup, memory protection and process control are sensitive, as is
# traffic on the public interface. Everything else is handled in-process.
@default nonsensitive
@always mmap
@always mprotect
socket * sensitive
bind * sensitive
listen * sensitive
accept * sensitive
connect * sensitive
exit * sensitive
read pubsock sensitive
write pubsock sensitive
send pubsock sensitive
recv pubsock sensitive
* * nonsensitive
)";

SensitivityPolicy SensitivityPolicy::socket_rw_level() {
  return parse(std::string_view(kSocketRwLevelPolicyText));
}

void SensitivityPolicy::add_rule(PolicyRule rule) {
  rules_.push_back(std::move(rule));
}

void SensitivityPolicy::add_always(SyscallKind kind) {
  always_[static_cast<std::size_t>(kind)] = true;
}

bool SensitivityPolicy::always_monitored(SyscallKind kind) const {
  return always_[static_cast<std::size_t>(kind)];
}

SensitivityPolicy SensitivityPolicy::parse(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse(in);
}

SensitivityPolicy SensitivityPolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy file '" + path + "'");
  try {
    return parse(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

SensitivityPolicy SensitivityPolicy::parse(std::istream& in) {
  SensitivityPolicy policy;
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ConfigError("policy line " + std::to_string(lineno) + ": " + msg);
  };
  auto parse_class = [&](const std::string& tok) {
    if (tok == "sensitive") return Sensitivity::Sensitive;
    if (tok == "nonsensitive") return Sensitivity::NonSensitive;
    fail("expected 'sensitive' or 'nonsensitive', got '" + tok + "'");
    return Sensitivity::Sensitive;
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::vector<std::string> toks;
    for (std::string t; ls >> t;) toks.push_back(t);
    if (toks.empty()) continue;

    if (toks[0] == "@always") {
      if (toks.size() != 2) fail("@always takes exactly one syscall name");
      auto kind = parse_kind(toks[1]);
      if (!kind) fail("unknown syscall '" + toks[1] + "'");
      policy.add_always(*kind);
    } else if (toks[0] == "@default") {
      if (toks.size() != 2) fail("@default takes exactly one class");
      policy.set_default(parse_class(toks[1]));
    } else if (toks[0].front() == '@') {
      fail("unknown directive '" + toks[0] + "'");
    } else {
      if (toks.size() != 3) fail("expected '<kind-glob> <fd-kind|*> <class>'");
      bool any = std::any_of(kAllSyscallKinds.begin(), kAllSyscallKinds.end(),
                             [&](SyscallKind k) {
                               return glob_matches(toks[0], to_string(k));
                             });
      if (!any) fail("pattern '" + toks[0] + "' matches no known syscall");
      PolicyRule rule{toks[0], std::nullopt, parse_class(toks[2])};
      if (toks[1] != "*") {
        rule.fd_class = parse_fd_class(toks[1]);
        if (!rule.fd_class) fail("unknown fd kind '" + toks[1] + "'");
      }
      policy.add_rule(std::move(rule));
    }
  }
  return policy;
}

Sensitivity SensitivityPolicy::classify(SyscallKind kind,
                                        FdClass fd_class) const {
  if (fd_class == FdClass::Invalid) return Sensitivity::Sensitive;
  if (always_monitored(kind)) return Sensitivity::Sensitive;
  for (const auto& rule : rules_) {
    if (rule.fd_class && *rule.fd_class != fd_class) continue;
    if (glob_matches(rule.kind_glob, to_string(kind))) return rule.cls;
  }
  return default_class_;
}

FdClass resolve_fd_class(const SyscallEvent& event, const FileMap& fmap) {
  if (!takes_fd(event.kind)) return FdClass::None;
  if (!event.args.fd) return FdClass::Invalid;
  auto meta = fmap.find(*event.args.fd);
  if (!meta) return FdClass::Invalid;
  switch (meta->kind) {
    case FdKind::File: return FdClass::File;
    case FdKind::Pipe: return FdClass::Pipe;
    case FdKind::Socket:
      return meta->public_iface ? FdClass::PublicSocket : FdClass::PrivateSocket;
  }
  return FdClass::Invalid;
}

Sensitivity classify(const SyscallEvent& event, const FileMap& fmap,
                     const SensitivityPolicy& policy) {
  if (event.issuer == Issuer::InProcessMonitor) {
    g_monitor_issuer_classifications.fetch_add(1, std::memory_order_relaxed);
  }
  return policy.classify(event.kind, resolve_fd_class(event, fmap));
}

std::uint64_t monitor_issuer_classifications() {
  return g_monitor_issuer_classifications.load(std::memory_order_relaxed);
}

}  // namespace mvx
