#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mvx {

using VariantId = std::uint16_t;

/// Raised for malformed workload scripts, attack specs and raw call descriptions.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid policies and run configurations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SyscallKind : std::uint8_t {
  Open,
  Close,
  Read,
  Write,
  Getcwd,
  Brk,
  Mmap,
  Mprotect,
  Setsockopt,
  Socket,
  Bind,
  Listen,
  Accept,
  Connect,
  Send,
  Recv,
  Stat,
  Lseek,
  Exit,
};

inline constexpr std::array kAllSyscallKinds = {
    SyscallKind::Open,   SyscallKind::Close,      SyscallKind::Read,
    SyscallKind::Write,  SyscallKind::Getcwd,     SyscallKind::Brk,
    SyscallKind::Mmap,   SyscallKind::Mprotect,   SyscallKind::Setsockopt,
    SyscallKind::Socket, SyscallKind::Bind,       SyscallKind::Listen,
    SyscallKind::Accept, SyscallKind::Connect,    SyscallKind::Send,
    SyscallKind::Recv,   SyscallKind::Stat,       SyscallKind::Lseek,
    SyscallKind::Exit,
};

std::string_view to_string(SyscallKind kind);
std::optional<SyscallKind> parse_kind(std::string_view name);

/// True for kinds whose first argument is a file descriptor.
bool takes_fd(SyscallKind kind);

enum class Issuer : std::uint8_t { Application, InProcessMonitor };

/// Symbolic errno values; platform numbering is deliberately absent.
enum class Errno : std::uint8_t {
  None,
  BadFd,
  NoEnt,
  NotSock,
  NoProtoOpt,
  Inval,
  Again,
  NotConn,
  ConnRefused,
  AddrInUse,
  IsDir,
};

std::string_view to_string(Errno e);
std::optional<Errno> parse_errno(std::string_view name);

/// Fixed, seedless 64-bit FNV-1a digest used for every buffer comparison.
std::uint64_t digest64(std::string_view bytes);

struct BytePayload {
  std::uint64_t length = 0;
  std::uint64_t digest = 0;

  static BytePayload of(std::string_view bytes) {
    return {bytes.size(), digest64(bytes)};
  }
  bool operator==(const BytePayload&) const = default;
};

/// Machine-independent view of a call's arguments. Buffers appear only as
/// (length, digest), never as addresses.
struct NormalizedArgs {
  std::optional<std::string> path;
  std::optional<std::string> endpoint;
  std::vector<std::string> flags;  // sorted, unique
  std::optional<int> fd;
  std::optional<BytePayload> payload;
  std::map<std::string, std::int64_t> numbers;

  bool operator==(const NormalizedArgs&) const = default;
};

std::string to_string(const NormalizedArgs& args);

/// Raw directive as written in a workload script: a kind plus textual key=value
/// arguments. `$name` fd references are resolved against variant bindings.
struct RawCall {
  SyscallKind kind = SyscallKind::Getcwd;
  std::map<std::string, std::string> args;
  int line = 0;
};

/// Variant-local state that normalization may consult.
struct NormalizeContext {
  std::string cwd = "/";
  const std::map<std::string, int>* bindings = nullptr;
};

struct SyscallEvent {
  VariantId variant = 0;
  std::uint64_t seq = 0;
  SyscallKind kind = SyscallKind::Getcwd;
  NormalizedArgs args;
  Issuer issuer = Issuer::Application;
  // Input buffer contents (write/send). Not part of any comparison; args.payload
  // carries the comparable digest.
  std::string buffer;
  // Binding name from `as=`; variant-local, never compared.
  std::string bind_as;
};

struct SyscallResult {
  SyscallKind kind = SyscallKind::Getcwd;
  std::int64_t ret = 0;
  Errno err = Errno::None;
  std::string payload;  // output bytes (read/recv/getcwd/stat)

  bool ok() const { return err == Errno::None; }
  BytePayload normalized_payload() const { return BytePayload::of(payload); }
  bool operator==(const SyscallResult&) const = default;
};

std::string to_string(const SyscallResult& r);

/// Collapses "." / ".." / repeated separators; relative paths resolve against cwd.
std::string canonical_path(std::string_view path, std::string_view cwd = "/");

/// True when `path` equals `root` or lies beneath it (both canonical).
bool path_under(std::string_view path, std::string_view root);

/// Builds the comparable argument view of a raw call. Throws ScenarioError on
/// unknown keys, missing required keys and unparsable values.
NormalizedArgs normalize(const RawCall& call, const NormalizeContext& ctx);

// ---------------------------------------------------------------------------
// Sensitivity policy

enum class Sensitivity : std::uint8_t { Sensitive, NonSensitive };
std::string_view to_string(Sensitivity s);

/// What an event's fd resolves to, as seen by the classification table.
enum class FdClass : std::uint8_t {
  None,
  File,
  Pipe,
  PublicSocket,
  PrivateSocket,
  Invalid,
};

inline constexpr std::array kAllFdClasses = {
    FdClass::None,          FdClass::File,         FdClass::Pipe,
    FdClass::PublicSocket,  FdClass::PrivateSocket, FdClass::Invalid,
};

std::string_view to_string(FdClass c);
std::optional<FdClass> parse_fd_class(std::string_view name);

struct PolicyRule {
  std::string kind_glob;
  std::optional<FdClass> fd_class;  // nullopt matches any
  Sensitivity cls = Sensitivity::Sensitive;
};

class SensitivityPolicy {
 public:
  SensitivityPolicy() = default;

  /// Socket-level relaxation: sensitive socket setup and public-socket traffic.
  static SensitivityPolicy socket_rw_level();
  static SensitivityPolicy parse(std::istream& in);
  static SensitivityPolicy parse(std::string_view text);
  static SensitivityPolicy load(const std::string& path);

  Sensitivity classify(SyscallKind kind, FdClass fd_class) const;

  Sensitivity default_class() const { return default_class_; }
  const std::vector<PolicyRule>& rules() const { return rules_; }
  bool always_monitored(SyscallKind kind) const;

  void set_default(Sensitivity s) { default_class_ = s; }
  void add_rule(PolicyRule rule);
  void add_always(SyscallKind kind);

 private:
  Sensitivity default_class_ = Sensitivity::Sensitive;
  std::vector<PolicyRule> rules_;
  std::array<bool, kAllSyscallKinds.size()> always_{};
};

extern const char* const kSocketRwLevelPolicyText;

class FileMap;

/// Resolves the fd class of an event through the file map. Invalid fds map to
/// FdClass::Invalid; fd-less kinds map to FdClass::None.
FdClass resolve_fd_class(const SyscallEvent& event, const FileMap& fmap);

/// Total, pure classification. Invalid-fd events are always Sensitive.
Sensitivity classify(const SyscallEvent& event, const FileMap& fmap,
                     const SensitivityPolicy& policy);

/// Number of classify() calls made for monitor-issued events. Must stay 0.
std::uint64_t monitor_issuer_classifications();

}  // namespace mvx
