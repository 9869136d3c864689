#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mvx/syscall_model.hpp"

namespace mvx {

/// A replicated result cannot be applied to the follower's event.
class ReplicationMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Filesystem = std::map<std::string, std::string>;

/// Tiny per-variant kernel: files, synthetic sockets, an fd table and a
/// symbolic errno model. Each variant owns its own instance; filesystem state
/// is never shared.
class EmulatedKernel {
 public:
  struct Options {
    std::string cwd = "/";
    // Files under this root are per-machine copies; every other path and every
    // non-shadow socket counts as external I/O.
    std::string local_root;
  };

  EmulatedKernel() : EmulatedKernel(Filesystem{}, Options{}) {}
  EmulatedKernel(Filesystem files, Options options);

  /// Executes the call against local state. Emulated failures come back as
  /// errno results, never as exceptions.
  SyscallResult execute(const SyscallEvent& event);

  /// Follower side of replication: adopts the leader's result with no external
  /// side effect, keeping fd bookkeeping aligned through shadow entries.
  /// Throws ReplicationMismatch on a kind tag mismatch or fd collision.
  SyscallResult apply_replicated(const SyscallEvent& event,
                                 const SyscallResult& leader);

  /// The next `count` executions of the call with this seq_no fail with EAGAIN.
  void inject_transient_failure(std::uint64_t seq, int count);

  bool file_exists(const std::string& path) const;
  bool is_shadow(int fd) const;
  std::vector<int> fds() const;
  const Filesystem& files() const { return files_; }
  const std::string& cwd() const { return options_.cwd; }
  const std::string& console() const { return console_; }
  bool exited() const { return exited_; }

  /// Operations that touched a resource outside this machine's private copy.
  std::uint64_t external_io() const { return external_io_; }

 private:
  struct OpenFile {
    std::string path;
    std::uint64_t offset = 0;
    bool readable = true;
    bool writable = false;
    bool append = false;
  };
  struct Socket {
    bool is_public = false;
    bool bound = false;
    bool listening = false;
    bool connected = false;
    std::string addr;
    std::string inbound;
    std::size_t cursor = 0;
    std::map<std::int64_t, std::int64_t> opts;
  };
  struct Console {
    int stream = 0;
  };
  struct FdObject {
    std::variant<OpenFile, Socket, Console> obj;
    bool shadow = false;
  };

  int next_fd() const;
  bool is_external_path(const std::string& path) const;
  bool is_directory(const std::string& path) const;
  SyscallResult fail(SyscallKind kind, Errno e) const;

  SyscallResult do_open(const SyscallEvent& ev);
  SyscallResult do_read(const SyscallEvent& ev, bool socket_only);
  SyscallResult do_write(const SyscallEvent& ev, bool socket_only);
  SyscallResult do_setsockopt(const SyscallEvent& ev);
  SyscallResult do_socket_op(const SyscallEvent& ev);

  Filesystem files_;
  Options options_;
  std::map<int, FdObject> fds_;
  std::map<std::uint64_t, int> transient_;
  std::int64_t heap_ = 0;
  std::vector<std::vector<std::string>> regions_;
  std::uint64_t conn_serial_ = 0;
  std::string console_;
  std::uint64_t external_io_ = 0;
  bool exited_ = false;
};

}  // namespace mvx
