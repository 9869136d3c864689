#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mvx/syscall_model.hpp"

namespace mvx {

enum class FdKind : std::uint8_t { File, Socket, Pipe };
enum class FdOrigin : std::uint8_t { Local, ReplicatedShadow };

std::string_view to_string(FdKind k);
std::string_view to_string(FdOrigin o);

struct FdMeta {
  int fd = -1;
  FdKind kind = FdKind::File;
  // ReplicatedShadow entries occupy their fd number but have no local I/O
  // capability; `kind` still holds the logical kind so both variants classify
  // the same way.
  FdOrigin origin = FdOrigin::Local;
  std::string path;
  std::vector<std::string> flags;
  std::map<std::int64_t, std::int64_t> socket_opts;  // (level << 16 | opt) -> value
  bool public_iface = false;
  bool listening = false;
  // Object lives as a per-machine copy in every variant (app-root files under
  // selective replication). Identical across variants.
  bool machine_copy = false;

  bool is_shadow() const { return origin == FdOrigin::ReplicatedShadow; }
  bool operator==(const FdMeta&) const = default;
};

/// Per-variant fd metadata shared by the in-process and cross-process monitors.
///
/// One writer per variant (calls are serialized per variant); any number of
/// readers. Readers take versioned snapshots; the version strictly increases on
/// every mutation.
class FileMap {
 public:
  struct Snapshot {
    std::uint64_t version = 0;
    std::map<int, FdMeta> entries;
  };

  FileMap() = default;
  FileMap(const FileMap& other);
  FileMap& operator=(const FileMap& other);

  /// Map pre-populated with the standard streams 0, 1, 2.
  static FileMap with_std_streams();

  std::optional<FdMeta> find(int fd) const;
  Snapshot snapshot() const;
  std::uint64_t version() const;
  std::vector<int> fds() const;
  std::size_t size() const;

  /// Fails (returns false) when the fd is already present.
  bool insert(FdMeta meta);
  bool erase(int fd);
  bool set_socket_opt(int fd, std::int64_t key, std::int64_t value);
  bool set_listening(int fd);

  std::uint64_t anomalies() const;
  void note_anomaly();

  /// One line per fd: `fd kind origin path/opts`.
  std::string dump() const;

 private:
  mutable std::shared_mutex mu_;
  std::map<int, FdMeta> entries_;
  std::uint64_t version_ = 0;
  std::uint64_t anomalies_ = 0;
};

/// Minimum non-negative integer absent from the map.
int predict_next_fd(const FileMap& fmap);
int predict_next_fd(const FileMap::Snapshot& snap);

struct PredictedResult {
  std::int64_t ret = 0;
  Errno err = Errno::None;

  bool ok() const { return err == Errno::None; }
  bool operator==(const PredictedResult&) const = default;
};

inline std::int64_t sockopt_key(std::int64_t level, std::int64_t opt) {
  return (level << 16) | (opt & 0xffff);
}

/// Predicts setsockopt from metadata alone: valid socket plus supported option.
PredictedResult predict_setsockopt(const FileMap& fmap, int fd,
                                   std::int64_t level, std::int64_t opt,
                                   std::int64_t value);

/// Predicted open outcome: the next fd on success. `exists` is the variant's own
/// view of the file when it keeps a local copy; nullopt means "assume success".
PredictedResult predict_open(const FileMap& fmap, const NormalizedArgs& args,
                             std::optional<bool> exists);

/// Applies an fd-mutating call's outcome to the map. Shadow registrations for
/// leader-only resources pass origin = ReplicatedShadow.
void record(FileMap& fmap, const SyscallEvent& event,
            const SyscallResult& result, FdOrigin origin, bool machine_copy);

}  // namespace mvx
