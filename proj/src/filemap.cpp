#include "mvx/filemap.hpp"

#include <algorithm>
#include <mutex>
#include <sstream>

namespace mvx {

namespace {

// (level, option) pairs the emulated stack accepts.
bool sockopt_supported(std::int64_t level, std::int64_t opt) {
  constexpr std::int64_t kSolSocket = 1;
  constexpr std::int64_t kIpprotoTcp = 6;
  if (level == kSolSocket) return opt == 2 || opt == 7 || opt == 8 || opt == 9;
  if (level == kIpprotoTcp) return opt == 1;
  return false;
}

bool sockopt_value_valid(std::int64_t opt, std::int64_t value) {
  // Buffer sizes must be positive; boolean options take 0 or 1.
  if (opt == 7 || opt == 8) return value > 0;
  return value == 0 || value == 1;
}

}  // namespace

std::string_view to_string(FdKind k) {
  switch (k) {
    case FdKind::File: return "file";
    case FdKind::Socket: return "socket";
    case FdKind::Pipe: return "pipe";
  }
  return "?";
}

std::string_view to_string(FdOrigin o) {
  return o == FdOrigin::Local ? "local" : "shadow";
}

FileMap::FileMap(const FileMap& other) {
  std::shared_lock lock(other.mu_);
  entries_ = other.entries_;
  version_ = other.version_;
  anomalies_ = other.anomalies_;
}

FileMap& FileMap::operator=(const FileMap& other) {
  if (this == &other) return *this;
  auto snap = other.snapshot();
  auto anomalies = other.anomalies();
  std::unique_lock lock(mu_);
  entries_ = std::move(snap.entries);
  version_ = std::max(version_ + 1, snap.version);
  anomalies_ = anomalies;
  return *this;
}

FileMap FileMap::with_std_streams() {
  FileMap m;
  for (int fd = 0; fd < 3; ++fd) {
    FdMeta meta;
    meta.fd = fd;
    meta.kind = FdKind::Pipe;
    meta.path = fd == 0 ? "<stdin>" : fd == 1 ? "<stdout>" : "<stderr>";
    m.insert(std::move(meta));
  }
  return m;
}

std::optional<FdMeta> FileMap::find(int fd) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(fd);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

FileMap::Snapshot FileMap::snapshot() const {
  std::shared_lock lock(mu_);
  return {version_, entries_};
}

std::uint64_t FileMap::version() const {
  std::shared_lock lock(mu_);
  return version_;
}

std::vector<int> FileMap::fds() const {
  std::shared_lock lock(mu_);
  std::vector<int> out;
  out.reserve(entries_.size());
  for (const auto& [fd, _] : entries_) out.push_back(fd);
  return out;
}

std::size_t FileMap::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

bool FileMap::insert(FdMeta meta) {
  std::unique_lock lock(mu_);
  int fd = meta.fd;
  if (fd < 0 || entries_.contains(fd)) return false;
  entries_.emplace(fd, std::move(meta));
  ++version_;
  return true;
}

bool FileMap::erase(int fd) {
  std::unique_lock lock(mu_);
  if (entries_.erase(fd) == 0) return false;
  ++version_;
  return true;
}

bool FileMap::set_socket_opt(int fd, std::int64_t key, std::int64_t value) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(fd);
  if (it == entries_.end() || it->second.kind != FdKind::Socket) return false;
  it->second.socket_opts[key] = value;
  ++version_;
  return true;
}

bool FileMap::set_listening(int fd) {
  std::unique_lock lock(mu_);
  auto it = entries_.find(fd);
  if (it == entries_.end() || it->second.kind != FdKind::Socket) return false;
  it->second.listening = true;
  ++version_;
  return true;
}

std::uint64_t FileMap::anomalies() const {
  std::shared_lock lock(mu_);
  return anomalies_;
}

void FileMap::note_anomaly() {
  std::unique_lock lock(mu_);
  ++anomalies_;
}

std::string FileMap::dump() const {
  auto snap = snapshot();
  std::ostringstream os;
  for (const auto& [fd, m] : snap.entries) {
    os << fd << ' ' << to_string(m.kind) << ' ' << to_string(m.origin) << ' ';
    if (m.kind == FdKind::Socket) {
      os << (m.public_iface ? "public" : "private");
      if (m.listening) os << ",listening";
      for (const auto& [k, v] : m.socket_opts) {
        os << ',' << (k >> 16) << '.' << (k & 0xffff) << '=' << v;
      }
    } else {
      os << (m.path.empty() ? "-" : m.path);
    }
    os << '\n';
  }
  return os.str();
}

int predict_next_fd(const FileMap::Snapshot& snap) {
  int candidate = 0;
  for (const auto& [fd, _] : snap.entries) {
    if (fd != candidate) break;
    ++candidate;
  }
  return candidate;
}

int predict_next_fd(const FileMap& fmap) {
  return predict_next_fd(fmap.snapshot());
}

PredictedResult predict_setsockopt(const FileMap& fmap, int fd,
                                   std::int64_t level, std::int64_t opt,
                                   std::int64_t value) {
  auto meta = fmap.find(fd);
  if (!meta) return {-1, Errno::BadFd};
  if (meta->kind != FdKind::Socket) return {-1, Errno::NotSock};
  if (!sockopt_supported(level, opt)) return {-1, Errno::NoProtoOpt};
  if (!sockopt_value_valid(opt, value)) return {-1, Errno::Inval};
  return {0, Errno::None};
}

PredictedResult predict_open(const FileMap& fmap, const NormalizedArgs& args,
                             std::optional<bool> exists) {
  bool creating = std::find(args.flags.begin(), args.flags.end(), "create") !=
                  args.flags.end();
  if (exists && !*exists && !creating) return {-1, Errno::NoEnt};
  return {predict_next_fd(fmap), Errno::None};
}

void record(FileMap& fmap, const SyscallEvent& event,
            const SyscallResult& result, FdOrigin origin, bool machine_copy) {
  switch (event.kind) {
    case SyscallKind::Open: {
      if (!result.ok()) return;
      FdMeta meta;
      meta.fd = static_cast<int>(result.ret);
      meta.kind = FdKind::File;
      meta.origin = origin;
      meta.path = event.args.path.value_or("");
      meta.flags = event.args.flags;
      meta.machine_copy = machine_copy;
      if (!fmap.insert(std::move(meta))) fmap.note_anomaly();
      return;
    }
    case SyscallKind::Socket: {
      if (!result.ok()) return;
      FdMeta meta;
      meta.fd = static_cast<int>(result.ret);
      meta.kind = FdKind::Socket;
      meta.origin = origin;
      meta.flags = event.args.flags;
      meta.public_iface = std::find(event.args.flags.begin(),
                                    event.args.flags.end(),
                                    "public") != event.args.flags.end();
      if (!fmap.insert(std::move(meta))) fmap.note_anomaly();
      return;
    }
    case SyscallKind::Accept: {
      if (!result.ok()) return;
      FdMeta meta;
      meta.fd = static_cast<int>(result.ret);
      meta.kind = FdKind::Socket;
      meta.origin = origin;
      if (event.args.fd) {
        if (auto listener = fmap.find(*event.args.fd)) {
          meta.public_iface = listener->public_iface;
        }
      }
      if (!fmap.insert(std::move(meta))) fmap.note_anomaly();
      return;
    }
    case SyscallKind::Close: {
      if (!event.args.fd) return;
      if (!fmap.find(*event.args.fd)) {
        fmap.note_anomaly();  // double close
        return;
      }
      if (result.ok()) fmap.erase(*event.args.fd);
      return;
    }
    case SyscallKind::Setsockopt: {
      if (!result.ok() || !event.args.fd) return;
      auto level = event.args.numbers.at("level");
      auto opt = event.args.numbers.at("opt");
      auto value = event.args.numbers.contains("value")
                       ? event.args.numbers.at("value")
                       : 1;
      fmap.set_socket_opt(*event.args.fd, sockopt_key(level, opt), value);
      return;
    }
    case SyscallKind::Listen: {
      if (result.ok() && event.args.fd) fmap.set_listening(*event.args.fd);
      return;
    }
    default:
      return;
  }
}

}  // namespace mvx
