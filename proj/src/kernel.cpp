#include "mvx/kernel.hpp"

#include <algorithm>

namespace mvx {

namespace {

std::int64_t num(const NormalizedArgs& a, const char* key, std::int64_t dflt) {
  auto it = a.numbers.find(key);
  return it == a.numbers.end() ? dflt : it->second;
}

bool has_flag(const NormalizedArgs& a, std::string_view flag) {
  return std::find(a.flags.begin(), a.flags.end(), flag) != a.flags.end();
}

std::string request_for(const std::string& addr, std::uint64_t serial) {
  return "GET /r" + std::to_string(serial) + " HTTP/1.0\r\nHost: " + addr +
         "\r\n\r\n";
}

std::string response_for(const std::string& addr, std::uint64_t serial) {
  std::string out;
  for (int i = 0; out.size() < 256; ++i) {
    out += "row " + std::to_string(i) + " from " + addr + " #" +
           std::to_string(serial) + "\n";
  }
  return out;
}

}  // namespace

EmulatedKernel::EmulatedKernel(Filesystem files, Options options)
    : files_(std::move(files)), options_(std::move(options)) {
  options_.cwd = canonical_path(options_.cwd);
  if (!options_.local_root.empty()) {
    options_.local_root = canonical_path(options_.local_root);
  }
  for (int s = 0; s < 3; ++s) fds_.insert_or_assign(s, FdObject{Console{s}, false});
}

void EmulatedKernel::inject_transient_failure(std::uint64_t seq, int count) {
  transient_[seq] += count;
}

bool EmulatedKernel::file_exists(const std::string& path) const {
  return files_.contains(path);
}

bool EmulatedKernel::is_shadow(int fd) const {
  auto it = fds_.find(fd);
  return it != fds_.end() && it->second.shadow;
}

std::vector<int> EmulatedKernel::fds() const {
  std::vector<int> out;
  for (const auto& [fd, _] : fds_) out.push_back(fd);
  return out;
}

int EmulatedKernel::next_fd() const {
  int candidate = 0;
  for (const auto& [fd, _] : fds_) {
    if (fd != candidate) break;
    ++candidate;
  }
  return candidate;
}

bool EmulatedKernel::is_external_path(const std::string& path) const {
  return !path_under(path, options_.local_root);
}

bool EmulatedKernel::is_directory(const std::string& path) const {
  auto prefix = path == "/" ? path : path + "/";
  auto it = files_.lower_bound(prefix);
  return it != files_.end() && it->first.compare(0, prefix.size(), prefix) == 0;
}

SyscallResult EmulatedKernel::fail(SyscallKind kind, Errno e) const {
  return {kind, -1, e, {}};
}

SyscallResult EmulatedKernel::execute(const SyscallEvent& ev) {
  if (auto it = transient_.find(ev.seq); it != transient_.end() && it->second > 0) {
    --it->second;
    return fail(ev.kind, Errno::Again);
  }
  const auto& a = ev.args;
  switch (ev.kind) {
    case SyscallKind::Open:
      return do_open(ev);
    case SyscallKind::Close: {
      auto it = a.fd ? fds_.find(*a.fd) : fds_.end();
      if (it == fds_.end()) return fail(ev.kind, Errno::BadFd);
      if (!it->second.shadow) {
        if (std::holds_alternative<Socket>(it->second.obj)) ++external_io_;
        if (auto* f = std::get_if<OpenFile>(&it->second.obj);
            f && is_external_path(f->path)) {
          ++external_io_;
        }
      }
      fds_.erase(it);
      return {ev.kind, 0, Errno::None, {}};
    }
    case SyscallKind::Read:
      return do_read(ev, false);
    case SyscallKind::Recv:
      return do_read(ev, true);
    case SyscallKind::Write:
      return do_write(ev, false);
    case SyscallKind::Send:
      return do_write(ev, true);
    case SyscallKind::Getcwd: {
      auto len = num(a, "len", 4096);
      if (len < static_cast<std::int64_t>(options_.cwd.size()) + 1) {
        return fail(ev.kind, Errno::Inval);
      }
      return {ev.kind, static_cast<std::int64_t>(options_.cwd.size()),
              Errno::None, options_.cwd};
    }
    case SyscallKind::Brk: {
      auto size = num(a, "size", 0);
      if (heap_ + size < 0) return fail(ev.kind, Errno::Inval);
      heap_ += size;
      return {ev.kind, heap_, Errno::None, {}};
    }
    case SyscallKind::Mmap: {
      if (num(a, "len", 0) <= 0) return fail(ev.kind, Errno::Inval);
      regions_.push_back(a.flags);
      return {ev.kind, static_cast<std::int64_t>(regions_.size() - 1),
              Errno::None, {}};
    }
    case SyscallKind::Mprotect: {
      auto region = num(a, "region", -1);
      if (region < 0 || region >= static_cast<std::int64_t>(regions_.size())) {
        return fail(ev.kind, Errno::Inval);
      }
      regions_[static_cast<std::size_t>(region)] = a.flags;
      return {ev.kind, 0, Errno::None, {}};
    }
    case SyscallKind::Setsockopt:
      return do_setsockopt(ev);
    case SyscallKind::Socket: {
      int fd = next_fd();
      Socket s;
      s.is_public = has_flag(a, "public");
      fds_.insert_or_assign(fd, FdObject{std::move(s), false});
      ++external_io_;
      return {ev.kind, fd, Errno::None, {}};
    }
    case SyscallKind::Bind:
    case SyscallKind::Listen:
    case SyscallKind::Accept:
    case SyscallKind::Connect:
      return do_socket_op(ev);
    case SyscallKind::Stat: {
      const auto& path = a.path.value_or("/");
      if (is_external_path(path)) ++external_io_;
      if (auto it = files_.find(path); it != files_.end()) {
        return {ev.kind, 0, Errno::None,
                "size=" + std::to_string(it->second.size())};
      }
      if (is_directory(path)) return {ev.kind, 0, Errno::None, "dir"};
      return fail(ev.kind, Errno::NoEnt);
    }
    case SyscallKind::Lseek: {
      auto it = a.fd ? fds_.find(*a.fd) : fds_.end();
      if (it == fds_.end() || it->second.shadow) return fail(ev.kind, Errno::BadFd);
      auto* f = std::get_if<OpenFile>(&it->second.obj);
      if (!f) return fail(ev.kind, Errno::Inval);
      if (is_external_path(f->path)) ++external_io_;
      auto whence = num(a, "whence", 0);
      auto offset = num(a, "offset", 0);
      std::int64_t base = whence == 0   ? 0
                          : whence == 1 ? static_cast<std::int64_t>(f->offset)
                          : static_cast<std::int64_t>(files_[f->path].size());
      if (whence < 0 || whence > 2 || base + offset < 0) {
        return fail(ev.kind, Errno::Inval);
      }
      f->offset = static_cast<std::uint64_t>(base + offset);
      return {ev.kind, base + offset, Errno::None, {}};
    }
    case SyscallKind::Exit:
      exited_ = true;
      return {ev.kind, num(a, "code", 0), Errno::None, {}};
  }
  return fail(ev.kind, Errno::Inval);
}

SyscallResult EmulatedKernel::do_open(const SyscallEvent& ev) {
  const auto& a = ev.args;
  const auto& path = a.path.value_or("/");
  if (is_external_path(path)) ++external_io_;
  if (is_directory(path) || path == "/") return fail(ev.kind, Errno::IsDir);
  bool exists = files_.contains(path);
  if (!exists) {
    if (!has_flag(a, "create")) return fail(ev.kind, Errno::NoEnt);
    files_[path] = {};
  } else if (has_flag(a, "trunc")) {
    files_[path].clear();
  }
  OpenFile f;
  f.path = path;
  f.writable = has_flag(a, "wronly") || has_flag(a, "rdwr");
  f.readable = !has_flag(a, "wronly");
  f.append = has_flag(a, "append");
  int fd = next_fd();
  fds_.insert_or_assign(fd, FdObject{std::move(f), false});
  return {ev.kind, fd, Errno::None, {}};
}

SyscallResult EmulatedKernel::do_read(const SyscallEvent& ev, bool socket_only) {
  const auto& a = ev.args;
  auto len = num(a, "len", 0);
  if (len < 0) return fail(ev.kind, Errno::Inval);
  auto it = a.fd ? fds_.find(*a.fd) : fds_.end();
  if (it == fds_.end() || it->second.shadow) return fail(ev.kind, Errno::BadFd);
  auto& obj = it->second.obj;
  if (auto* s = std::get_if<Socket>(&obj)) {
    ++external_io_;
    if (!s->connected) return fail(ev.kind, Errno::NotConn);
    auto n = std::min<std::size_t>(static_cast<std::size_t>(len),
                                   s->inbound.size() - s->cursor);
    std::string out = s->inbound.substr(s->cursor, n);
    s->cursor += n;
    return {ev.kind, static_cast<std::int64_t>(n), Errno::None, std::move(out)};
  }
  if (socket_only) return fail(ev.kind, Errno::NotSock);
  if (auto* c = std::get_if<Console>(&obj)) {
    if (c->stream != 0) return fail(ev.kind, Errno::BadFd);
    ++external_io_;
    return {ev.kind, 0, Errno::None, {}};
  }
  auto& f = std::get<OpenFile>(obj);
  if (!f.readable) return fail(ev.kind, Errno::BadFd);
  if (is_external_path(f.path)) ++external_io_;
  const auto& content = files_[f.path];
  std::string out;
  if (f.offset < content.size()) {
    out = content.substr(f.offset, static_cast<std::size_t>(len));
  }
  f.offset += out.size();
  return {ev.kind, static_cast<std::int64_t>(out.size()), Errno::None,
          std::move(out)};
}

SyscallResult EmulatedKernel::do_write(const SyscallEvent& ev, bool socket_only) {
  const auto& a = ev.args;
  auto it = a.fd ? fds_.find(*a.fd) : fds_.end();
  if (it == fds_.end() || it->second.shadow) return fail(ev.kind, Errno::BadFd);
  auto& obj = it->second.obj;
  auto n = static_cast<std::int64_t>(ev.buffer.size());
  if (auto* s = std::get_if<Socket>(&obj)) {
    ++external_io_;
    if (!s->connected) return fail(ev.kind, Errno::NotConn);
    return {ev.kind, n, Errno::None, {}};
  }
  if (socket_only) return fail(ev.kind, Errno::NotSock);
  if (auto* c = std::get_if<Console>(&obj)) {
    if (c->stream == 0) return fail(ev.kind, Errno::BadFd);
    ++external_io_;
    console_ += ev.buffer;
    return {ev.kind, n, Errno::None, {}};
  }
  auto& f = std::get<OpenFile>(obj);
  if (!f.writable) return fail(ev.kind, Errno::BadFd);
  if (is_external_path(f.path)) ++external_io_;
  auto& content = files_[f.path];
  if (f.append) f.offset = content.size();
  if (content.size() < f.offset + ev.buffer.size()) {
    content.resize(f.offset + ev.buffer.size());
  }
  content.replace(f.offset, ev.buffer.size(), ev.buffer);
  f.offset += ev.buffer.size();
  return {ev.kind, n, Errno::None, {}};
}

SyscallResult EmulatedKernel::do_setsockopt(const SyscallEvent& ev) {
  const auto& a = ev.args;
  auto it = a.fd ? fds_.find(*a.fd) : fds_.end();
  if (it == fds_.end()) return fail(ev.kind, Errno::BadFd);
  auto* s = std::get_if<Socket>(&it->second.obj);
  if (!s) return fail(ev.kind, Errno::NotSock);
  if (!it->second.shadow) ++external_io_;
  auto level = num(a, "level", -1);
  auto opt = num(a, "opt", -1);
  auto value = num(a, "value", 1);
  bool known = false;
  bool sized = false;
  switch (level) {
    case 1:  // socket level
      switch (opt) {
        case 2:  // reuseaddr
        case 9:  // keepalive
          known = true;
          break;
        case 7:  // sndbuf
        case 8:  // rcvbuf
          known = sized = true;
          break;
        default:
          break;
      }
      break;
    case 6:  // tcp level
      known = opt == 1;
      break;
    default:
      break;
  }
  if (!known) return fail(ev.kind, Errno::NoProtoOpt);
  if (sized ? value <= 0 : (value != 0 && value != 1)) {
    return fail(ev.kind, Errno::Inval);
  }
  s->opts[(level << 16) | opt] = value;
  return {ev.kind, 0, Errno::None, {}};
}

SyscallResult EmulatedKernel::do_socket_op(const SyscallEvent& ev) {
  const auto& a = ev.args;
  auto it = a.fd ? fds_.find(*a.fd) : fds_.end();
  if (it == fds_.end() || it->second.shadow) return fail(ev.kind, Errno::BadFd);
  auto* s = std::get_if<Socket>(&it->second.obj);
  if (!s) return fail(ev.kind, Errno::NotSock);
  ++external_io_;
  switch (ev.kind) {
    case SyscallKind::Bind: {
      if (s->bound) return fail(ev.kind, Errno::Inval);
      for (const auto& [fd, o] : fds_) {
        const auto* other = std::get_if<Socket>(&o.obj);
        if (other && other->bound && other->addr == a.endpoint) {
          return fail(ev.kind, Errno::AddrInUse);
        }
      }
      s->bound = true;
      s->addr = a.endpoint.value_or("");
      return {ev.kind, 0, Errno::None, {}};
    }
    case SyscallKind::Listen:
      if (!s->bound || s->connected) return fail(ev.kind, Errno::Inval);
      s->listening = true;
      return {ev.kind, 0, Errno::None, {}};
    case SyscallKind::Accept: {
      if (!s->listening) return fail(ev.kind, Errno::Inval);
      Socket conn;
      conn.is_public = s->is_public;
      conn.connected = true;
      conn.addr = s->addr;
      conn.inbound = request_for(s->addr, conn_serial_++);
      int fd = next_fd();
      fds_.insert_or_assign(fd, FdObject{std::move(conn), false});
      return {ev.kind, fd, Errno::None, {}};
    }
    case SyscallKind::Connect: {
      if (s->listening || s->connected) return fail(ev.kind, Errno::Inval);
      const auto& addr = a.endpoint.value_or("");
      if (addr.rfind("closed:", 0) == 0) return fail(ev.kind, Errno::ConnRefused);
      s->connected = true;
      s->addr = addr;
      s->inbound = response_for(addr, conn_serial_++);
      return {ev.kind, 0, Errno::None, {}};
    }
    default:
      return fail(ev.kind, Errno::Inval);
  }
}

SyscallResult EmulatedKernel::apply_replicated(const SyscallEvent& ev,
                                               const SyscallResult& leader) {
  if (leader.kind != ev.kind) {
    throw ReplicationMismatch("replicated " + std::string(to_string(leader.kind)) +
                              " result for local " +
                              std::string(to_string(ev.kind)));
  }
  if (!leader.ok()) return leader;
  const auto& a = ev.args;
  auto register_shadow = [&](FdObject obj) {
    int fd = static_cast<int>(leader.ret);
    if (fd < 0 || fds_.contains(fd)) {
      throw ReplicationMismatch("replicated fd " + std::to_string(fd) +
                                " collides with the local fd table");
    }
    obj.shadow = true;
    fds_.insert_or_assign(fd, std::move(obj));
  };
  switch (ev.kind) {
    case SyscallKind::Open: {
      OpenFile f;
      f.path = a.path.value_or("");
      register_shadow(FdObject{std::move(f), true});
      break;
    }
    case SyscallKind::Socket: {
      Socket s;
      s.is_public = has_flag(a, "public");
      register_shadow(FdObject{std::move(s), true});
      break;
    }
    case SyscallKind::Accept: {
      Socket s;
      s.connected = true;
      if (a.fd) {
        if (auto it = fds_.find(*a.fd); it != fds_.end()) {
          if (auto* l = std::get_if<Socket>(&it->second.obj)) {
            s.is_public = l->is_public;
          }
        }
      }
      register_shadow(FdObject{std::move(s), true});
      break;
    }
    case SyscallKind::Close:
      if (a.fd) fds_.erase(*a.fd);
      break;
    case SyscallKind::Setsockopt:
    case SyscallKind::Bind:
    case SyscallKind::Listen:
    case SyscallKind::Connect:
      if (a.fd) {
        if (auto it = fds_.find(*a.fd); it != fds_.end()) {
          if (auto* s = std::get_if<Socket>(&it->second.obj)) {
            if (ev.kind == SyscallKind::Setsockopt) {
              s->opts[(num(a, "level", -1) << 16) | num(a, "opt", -1)] =
                  num(a, "value", 1);
            } else if (ev.kind == SyscallKind::Bind) {
              s->bound = true;
              s->addr = a.endpoint.value_or("");
            } else if (ev.kind == SyscallKind::Listen) {
              s->listening = true;
            } else {
              s->connected = true;
            }
          }
        }
      }
      break;
    case SyscallKind::Exit:
      exited_ = true;
      break;
    default:
      break;
  }
  return leader;
}

}  // namespace mvx
