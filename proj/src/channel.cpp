#include "mvx/channel.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <set>
#include <sstream>
#include <thread>

namespace mvx {

std::vector<Link> star_links(std::size_t variants) {
  std::vector<Link> out;
  for (std::size_t f = 1; f < variants; ++f) {
    auto v = static_cast<VariantId>(f);
    out.push_back({connector_node(0), connector_node(v)});
    out.push_back({connector_node(v), connector_node(0)});
    out.push_back({monitor_node(0), monitor_node(v)});
    out.push_back({monitor_node(v), monitor_node(0)});
  }
  return out;
}

ChannelSpec ChannelSpec::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw ConfigError("channel must be sim:<latency_us> or tcp:<port>: " + std::string(text));
  }
  auto head = text.substr(0, colon);
  auto tail = text.substr(colon + 1);
  ChannelSpec spec;
  if (head == "sim") {
    spec.flavor = Flavor::Simulated;
    try {
      std::size_t used = 0;
      spec.latency_us = std::stod(std::string(tail), &used);
      if (used != tail.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("bad channel latency: " + std::string(tail));
    }
    if (spec.latency_us < 0) throw ConfigError("channel latency must be >= 0");
  } else if (head == "tcp") {
    spec.flavor = Flavor::LoopbackSocket;
    unsigned port = 0;
    auto [p, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), port);
    if (ec != std::errc{} || p != tail.data() + tail.size() || port > 65535) {
      throw ConfigError("bad channel port: " + std::string(tail));
    }
    spec.port = static_cast<std::uint16_t>(port);
  } else {
    throw ConfigError("unknown channel flavor: " + std::string(head));
  }
  return spec;
}

std::string ChannelSpec::to_string() const {
  std::ostringstream out;
  if (flavor == Flavor::Simulated) {
    out << "sim:" << latency_us;
  } else {
    out << "tcp:" << port;
  }
  return out.str();
}

LatencyModel LatencyModel::for_latency_us(double us, std::uint64_t seed) {
  LatencyModel m;
  m.latency = us_to_ns(us);
  m.jitter = m.latency / 50;
  m.seed = seed;
  return m;
}

// ---------------------------------------------------------------------------

Channel::Channel(std::vector<Link> links, LatencyModel model)
    : link_list_(std::move(links)), model_(model) {
  for (const auto& l : link_list_) {
    std::seed_seq seq{static_cast<std::uint32_t>(model.seed),
                      static_cast<std::uint32_t>(model.seed >> 32),
                      static_cast<std::uint32_t>(l.from),
                      static_cast<std::uint32_t>(l.to)};
    if (!links_.emplace(l, LinkState{std::mt19937_64(seq), 0, {}}).second) {
      throw TransportError("duplicate link");
    }
    for (NodeId n : {l.from, l.to}) {
      if (!inboxes_.contains(n)) inboxes_.emplace(n, std::make_unique<Inbox>());
    }
  }
}

Channel::~Channel() = default;

Channel::Inbox& Channel::inbox(NodeId node) {
  auto it = inboxes_.find(node);
  if (it == inboxes_.end()) throw TransportError("unknown endpoint " + std::to_string(node));
  return *it->second;
}

bool Channel::send(NodeId from, NodeId to, const WireMessage& msg, SimNanos stamp) {
  if (closed_.load() || severed_.load()) return false;
  if (auto n = sever_after_.load(); n > 0 && messages_.load() >= n) {
    sever();
    return false;
  }
  auto it = links_.find(Link{from, to});
  if (it == links_.end()) {
    throw TransportError("no link " + std::to_string(from) + "->" + std::to_string(to));
  }
  auto& st = it->second;
  SimNanos jitter = model_.jitter > 0
                        ? static_cast<SimNanos>(st.rng() % static_cast<std::uint64_t>(model_.jitter + 1))
                        : 0;
  SimNanos arrival = std::max(stamp + model_.latency + jitter, st.last);
  st.last = arrival;
  st.arrivals.push_back(arrival);
  auto frame = encode(msg);
  messages_.fetch_add(1);
  bytes_.fetch_add(frame.size());
  transmit(it->first, frame, arrival);
  return true;
}

RecvResult Channel::recv(NodeId node, std::stop_token stop,
                         std::optional<std::chrono::milliseconds> timeout) {
  auto& box = inbox(node);
  std::unique_lock lock(box.mu);
  auto ready = [&] { return !box.queue.empty() || box.closed; };
  bool ok;
  if (timeout) {
    ok = box.cv.wait_for(lock, stop, *timeout, ready);
    if (!ok && !stop.stop_requested()) return {RecvStatus::Timeout, {}};
  } else {
    ok = box.cv.wait(lock, stop, ready);
  }
  if (!ok) return {RecvStatus::Stopped, {}};
  if (box.queue.empty()) return {RecvStatus::Closed, {}};
  RecvResult r{RecvStatus::Ok, std::move(box.queue.front())};
  box.queue.pop_front();
  return r;
}

RecvResult Channel::roundtrip(NodeId from, NodeId to, const WireMessage& msg,
                              SimNanos stamp, std::stop_token stop,
                              std::optional<std::chrono::milliseconds> timeout) {
  if (!send(from, to, msg, stamp)) return {RecvStatus::Closed, {}};
  roundtrips_.fetch_add(1);
  return recv(from, std::move(stop), timeout);
}

void Channel::deliver(NodeId to, Delivery d) {
  auto& box = inbox(to);
  {
    std::lock_guard lock(box.mu);
    if (box.closed) return;
    box.queue.push_back(std::move(d));
  }
  box.cv.notify_all();
}

void Channel::close_inbox(NodeId node) {
  auto& box = inbox(node);
  {
    std::lock_guard lock(box.mu);
    box.closed = true;
  }
  box.cv.notify_all();
}

void Channel::close_all_inboxes() {
  for (auto& [node, box] : inboxes_) close_inbox(node);
}

void Channel::close() { closed_.store(true); }

void Channel::sever() {
  severed_.store(true);
  for (auto& [node, box] : inboxes_) {
    {
      std::lock_guard lock(box->mu);
      box->queue.clear();
      box->closed = true;
    }
    box->cv.notify_all();
  }
}

std::vector<SimNanos> Channel::arrivals(Link link) const {
  auto it = links_.find(link);
  return it == links_.end() ? std::vector<SimNanos>{} : it->second.arrivals;
}

// ---------------------------------------------------------------------------

SimulatedChannel::SimulatedChannel(std::vector<Link> links, LatencyModel model)
    : Channel(std::move(links), model) {}

void SimulatedChannel::close() {
  Channel::close();
  close_all_inboxes();
}

void SimulatedChannel::transmit(const Link& link, const Frame& frame, SimNanos arrival) {
  deliver(link.to, Delivery{decode(frame), arrival});
}

// ---------------------------------------------------------------------------

struct LoopbackSocketChannel::Conn {
  Link link;
  int send_fd = -1;
  int recv_fd = -1;
  std::jthread thread;
};

namespace {

void put_u64(std::uint8_t* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_u64(const std::uint8_t* in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    auto w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    auto r = ::recv(fd, data, n, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    data += r;
    n -= static_cast<std::size_t>(r);
  }
  return true;
}

[[noreturn]] void sys_fail(const std::string& what) {
  throw TransportError(what + ": " + std::strerror(errno));
}

}  // namespace

LoopbackSocketChannel::LoopbackSocketChannel(std::vector<Link> links,
                                             LatencyModel model,
                                             std::uint16_t port)
    : Channel(std::move(links), model) {
  int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) sys_fail("socket");
  int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(port);
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listener, 64) < 0) {
    int saved = errno;
    ::close(listener);
    errno = saved;
    sys_fail("bind 127.0.0.1:" + std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);

  try {
    for (const auto& l : this->links()) {
      auto c = std::make_unique<Conn>();
      c->link = l;
      c->send_fd = ::socket(AF_INET, SOCK_STREAM, 0);
      if (c->send_fd < 0) sys_fail("socket");
      if (::connect(c->send_fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        sys_fail("connect");
      }
      c->recv_fd = ::accept(listener, nullptr, nullptr);
      if (c->recv_fd < 0) sys_fail("accept");
      ::setsockopt(c->send_fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      by_link_[l] = c.get();
      ++open_inbound_[l.to];
      conns_.push_back(std::move(c));
    }
  } catch (...) {
    ::close(listener);
    for (auto& c : conns_) {
      ::close(c->send_fd);
      ::close(c->recv_fd);
    }
    throw;
  }
  ::close(listener);
  for (auto& c : conns_) {
    Conn* raw = c.get();
    c->thread = std::jthread([this, raw] { reader(*raw); });
  }
}

LoopbackSocketChannel::~LoopbackSocketChannel() {
  for (auto& c : conns_) {
    ::shutdown(c->send_fd, SHUT_RDWR);
    ::shutdown(c->recv_fd, SHUT_RDWR);
  }
  for (auto& c : conns_) {
    if (c->thread.joinable()) c->thread.join();
    ::close(c->send_fd);
    ::close(c->recv_fd);
  }
}

void LoopbackSocketChannel::transmit(const Link& link, const Frame& frame,
                                     SimNanos arrival) {
  Conn* c = by_link_.at(link);
  std::vector<std::uint8_t> buf(8 + frame.size());
  put_u64(buf.data(), static_cast<std::uint64_t>(arrival));
  std::memcpy(buf.data() + 8, frame.data(), frame.size());
  write_all(c->send_fd, buf.data(), buf.size());
}

void LoopbackSocketChannel::reader(Conn& c) {
  std::uint8_t head[12];
  while (read_all(c.recv_fd, head, sizeof head)) {
    auto arrival = static_cast<SimNanos>(get_u64(head, 8));
    auto len = get_u64(head + 8, 4);
    if (len < kFrameHeaderSize - 4 || len > (64u << 20)) break;
    Frame frame(4 + len);
    std::memcpy(frame.data(), head + 8, 4);
    if (!read_all(c.recv_fd, frame.data() + 4, len)) break;
    deliver(c.link.to, Delivery{decode(frame), arrival});
  }
  std::lock_guard lock(close_mu_);
  if (--open_inbound_[c.link.to] == 0) close_inbox(c.link.to);
}

void LoopbackSocketChannel::close() {
  Channel::close();
  for (auto& c : conns_) ::shutdown(c->send_fd, SHUT_WR);
}

void LoopbackSocketChannel::sever() {
  Channel::sever();
  for (auto& c : conns_) {
    ::shutdown(c->send_fd, SHUT_RDWR);
    ::shutdown(c->recv_fd, SHUT_RDWR);
  }
}

std::unique_ptr<Channel> make_channel(const ChannelSpec& spec,
                                      std::vector<Link> links,
                                      std::uint64_t seed) {
  auto model = LatencyModel::for_latency_us(spec.latency_us, seed);
  if (spec.flavor == ChannelSpec::Flavor::Simulated) {
    return std::make_unique<SimulatedChannel>(std::move(links), model);
  }
  return std::make_unique<LoopbackSocketChannel>(std::move(links), model, spec.port);
}

}  // namespace mvx
