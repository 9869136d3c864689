#include "mvx/wire.hpp"

#include <cstring>

namespace mvx {

namespace {

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

bool valid_type(std::uint8_t t) { return t >= 1 && t <= 6; }

constexpr std::size_t kMaxFrame = 64u << 20;

}  // namespace

std::string_view to_string(MsgType t) {
  switch (t) {
    case MsgType::ArgBroadcast: return "ArgBroadcast";
    case MsgType::ResultReplication: return "ResultReplication";
    case MsgType::LockstepSubmit: return "LockstepSubmit";
    case MsgType::LockstepRelease: return "LockstepRelease";
    case MsgType::MispredictNotice: return "MispredictNotice";
    case MsgType::Terminate: return "Terminate";
  }
  return "?";
}

std::string_view to_string(Escalation e) {
  switch (e) {
    case Escalation::None: return "none";
    case Escalation::TokenRejected: return "token rejected";
    case Escalation::ArgMismatch: return "strict argument mismatch";
    case Escalation::ReplicationMismatch: return "replication mismatch";
    case Escalation::ProtocolViolation: return "protocol violation";
  }
  return "?";
}

Frame encode(const WireMessage& msg) {
  Frame out;
  out.reserve(kFrameHeaderSize + msg.payload.size());
  put_le(out, kFrameHeaderSize - 4 + msg.payload.size(), 4);
  out.push_back(static_cast<std::uint8_t>(msg.type));
  put_le(out, msg.variant, 2);
  put_le(out, msg.seq, 8);
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

WireMessage decode(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFrameHeaderSize) throw WireError("frame shorter than header");
  auto len = get_le(frame, 0, 4);
  if (len + 4 != frame.size()) throw WireError("frame length field mismatch");
  if (!valid_type(frame[4])) throw WireError("unknown message type");
  WireMessage msg;
  msg.type = static_cast<MsgType>(frame[4]);
  msg.variant = static_cast<VariantId>(get_le(frame, 5, 2));
  msg.seq = get_le(frame, 7, 8);
  msg.payload.assign(reinterpret_cast<const char*>(frame.data()) + kFrameHeaderSize,
                     frame.size() - kFrameHeaderSize);
  return msg;
}

void FrameAssembler::feed(std::span<const std::uint8_t> bytes) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<WireMessage> FrameAssembler::next() {
  if (buf_.size() < 4) return std::nullopt;
  auto len = get_le(buf_, 0, 4);
  if (len < kFrameHeaderSize - 4 || len > kMaxFrame) throw WireError("bad frame length");
  if (buf_.size() < len + 4) return std::nullopt;
  auto msg = decode(std::span(buf_.data(), len + 4));
  buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(len + 4));
  return msg;
}

// ---------------------------------------------------------------------------

ByteWriter& ByteWriter::u8(std::uint8_t v) {
  out_.push_back(static_cast<char>(v));
  return *this;
}

ByteWriter& ByteWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) out_.push_back(static_cast<char>(v >> (8 * i)));
  return *this;
}

ByteWriter& ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>(v >> (8 * i)));
  return *this;
}

ByteWriter& ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>(v >> (8 * i)));
  return *this;
}

ByteWriter& ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_.append(s);
  return *this;
}

std::string_view ByteReader::take(std::size_t n) {
  if (data_.size() - pos_ < n) throw WireError("payload truncated");
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(take(1)[0]); }

std::uint16_t ByteReader::u16() {
  auto b = take(2);
  return static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[0]) |
                                    static_cast<std::uint8_t>(b[1]) << 8);
}

std::uint32_t ByteReader::u32() {
  auto b = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

std::uint64_t ByteReader::u64() {
  auto b = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

std::string ByteReader::str() {
  auto n = u32();
  return std::string(take(n));
}

namespace {

enum : std::uint8_t {
  kHasPath = 1,
  kHasEndpoint = 2,
  kHasFd = 4,
  kHasPayload = 8,
};

void write_args(ByteWriter& w, const NormalizedArgs& a) {
  std::uint8_t mask = (a.path ? kHasPath : 0) | (a.endpoint ? kHasEndpoint : 0) |
                      (a.fd ? kHasFd : 0) | (a.payload ? kHasPayload : 0);
  w.u8(mask);
  if (a.path) w.str(*a.path);
  if (a.endpoint) w.str(*a.endpoint);
  if (a.fd) w.i64(*a.fd);
  if (a.payload) w.u64(a.payload->length).u64(a.payload->digest);
  w.u32(static_cast<std::uint32_t>(a.flags.size()));
  for (const auto& f : a.flags) w.str(f);
  w.u32(static_cast<std::uint32_t>(a.numbers.size()));
  for (const auto& [k, v] : a.numbers) w.str(k).i64(v);
}

NormalizedArgs read_args(ByteReader& r) {
  NormalizedArgs a;
  auto mask = r.u8();
  if (mask & ~(kHasPath | kHasEndpoint | kHasFd | kHasPayload)) {
    throw WireError("bad argument mask");
  }
  if (mask & kHasPath) a.path = r.str();
  if (mask & kHasEndpoint) a.endpoint = r.str();
  if (mask & kHasFd) a.fd = static_cast<int>(r.i64());
  if (mask & kHasPayload) {
    BytePayload p;
    p.length = r.u64();
    p.digest = r.u64();
    a.payload = p;
  }
  auto nflags = r.u32();
  for (std::uint32_t i = 0; i < nflags; ++i) a.flags.push_back(r.str());
  auto nnums = r.u32();
  for (std::uint32_t i = 0; i < nnums; ++i) {
    auto k = r.str();
    a.numbers[k] = r.i64();
  }
  return a;
}

SyscallKind read_kind(ByteReader& r) {
  auto k = r.u8();
  if (k >= kAllSyscallKinds.size()) throw WireError("bad syscall kind");
  return static_cast<SyscallKind>(k);
}

void write_result(ByteWriter& w, const SyscallResult& res) {
  w.u8(static_cast<std::uint8_t>(res.kind)).i64(res.ret);
  w.u8(static_cast<std::uint8_t>(res.err)).str(res.payload);
}

SyscallResult read_result(ByteReader& r) {
  SyscallResult res;
  res.kind = read_kind(r);
  res.ret = r.i64();
  auto e = r.u8();
  if (e > static_cast<std::uint8_t>(Errno::IsDir)) throw WireError("bad errno");
  res.err = static_cast<Errno>(e);
  res.payload = r.str();
  return res;
}

void expect_done(const ByteReader& r) {
  if (!r.done()) throw WireError("trailing payload bytes");
}

}  // namespace

std::string encode_call(const CallDigest& call) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(call.kind));
  write_args(w, call.args);
  return w.take();
}

CallDigest decode_call(std::string_view payload) {
  ByteReader r(payload);
  CallDigest c;
  c.kind = read_kind(r);
  c.args = read_args(r);
  expect_done(r);
  return c;
}

std::string encode_result(const SyscallResult& res) {
  ByteWriter w;
  write_result(w, res);
  return w.take();
}

SyscallResult decode_result(std::string_view payload) {
  ByteReader r(payload);
  auto res = read_result(r);
  expect_done(r);
  return res;
}

std::string encode_entry(const LockstepEntry& e) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>((e.finished ? 1 : 0) |
                                  (static_cast<unsigned>(e.escalation) << 1)));
  w.u8(static_cast<std::uint8_t>(e.call.kind));
  write_args(w, e.call.args);
  return w.take();
}

LockstepEntry decode_entry(std::string_view payload) {
  ByteReader r(payload);
  LockstepEntry e;
  auto flags = r.u8();
  if ((flags >> 1) > static_cast<unsigned>(Escalation::ProtocolViolation)) {
    throw WireError("bad entry flags");
  }
  e.finished = flags & 1;
  e.escalation = static_cast<Escalation>(flags >> 1);
  e.call.kind = read_kind(r);
  e.call.args = read_args(r);
  expect_done(r);
  return e;
}

std::string encode_release(const LockstepRelease& rel) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(rel.status));
  write_result(w, rel.result);
  return w.take();
}

LockstepRelease decode_release(std::string_view payload) {
  ByteReader r(payload);
  LockstepRelease rel;
  auto s = r.u8();
  if (s > 2) throw WireError("bad release status");
  rel.status = static_cast<LockstepRelease::Status>(s);
  rel.result = read_result(r);
  expect_done(r);
  return rel;
}

}  // namespace mvx
