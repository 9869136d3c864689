#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvx/syscall_model.hpp"

namespace mvx {

using Frame = std::vector<std::uint8_t>;

class WireError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MsgType : std::uint8_t {
  ArgBroadcast = 1,
  ResultReplication = 2,
  LockstepSubmit = 3,
  LockstepRelease = 4,
  MispredictNotice = 5,
  Terminate = 6,
};

std::string_view to_string(MsgType t);

struct WireMessage {
  MsgType type = MsgType::Terminate;
  VariantId variant = 0;
  std::uint64_t seq = 0;
  std::string payload;

  bool operator==(const WireMessage&) const = default;
};

/// Frame layout, all integers little-endian:
///   [u32 len][u8 msg_type][u16 variant][u64 seq][payload]
/// where len counts every byte after the len field itself.
inline constexpr std::size_t kFrameHeaderSize = 4 + 1 + 2 + 8;

Frame encode(const WireMessage& msg);

/// Decodes exactly one complete frame. Throws WireError on malformed input.
WireMessage decode(std::span<const std::uint8_t> frame);

/// Reassembles frames from an arbitrary byte stream.
class FrameAssembler {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  std::optional<WireMessage> next();
  std::size_t buffered() const { return buf_.size(); }

 private:
  std::vector<std::uint8_t> buf_;
};

// ---------------------------------------------------------------------------
// Payload codecs

class ByteWriter {
 public:
  ByteWriter& u8(std::uint8_t v);
  ByteWriter& u16(std::uint16_t v);
  ByteWriter& u32(std::uint32_t v);
  ByteWriter& u64(std::uint64_t v);
  ByteWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  ByteWriter& str(std::string_view s);
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::string str();
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view take(std::size_t n);
  std::string_view data_;
  std::size_t pos_ = 0;
};

struct CallDigest {
  SyscallKind kind = SyscallKind::Getcwd;
  NormalizedArgs args;
  bool operator==(const CallDigest&) const = default;
};

std::string encode_call(const CallDigest& call);
CallDigest decode_call(std::string_view payload);

std::string encode_result(const SyscallResult& r);
SyscallResult decode_result(std::string_view payload);

/// Why an in-process call was handed to the cross-process monitor instead of
/// completing normally.
enum class Escalation : std::uint8_t {
  None,
  TokenRejected,        // restart check failed
  ArgMismatch,          // strict-mode equivalence check failed
  ReplicationMismatch,  // replicated result does not fit the local call
  ProtocolViolation,    // unexpected message on the incoming lane
};

std::string_view to_string(Escalation e);

/// LockstepSubmit payload.
struct LockstepEntry {
  bool finished = false;  // variant ran out of script
  Escalation escalation = Escalation::None;
  CallDigest call;
  bool operator==(const LockstepEntry&) const = default;
};

std::string encode_entry(const LockstepEntry& e);
LockstepEntry decode_entry(std::string_view payload);

/// LockstepRelease payload.
struct LockstepRelease {
  enum class Status : std::uint8_t { LeaderResult, ExecuteLocally, Stop };
  Status status = Status::Stop;
  SyscallResult result;
};

std::string encode_release(const LockstepRelease& r);
LockstepRelease decode_release(std::string_view payload);

}  // namespace mvx
