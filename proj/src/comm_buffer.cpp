#include "mvx/comm_buffer.hpp"

#include <algorithm>
#include <stdexcept>

namespace mvx {

FrameQueue::FrameQueue(std::size_t capacity)
    : ring_(std::max<std::size_t>(capacity, 1)),
      capacity_(std::max<std::size_t>(capacity, 1)) {}

FrameQueue::PushOutcome FrameQueue::push(Envelope env, std::stop_token stop) {
  PushOutcome out;
  std::unique_lock lock(mu_);
  if (closed_) return out;
  if (!unbounded_ && count_ == capacity_) {
    out.blocked = true;
    stalls_.fetch_add(1, std::memory_order_relaxed);
    bool ok = not_full_.wait(lock, stop, [&] {
      return closed_ || unbounded_ || count_ < capacity_;
    });
    if (!ok || closed_) return out;
  }
  if (count_ == capacity_) {
    overflow_.push_back(std::move(env));
  } else {
    ring_[(head_ + count_) % capacity_] = std::move(env);
    ++count_;
  }
  out.accepted = true;
  pushed_.fetch_add(1, std::memory_order_relaxed);
  lock.unlock();
  not_empty_.notify_one();
  return out;
}

std::optional<Envelope> FrameQueue::pop(std::stop_token stop) {
  std::unique_lock lock(mu_);
  bool ok = not_empty_.wait(lock, stop, [&] { return count_ > 0 || closed_; });
  if (!ok || count_ == 0) return std::nullopt;
  Envelope env = std::move(ring_[head_]);
  head_ = (head_ + 1) % capacity_;
  --count_;
  if (!overflow_.empty()) {
    ring_[(head_ + count_) % capacity_] = std::move(overflow_.front());
    overflow_.pop_front();
    ++count_;
  }
  popped_.fetch_add(1, std::memory_order_relaxed);
  lock.unlock();
  not_full_.notify_one();
  return env;
}

std::optional<Envelope> FrameQueue::try_pop() {
  std::unique_lock lock(mu_);
  if (count_ == 0) return std::nullopt;
  Envelope env = std::move(ring_[head_]);
  head_ = (head_ + 1) % capacity_;
  --count_;
  if (!overflow_.empty()) {
    ring_[(head_ + count_) % capacity_] = std::move(overflow_.front());
    overflow_.pop_front();
    ++count_;
  }
  popped_.fetch_add(1, std::memory_order_relaxed);
  lock.unlock();
  not_full_.notify_one();
  return env;
}

void FrameQueue::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  not_empty_.notify_all();
  not_full_.notify_all();
}

void FrameQueue::release_capacity() {
  {
    std::lock_guard lock(mu_);
    unbounded_ = true;
  }
  not_full_.notify_all();
}

std::size_t FrameQueue::size() const {
  std::lock_guard lock(mu_);
  return count_ + overflow_.size();
}

bool FrameQueue::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

// ---------------------------------------------------------------------------

CommBuffer::CommBuffer(std::size_t capacity)
    : outgoing_(capacity), incoming_(capacity) {}

FrameQueue::PushOutcome CommBuffer::push(Lane l, const WireMessage& msg,
                                         SimNanos stamp, std::stop_token stop) {
  return lane(l).push(Envelope{encode(msg), stamp}, std::move(stop));
}

std::optional<Received> CommBuffer::pop(Lane l, std::stop_token stop) {
  auto env = lane(l).pop(std::move(stop));
  if (!env) return std::nullopt;
  return Received{decode(env->frame), env->stamp};
}

std::optional<Received> CommBuffer::try_pop(Lane l) {
  auto env = lane(l).try_pop();
  if (!env) return std::nullopt;
  return Received{decode(env->frame), env->stamp};
}

// ---------------------------------------------------------------------------

TransmitQueueModel::TransmitQueueModel(std::size_t capacity, SimNanos per_message)
    : capacity_(std::max<std::size_t>(capacity, 1)), per_message_(per_message) {
  if (per_message < 0) throw std::invalid_argument("negative transmit cost");
}

TransmitQueueModel::Admission TransmitQueueModel::admit(SimNanos now) {
  Admission a;
  while (!waiting_.empty() && waiting_.front() <= now) waiting_.pop_front();
  if (waiting_.size() >= capacity_) {
    a.stalled = true;
    now = waiting_.front();
    while (!waiting_.empty() && waiting_.front() <= now) waiting_.pop_front();
  }
  a.admitted_at = now;
  a.departs_at = std::max(now, last_departure_) + per_message_;
  last_departure_ = a.departs_at;
  waiting_.push_back(a.departs_at);
  return a;
}

}  // namespace mvx
