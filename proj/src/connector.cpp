#include "mvx/connector.hpp"

namespace mvx {

Connector::Connector(VariantId variant, CommBuffer& buffer, Channel& channel,
                     std::vector<NodeId> peers, FailureHandler on_failure)
    : variant_(variant),
      buffer_(buffer),
      channel_(channel),
      peers_(std::move(peers)),
      on_failure_(std::move(on_failure)) {}

Connector::~Connector() { abort(); }

void Connector::start() {
  egress_ = std::jthread([this](std::stop_token st) { egress(st); });
  ingress_ = std::jthread([this](std::stop_token st) { ingress(st); });
}

void Connector::egress(std::stop_token stop) {
  while (auto env = buffer_.lane(Lane::Outgoing).pop(stop)) {
    auto msg = decode(env->frame);
    for (NodeId peer : peers_) {
      if (!channel_.send(connector_node(variant_), peer, msg, env->stamp)) {
        fail();
        return;
      }
    }
    sent_.fetch_add(1);
  }
}

void Connector::ingress(std::stop_token stop) {
  for (;;) {
    auto r = channel_.recv(connector_node(variant_), stop);
    if (r.status == RecvStatus::Stopped) return;
    if (r.status != RecvStatus::Ok) {
      if (!shutting_down_.load()) fail();
      return;
    }
    received_.fetch_add(1);
    if (!buffer_.lane(Lane::Incoming)
             .push(Envelope{encode(r.delivery.msg), r.delivery.arrival}, stop)
             .accepted) {
      return;
    }
  }
}

void Connector::fail() {
  if (failed_.exchange(true)) return;
  WireMessage term{MsgType::Terminate, variant_, 0, "transport"};
  auto& in = buffer_.lane(Lane::Incoming);
  in.release_capacity();
  in.push(Envelope{encode(term), 0});
  if (on_failure_) on_failure_();
}

void Connector::drain_outgoing() {
  shutting_down_.store(true);
  buffer_.lane(Lane::Outgoing).close();
  if (egress_.joinable()) egress_.join();
}

void Connector::finish_incoming() {
  shutting_down_.store(true);
  buffer_.lane(Lane::Incoming).release_capacity();
  if (ingress_.joinable()) ingress_.join();
}

void Connector::abort() {
  shutting_down_.store(true);
  buffer_.lane(Lane::Outgoing).close();
  buffer_.lane(Lane::Incoming).release_capacity();
  egress_.request_stop();
  ingress_.request_stop();
  if (egress_.joinable()) egress_.join();
  if (ingress_.joinable()) ingress_.join();
}

}  // namespace mvx
