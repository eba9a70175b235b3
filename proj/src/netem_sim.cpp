#include "voxbench/netem_sim.hpp"

#include <algorithm>
#include <cmath>

namespace voxbench::netem {

void LinkConfig::validate() const {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!(delay_ms >= 0)) throw SimError(SimErrc::InvalidLink, "delay_ms must be >= 0");
  if (!(jitter_ms >= 0)) throw SimError(SimErrc::InvalidLink, "jitter_ms must be >= 0");
  if (!prob_ok(loss_prob) || !prob_ok(dup_prob) || !prob_ok(reorder_prob)) {
    throw SimError(SimErrc::InvalidLink, "probabilities must lie in [0, 1]");
  }
  if (!(link_rate_bps > 0)) throw SimError(SimErrc::InvalidLink, "link_rate_bps must be > 0");
}

Millis serialization_ms(const LinkConfig& link, std::size_t packet_bytes) {
  return 8.0 * static_cast<double>(packet_bytes + link.overhead_bytes) / link.link_rate_bps * 1000.0;
}

Simulator::Simulator(std::uint64_t rng_seed, RunLimits limits)
    : seed_(rng_seed), limits_(limits), rng_(rng_seed) {}

void Simulator::register_handler(const std::string& endpoint, Handler handler) {
  handlers_[endpoint] = std::move(handler);
}

SimEvent Simulator::push(SimEvent ev) {
  ev.seq = next_seq_++;
  ev.scheduled_at = now_;
  queue_.push(ev);
  return ev;
}

std::vector<SimEvent> Simulator::transmit(const LinkConfig& link, frames::Bytes pkt, const std::string& from,
                                          const std::string& to) {
  if (pkt.empty()) throw SimError(SimErrc::EmptyPacket, "transmit of an empty packet");
  link.validate();

  // Fixed draw order keeps the trace a pure function of the seed.
  const bool lost = rng_.uniform() < link.loss_prob;
  const bool duplicated = rng_.uniform() < link.dup_prob;
  const bool reordered = rng_.uniform() < link.reorder_prob;
  const double jitter = link.jitter_ms > 0 ? rng_.uniform(-link.jitter_ms, link.jitter_ms) : 0.0;
  if (lost) return {};

  const Millis base = serialization_ms(link, pkt.size()) + (reordered ? 0.0 : link.delay_ms);
  SimEvent ev;
  ev.due = std::max(now_, now_ + base + jitter);
  ev.kind = EventKind::Deliver;
  ev.channel = Channel::Media;
  ev.src = from;
  ev.dst = to;
  ev.payload = std::move(pkt);

  std::vector<SimEvent> out;
  if (duplicated) out.push_back(push(ev));
  out.push_back(push(std::move(ev)));
  return out;
}

SimEvent Simulator::reliable_send(const LinkConfig& link, frames::Bytes pkt, const std::string& from,
                                  const std::string& to) {
  link.validate();
  SimEvent ev;
  ev.due = now_ + serialization_ms(link, pkt.size()) + link.delay_ms;
  auto& tail = fifo_tail_[{from, to}];
  ev.due = std::max(ev.due, tail);
  tail = ev.due;
  ev.kind = EventKind::Deliver;
  ev.channel = Channel::Signaling;
  ev.src = from;
  ev.dst = to;
  ev.payload = std::move(pkt);
  return push(std::move(ev));
}

SimEvent Simulator::schedule_timer(const std::string& endpoint, Millis due, std::string tag,
                                   frames::Bytes payload) {
  if (due < now_) throw SimError(SimErrc::PastTimer, "timer '" + tag + "' scheduled in the past");
  SimEvent ev;
  ev.due = due;
  ev.kind = EventKind::Timer;
  ev.src = endpoint;
  ev.dst = endpoint;
  ev.tag = std::move(tag);
  ev.payload = std::move(payload);
  return push(std::move(ev));
}

Millis Simulator::run_until_idle() {
  while (!queue_.empty()) {
    SimEvent ev = queue_.top();
    queue_.pop();
    if (ev.due > limits_.horizon_ms || dispatched_ >= limits_.max_events) {
      throw SimError(SimErrc::HorizonExceeded, "simulation passed its horizon at t=" + std::to_string(ev.due));
    }
    const auto it = handlers_.find(ev.dst);
    if (it == handlers_.end()) throw SimError(SimErrc::UnknownEndpoint, "no handler for '" + ev.dst + "'");
    now_ = ev.due;
    ++dispatched_;
    if (observer_) observer_(ev);
    it->second(*this, ev);
  }
  return now_;
}

}  // namespace voxbench::netem
