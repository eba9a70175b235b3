#pragma once

// Deterministic discrete-event link emulator. Fixed one-way delay is the main
// knob; jitter, loss, duplication and reordering exist but default to off.
// A finite link rate adds per-packet serialization, which is how header size
// shows up in end-to-end delay.

#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "voxbench/error.hpp"
#include "voxbench/frames.hpp"
#include "voxbench/trace.hpp"

namespace voxbench::netem {

enum class SimErrc { EmptyPacket, HorizonExceeded, UnknownEndpoint, InvalidLink, PastTimer };

using SimError = Error<SimErrc>;

struct LinkConfig {
  Millis delay_ms = 0;
  Millis jitter_ms = 0;  // half-width of a uniform distribution
  double loss_prob = 0;
  double dup_prob = 0;
  double reorder_prob = 0;
  double link_rate_bps = 128000;
  std::size_t overhead_bytes = 28;  // IPv4 + UDP

  void validate() const;
};

// 8 * (len + overhead) / rate, in milliseconds.
Millis serialization_ms(const LinkConfig& link, std::size_t packet_bytes);

enum class EventKind { Deliver, Timer };
enum class Channel { Media, Signaling };

struct SimEvent {
  Millis due = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::Deliver;
  Channel channel = Channel::Media;
  std::string src;
  std::string dst;
  frames::Bytes payload;
  std::string tag;  // timer tag
  Millis scheduled_at = 0;
};

class Simulator;
using Handler = std::function<void(Simulator&, const SimEvent&)>;

// Uniform doubles in [0, 1) built from the top 53 bits of the generator, so
// the sequence does not depend on the standard library's distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 engine_;
};

struct RunLimits {
  Millis horizon_ms = 3.6e6;
  std::uint64_t max_events = 10'000'000;
};

class Simulator {
 public:
  explicit Simulator(std::uint64_t rng_seed = 1, RunLimits limits = {});

  Millis now() const { return now_; }
  std::uint64_t rng_seed() const { return seed_; }

  void register_handler(const std::string& endpoint, Handler handler);

  // Lossy media path: applies loss, duplication, reordering and jitter.
  // Returns the Deliver events actually scheduled (zero, one or two).
  std::vector<SimEvent> transmit(const LinkConfig& link, frames::Bytes pkt, const std::string& from,
                                 const std::string& to);

  // Signaling path: no loss, duplication, reordering or jitter, FIFO per (from, to).
  SimEvent reliable_send(const LinkConfig& link, frames::Bytes pkt, const std::string& from,
                         const std::string& to);

  // `payload` rides along for handlers that hold a packet until the timer fires.
  SimEvent schedule_timer(const std::string& endpoint, Millis due, std::string tag,
                          frames::Bytes payload = {});

  // Dispatches events in (due, seq) order until the queue drains.
  Millis run_until_idle();

  std::size_t pending() const { return queue_.size(); }
  std::uint64_t dispatched() const { return dispatched_; }

  // Sees every event just before its handler runs.
  void set_dispatch_observer(std::function<void(const SimEvent&)> obs) { observer_ = std::move(obs); }

 private:
  struct Later {
    bool operator()(const SimEvent& a, const SimEvent& b) const {
      return a.due != b.due ? a.due > b.due : a.seq > b.seq;
    }
  };

  SimEvent push(SimEvent ev);

  std::uint64_t seed_;
  RunLimits limits_;
  Rng rng_;
  Millis now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::map<std::string, Handler> handlers_;
  std::map<std::pair<std::string, std::string>, Millis> fifo_tail_;
  std::function<void(const SimEvent&)> observer_;
};

}  // namespace voxbench::netem
