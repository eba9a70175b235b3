// Scenario drivers: wire endpoints, a relay server and the emulated links
// together and collect per-packet one-way delays.
//
// Topology for both protocols:  A --up--> server --down--> B
// The uplink carries the configured delay; the downlink only serializes, so a
// path pays the delay once and two serializations.

#include <cmath>
#include <map>
#include <optional>
#include <set>

#include <json.hpp>

#include "voxbench/experiment.hpp"
#include "voxbench/iax_endpoint.hpp"
#include "voxbench/netem_sim.hpp"
#include "voxbench/rsw_endpoint.hpp"

namespace voxbench::experiment {
namespace {

using frames::Bytes;
using netem::Channel;
using netem::EventKind;
using netem::LinkConfig;
using netem::SimEvent;
using netem::Simulator;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t scenario_seed(Protocol p, double delay_ms, std::uint64_t seed) {
  const auto delay_us = static_cast<std::uint64_t>(std::llround(delay_ms * 1000.0));
  return splitmix64(seed ^ splitmix64(delay_us * 2 + static_cast<std::uint64_t>(p)));
}

std::string describe_payload(const SimEvent& ev) {
  if (ev.kind == EventKind::Timer) return ev.tag;
  if (ev.payload.empty()) return "empty";
  if (ev.payload[0] == 'R') {  // RSW text lines start with "RSW/1"
    const std::string_view text(reinterpret_cast<const char*>(ev.payload.data()), ev.payload.size());
    const auto sp = text.find(' ', 6);
    return std::string(text.substr(6, sp == std::string_view::npos ? std::string_view::npos : sp - 6));
  }
  if (ev.channel == Channel::Media && (ev.payload[0] >> 6) == frames::kRtpVersion &&
      !(ev.payload[0] & 0x3f)) {
    return "RTP";
  }
  if (!(ev.payload[0] & 0x80)) return "MINI";
  try {
    const auto f = frames::decode_full(ev.payload);
    if (auto s = f.signal()) return std::string(frames::to_string(*s));
    return "VOICE";
  } catch (const frames::CodecError&) {
    return "?";
  }
}

class ScenarioBase {
 public:
  ScenarioBase(Protocol protocol, double delay_ms, const SweepConfig& cfg, TraceLog* trace)
      : protocol_(protocol),
        delay_ms_(delay_ms),
        cfg_(cfg),
        seed_(scenario_seed(protocol, delay_ms, cfg.seed)),
        sim_(seed_),
        trace_(trace) {
    up_.delay_ms = delay_ms;
    up_.jitter_ms = cfg.jitter_ms;
    up_.loss_prob = cfg.loss_prob;
    up_.dup_prob = cfg.dup_prob;
    up_.reorder_prob = cfg.reorder_prob;
    up_.link_rate_bps = cfg.link_rate_bps;
    up_.overhead_bytes = cfg.overhead_bytes;
    down_ = up_;
    down_.delay_ms = 0;

    frames_ = cfg.frame_count();
    payload_.resize(cfg.payload_bytes);
    for (std::size_t i = 0; i < payload_.size(); ++i) payload_[i] = static_cast<std::uint8_t>(i * 7 + 1);

    if (trace_) {
      sim_.set_dispatch_observer([this](const SimEvent& ev) {
        nlohmann::ordered_json j;
        j["t"] = ev.due;
        j["src"] = ev.src;
        j["dst"] = ev.dst;
        j["kind"] = ev.kind == EventKind::Timer ? "timer" : "deliver";
        j["bytes"] = ev.payload.size();
        j["run"] = run_label();
        j["seq"] = ev.seq;
        j["channel"] = ev.channel == Channel::Media ? "media" : "signaling";
        j["what"] = describe_payload(ev);
        trace_->add(j.dump());
      });
    }
  }

  virtual ~ScenarioBase() = default;

  qos::QosReport run() {
    start();
    sim_.run_until_idle();
    finish();
    qos::QosReport rep = qos::score_run(delays_, sent_, delays_.size(), cfg_.emodel);
    rep.protocol = protocol_;
    rep.configured_delay_ms = delay_ms_;
    rep.setup_time_ms = setup_time_ms_.value_or(0);
    return rep;
  }

 protected:
  virtual void start() = 0;
  virtual void finish() = 0;

  std::string run_label() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s@%.3f", std::string(qos::to_string(protocol_)).c_str(), delay_ms_);
    return buf;
  }

  TransitionObserver observer() {
    if (!trace_) return {};
    return [this](const StateChange& c) {
      nlohmann::ordered_json j;
      j["t"] = c.t;
      j["src"] = c.endpoint;
      j["dst"] = c.endpoint;
      j["kind"] = "state";
      j["bytes"] = 0;
      j["run"] = run_label();
      j["endpoint"] = c.endpoint;
      j["event"] = c.event;
      j["state_before"] = c.state_before;
      j["state_after"] = c.state_after;
      trace_->add(j.dump());
    };
  }

  // Relay at the server: forward on the downlink, optionally after a processing delay.
  void relay(const SimEvent& ev, const std::string& to) {
    if (cfg_.server_delay_ms > 0) {
      const std::string tag = std::string(ev.channel == Channel::Media ? "fwd-media:" : "fwd-sig:") + to;
      sim_.schedule_timer(ev.dst, sim_.now() + cfg_.server_delay_ms, tag, ev.payload);
      return;
    }
    forward(ev.dst, to, ev.channel, ev.payload);
  }

  // Handles a relay timer; returns false for other timers.
  bool relay_timer(const SimEvent& ev) {
    for (auto [prefix, channel] : {std::pair{"fwd-media:", Channel::Media}, std::pair{"fwd-sig:", Channel::Signaling}}) {
      const std::string_view tag = ev.tag;
      if (tag.starts_with(prefix)) {
        forward(ev.dst, std::string(tag.substr(std::string_view(prefix).size())), channel, ev.payload);
        return true;
      }
    }
    return false;
  }

  void forward(const std::string& from, const std::string& to, Channel channel, const Bytes& pkt) {
    if (channel == Channel::Media) {
      sim_.transmit(down_, pkt, from, to);
    } else {
      sim_.reliable_send(down_, pkt, from, to);
    }
  }

  void media_ready() {
    if (media_started_) return;
    media_started_ = true;
    media_start_ = sim_.now();
    setup_time_ms_ = sim_.now() - setup_start_;
    sim_.schedule_timer(sender_id_, media_start_, "media");
  }

  // Next media timer or the teardown timer after the last frame.
  void schedule_next_media() {
    ++frames_sent_;
    if (frames_sent_ < frames_) {
      sim_.schedule_timer(sender_id_, media_start_ + static_cast<double>(frames_sent_) * cfg_.frame_interval_ms,
                          "media");
    } else {
      sim_.schedule_timer(sender_id_, media_start_ + static_cast<double>(frames_) * cfg_.frame_interval_ms,
                          "teardown");
    }
  }

  void record_arrival(Millis sent_at) { delays_.push_back(sim_.now() - sent_at); }

  [[noreturn]] void fail(const std::string& why) const {
    throw ExperimentError(ExperimentErrc::ScenarioFailed, run_label() + ": " + why);
  }

  Protocol protocol_;
  double delay_ms_;
  const SweepConfig& cfg_;
  std::uint64_t seed_;
  Simulator sim_;
  TraceLog* trace_;
  LinkConfig up_;
  LinkConfig down_;
  Bytes payload_;
  std::string sender_id_;

  std::size_t frames_ = 0;
  std::size_t frames_sent_ = 0;
  std::size_t sent_ = 0;
  std::vector<double> delays_;
  Millis setup_start_ = 0;
  Millis media_start_ = 0;
  bool media_started_ = false;
  std::optional<Millis> setup_time_ms_;
};

// caller --up--> pbx --down--> callee, and back.
class IaxScenario final : public ScenarioBase {
 public:
  using ScenarioBase::ScenarioBase;

 protected:
  void start() override {
    sender_id_ = "caller";
    caller_.set_observer(observer());
    callee_.set_observer(observer());
    sim_.register_handler("caller", [this](Simulator&, const SimEvent& ev) { on_caller(ev); });
    sim_.register_handler("callee", [this](Simulator&, const SimEvent& ev) { on_callee(ev); });
    sim_.register_handler("pbx", [this](Simulator&, const SimEvent& ev) {
      if (ev.kind == EventKind::Timer) {
        relay_timer(ev);
        return;
      }
      relay(ev, ev.src == "caller" ? "callee" : "caller");
    });

    setup_start_ = sim_.now();
    auto [n, frame] = caller_.place_call("callee", sim_.now());
    call_ = n;
    sim_.reliable_send(up_, frames::encode_full(frame), "caller", "pbx");
  }

  void finish() override {
    if (!media_started_) fail("call never reached Up");
    if (caller_.call(call_).state().state != iax::CallState::Hungup) fail("caller did not hang up");
    if (callee_.calls().empty()) fail("callee never created the call");
    for (const auto& [n, call] : callee_.calls()) {
      if (call.state().state != iax::CallState::Hungup) fail("callee did not see HANGUP");
    }
  }

 private:
  void send_signals(const std::vector<frames::FullFrame>& frames, const std::string& from) {
    for (const auto& f : frames) sim_.reliable_send(up_, frames::encode_full(f), from, "pbx");
  }

  void on_caller(const SimEvent& ev) {
    if (ev.kind == EventKind::Timer) {
      auto& call = caller_.call(call_);
      if (ev.tag == "teardown") {
        send_signals({call.hangup(sim_.now())}, "caller");
        return;
      }
      const auto frame = call.send_media(payload_, sim_.now());
      std::uint32_t ts32 = 0;
      if (const auto* full = std::get_if<frames::FullFrame>(&frame)) {
        ts32 = full->timestamp;
      } else {
        ts32 = (*call.state().last_full_ts & 0xffff0000u) | std::get<frames::MiniFrame>(frame).ts16;
      }
      sent_at_[ts32] = sim_.now();
      ++sent_;
      sim_.transmit(up_, frames::encode_media(frame), "caller", "pbx");
      schedule_next_media();
      return;
    }
    const auto f = frames::decode_full(ev.payload);
    const auto result = caller_.handle_signal(f, sim_.now());
    send_signals(result.send, "caller");
    if (caller_.call(call_).state().state == iax::CallState::Up) media_ready();
  }

  void on_callee(const SimEvent& ev) {
    if (ev.kind == EventKind::Timer) {
      // answer timer: "answer:<local call>"
      const auto n = static_cast<std::uint16_t>(std::stoul(ev.tag.substr(7)));
      send_signals(callee_.call(n).on_answer_timer(sim_.now()), "callee");
      return;
    }
    if (ev.channel == Channel::Signaling) {
      const auto f = frames::decode_full(ev.payload);
      const auto result = callee_.handle_signal(f, sim_.now());
      send_signals(result.send, "callee");
      if (result.answer_due && !result.send.empty()) {
        sim_.schedule_timer("callee", *result.answer_due, "answer:" + std::to_string(result.send.front().source_call));
      }
      return;
    }
    iax::MediaReceiver::Received rx;
    try {
      rx = callee_.receive_media(frames::decode_media(ev.payload));
    } catch (const iax::IaxError& e) {
      if (e.code() == iax::IaxErrc::StaleFrame) return;  // late or duplicate
      throw;
    }
    const auto it = sent_at_.find(rx.ts32);
    if (it == sent_at_.end()) fail("reconstructed timestamp " + std::to_string(rx.ts32) + " was never sent");
    if (rx.payload != payload_) fail("media payload corrupted");
    if (seen_.insert(rx.ts32).second) record_arrival(it->second);
  }

  iax::IaxEndpoint caller_{"caller"};
  iax::IaxEndpoint callee_{"callee"};
  std::uint16_t call_ = 0;
  std::map<std::uint32_t, Millis> sent_at_;
  std::set<std::uint32_t> seen_;
};

// chair --up--> server --down--> p1; the server hosts the conference.
class RswScenario final : public ScenarioBase {
 public:
  RswScenario(Protocol protocol, double delay_ms, const SweepConfig& cfg, TraceLog* trace)
      : ScenarioBase(protocol, delay_ms, cfg, trace), chair_("chair", seed_ ^ 1), member_("p1", seed_ ^ 2) {}

 protected:
  void start() override {
    sender_id_ = "chair";
    server_.set_observer(observer());
    sim_.register_handler("chair", [this](Simulator&, const SimEvent& ev) { on_chair(ev); });
    sim_.register_handler("p1", [this](Simulator&, const SimEvent& ev) { on_member(ev); });
    sim_.register_handler("server", [this](Simulator&, const SimEvent& ev) { on_server(ev); });

    setup_start_ = sim_.now();
    const std::vector<rsw::Invitee> invitees{{"p1", rsw::Role::Participant}};
    const std::string media_desc = "codec=g711;frame_ms=" + std::to_string(std::lround(cfg_.frame_interval_ms));
    send_signal(chair_.create_conference(1, invitees, media_desc), "chair");
  }

  void finish() override {
    if (!media_started_) fail("conference never became Active");
    if (!server_.conference() || server_.conference()->phase != rsw::Phase::Ended) fail("conference not ended");
    if (!member_.conference() || member_.conference()->phase != rsw::Phase::Ended) fail("member missed END");
  }

 private:
  void send_signal(const frames::RswMessage& m, const std::string& from) {
    const std::string line = frames::encode_rsw(m);
    sim_.reliable_send(from == "server" ? down_ : up_, Bytes(line.begin(), line.end()), from,
                       from == "server" ? m.to : "server");
  }

  void on_server(const SimEvent& ev) {
    if (ev.kind == EventKind::Timer) {
      if (!relay_timer(ev)) fail("unexpected server timer " + ev.tag);
      return;
    }
    if (ev.channel == Channel::Media) {
      for (const auto& to : server_.media_targets(ev.src)) relay(ev, to);
      return;
    }
    const auto msg = frames::decode_rsw(ev.payload);
    const auto out = server_.route(msg, sim_.now());
    for (const auto& m : out) {
      if (cfg_.server_delay_ms > 0) {
        const std::string line = frames::encode_rsw(m);
        sim_.schedule_timer("server", sim_.now() + cfg_.server_delay_ms, "fwd-sig:" + m.to,
                            Bytes(line.begin(), line.end()));
      } else {
        send_signal(m, "server");
      }
    }
  }

  void on_chair(const SimEvent& ev) {
    if (ev.kind == EventKind::Timer) {
      if (ev.tag == "teardown") {
        send_signal(chair_.end(), "chair");
        return;
      }
      const auto pkt = chair_.send_media(payload_);
      sent_at_[pkt.seq] = {sent_, sim_.now()};
      ++sent_;
      sim_.transmit(up_, frames::encode_rtp(pkt), "chair", "server");
      schedule_next_media();
      return;
    }
    chair_.on_message(frames::decode_rsw(ev.payload));
    if (chair_.conference() && chair_.conference()->phase == rsw::Phase::Active) media_ready();
  }

  void on_member(const SimEvent& ev) {
    if (ev.channel == Channel::Signaling) {
      const auto msg = frames::decode_rsw(ev.payload);
      member_.on_message(msg);
      if (msg.verb == frames::RswVerb::Create && member_.has_invitation(msg.conf_id)) {
        send_signal(member_.respond(msg.conf_id, rsw::InviteResponse::Accept), "p1");
      }
      return;
    }
    const auto pkt = frames::decode_rtp(ev.payload);
    const auto it = sent_at_.find(pkt.seq);
    if (it == sent_at_.end()) fail("RTP seq " + std::to_string(pkt.seq) + " was never sent");
    if (pkt.payload != payload_) fail("media payload corrupted");
    // Same playout rule as the IAX receiver: only strictly newer packets count.
    const auto [index, sent] = it->second;
    if (newest_ && index <= *newest_) return;
    newest_ = index;
    record_arrival(sent);
  }

  rsw::RswEndpoint chair_;
  rsw::RswEndpoint member_;
  rsw::RswServer server_;
  std::map<std::uint16_t, std::pair<std::size_t, Millis>> sent_at_;  // seq -> (send index, time)
  std::optional<std::size_t> newest_;
};

}  // namespace

qos::QosReport run_scenario(Protocol protocol, double delay_ms, const SweepConfig& cfg, TraceLog* trace) {
  cfg.validate();
  if (!(delay_ms >= 0)) throw ExperimentError(ExperimentErrc::InvalidConfig, "delay must be >= 0");
  const std::string where = std::string(qos::to_string(protocol)) + " @ " + std::to_string(delay_ms) + " ms: ";
  try {
    if (protocol == Protocol::IAX) return IaxScenario(protocol, delay_ms, cfg, trace).run();
    return RswScenario(protocol, delay_ms, cfg, trace).run();
  } catch (const ExperimentError&) {
    throw;
  } catch (const std::exception& e) {
    throw ExperimentError(ExperimentErrc::ScenarioFailed, where + e.what());
  }
}

}  // namespace voxbench::experiment
