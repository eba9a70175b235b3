#include "voxbench/iax_endpoint.hpp"

#include <cmath>

namespace voxbench::iax {

using frames::FrameType;
using frames::FullFrame;
using frames::MiniFrame;
using frames::Signal;

std::string_view to_string(CallState s) {
  switch (s) {
    case CallState::Idle: return "Idle";
    case CallState::WaitingForResponse: return "WaitingForResponse";
    case CallState::AuthSent: return "AuthSent";
    case CallState::Accepted: return "Accepted";
    case CallState::Proceeding: return "Proceeding";
    case CallState::Ringing: return "Ringing";
    case CallState::Up: return "Up";
    case CallState::Hungup: return "Hungup";
  }
  return "?";
}

MediaReceiver::Received MediaReceiver::receive(const frames::MediaFrame& frame) {
  Received out;
  if (const auto* full = std::get_if<FullFrame>(&frame)) {
    if (full->frame_type != FrameType::Voice) {
      throw IaxError(IaxErrc::ProtocolViolation, "media path received a control frame");
    }
    if (last_ && full->timestamp <= *last_) {
      throw IaxError(IaxErrc::StaleFrame, "voice full frame ts " + std::to_string(full->timestamp) +
                                              " not after " + std::to_string(*last_));
    }
    out.ts32 = full->timestamp;
    out.payload = full->payload;
  } else {
    const auto& mini = std::get<MiniFrame>(frame);
    std::int64_t ts = (static_cast<std::int64_t>(high16_) << 16) | mini.ts16;
    if (last_) {
      // Take whichever neighbouring window lands closest to the last timestamp,
      // so a lost anchor wraps forward and a late frame reads as late.
      const auto last = static_cast<std::int64_t>(*last_);
      if (ts - last < -0x8000) ts += 0x10000;
      else if (ts - last > 0x8000 && ts >= 0x10000) ts -= 0x10000;
    }
    if (last_ && ts <= static_cast<std::int64_t>(*last_)) {
      throw IaxError(IaxErrc::StaleFrame, "mini frame ts16 " + std::to_string(mini.ts16) +
                                              " repeats " + std::to_string(*last_));
    }
    out.ts32 = static_cast<std::uint32_t>(ts);
    out.payload = mini.payload;
  }
  high16_ = out.ts32 >> 16;
  last_ = out.ts32;
  return out;
}

IaxCall::IaxCall(std::uint16_t local_call, CallConfig config, std::string endpoint_id)
    : config_(std::move(config)), endpoint_id_(std::move(endpoint_id)) {
  state_.local_call = local_call;
}

std::uint32_t IaxCall::timestamp_at(Millis now) const {
  const double elapsed = std::floor(now - state_.start_time);
  return elapsed <= 0 ? 0 : static_cast<std::uint32_t>(elapsed);
}

void IaxCall::transition(CallState next, std::string_view event, Millis now) {
  const CallState before = state_.state;
  state_.state = next;
  if (observer_) {
    observer_(StateChange{now, endpoint_id_ + "/" + std::to_string(state_.local_call),
                          std::string(event), std::string(to_string(before)),
                          std::string(to_string(next))});
  }
}

void IaxCall::bind_remote() { state_.remote_call = pending_remote_; }

void IaxCall::violation(Signal s) const {
  throw IaxError(IaxErrc::ProtocolViolation, std::string(to_string(s)) + " in state " +
                                                 std::string(to_string(state_.state)));
}

FullFrame IaxCall::make_control(Signal s, Millis now, frames::Bytes payload) {
  FullFrame f;
  f.source_call = state_.local_call;
  f.dest_call = state_.remote_call.value_or(pending_remote_.value_or(0));
  f.timestamp = timestamp_at(now);
  f.oseqno = state_.oseqno++;
  f.iseqno = state_.iseqno;
  f.frame_type = FrameType::Control;
  f.subclass = static_cast<std::uint8_t>(s);
  f.payload = std::move(payload);
  return f;
}

FullFrame IaxCall::place_call(std::string_view dest, Millis now) {
  if (state_.state != CallState::Idle || direction_ != Direction::Unset) {
    throw IaxError(IaxErrc::InvalidState,
                   "place_call requires Idle, call is " + std::string(to_string(state_.state)));
  }
  direction_ = Direction::Outgoing;
  state_.start_time = now;
  FullFrame f = make_control(Signal::New, now, frames::Bytes(dest.begin(), dest.end()));
  transition(CallState::WaitingForResponse, "place_call", now);
  return f;
}

void IaxCall::answer_or_ring(SignalResult& out, Millis now) {
  out.send.push_back(make_control(Signal::Accept, now));
  transition(CallState::Accepted, "send ACCEPT", now);
  if (config_.send_proceeding) {
    out.send.push_back(make_control(Signal::Proceeding, now));
    transition(CallState::Proceeding, "send PROCEEDING", now);
  }
  if (config_.answer_delay <= 0) {
    out.send.push_back(make_control(Signal::Answer, now));
    transition(CallState::Up, "send ANSWER", now);
    return;
  }
  out.send.push_back(make_control(Signal::Ringing, now));
  transition(CallState::Ringing, "send RINGING", now);
  out.answer_due = now + config_.answer_delay;
}

SignalResult IaxCall::handle_signal(const FullFrame& f, Millis now) {
  const auto sig = f.signal();
  if (!sig) throw IaxError(IaxErrc::ProtocolViolation, "handle_signal expects a control frame");
  const Signal s = *sig;
  const CallState st = state_.state;

  if (s == Signal::New) {
    if (st != CallState::Idle || direction_ != Direction::Unset) violation(s);
    if (f.dest_call != 0) throw IaxError(IaxErrc::Misaddressed, "NEW must carry dest_call 0");
  } else {
    if (st == CallState::Idle || st == CallState::Hungup) violation(s);
    if (f.dest_call != state_.local_call) {
      throw IaxError(IaxErrc::Misaddressed, "dest_call " + std::to_string(f.dest_call) +
                                                " is not call " + std::to_string(state_.local_call));
    }
    const auto peer = state_.remote_call ? state_.remote_call : pending_remote_;
    if (peer && f.source_call != *peer) {
      throw IaxError(IaxErrc::Misaddressed, "source_call " + std::to_string(f.source_call) +
                                                " is not the peer " + std::to_string(*peer));
    }
  }

  const std::string event = "recv " + std::string(to_string(s));
  SignalResult out;
  auto accept_frame = [&] {
    state_.iseqno = static_cast<std::uint8_t>(f.oseqno + 1);
    if (!pending_remote_) pending_remote_ = f.source_call;
  };

  if (s == Signal::Reject || s == Signal::Hangup) {
    accept_frame();
    bind_remote();
    transition(CallState::Hungup, event, now);
    return out;
  }

  if (direction_ == Direction::Unset) {
    // Only NEW reaches here: Idle with any other signal was rejected above.
    direction_ = Direction::Incoming;
    state_.start_time = now;
    accept_frame();
    switch (config_.policy) {
      case CalleePolicy::Open:
        transition(CallState::Idle, event, now);
        bind_remote();
        answer_or_ring(out, now);
        break;
      case CalleePolicy::Challenge: {
        challenge_ = "chal-" + std::to_string(state_.local_call) + "-" +
                     std::to_string(challenge_counter_++);
        out.send.push_back(
            make_control(Signal::AuthReq, now, frames::Bytes(challenge_.begin(), challenge_.end())));
        transition(CallState::AuthSent, event, now);
        break;
      }
      case CalleePolicy::Reject:
      case CalleePolicy::Busy: {
        const std::string cause = config_.policy == CalleePolicy::Busy ? "busy" : "rejected";
        bind_remote();
        out.send.push_back(make_control(Signal::Reject, now, frames::Bytes(cause.begin(), cause.end())));
        transition(CallState::Hungup, event, now);
        break;
      }
    }
    return out;
  }

  if (direction_ == Direction::Incoming) {
    if (st != CallState::AuthSent || s != Signal::AuthRep) violation(s);
    accept_frame();
    const std::string expected = challenge_ + config_.secret;
    if (std::string(f.payload.begin(), f.payload.end()) != expected) {
      const std::string cause = "auth failed";
      bind_remote();
      out.send.push_back(make_control(Signal::Reject, now, frames::Bytes(cause.begin(), cause.end())));
      transition(CallState::Hungup, event, now);
      return out;
    }
    transition(CallState::AuthSent, event, now);
    bind_remote();
    answer_or_ring(out, now);
    return out;
  }

  // Outgoing.
  CallState next = st;
  switch (s) {
    case Signal::AuthReq:
      if (st != CallState::WaitingForResponse) violation(s);
      next = CallState::AuthSent;
      break;
    case Signal::Accept:
      if (st != CallState::WaitingForResponse && st != CallState::AuthSent) violation(s);
      next = CallState::Accepted;
      break;
    case Signal::Proceeding:
      if (st != CallState::Accepted) violation(s);
      next = CallState::Proceeding;
      break;
    case Signal::Ringing:
      if (st != CallState::Accepted && st != CallState::Proceeding) violation(s);
      next = CallState::Ringing;
      break;
    case Signal::Answer:
      if (st != CallState::Accepted && st != CallState::Proceeding && st != CallState::Ringing) {
        violation(s);
      }
      next = CallState::Up;
      break;
    default:
      violation(s);
  }
  accept_frame();
  if (s == Signal::AuthReq) {
    std::string token(f.payload.begin(), f.payload.end());
    token += config_.secret;
    out.send.push_back(make_control(Signal::AuthRep, now, frames::Bytes(token.begin(), token.end())));
  }
  if (s == Signal::Accept) bind_remote();
  transition(next, event, now);
  return out;
}

std::vector<FullFrame> IaxCall::on_answer_timer(Millis now) {
  if (direction_ != Direction::Incoming || state_.state != CallState::Ringing) return {};
  std::vector<FullFrame> out{make_control(Signal::Answer, now)};
  transition(CallState::Up, "answer timer", now);
  return out;
}

FullFrame IaxCall::hangup(Millis now) {
  if (state_.state == CallState::Idle || state_.state == CallState::Hungup) {
    throw IaxError(IaxErrc::InvalidState,
                   "hangup in state " + std::string(to_string(state_.state)));
  }
  FullFrame f = make_control(Signal::Hangup, now);
  transition(CallState::Hungup, "hangup", now);
  return f;
}

frames::MediaFrame IaxCall::send_media(std::span<const std::uint8_t> payload, Millis now) {
  if (state_.state != CallState::Up) {
    throw IaxError(IaxErrc::NotInCall, "send_media in state " + std::string(to_string(state_.state)));
  }
  const std::uint32_t ts = timestamp_at(now);
  if (!state_.last_full_ts || (ts >> 16) != (*state_.last_full_ts >> 16)) {
    FullFrame f;
    f.source_call = state_.local_call;
    f.dest_call = *state_.remote_call;
    f.timestamp = ts;
    f.oseqno = state_.oseqno++;
    f.iseqno = state_.iseqno;
    f.frame_type = FrameType::Voice;
    f.subclass = config_.voice_format;
    f.payload.assign(payload.begin(), payload.end());
    state_.last_full_ts = ts;
    return f;
  }
  return MiniFrame{state_.local_call, static_cast<std::uint16_t>(ts & 0xffff),
                   frames::Bytes(payload.begin(), payload.end())};
}

std::optional<std::uint16_t> CallNumberAllocator::allocate() {
  if (used_count_ == frames::kMaxCallNumber) return std::nullopt;
  while (used_[next_]) next_ = next_ == frames::kMaxCallNumber ? 1 : next_ + 1;
  const std::uint16_t n = next_;
  used_[n] = true;
  ++used_count_;
  next_ = next_ == frames::kMaxCallNumber ? 1 : next_ + 1;
  return n;
}

void CallNumberAllocator::release(std::uint16_t n) {
  if (n == 0 || n > frames::kMaxCallNumber || !used_[n]) return;
  used_[n] = false;
  --used_count_;
}

IaxEndpoint::IaxEndpoint(std::string id, CallConfig config)
    : id_(std::move(id)), config_(std::move(config)) {}

IaxCall& IaxEndpoint::create_call(std::uint16_t n) {
  auto [it, inserted] = calls_.try_emplace(n, n, config_, id_);
  if (observer_) it->second.set_observer(observer_);
  return it->second;
}

std::pair<std::uint16_t, FullFrame> IaxEndpoint::place_call(std::string_view dest, Millis now) {
  const auto n = allocator_.allocate();
  if (!n) throw IaxError(IaxErrc::NoFreeCallNumbers, "all 32767 call numbers are in use");
  return {*n, create_call(*n).place_call(dest, now)};
}

SignalResult IaxEndpoint::handle_signal(const FullFrame& f, Millis now) {
  if (f.signal() == Signal::New && f.dest_call == 0) {
    const auto n = allocator_.allocate();
    if (!n) throw IaxError(IaxErrc::NoFreeCallNumbers, "all 32767 call numbers are in use");
    return create_call(*n).handle_signal(f, now);
  }
  return call(f.dest_call).handle_signal(f, now);
}

MediaReceiver::Received IaxEndpoint::receive_media(const frames::MediaFrame& frame) {
  if (const auto* full = std::get_if<FullFrame>(&frame)) return call(full->dest_call).receive_media(frame);
  const auto source = std::get<MiniFrame>(frame).source_call;
  for (auto& [n, c] : calls_) {
    if (c.state().remote_call == source) return c.receive_media(frame);
  }
  throw IaxError(IaxErrc::UnknownCall, "no call with peer " + std::to_string(source));
}

IaxCall& IaxEndpoint::call(std::uint16_t local_call) {
  auto it = calls_.find(local_call);
  if (it == calls_.end()) throw IaxError(IaxErrc::UnknownCall, "no call " + std::to_string(local_call));
  return it->second;
}

const IaxCall& IaxEndpoint::call(std::uint16_t local_call) const {
  auto it = calls_.find(local_call);
  if (it == calls_.end()) throw IaxError(IaxErrc::UnknownCall, "no call " + std::to_string(local_call));
  return it->second;
}

void IaxEndpoint::release(std::uint16_t local_call) {
  if (calls_.erase(local_call) > 0) allocator_.release(local_call);
}

}  // namespace voxbench::iax
