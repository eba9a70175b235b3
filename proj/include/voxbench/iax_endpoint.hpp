#pragma once

// IAX call state machine. Sans-IO: every operation takes the current time and
// returns the frames to put on the wire; the caller owns transport and timers.
//
// Caller side:
//   WaitingForResponse -AUTHREQ-> AuthSent (sends AUTHREP)
//   WaitingForResponse|AuthSent -ACCEPT-> Accepted
//   Accepted -PROCEEDING-> Proceeding
//   Accepted|Proceeding -RINGING-> Ringing
//   Accepted|Proceeding|Ringing -ANSWER-> Up
// Callee side:
//   Idle -NEW-> Up | Ringing | AuthSent | Hungup depending on policy
//   AuthSent -AUTHREP-> Up | Ringing (token ok) or Hungup (token mismatch)
// Both sides: any live state -REJECT|HANGUP-> Hungup.
// Everything else is a ProtocolViolation and leaves the state untouched.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxbench/error.hpp"
#include "voxbench/frames.hpp"
#include "voxbench/trace.hpp"

namespace voxbench::iax {

enum class IaxErrc {
  ProtocolViolation,
  NoFreeCallNumbers,
  InvalidState,
  NotInCall,
  StaleFrame,
  Misaddressed,
  UnknownCall,
};

using IaxError = Error<IaxErrc>;

enum class CallState { Idle, WaitingForResponse, AuthSent, Accepted, Proceeding, Ringing, Up, Hungup };

std::string_view to_string(CallState s);

enum class Direction { Unset, Outgoing, Incoming };

enum class CalleePolicy { Open, Challenge, Reject, Busy };

struct CallConfig {
  CalleePolicy policy = CalleePolicy::Open;
  // 0 answers immediately after ACCEPT; otherwise RINGING is sent and the
  // driver must call on_answer_timer() once this much time has elapsed.
  Millis answer_delay = 0;
  // Callee sends PROCEEDING ahead of RINGING.
  bool send_proceeding = false;
  std::string secret = "iax-shared-secret";
  std::uint8_t voice_format = 0x04;  // subclass used on voice full frames
};

struct IaxCallState {
  CallState state = CallState::Idle;
  std::uint16_t local_call = 0;
  std::optional<std::uint16_t> remote_call;
  Millis start_time = 0;
  // Timestamp of the last voice full frame sent, the resync anchor.
  std::optional<std::uint32_t> last_full_ts;
  std::uint8_t oseqno = 0;
  std::uint8_t iseqno = 0;
};

struct SignalResult {
  std::vector<frames::FullFrame> send;
  // Set when the callee owes a delayed ANSWER; deliver on_answer_timer() then.
  std::optional<Millis> answer_due;
};

// Receiver-side timestamp reconstruction for one incoming media stream. A mini
// frame takes the 16-bit window nearest the last timestamp; anything not
// strictly later than that raises StaleFrame.
class MediaReceiver {
 public:
  struct Received {
    std::uint32_t ts32 = 0;
    frames::Bytes payload;
  };

  Received receive(const frames::MediaFrame& frame);

  std::optional<std::uint32_t> last_reconstructed_ts() const { return last_; }
  std::uint32_t high16() const { return high16_; }

 private:
  std::optional<std::uint32_t> last_;
  std::uint32_t high16_ = 0;
};

class IaxCall {
 public:
  IaxCall(std::uint16_t local_call, CallConfig config = {}, std::string endpoint_id = {});

  const IaxCallState& state() const { return state_; }
  Direction direction() const { return direction_; }

  // Emits NEW carrying the destination number. Requires Idle.
  frames::FullFrame place_call(std::string_view dest, Millis now);

  SignalResult handle_signal(const frames::FullFrame& f, Millis now);

  // Delayed answer for a ringing callee; no-op once the call has left Ringing.
  std::vector<frames::FullFrame> on_answer_timer(Millis now);

  // Local hangup from any live state.
  frames::FullFrame hangup(Millis now);

  // A voice full frame when the 16-bit window changes (or first frame), else a mini frame.
  frames::MediaFrame send_media(std::span<const std::uint8_t> payload, Millis now);

  MediaReceiver::Received receive_media(const frames::MediaFrame& frame) { return rx_.receive(frame); }

  void set_observer(TransitionObserver obs) { observer_ = std::move(obs); }

 private:
  frames::FullFrame make_control(frames::Signal s, Millis now, frames::Bytes payload = {});
  std::uint32_t timestamp_at(Millis now) const;
  void transition(CallState next, std::string_view event, Millis now);
  void bind_remote();
  [[noreturn]] void violation(frames::Signal s) const;
  void answer_or_ring(SignalResult& out, Millis now);

  IaxCallState state_;
  CallConfig config_;
  std::string endpoint_id_;
  Direction direction_ = Direction::Unset;
  // Peer call number learned before ACCEPT binds it into remote_call.
  std::optional<std::uint16_t> pending_remote_;
  std::string challenge_;
  std::uint32_t challenge_counter_ = 0;
  MediaReceiver rx_;
  TransitionObserver observer_;
};

// Allocates 15-bit call numbers 1..32767; 0 is reserved for "not yet known".
class CallNumberAllocator {
 public:
  std::optional<std::uint16_t> allocate();
  void release(std::uint16_t n);
  std::size_t in_use() const { return used_count_; }

 private:
  std::vector<bool> used_ = std::vector<bool>(frames::kMaxCallNumber + 1, false);
  std::uint16_t next_ = 1;
  std::size_t used_count_ = 0;
};

// All calls terminating at one IAX peer.
class IaxEndpoint {
 public:
  explicit IaxEndpoint(std::string id, CallConfig config = {});

  const std::string& id() const { return id_; }

  // Allocates a call number and emits NEW. Throws NoFreeCallNumbers when exhausted.
  std::pair<std::uint16_t, frames::FullFrame> place_call(std::string_view dest, Millis now);

  // Routes a control frame to its call; NEW creates a new incoming call.
  SignalResult handle_signal(const frames::FullFrame& f, Millis now);

  // Looks up the call by the peer's source call number.
  MediaReceiver::Received receive_media(const frames::MediaFrame& frame);

  IaxCall& call(std::uint16_t local_call);
  const IaxCall& call(std::uint16_t local_call) const;
  void release(std::uint16_t local_call);
  const std::map<std::uint16_t, IaxCall>& calls() const { return calls_; }

  void set_observer(TransitionObserver obs) { observer_ = std::move(obs); }

 private:
  IaxCall& create_call(std::uint16_t n);

  std::string id_;
  CallConfig config_;
  CallNumberAllocator allocator_;
  std::map<std::uint16_t, IaxCall> calls_;
  TransitionObserver observer_;
};

}  // namespace voxbench::iax
