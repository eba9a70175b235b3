#pragma once

// Wire codecs for the four formats exchanged in the testbed: IAX full frames,
// IAX mini frames, RTP packets and RSW text signaling lines. All multi-byte
// integers are big-endian. Decoders are total: any input yields a value or a
// CodecError.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "voxbench/error.hpp"

namespace voxbench::frames {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline constexpr std::size_t kFullHeaderSize = 12;
inline constexpr std::size_t kMiniHeaderSize = 4;
inline constexpr std::size_t kRtpHeaderSize = 12;
inline constexpr std::uint16_t kMaxCallNumber = 0x7fff;
inline constexpr std::uint8_t kMaxSubclass = 0x7f;
inline constexpr std::uint8_t kRtpVersion = 2;

enum class CodecErrc {
  TooShort,
  NotFullFrame,
  NotMiniFrame,
  UnknownSignal,
  UnknownFrameType,
  BadVersion,
  UnknownVerb,
  Malformed,
  FieldRange,
};

using CodecError = Error<CodecErrc>;

std::string_view to_string(CodecErrc code);

// IAX frame types; values follow the public IAX numbering.
enum class FrameType : std::uint8_t { Voice = 0x02, Control = 0x06 };

// Call-control signals carried in the subclass of Control full frames.
enum class Signal : std::uint8_t {
  New = 1,
  Ringing = 3,
  Answer = 4,
  Hangup = 5,
  Reject = 6,
  Accept = 7,
  AuthReq = 8,
  AuthRep = 9,
  Proceeding = 15,
};

inline constexpr std::array<Signal, 9> kAllSignals = {
    Signal::New,    Signal::AuthReq, Signal::AuthRep, Signal::Accept,     Signal::Reject,
    Signal::Ringing, Signal::Answer, Signal::Hangup,  Signal::Proceeding,
};

std::string_view to_string(Signal s);
std::optional<Signal> signal_from_code(std::uint8_t code);

struct FullFrame {
  std::uint16_t source_call = 0;
  bool retransmit = false;
  std::uint16_t dest_call = 0;
  std::uint32_t timestamp = 0;
  std::uint8_t oseqno = 0;
  std::uint8_t iseqno = 0;
  FrameType frame_type = FrameType::Control;
  std::uint8_t subclass = 0;
  Bytes payload;

  // The control signal, or nullopt for voice frames.
  std::optional<Signal> signal() const;

  bool operator==(const FullFrame&) const = default;
};

struct MiniFrame {
  std::uint16_t source_call = 0;
  std::uint16_t ts16 = 0;
  Bytes payload;

  bool operator==(const MiniFrame&) const = default;
};

// IAX media travels either as a full voice frame (timestamp anchor) or a mini frame.
using MediaFrame = std::variant<FullFrame, MiniFrame>;

struct RtpPacket {
  bool marker = false;
  std::uint8_t payload_type = 0;
  std::uint16_t seq = 0;
  std::uint32_t timestamp = 0;
  std::uint32_t ssrc = 0;
  Bytes payload;

  bool operator==(const RtpPacket&) const = default;
};

enum class RswVerb { Create, Join, Leave, End, Ack, Reject, Busy };

inline constexpr std::array<RswVerb, 7> kAllVerbs = {
    RswVerb::Create, RswVerb::Join, RswVerb::Leave, RswVerb::End,
    RswVerb::Ack,    RswVerb::Reject, RswVerb::Busy,
};

std::string_view to_string(RswVerb v);
std::optional<RswVerb> verb_from_string(std::string_view s);

struct RswMessage {
  RswVerb verb = RswVerb::Ack;
  std::uint32_t conf_id = 0;
  std::string from;
  std::string to;
  std::string body;  // empty means absent

  bool operator==(const RswMessage&) const = default;
};

Bytes encode_full(const FullFrame& f);
FullFrame decode_full(ByteView b);

Bytes encode_mini(const MiniFrame& m);
MiniFrame decode_mini(ByteView b);

Bytes encode_rtp(const RtpPacket& p);
RtpPacket decode_rtp(ByteView b);

std::string encode_rsw(const RswMessage& m);
RswMessage decode_rsw(std::string_view line);
RswMessage decode_rsw(ByteView b);

// The F bit: true for full frames, false for mini frames. Empty input is neither.
std::optional<bool> is_full_frame(ByteView b);

Bytes encode_media(const MediaFrame& f);
// Dispatches on the F bit. Full frames must be Voice.
MediaFrame decode_media(ByteView b);

}  // namespace voxbench::frames
