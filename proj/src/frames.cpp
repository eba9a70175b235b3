#include "voxbench/frames.hpp"

#include <algorithm>
#include <charconv>

namespace voxbench::frames {
namespace {

void put16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put32(Bytes& out, std::uint32_t v) {
  put16(out, static_cast<std::uint16_t>(v >> 16));
  put16(out, static_cast<std::uint16_t>(v));
}

std::uint16_t get16(ByteView b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

std::uint32_t get32(ByteView b, std::size_t at) {
  return (static_cast<std::uint32_t>(get16(b, at)) << 16) | get16(b, at + 2);
}

[[noreturn]] void fail(CodecErrc code, const std::string& what) { throw CodecError(code, what); }

void check_call_number(std::uint16_t v, const char* field) {
  if (v > kMaxCallNumber) {
    fail(CodecErrc::FieldRange, std::string(field) + " " + std::to_string(v) + " exceeds 32767");
  }
}

bool is_token(std::string_view s) {
  return !s.empty() && std::none_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\n' || c == '\r' || c == '\t';
  });
}

}  // namespace

std::string_view to_string(CodecErrc code) {
  switch (code) {
    case CodecErrc::TooShort: return "TooShort";
    case CodecErrc::NotFullFrame: return "NotFullFrame";
    case CodecErrc::NotMiniFrame: return "NotMiniFrame";
    case CodecErrc::UnknownSignal: return "UnknownSignal";
    case CodecErrc::UnknownFrameType: return "UnknownFrameType";
    case CodecErrc::BadVersion: return "BadVersion";
    case CodecErrc::UnknownVerb: return "UnknownVerb";
    case CodecErrc::Malformed: return "Malformed";
    case CodecErrc::FieldRange: return "FieldRange";
  }
  return "?";
}

std::string_view to_string(Signal s) {
  switch (s) {
    case Signal::New: return "NEW";
    case Signal::Ringing: return "RINGING";
    case Signal::Answer: return "ANSWER";
    case Signal::Hangup: return "HANGUP";
    case Signal::Reject: return "REJECT";
    case Signal::Accept: return "ACCEPT";
    case Signal::AuthReq: return "AUTHREQ";
    case Signal::AuthRep: return "AUTHREP";
    case Signal::Proceeding: return "PROCEEDING";
  }
  return "?";
}

std::optional<Signal> signal_from_code(std::uint8_t code) {
  for (Signal s : kAllSignals) {
    if (static_cast<std::uint8_t>(s) == code) return s;
  }
  return std::nullopt;
}

std::optional<Signal> FullFrame::signal() const {
  if (frame_type != FrameType::Control) return std::nullopt;
  return signal_from_code(subclass);
}

std::string_view to_string(RswVerb v) {
  switch (v) {
    case RswVerb::Create: return "CREATE";
    case RswVerb::Join: return "JOIN";
    case RswVerb::Leave: return "LEAVE";
    case RswVerb::End: return "END";
    case RswVerb::Ack: return "ACK";
    case RswVerb::Reject: return "REJECT";
    case RswVerb::Busy: return "BUSY";
  }
  return "?";
}

std::optional<RswVerb> verb_from_string(std::string_view s) {
  for (RswVerb v : kAllVerbs) {
    if (to_string(v) == s) return v;
  }
  return std::nullopt;
}

// [F=1|source_call:15][R|dest_call:15][timestamp:32][oseqno][iseqno][type][subclass]
Bytes encode_full(const FullFrame& f) {
  check_call_number(f.source_call, "source_call");
  check_call_number(f.dest_call, "dest_call");
  if (f.subclass > kMaxSubclass) {
    fail(CodecErrc::FieldRange, "subclass " + std::to_string(f.subclass) + " exceeds 127");
  }
  if (f.frame_type == FrameType::Control && !signal_from_code(f.subclass)) {
    fail(CodecErrc::FieldRange, "subclass " + std::to_string(f.subclass) + " is not a signal code");
  }
  Bytes out;
  out.reserve(kFullHeaderSize + f.payload.size());
  put16(out, static_cast<std::uint16_t>(0x8000 | f.source_call));
  put16(out, static_cast<std::uint16_t>((f.retransmit ? 0x8000 : 0) | f.dest_call));
  put32(out, f.timestamp);
  out.push_back(f.oseqno);
  out.push_back(f.iseqno);
  out.push_back(static_cast<std::uint8_t>(f.frame_type));
  out.push_back(f.subclass);
  out.insert(out.end(), f.payload.begin(), f.payload.end());
  return out;
}

FullFrame decode_full(ByteView b) {
  if (b.size() < kFullHeaderSize) {
    fail(CodecErrc::TooShort, "full frame needs 12 bytes, got " + std::to_string(b.size()));
  }
  if ((b[0] & 0x80) == 0) fail(CodecErrc::NotFullFrame, "F bit is 0");

  FullFrame f;
  f.source_call = get16(b, 0) & 0x7fff;
  const std::uint16_t word = get16(b, 2);
  f.retransmit = (word & 0x8000) != 0;
  f.dest_call = word & 0x7fff;
  f.timestamp = get32(b, 4);
  f.oseqno = b[8];
  f.iseqno = b[9];
  switch (b[10]) {
    case static_cast<std::uint8_t>(FrameType::Voice): f.frame_type = FrameType::Voice; break;
    case static_cast<std::uint8_t>(FrameType::Control): f.frame_type = FrameType::Control; break;
    default: fail(CodecErrc::UnknownFrameType, "frame type " + std::to_string(b[10]));
  }
  f.subclass = b[11];
  if (f.frame_type == FrameType::Control && !signal_from_code(f.subclass)) {
    fail(CodecErrc::UnknownSignal, "subclass " + std::to_string(f.subclass));
  }
  if (f.subclass > kMaxSubclass) {
    fail(CodecErrc::Malformed, "voice subclass " + std::to_string(f.subclass) + " exceeds 127");
  }
  f.payload.assign(b.begin() + kFullHeaderSize, b.end());
  return f;
}

// [F=0|source_call:15][ts16:16]
Bytes encode_mini(const MiniFrame& m) {
  check_call_number(m.source_call, "source_call");
  Bytes out;
  out.reserve(kMiniHeaderSize + m.payload.size());
  put16(out, m.source_call);
  put16(out, m.ts16);
  out.insert(out.end(), m.payload.begin(), m.payload.end());
  return out;
}

MiniFrame decode_mini(ByteView b) {
  if (b.size() < kMiniHeaderSize) {
    fail(CodecErrc::TooShort, "mini frame needs 4 bytes, got " + std::to_string(b.size()));
  }
  if (b[0] & 0x80) fail(CodecErrc::NotMiniFrame, "F bit is 1");
  MiniFrame m;
  m.source_call = get16(b, 0);
  m.ts16 = get16(b, 2);
  m.payload.assign(b.begin() + kMiniHeaderSize, b.end());
  return m;
}

// [V=2|P=0|X=0|CC=0][M|PT:7][seq:16][timestamp:32][ssrc:32]
Bytes encode_rtp(const RtpPacket& p) {
  if (p.payload_type > 0x7f) {
    fail(CodecErrc::FieldRange, "payload_type " + std::to_string(p.payload_type) + " exceeds 127");
  }
  Bytes out;
  out.reserve(kRtpHeaderSize + p.payload.size());
  out.push_back(kRtpVersion << 6);
  out.push_back(static_cast<std::uint8_t>((p.marker ? 0x80 : 0) | p.payload_type));
  put16(out, p.seq);
  put32(out, p.timestamp);
  put32(out, p.ssrc);
  out.insert(out.end(), p.payload.begin(), p.payload.end());
  return out;
}

RtpPacket decode_rtp(ByteView b) {
  if (b.size() < kRtpHeaderSize) {
    fail(CodecErrc::TooShort, "RTP header needs 12 bytes, got " + std::to_string(b.size()));
  }
  if ((b[0] >> 6) != kRtpVersion) {
    fail(CodecErrc::BadVersion, "RTP version " + std::to_string(b[0] >> 6));
  }
  if (b[0] & 0x3f) fail(CodecErrc::Malformed, "padding, extension and CSRC are unsupported");
  RtpPacket p;
  p.marker = (b[1] & 0x80) != 0;
  p.payload_type = b[1] & 0x7f;
  p.seq = get16(b, 2);
  p.timestamp = get32(b, 4);
  p.ssrc = get32(b, 8);
  p.payload.assign(b.begin() + kRtpHeaderSize, b.end());
  return p;
}

// RSW/1 <VERB> <conf_id> <from> <to>[ <body>]\n
std::string encode_rsw(const RswMessage& m) {
  if (!is_token(m.from)) fail(CodecErrc::FieldRange, "from must be a non-empty token");
  if (!is_token(m.to)) fail(CodecErrc::FieldRange, "to must be a non-empty token");
  if (m.body.find_first_of("\r\n") != std::string::npos) {
    fail(CodecErrc::FieldRange, "body must not contain line breaks");
  }
  if (m.verb == RswVerb::Create && m.body.empty()) {
    fail(CodecErrc::FieldRange, "CREATE requires a media description body");
  }
  if (m.verb == RswVerb::End && !m.body.empty()) fail(CodecErrc::FieldRange, "END carries no body");

  std::string out = "RSW/1 ";
  out += to_string(m.verb);
  out += ' ';
  out += std::to_string(m.conf_id);
  out += ' ';
  out += m.from;
  out += ' ';
  out += m.to;
  if (!m.body.empty()) {
    out += ' ';
    out += m.body;
  }
  out += '\n';
  return out;
}

RswMessage decode_rsw(std::string_view line) {
  constexpr std::string_view kMagic = "RSW/1 ";
  if (line.empty() || line.back() != '\n') fail(CodecErrc::Malformed, "missing line terminator");
  line.remove_suffix(1);
  if (line.find_first_of("\r\n") != std::string_view::npos) {
    fail(CodecErrc::Malformed, "embedded line break");
  }
  if (!line.starts_with(kMagic)) fail(CodecErrc::Malformed, "missing RSW/1 prefix");
  line.remove_prefix(kMagic.size());

  auto next_token = [&line](const char* field) {
    const auto end = line.find(' ');
    std::string_view tok = line.substr(0, end);
    if (tok.empty()) fail(CodecErrc::Malformed, std::string("missing ") + field);
    line = end == std::string_view::npos ? std::string_view{} : line.substr(end + 1);
    return tok;
  };

  RswMessage m;
  const std::string_view verb = next_token("verb");
  const auto v = verb_from_string(verb);
  if (!v) fail(CodecErrc::UnknownVerb, "unknown verb " + std::string(verb));
  m.verb = *v;

  const std::string_view id = next_token("conf_id");
  const auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), m.conf_id);
  if (ec != std::errc{} || ptr != id.data() + id.size()) {
    fail(CodecErrc::Malformed, "bad conf_id " + std::string(id));
  }
  // Only a tail without the separator can be exhausted here; a trailing space
  // yields an empty body, which is rejected below.
  const bool had_body_separator = [&] {
    m.from = std::string(next_token("from"));
    const auto end = line.find(' ');
    m.to = std::string(line.substr(0, end));
    if (m.to.empty()) fail(CodecErrc::Malformed, "missing to");
    if (end == std::string_view::npos) return false;
    m.body = std::string(line.substr(end + 1));
    return true;
  }();
  if (had_body_separator && m.body.empty()) fail(CodecErrc::Malformed, "empty body after separator");
  if (m.verb == RswVerb::Create && m.body.empty()) fail(CodecErrc::Malformed, "CREATE without body");
  if (m.verb == RswVerb::End && !m.body.empty()) fail(CodecErrc::Malformed, "END with body");
  return m;
}

RswMessage decode_rsw(ByteView b) {
  return decode_rsw(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

std::optional<bool> is_full_frame(ByteView b) {
  if (b.empty()) return std::nullopt;
  return (b[0] & 0x80) != 0;
}

Bytes encode_media(const MediaFrame& f) {
  return std::visit(
      [](const auto& frame) -> Bytes {
        if constexpr (std::is_same_v<std::decay_t<decltype(frame)>, FullFrame>) {
          return encode_full(frame);
        } else {
          return encode_mini(frame);
        }
      },
      f);
}

MediaFrame decode_media(ByteView b) {
  const auto full = is_full_frame(b);
  if (!full) fail(CodecErrc::TooShort, "empty media packet");
  if (!*full) return decode_mini(b);
  FullFrame f = decode_full(b);
  if (f.frame_type != FrameType::Voice) fail(CodecErrc::Malformed, "media full frame is not Voice");
  return f;
}

}  // namespace voxbench::frames
