#pragma once

// RSW conference control: a chairman creates a conference through the server,
// the server relays invitations and keeps the membership ledger, and only the
// chairman may end it. Media is carried in RTP.
//
// CREATE body grammar (semicolon separated key=value):
//   codec=<name>;frame_ms=<int>[;invite=<id>,<id>...][;observe=<id>,...]
// The codec/frame_ms part is the media description. Invitations relayed by the
// server carry the media description plus ";role=participant|observer".

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "voxbench/error.hpp"
#include "voxbench/frames.hpp"
#include "voxbench/trace.hpp"

namespace voxbench::rsw {

enum class RswErrc {
  EmptyInviteeList,
  EmptyMediaDescription,
  NotChairman,
  UnknownConference,
  NotInvited,
  NotMember,
  ConferenceExists,
  ConferenceEnded,
  UnexpectedVerb,
  ObserverCannotSend,
  ConferenceNotActive,
  Malformed,
};

using RswError = Error<RswErrc>;

inline constexpr std::string_view kServerId = "server";

enum class Role { Chairman, Participant, PassiveObserver };
enum class MemberStatus { Invited, Joined, Left, Rejected, Busy };
enum class Phase { Creating, Active, Ended };

std::string_view to_string(Role r);
std::string_view to_string(MemberStatus s);
std::string_view to_string(Phase p);

struct Member {
  Role role = Role::Participant;
  MemberStatus status = MemberStatus::Invited;

  bool operator==(const Member&) const = default;
};

struct ConferenceState {
  std::uint32_t conf_id = 0;
  std::string chairman;
  std::map<std::string, Member> members;
  std::string media_desc;
  Phase phase = Phase::Creating;

  std::size_t count(MemberStatus s) const;
};

struct Invitee {
  std::string id;
  Role role = Role::Participant;
};

struct CreateBody {
  std::string media_desc;
  std::vector<Invitee> invitees;
};

std::string format_create_body(std::string_view media_desc, std::span<const Invitee> invitees);
CreateBody parse_create_body(std::string_view body);

// Checks "codec=<name>;frame_ms=<int>" and returns frame_ms.
int parse_frame_ms(std::string_view media_desc);

struct Created {
  frames::RswMessage create;
  ConferenceState state;
};

// The chairman's opening move: CREATE addressed to the server. The chairman is
// recorded as Joined from the start.
Created create_conference(std::uint32_t conf_id, std::string_view chair,
                          std::span<const Invitee> invitees, std::string_view media_desc);
Created create_conference(std::uint32_t conf_id, std::string_view chair,
                          std::span<const std::string> invitees, std::string_view media_desc);

// Routing and bookkeeping for a single conference.
class RswServer {
 public:
  explicit RswServer(std::string id = std::string(kServerId)) : id_(std::move(id)) {}

  std::vector<frames::RswMessage> route(const frames::RswMessage& msg, Millis now = 0);

  const std::optional<ConferenceState>& conference() const { return conf_; }

  // Joined members other than `sender` that should receive a media packet.
  std::vector<std::string> media_targets(std::string_view sender) const;

  void set_observer(TransitionObserver obs) { observer_ = std::move(obs); }

 private:
  void set_status(const std::string& who, MemberStatus next, std::string_view event, Millis now);
  void set_phase(Phase next, std::string_view event, Millis now);

  std::string id_;
  std::optional<ConferenceState> conf_;
  TransitionObserver observer_;
};

enum class InviteResponse { Accept, Reject, Busy };

struct RtpTxState {
  std::uint16_t seq = 0;
  std::uint32_t timestamp = 0;
  std::uint32_t ssrc = 0;
  std::uint32_t samples_per_frame = 160;
  std::uint8_t payload_type = 0;
};

// Initial seq, timestamp and ssrc drawn from the generator.
RtpTxState make_rtp_tx(std::mt19937_64& rng, std::uint32_t samples_per_frame,
                       std::uint8_t payload_type = 0);

// Packetizes one frame and advances seq by one and timestamp by one frame.
frames::RtpPacket send_media_rtp(RtpTxState& tx, Role role, Phase phase,
                                 std::span<const std::uint8_t> payload);

// An endpoint's local view of one conference it chairs or was invited to.
class RswEndpoint {
 public:
  explicit RswEndpoint(std::string id, std::uint64_t rng_seed = 1);

  const std::string& id() const { return id_; }

  frames::RswMessage create_conference(std::uint32_t conf_id, std::span<const Invitee> invitees,
                                       std::string_view media_desc);

  // Consumes the pending invitation.
  frames::RswMessage respond(std::uint32_t conf_id, InviteResponse policy);

  // Applies server traffic (invitations, ACKs, member notifications, END).
  void on_message(const frames::RswMessage& msg);

  frames::RswMessage leave();
  frames::RswMessage end();

  frames::RtpPacket send_media(std::span<const std::uint8_t> payload);

  const std::optional<ConferenceState>& conference() const { return conf_; }
  std::optional<Role> role() const { return role_; }
  bool has_invitation(std::uint32_t conf_id) const { return invitations_.contains(conf_id); }

 private:
  std::string id_;
  std::mt19937_64 rng_;
  std::optional<ConferenceState> conf_;
  std::optional<Role> role_;
  std::map<std::uint32_t, frames::RswMessage> invitations_;
  std::optional<RtpTxState> tx_;
};

}  // namespace voxbench::rsw
