#include "voxbench/rsw_endpoint.hpp"

#include <algorithm>
#include <charconv>

namespace voxbench::rsw {

using frames::RswMessage;
using frames::RswVerb;

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

bool valid_id(std::string_view id) {
  return !id.empty() && std::none_of(id.begin(), id.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == ',' || c == ';' || c == '=';
  });
}

void check_media_desc(std::string_view media_desc) {
  if (media_desc.empty()) throw RswError(RswErrc::EmptyMediaDescription, "empty media description");
  parse_frame_ms(media_desc);
}

std::string_view role_token(Role r) { return r == Role::PassiveObserver ? "observer" : "participant"; }

}  // namespace

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Chairman: return "Chairman";
    case Role::Participant: return "Participant";
    case Role::PassiveObserver: return "PassiveObserver";
  }
  return "?";
}

std::string_view to_string(MemberStatus s) {
  switch (s) {
    case MemberStatus::Invited: return "Invited";
    case MemberStatus::Joined: return "Joined";
    case MemberStatus::Left: return "Left";
    case MemberStatus::Rejected: return "Rejected";
    case MemberStatus::Busy: return "Busy";
  }
  return "?";
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Creating: return "Creating";
    case Phase::Active: return "Active";
    case Phase::Ended: return "Ended";
  }
  return "?";
}

std::size_t ConferenceState::count(MemberStatus s) const {
  return static_cast<std::size_t>(
      std::count_if(members.begin(), members.end(), [s](const auto& m) { return m.second.status == s; }));
}

int parse_frame_ms(std::string_view media_desc) {
  std::optional<int> frame_ms;
  bool codec = false;
  for (auto item : split(media_desc, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) throw RswError(RswErrc::Malformed, "media item without '='");
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    if (key == "codec") {
      codec = !value.empty();
    } else if (key == "frame_ms") {
      int v = 0;
      const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc{} || ptr != value.data() + value.size() || v <= 0) {
        throw RswError(RswErrc::Malformed, "bad frame_ms '" + std::string(value) + "'");
      }
      frame_ms = v;
    }
  }
  if (!codec || !frame_ms) throw RswError(RswErrc::Malformed, "media description needs codec and frame_ms");
  return *frame_ms;
}

std::string format_create_body(std::string_view media_desc, std::span<const Invitee> invitees) {
  std::string body(media_desc);
  for (Role r : {Role::Participant, Role::PassiveObserver}) {
    std::string list;
    for (const auto& inv : invitees) {
      if (inv.role != r) continue;
      if (!list.empty()) list += ',';
      list += inv.id;
    }
    if (!list.empty()) body += (r == Role::Participant ? ";invite=" : ";observe=") + list;
  }
  return body;
}

CreateBody parse_create_body(std::string_view body) {
  CreateBody out;
  for (auto item : split(body, ';')) {
    const auto eq = item.find('=');
    const auto key = item.substr(0, eq);
    if (eq != std::string_view::npos && (key == "invite" || key == "observe")) {
      const Role role = key == "invite" ? Role::Participant : Role::PassiveObserver;
      for (auto id : split(item.substr(eq + 1), ',')) {
        if (!valid_id(id)) throw RswError(RswErrc::Malformed, "bad invitee id '" + std::string(id) + "'");
        out.invitees.push_back(Invitee{std::string(id), role});
      }
      continue;
    }
    if (!out.media_desc.empty()) out.media_desc += ';';
    out.media_desc += item;
  }
  return out;
}

Created create_conference(std::uint32_t conf_id, std::string_view chair,
                          std::span<const Invitee> invitees, std::string_view media_desc) {
  if (invitees.empty()) throw RswError(RswErrc::EmptyInviteeList, "CREATE needs at least one invitee");
  check_media_desc(media_desc);
  if (!valid_id(chair)) throw RswError(RswErrc::Malformed, "bad chairman id");

  Created out;
  out.state.conf_id = conf_id;
  out.state.chairman = std::string(chair);
  out.state.media_desc = std::string(media_desc);
  out.state.members[out.state.chairman] = Member{Role::Chairman, MemberStatus::Joined};
  for (const auto& inv : invitees) {
    if (!valid_id(inv.id) || inv.role == Role::Chairman || out.state.members.contains(inv.id)) {
      throw RswError(RswErrc::Malformed, "invalid or duplicate invitee '" + inv.id + "'");
    }
    out.state.members[inv.id] = Member{inv.role, MemberStatus::Invited};
  }
  out.create = RswMessage{RswVerb::Create, conf_id, std::string(chair), std::string(kServerId),
                          format_create_body(media_desc, invitees)};
  return out;
}

Created create_conference(std::uint32_t conf_id, std::string_view chair,
                          std::span<const std::string> invitees, std::string_view media_desc) {
  std::vector<Invitee> list;
  for (const auto& id : invitees) list.push_back(Invitee{id, Role::Participant});
  return create_conference(conf_id, chair, list, media_desc);
}

void RswServer::set_status(const std::string& who, MemberStatus next, std::string_view event, Millis now) {
  Member& m = conf_->members.at(who);
  const MemberStatus before = m.status;
  m.status = next;
  if (observer_) {
    observer_(StateChange{now, id_ + "/" + who, std::string(event), std::string(to_string(before)),
                          std::string(to_string(next))});
  }
}

void RswServer::set_phase(Phase next, std::string_view event, Millis now) {
  const Phase before = conf_->phase;
  conf_->phase = next;
  if (observer_ && before != next) {
    observer_(StateChange{now, id_ + "/conf" + std::to_string(conf_->conf_id), std::string(event),
                          std::string(to_string(before)), std::string(to_string(next))});
  }
}

std::vector<RswMessage> RswServer::route(const RswMessage& msg, Millis now) {
  const std::string event = "recv " + std::string(frames::to_string(msg.verb));
  std::vector<RswMessage> out;

  if (msg.verb == RswVerb::Create) {
    if (conf_) throw RswError(RswErrc::ConferenceExists, "server already hosts a conference");
    const CreateBody body = parse_create_body(msg.body);
    auto created = create_conference(msg.conf_id, msg.from, body.invitees, body.media_desc);
    conf_ = std::move(created.state);
    if (observer_) {
      observer_(StateChange{now, id_ + "/conf" + std::to_string(msg.conf_id), event, "None",
                            std::string(to_string(conf_->phase))});
    }
    for (const auto& inv : body.invitees) {
      out.push_back(RswMessage{RswVerb::Create, msg.conf_id, msg.from, inv.id,
                               conf_->media_desc + ";role=" + std::string(role_token(inv.role))});
    }
    out.push_back(RswMessage{RswVerb::Ack, msg.conf_id, id_, msg.from, "CREATE"});
    return out;
  }

  if (!conf_ || conf_->conf_id != msg.conf_id) {
    throw RswError(RswErrc::UnknownConference, "no conference " + std::to_string(msg.conf_id));
  }
  if (conf_->phase == Phase::Ended) {
    throw RswError(RswErrc::ConferenceEnded, "conference " + std::to_string(msg.conf_id) + " has ended");
  }

  const auto it = conf_->members.find(msg.from);
  switch (msg.verb) {
    case RswVerb::Join:
    case RswVerb::Reject:
    case RswVerb::Busy: {
      if (it == conf_->members.end() || it->second.status != MemberStatus::Invited) {
        throw RswError(RswErrc::NotInvited, msg.from + " holds no pending invitation");
      }
      const MemberStatus next = msg.verb == RswVerb::Join     ? MemberStatus::Joined
                                : msg.verb == RswVerb::Reject ? MemberStatus::Rejected
                                                              : MemberStatus::Busy;
      set_status(msg.from, next, event, now);
      if (next == MemberStatus::Joined && conf_->phase == Phase::Creating) set_phase(Phase::Active, event, now);
      out.push_back(RswMessage{RswVerb::Ack, msg.conf_id, id_, msg.from, std::string(frames::to_string(msg.verb))});
      out.push_back(RswMessage{msg.verb, msg.conf_id, msg.from, conf_->chairman, {}});
      return out;
    }
    case RswVerb::Leave: {
      if (msg.from == conf_->chairman) {
        throw RswError(RswErrc::UnexpectedVerb, "the chairman ends the conference instead of leaving");
      }
      if (it == conf_->members.end() || it->second.status != MemberStatus::Joined) {
        throw RswError(RswErrc::NotMember, msg.from + " is not a joined member");
      }
      set_status(msg.from, MemberStatus::Left, event, now);
      out.push_back(RswMessage{RswVerb::Ack, msg.conf_id, id_, msg.from, "LEAVE"});
      out.push_back(RswMessage{RswVerb::Leave, msg.conf_id, msg.from, conf_->chairman, {}});
      return out;
    }
    case RswVerb::End: {
      if (msg.from != conf_->chairman) {
        throw RswError(RswErrc::NotChairman, msg.from + " is not the chairman");
      }
      set_phase(Phase::Ended, event, now);
      for (const auto& [id, m] : conf_->members) {
        if (id != conf_->chairman && m.status == MemberStatus::Joined) {
          out.push_back(RswMessage{RswVerb::End, msg.conf_id, conf_->chairman, id, {}});
        }
      }
      out.push_back(RswMessage{RswVerb::Ack, msg.conf_id, id_, msg.from, "END"});
      return out;
    }
    case RswVerb::Ack:
    case RswVerb::Create:
      break;
  }
  throw RswError(RswErrc::UnexpectedVerb, "server does not accept " + std::string(frames::to_string(msg.verb)));
}

std::vector<std::string> RswServer::media_targets(std::string_view sender) const {
  std::vector<std::string> out;
  if (!conf_ || conf_->phase != Phase::Active) return out;
  for (const auto& [id, m] : conf_->members) {
    if (id != sender && m.status == MemberStatus::Joined) out.push_back(id);
  }
  return out;
}

RtpTxState make_rtp_tx(std::mt19937_64& rng, std::uint32_t samples_per_frame, std::uint8_t payload_type) {
  RtpTxState tx;
  tx.seq = static_cast<std::uint16_t>(rng());
  tx.timestamp = static_cast<std::uint32_t>(rng());
  tx.ssrc = static_cast<std::uint32_t>(rng());
  tx.samples_per_frame = samples_per_frame;
  tx.payload_type = payload_type;
  return tx;
}

frames::RtpPacket send_media_rtp(RtpTxState& tx, Role role, Phase phase, std::span<const std::uint8_t> payload) {
  if (role == Role::PassiveObserver) throw RswError(RswErrc::ObserverCannotSend, "passive observers never send media");
  if (phase != Phase::Active) {
    throw RswError(RswErrc::ConferenceNotActive, "conference is " + std::string(to_string(phase)));
  }
  frames::RtpPacket p;
  p.payload_type = tx.payload_type;
  p.seq = tx.seq;
  p.timestamp = tx.timestamp;
  p.ssrc = tx.ssrc;
  p.payload.assign(payload.begin(), payload.end());
  ++tx.seq;
  tx.timestamp += tx.samples_per_frame;
  return p;
}

RswEndpoint::RswEndpoint(std::string id, std::uint64_t rng_seed) : id_(std::move(id)), rng_(rng_seed) {}

RswMessage RswEndpoint::create_conference(std::uint32_t conf_id, std::span<const Invitee> invitees,
                                          std::string_view media_desc) {
  auto created = rsw::create_conference(conf_id, id_, invitees, media_desc);
  conf_ = std::move(created.state);
  role_ = Role::Chairman;
  tx_.reset();
  return created.create;
}

RswMessage RswEndpoint::respond(std::uint32_t conf_id, InviteResponse policy) {
  const auto it = invitations_.find(conf_id);
  if (it == invitations_.end()) {
    throw RswError(RswErrc::NotInvited, id_ + " holds no invitation for " + std::to_string(conf_id));
  }
  const RswMessage invite = it->second;
  invitations_.erase(it);

  const RswVerb verb = policy == InviteResponse::Accept   ? RswVerb::Join
                       : policy == InviteResponse::Reject ? RswVerb::Reject
                                                          : RswVerb::Busy;
  if (verb == RswVerb::Join) {
    ConferenceState view;
    view.conf_id = conf_id;
    view.chairman = invite.from;
    const auto role_pos = invite.body.rfind(";role=");
    view.media_desc = invite.body.substr(0, role_pos);
    role_ = role_pos != std::string::npos && invite.body.substr(role_pos + 6) == "observer"
                ? Role::PassiveObserver
                : Role::Participant;
    view.members[invite.from] = Member{Role::Chairman, MemberStatus::Joined};
    view.members[id_] = Member{*role_, MemberStatus::Invited};
    conf_ = std::move(view);
    tx_.reset();
  }
  return RswMessage{verb, conf_id, id_, std::string(kServerId), {}};
}

void RswEndpoint::on_message(const RswMessage& msg) {
  if (msg.to != id_) return;
  if (msg.verb == RswVerb::Create) {
    invitations_[msg.conf_id] = msg;
    return;
  }
  if (!conf_ || conf_->conf_id != msg.conf_id) return;

  auto mark = [this](const std::string& who, MemberStatus s) {
    auto& m = conf_->members[who];
    m.status = s;
  };
  switch (msg.verb) {
    case RswVerb::Ack:
      if (msg.body == "JOIN") {
        mark(id_, MemberStatus::Joined);
        conf_->phase = Phase::Active;
      } else if (msg.body == "LEAVE") {
        mark(id_, MemberStatus::Left);
      } else if (msg.body == "END") {
        conf_->phase = Phase::Ended;
      }
      break;
    case RswVerb::Join:
      mark(msg.from, MemberStatus::Joined);
      if (conf_->phase == Phase::Creating) conf_->phase = Phase::Active;
      break;
    case RswVerb::Reject: mark(msg.from, MemberStatus::Rejected); break;
    case RswVerb::Busy: mark(msg.from, MemberStatus::Busy); break;
    case RswVerb::Leave: mark(msg.from, MemberStatus::Left); break;
    case RswVerb::End: conf_->phase = Phase::Ended; break;
    case RswVerb::Create: break;
  }
}

RswMessage RswEndpoint::leave() {
  if (!conf_) throw RswError(RswErrc::NotMember, id_ + " is in no conference");
  return RswMessage{RswVerb::Leave, conf_->conf_id, id_, std::string(kServerId), {}};
}

RswMessage RswEndpoint::end() {
  if (!conf_) throw RswError(RswErrc::NotMember, id_ + " is in no conference");
  return RswMessage{RswVerb::End, conf_->conf_id, id_, std::string(kServerId), {}};
}

frames::RtpPacket RswEndpoint::send_media(std::span<const std::uint8_t> payload) {
  if (!conf_ || !role_) throw RswError(RswErrc::ConferenceNotActive, id_ + " is in no conference");
  if (!tx_) {
    // 8 kHz sample clock.
    const auto frame_ms = static_cast<std::uint32_t>(parse_frame_ms(conf_->media_desc));
    tx_ = make_rtp_tx(rng_, frame_ms * 8);
  }
  return send_media_rtp(*tx_, *role_, conf_->phase, payload);
}

}  // namespace voxbench::rsw
