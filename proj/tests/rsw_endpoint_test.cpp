#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>
#include <string>

#include "voxbench/rsw_endpoint.hpp"

using namespace voxbench::rsw;
using voxbench::frames::Bytes;
using voxbench::frames::RswMessage;
using voxbench::frames::RswVerb;

namespace {

const std::string kDesc = "codec=g711;frame_ms=20";

RswErrc error_code(auto&& fn) {
  try {
    fn();
  } catch (const RswError& e) {
    return e.code();
  }
  ADD_FAILURE() << "no RswError thrown";
  return RswErrc::Malformed;
}

RswMessage from(RswVerb v, const std::string& who, std::uint32_t conf = 7) {
  return RswMessage{v, conf, who, std::string(kServerId), {}};
}

}  // namespace

TEST(Create, ChairInvitesOne) {
  const std::vector<std::string> invitees = {"p1"};
  const auto c = create_conference(7, "c", std::span<const std::string>(invitees), kDesc);
  EXPECT_EQ(c.create.verb, RswVerb::Create);
  EXPECT_EQ(c.create.from, "c");
  EXPECT_EQ(c.create.to, kServerId);
  EXPECT_EQ(c.state.phase, Phase::Creating);
  EXPECT_EQ(c.state.members.at("p1"), (Member{Role::Participant, MemberStatus::Invited}));
  EXPECT_EQ(c.state.members.at("c"), (Member{Role::Chairman, MemberStatus::Joined}));
  EXPECT_EQ(voxbench::frames::decode_rsw(voxbench::frames::encode_rsw(c.create)), c.create);
  const auto body = parse_create_body(c.create.body);
  EXPECT_EQ(body.media_desc, kDesc);
  ASSERT_EQ(body.invitees.size(), 1u);
  EXPECT_EQ(body.invitees[0].id, "p1");
}

TEST(Create, Preconditions) {
  const std::vector<std::string> none;
  const std::vector<std::string> one = {"p1"};
  EXPECT_EQ(error_code([&] { create_conference(1, "c", std::span<const std::string>(none), kDesc); }),
            RswErrc::EmptyInviteeList);
  EXPECT_EQ(error_code([&] { create_conference(1, "c", std::span<const std::string>(one), ""); }),
            RswErrc::EmptyMediaDescription);
  EXPECT_EQ(parse_frame_ms(kDesc), 20);
  EXPECT_EQ(error_code([] { parse_frame_ms("codec=g711;frame_ms=0"); }), RswErrc::Malformed);
  EXPECT_EQ(error_code([] { parse_frame_ms("frame_ms=20"); }), RswErrc::Malformed);
}

TEST(CreateBody, RoundTrip) {
  const std::vector<Invitee> inv = {{"a", Role::Participant}, {"b", Role::PassiveObserver}, {"c", Role::Participant}};
  const auto body = parse_create_body(format_create_body(kDesc, inv));
  EXPECT_EQ(body.media_desc, kDesc);
  // Invitees come back grouped by role.
  std::map<std::string, Role> got;
  for (const auto& i : body.invitees) got[i.id] = i.role;
  EXPECT_EQ(got, (std::map<std::string, Role>{
                     {"a", Role::Participant}, {"b", Role::PassiveObserver}, {"c", Role::Participant}}));
}

TEST(Server, FanOutIsExactlyN) {
  for (int n = 1; n <= 40; ++n) {
    std::vector<Invitee> inv;
    for (int i = 0; i < n; ++i) inv.push_back({"m" + std::to_string(i), i % 3 ? Role::Participant : Role::PassiveObserver});
    const auto c = create_conference(3, "chair", inv, kDesc);
    RswServer server;
    const auto out = server.route(c.create);
    ASSERT_EQ(out.size(), static_cast<std::size_t>(n) + 1);
    std::set<std::string> targets;
    for (int i = 0; i < n; ++i) {
      EXPECT_EQ(out[i].verb, RswVerb::Create);
      EXPECT_EQ(out[i].from, "chair");
      targets.insert(out[i].to);
    }
    EXPECT_EQ(targets.size(), static_cast<std::size_t>(n));
    EXPECT_EQ(out.back().verb, RswVerb::Ack);
    EXPECT_EQ(out.back().to, "chair");
  }
}

TEST(Server, JoinLeaveEnd) {
  const std::vector<std::string> inv = {"p1", "p2"};
  RswServer server;
  server.route(create_conference(7, "c", std::span<const std::string>(inv), kDesc).create);

  auto out = server.route(from(RswVerb::Join, "p1"));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].verb, RswVerb::Ack);
  EXPECT_EQ(out[0].to, "p1");
  EXPECT_EQ(out[1].verb, RswVerb::Join);
  EXPECT_EQ(out[1].to, "c");
  EXPECT_EQ(server.conference()->members.at("p1").status, MemberStatus::Joined);
  EXPECT_EQ(server.conference()->phase, Phase::Active);

  EXPECT_EQ(error_code([&] { server.route(from(RswVerb::End, "p1")); }), RswErrc::NotChairman);
  EXPECT_EQ(server.conference()->phase, Phase::Active);
  EXPECT_EQ(error_code([&] { server.route(from(RswVerb::Join, "stranger")); }), RswErrc::NotInvited);
  EXPECT_EQ(error_code([&] { server.route(from(RswVerb::Join, "p1")); }), RswErrc::NotInvited);
  EXPECT_EQ(error_code([&] { server.route(from(RswVerb::Join, "p2", 8)); }), RswErrc::UnknownConference);

  server.route(from(RswVerb::Busy, "p2"));
  EXPECT_EQ(server.conference()->members.at("p2").status, MemberStatus::Busy);
  EXPECT_EQ(server.media_targets("c"), std::vector<std::string>{"p1"});

  server.route(from(RswVerb::Leave, "p1"));
  EXPECT_EQ(server.conference()->members.at("p1").status, MemberStatus::Left);
  EXPECT_EQ(server.conference()->phase, Phase::Active);
  EXPECT_EQ(error_code([&] { server.route(from(RswVerb::Leave, "p1")); }), RswErrc::NotMember);

  out = server.route(from(RswVerb::End, "c"));
  EXPECT_EQ(server.conference()->phase, Phase::Ended);
  EXPECT_EQ(out.back().verb, RswVerb::Ack);
  EXPECT_EQ(error_code([&] { server.route(from(RswVerb::Join, "p2")); }), RswErrc::ConferenceEnded);
}

TEST(Server, EndFansOutToJoinedMembers) {
  const std::vector<std::string> inv = {"p1", "p2", "p3"};
  RswServer server;
  server.route(create_conference(7, "c", std::span<const std::string>(inv), kDesc).create);
  server.route(from(RswVerb::Join, "p1"));
  server.route(from(RswVerb::Join, "p3"));
  const auto out = server.route(from(RswVerb::End, "c"));
  std::set<std::string> ends;
  for (const auto& m : out) {
    if (m.verb == RswVerb::End) ends.insert(m.to);
  }
  EXPECT_EQ(ends, (std::set<std::string>{"p1", "p3"}));
}

TEST(Endpoint, RespondConsumesInvitation) {
  RswEndpoint chair("c");
  RswEndpoint p1("p1");
  RswServer server;
  const std::vector<Invitee> inv = {{"p1", Role::Participant}};
  const auto out = server.route(chair.create_conference(7, inv, kDesc));
  for (const auto& m : out) {
    p1.on_message(m);
    chair.on_message(m);
  }
  ASSERT_TRUE(p1.has_invitation(7));
  const auto join = p1.respond(7, InviteResponse::Accept);
  EXPECT_EQ(join.verb, RswVerb::Join);
  EXPECT_EQ(error_code([&] { p1.respond(7, InviteResponse::Accept); }), RswErrc::NotInvited);
  for (const auto& m : server.route(join)) {
    p1.on_message(m);
    chair.on_message(m);
  }
  EXPECT_EQ(p1.conference()->phase, Phase::Active);
  EXPECT_EQ(chair.conference()->members.at("p1").status, MemberStatus::Joined);
  EXPECT_EQ(p1.role(), Role::Participant);
}

TEST(Endpoint, ResponsesMapToVerbs) {
  for (auto [policy, verb] : {std::pair{InviteResponse::Accept, RswVerb::Join},
                              std::pair{InviteResponse::Reject, RswVerb::Reject},
                              std::pair{InviteResponse::Busy, RswVerb::Busy}}) {
    RswEndpoint p("p");
    p.on_message(RswMessage{RswVerb::Create, 1, "c", "p", kDesc + ";role=participant"});
    EXPECT_EQ(p.respond(1, policy).verb, verb);
  }
}

TEST(Rtp, SequentialStream) {
  std::mt19937_64 rng(5);
  RtpTxState tx = make_rtp_tx(rng, 160);
  const std::uint16_t s0 = tx.seq;
  const std::uint32_t t0 = tx.timestamp;
  const Bytes p(160, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto pkt = send_media_rtp(tx, Role::Participant, Phase::Active, p);
    ASSERT_EQ(pkt.seq, static_cast<std::uint16_t>(s0 + i));
    ASSERT_EQ(pkt.timestamp, static_cast<std::uint32_t>(t0 + 160u * i));
  }
  std::mt19937_64 again(5);
  EXPECT_EQ(make_rtp_tx(again, 160).seq, s0);
}

TEST(Rtp, RolePolicy) {
  std::mt19937_64 rng(1);
  RtpTxState tx = make_rtp_tx(rng, 160);
  const Bytes p(10, 0);
  EXPECT_NO_THROW(send_media_rtp(tx, Role::Chairman, Phase::Active, p));
  EXPECT_NO_THROW(send_media_rtp(tx, Role::Participant, Phase::Active, p));
  EXPECT_EQ(error_code([&] { send_media_rtp(tx, Role::PassiveObserver, Phase::Active, p); }),
            RswErrc::ObserverCannotSend);
  EXPECT_EQ(error_code([&] { send_media_rtp(tx, Role::Participant, Phase::Creating, p); }),
            RswErrc::ConferenceNotActive);

  RswEndpoint obs("o");
  obs.on_message(RswMessage{RswVerb::Create, 1, "c", "o", kDesc + ";role=observer"});
  obs.respond(1, InviteResponse::Accept);
  obs.on_message(RswMessage{RswVerb::Ack, 1, "server", "o", "JOIN"});
  EXPECT_EQ(obs.role(), Role::PassiveObserver);
  EXPECT_EQ(error_code([&] { obs.send_media(p); }), RswErrc::ObserverCannotSend);
}

// Random role assignments and message interleavings: only the chairman's END
// ends the conference, and every member status moves along the lattice.
TEST(Properties, ChairmanOnlyEndAndStatusLattice) {
  std::mt19937_64 rng(31337);
  auto allowed = [](MemberStatus a, MemberStatus b) {
    if (a == b) return true;
    if (a == MemberStatus::Invited) {
      return b == MemberStatus::Joined || b == MemberStatus::Rejected || b == MemberStatus::Busy;
    }
    return a == MemberStatus::Joined && b == MemberStatus::Left;
  };
  const std::array verbs = {RswVerb::Join, RswVerb::Reject, RswVerb::Busy, RswVerb::Leave,
                            RswVerb::End,  RswVerb::Ack,    RswVerb::Create};
  std::size_t non_chair_ends = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    std::vector<Invitee> inv;
    for (int i = 0; i < n; ++i) inv.push_back({"m" + std::to_string(i), rng() % 3 ? Role::Participant : Role::PassiveObserver});
    const std::string chair = "chair";
    RswServer server;
    server.route(create_conference(9, chair, inv, kDesc).create);

    std::vector<std::string> people = {chair, "stranger"};
    for (const auto& i : inv) people.push_back(i.id);
    for (int step = 0; step < 40; ++step) {
      const auto before = *server.conference();
      const std::string who = people[rng() % people.size()];
      const RswVerb verb = verbs[rng() % verbs.size()];
      const std::uint32_t conf = rng() % 10 ? 9 : 10;
      RswMessage msg = from(verb, who, conf);
      if (verb == RswVerb::Create) msg.body = format_create_body(kDesc, inv);
      bool ok = true;
      try {
        server.route(msg);
      } catch (const RswError& e) {
        ok = false;
        if (verb == RswVerb::End && who != chair && conf == 9 && before.phase != Phase::Ended) {
          EXPECT_EQ(e.code(), RswErrc::NotChairman);
        }
      }
      const auto& after = *server.conference();
      if (!ok) {
        ASSERT_EQ(after.phase, before.phase);
        ASSERT_EQ(after.members, before.members);
      }
      if (verb == RswVerb::End && who != chair) {
        ++non_chair_ends;
        ASSERT_FALSE(ok);
      }
      if (after.phase == Phase::Ended && before.phase != Phase::Ended) {
        ASSERT_TRUE(ok && verb == RswVerb::End && who == chair);
      }
      ASSERT_EQ(after.members.size(), before.members.size());
      for (const auto& [id, m] : after.members) {
        ASSERT_TRUE(allowed(before.members.at(id).status, m.status)) << id;
        ASSERT_EQ(m.role, before.members.at(id).role);
      }
      ASSERT_EQ(std::count_if(after.members.begin(), after.members.end(),
                              [](const auto& kv) { return kv.second.role == Role::Chairman; }),
                1);
    }
  }
  EXPECT_GT(non_chair_ends, 1000u);
}
