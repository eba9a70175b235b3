// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "support/emodel_oracle.hpp"
#include "support/iax_reference.hpp"
#include "voxbench/experiment.hpp"
#include "voxbench/frames.hpp"
#include "voxbench/iax_endpoint.hpp"
#include "voxbench/qos_scorer.hpp"
#include "voxbench/rsw_endpoint.hpp"

namespace ex = voxbench::experiment;
namespace fr = voxbench::frames;
namespace iax = voxbench::iax;
namespace rsw = voxbench::rsw;
namespace qos = voxbench::qos;

namespace {

struct Check {
  bool ok = true;
  std::string why;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why = what;
    }
  }
};

std::vector<double> curve(const ex::SweepResult& r, qos::Protocol p) {
  std::vector<double> out;
  for (const auto& row : r.rows) {
    if (row.protocol == p) out.push_back(row.mos);
  }
  return out;
}

Check sweep_shape() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = ex::run_sweep(ex::SweepConfig{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.require(ex::SweepConfig{}.delay_points().size() == 81, "grid is not 81 points");
  c.require(result.rows.size() == 162, "expected 162 rows");
  for (auto p : {qos::Protocol::IAX, qos::Protocol::RSW}) {
    const auto m = curve(result, p);
    c.require(m.size() == 81, "protocol curve is not 81 points");
    for (std::size_t i = 1; i < m.size(); ++i) c.require(m[i] <= m[i - 1], "MOS curve increases");
  }
  c.require(secs < 10, "default sweep took " + std::to_string(secs) + " s");
  if (c.ok) c.why = "81 points per protocol, monotone, " + std::to_string(secs).substr(0, 5) + " s";
  return c;
}

Check figure2_shape() {
  Check c;
  const auto slow = ex::compare_report(ex::run_sweep(ex::SweepConfig{}).rows);
  c.require(slow.points.size() == 81, "gap not defined at 81 points");
  for (const auto& p : slow.points) c.require(p.gap >= 0, "RSW beats IAX at " + std::to_string(p.delay_ms));
  c.require(slow.max_gap <= 0.2, "max gap above 0.2 MOS");
  ex::SweepConfig fast;
  fast.link_rate_bps = 1e9;
  const auto quick = ex::compare_report(ex::run_sweep(fast).rows);
  double worst = 0;
  for (const auto& p : quick.points) worst = std::max(worst, std::abs(p.gap));
  c.require(worst < 1e-3, "gap does not collapse at 1 Gbit/s");
  if (c.ok) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "max gap %.5f MOS at 128 kbit/s, %.2e at 1 Gbit/s", slow.max_gap, worst);
    c.why = buf;
  }
  return c;
}

Check emodel_numerics() {
  Check c;
  c.require(qos::idd(100) == 0, "idd(100) != 0");
  c.require(qos::r_to_mos(0) == 1.0, "mos(0) != 1");
  c.require(qos::r_to_mos(100) == 4.5, "mos(100) != 4.5");
  const ex::SweepConfig cfg;
  const double m0 = ex::run_scenario(qos::Protocol::IAX, 0, cfg).mos;
  const double m2000 = ex::run_scenario(qos::Protocol::IAX, 2000, cfg).mos;
  const double r0 = ex::run_scenario(qos::Protocol::RSW, 0, cfg).mos;
  const double r2000 = ex::run_scenario(qos::Protocol::RSW, 2000, cfg).mos;
  for (double m : {m0, r0}) c.require(std::abs(m - oracle::kMosAt0) <= 0.01, "mos at 0 off the oracle");
  for (double m : {m2000, r2000}) c.require(std::abs(m - oracle::kMosAt2000) <= 0.01, "mos at 2000 off the oracle");
  c.require(std::abs(qos::idd(500) - oracle::kIdd500) < 1e-9 && std::abs(qos::idd(2000) - oracle::kIdd2000) < 1e-9,
            "idd off the oracle");
  if (c.ok) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "mos(0)=%.4f vs %.4f, mos(2000)=%.4f vs %.4f", m0, oracle::kMosAt0, m2000,
                  oracle::kMosAt2000);
    c.why = buf;
  }
  return c;
}

fr::Bytes random_bytes(std::mt19937_64& rng, std::size_t n) {
  fr::Bytes b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng());
  return b;
}

Check codec_totality() {
  Check c;
  std::mt19937_64 rng(404);
  for (int i = 0; i < 10000; ++i) {
    fr::FullFrame f;
    f.source_call = rng() & 0x7fff;
    f.dest_call = rng() & 0x7fff;
    f.retransmit = rng() & 1;
    f.timestamp = static_cast<std::uint32_t>(rng());
    f.oseqno = static_cast<std::uint8_t>(rng());
    f.iseqno = static_cast<std::uint8_t>(rng());
    f.frame_type = rng() & 1 ? fr::FrameType::Voice : fr::FrameType::Control;
    f.subclass = f.frame_type == fr::FrameType::Voice ? rng() & 0x7f
                                                      : static_cast<std::uint8_t>(fr::kAllSignals[rng() % 9]);
    f.payload = random_bytes(rng, rng() % 64);
    c.require(fr::decode_full(fr::encode_full(f)) == f, "full frame round trip");
    const fr::MiniFrame m{static_cast<std::uint16_t>(rng() & 0x7fff), static_cast<std::uint16_t>(rng()),
                          random_bytes(rng, rng() % 64)};
    c.require(fr::decode_mini(fr::encode_mini(m)) == m, "mini frame round trip");
    const fr::RtpPacket p{static_cast<bool>(rng() & 1), static_cast<std::uint8_t>(rng() & 0x7f),
                          static_cast<std::uint16_t>(rng()), static_cast<std::uint32_t>(rng()),
                          static_cast<std::uint32_t>(rng()), random_bytes(rng, rng() % 64)};
    c.require(fr::decode_rtp(fr::encode_rtp(p)) == p, "RTP round trip");
    fr::RswMessage s{fr::kAllVerbs[rng() % 7], static_cast<std::uint32_t>(rng()), "a" + std::to_string(rng() % 99),
                     "b" + std::to_string(rng() % 99), ""};
    if (s.verb == fr::RswVerb::Create || (s.verb != fr::RswVerb::End && (rng() & 1))) s.body = "k=v;x " + std::to_string(i);
    c.require(fr::decode_rsw(fr::encode_rsw(s)) == s, "RSW round trip");
  }
  std::size_t errors = 0;
  for (int i = 0; i < 100000; ++i) {
    const fr::Bytes b = random_bytes(rng, rng() % 65);
    const std::vector<std::function<void()>> decoders = {
        [&] { fr::decode_full(b); }, [&] { fr::decode_mini(b); }, [&] { fr::decode_rtp(b); },
        [&] { fr::decode_rsw(fr::ByteView(b)); }, [&] { fr::decode_media(b); }};
    for (const auto& d : decoders) {
      try {
        d();
      } catch (const fr::CodecError&) {
        ++errors;
      } catch (...) {
        c.require(false, "decoder threw an untyped exception");
      }
    }
  }
  if (c.ok) c.why = "4 x 10^4 round trips, 10^5 fuzz inputs (" + std::to_string(errors) + " typed errors)";
  return c;
}

struct ConformanceWalk {
  bool is_caller;
  iax::CallConfig cfg;
  Check* check;
  std::size_t sequences = 0;

  void visit(const iax::IaxCall& call, const std::string& challenge, int depth) {
    if (depth == 5) {
      ++sequences;
      return;
    }
    const std::uint16_t me = is_caller ? 1 : 5;
    const std::uint16_t peer = is_caller ? 2 : 9;
    for (const auto s : fr::kAllSignals) {
      iax::IaxCall next = call;
      std::string chal = challenge;
      const auto before = call.state().state;
      const auto expect = is_caller ? iaxref::caller_step(before, s) : iaxref::callee_step(cfg, before, s);
      fr::FullFrame f;
      f.source_call = peer;
      f.dest_call = s == fr::Signal::New ? 0 : me;
      f.subclass = static_cast<std::uint8_t>(s);
      const std::string token = s == fr::Signal::AuthRep ? chal + cfg.secret : "";
      f.payload.assign(token.begin(), token.end());
      try {
        const auto r = next.handle_signal(f, depth + 1);
        std::vector<fr::Signal> sent;
        for (const auto& o : r.send) {
          sent.push_back(*o.signal());
          if (o.signal() == fr::Signal::AuthReq) chal.assign(o.payload.begin(), o.payload.end());
        }
        check->require(expect && next.state().state == expect->next && sent == expect->emitted,
                       "undefined transition taken");
      } catch (const iax::IaxError& e) {
        check->require(e.code() == iax::IaxErrc::ProtocolViolation && !expect && next.state().state == before,
                       "unexpected rejection or state change on violation");
      }
      if (!check->ok) return;
      visit(next, chal, depth + 1);
    }
  }
};

bool reaches_up(const iax::CallConfig& cfg) {
  iax::IaxEndpoint caller("a");
  iax::IaxEndpoint callee("b", cfg);
  auto [n, f] = caller.place_call("b", 0);
  std::vector<std::pair<bool, fr::FullFrame>> queue{{true, f}};
  double now = 0;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const auto [to_b, frame] = queue[i];
    const auto r = (to_b ? callee : caller).handle_signal(frame, now);
    for (const auto& o : r.send) queue.emplace_back(!to_b, o);
    if (r.answer_due) {
      now = *r.answer_due;
      for (const auto& o : callee.call(r.send.front().source_call).on_answer_timer(now)) queue.emplace_back(false, o);
    }
  }
  return caller.call(n).state().state == iax::CallState::Up &&
         callee.calls().begin()->second.state().state == iax::CallState::Up;
}

Check iax_conformance() {
  Check c;
  std::size_t total = 0;
  iax::IaxCall caller(1);
  caller.place_call("x", 0);
  ConformanceWalk cw{true, {}, &c};
  cw.visit(caller, "", 0);
  total += cw.sequences;
  for (auto policy : {iax::CalleePolicy::Open, iax::CalleePolicy::Challenge, iax::CalleePolicy::Reject,
                      iax::CalleePolicy::Busy}) {
    for (double delay : {0.0, 100.0}) {
      iax::CallConfig cfg{.policy = policy, .answer_delay = delay, .send_proceeding = delay > 0};
      ConformanceWalk w{false, cfg, &c};
      w.visit(iax::IaxCall(5, cfg), "", 0);
      total += w.sequences;
    }
  }
  c.require(reaches_up({}), "direct ANSWER setup");
  c.require(reaches_up({.answer_delay = 200}), "RINGING then ANSWER setup");
  c.require(reaches_up({.answer_delay = 200, .send_proceeding = true}), "PROCEEDING, RINGING, ANSWER setup");
  c.require(reaches_up({.policy = iax::CalleePolicy::Challenge}), "AUTHREQ/AUTHREP setup");
  if (c.ok) c.why = std::to_string(total) + " length-5 sequences over 9 configurations; 4 setup paths reach Up";
  return c;
}

Check rsw_roles() {
  Check c;
  std::mt19937_64 rng(606);
  const std::string desc = "codec=g711;frame_ms=20";
  std::size_t rejected_ends = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 8);
    std::vector<rsw::Invitee> inv;
    for (int i = 0; i < n; ++i) {
      inv.push_back({"m" + std::to_string(i), rng() % 3 ? rsw::Role::Participant : rsw::Role::PassiveObserver});
    }
    rsw::RswServer server;
    const auto fanout = server.route(rsw::create_conference(1, "chair", inv, desc).create);
    std::size_t invitations = 0;
    for (const auto& m : fanout) invitations += m.verb == fr::RswVerb::Create;
    c.require(invitations == static_cast<std::size_t>(n), "CREATE fan-out is not n invitations");
    for (int step = 0; step < 30; ++step) {
      const bool chair = rng() % 8 == 0;
      const std::string who = chair ? "chair" : inv[rng() % inv.size()].id;
      const fr::RswVerb verb = std::array{fr::RswVerb::Join, fr::RswVerb::Leave, fr::RswVerb::End,
                                          fr::RswVerb::Reject}[rng() % 4];
      const auto before = server.conference()->phase;
      bool ok = true;
      try {
        server.route(fr::RswMessage{verb, 1, who, "server", ""});
      } catch (const rsw::RswError& e) {
        ok = false;
        if (verb == fr::RswVerb::End && !chair && before != rsw::Phase::Ended) {
          c.require(e.code() == rsw::RswErrc::NotChairman, "non-chairman END not rejected as NotChairman");
          ++rejected_ends;
        }
      }
      const auto after = server.conference()->phase;
      if (verb == fr::RswVerb::End && !chair) c.require(!ok && after == before, "non-chairman END accepted");
      if (after == rsw::Phase::Ended && before != rsw::Phase::Ended) {
        c.require(ok && chair && verb == fr::RswVerb::End, "conference ended without a chairman END");
      }
    }
  }
  if (c.ok) c.why = "10^3 schedules, " + std::to_string(rejected_ends) + " non-chairman ENDs rejected";
  return c;
}

Check timestamp_reconstruction() {
  Check c;
  std::mt19937_64 rng(707);
  std::size_t packets = 0;
  for (int trial = 0; trial < 1000 && c.ok; ++trial) {
    iax::IaxCall tx(1);
    const double start = static_cast<double>(rng() % 50000);
    tx.place_call("x", start);
    fr::FullFrame accept;
    accept.source_call = 2;
    accept.dest_call = 1;
    accept.subclass = static_cast<std::uint8_t>(fr::Signal::Accept);
    tx.handle_signal(accept, start);
    accept.subclass = static_cast<std::uint8_t>(fr::Signal::Answer);
    tx.handle_signal(accept, start);
    iax::MediaReceiver rx;
    const double base = 10 + static_cast<double>(rng() % 300);
    std::uint32_t ts = static_cast<std::uint32_t>(rng() % 70000);
    const std::uint32_t first_window = ts >> 16;
    const fr::Bytes payload{9};
    while ((ts >> 16) < first_window + 4) {
      const auto wire = fr::decode_media(fr::encode_media(tx.send_media(payload, start + ts)));
      c.require(rx.receive(wire).ts32 == ts, "reconstructed ts differs at trial " + std::to_string(trial));
      ++packets;
      ts += static_cast<std::uint32_t>(std::max(1.0, base * (0.5 + std::uniform_real_distribution<>(0, 1)(rng))));
    }
  }
  if (c.ok) c.why = "10^3 cadences, >= 3 wraps each, " + std::to_string(packets) + " packets exact";
  return c;
}

Check determinism() {
  Check c;
  ex::SweepConfig cfg;
  ex::TraceLog ta, tb;
  const std::string a = ex::to_csv(ex::run_sweep(cfg, &ta));
  const std::string b = ex::to_csv(ex::run_sweep(cfg, &tb));
  c.require(a == b, "CSV differs between runs");
  c.require(ta.lines() == tb.lines(), "JSONL differs between runs");
  ex::SweepConfig noisy = cfg;
  noisy.delay_end_ms = 500;
  noisy.jitter_ms = 10;
  noisy.loss_prob = 0.05;
  noisy.dup_prob = 0.02;
  noisy.reorder_prob = 0.02;
  noisy.jobs = 3;
  ex::TraceLog na, nb;
  c.require(ex::to_csv(ex::run_sweep(noisy, &na)) == ex::to_csv(ex::run_sweep(noisy, &nb)), "noisy CSV differs");
  c.require(na.lines() == nb.lines(), "noisy JSONL differs");
  if (c.ok) c.why = "default and noisy sweeps byte-identical (" + std::to_string(ta.lines().size()) + " trace lines)";
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria = {
      {"1 sweep shape", sweep_shape},
      {"2 IAX edge over RSW", figure2_shape},
      {"3 E-model vs oracle", emodel_numerics},
      {"4 codec totality and round trip", codec_totality},
      {"5 IAX state machine conformance", iax_conformance},
      {"6 RSW role enforcement", rsw_roles},
      {"7 timestamp reconstruction", timestamp_reconstruction},
      {"8 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.ok = false;
      c.why = std::string("exception: ") + e.what();
    }
    std::printf("%s criterion %s: %s\n", c.ok ? "PASS" : "FAIL", name, c.why.c_str());
    failed += !c.ok;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
