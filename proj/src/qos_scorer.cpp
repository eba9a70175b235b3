#include "voxbench/qos_scorer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace voxbench::qos {

std::string_view to_string(Protocol p) { return p == Protocol::IAX ? "IAX" : "RSW"; }

std::string_view to_string(DelayStatistic s) {
  switch (s) {
    case DelayStatistic::Mean: return "mean";
    case DelayStatistic::P50: return "p50";
    case DelayStatistic::P95: return "p95";
    case DelayStatistic::P99: return "p99";
  }
  return "?";
}

void EModelParams::validate() const {
  if (!(r0 > 0 && r0 <= 100)) throw QosError(QosErrc::InvalidParams, "r0 must lie in (0, 100]");
  if (!(ie >= 0)) throw QosError(QosErrc::InvalidParams, "ie must be >= 0");
}

double idd(double ta_ms) {
  if (ta_ms < 0 || std::isnan(ta_ms)) throw QosError(QosErrc::NegativeDelay, "negative one-way delay");
  if (ta_ms <= 100) return 0;
  const double x = std::log(ta_ms / 100) / std::log(2.0);
  return 25 * (std::pow(1 + std::pow(x, 6), 1.0 / 6) - 3 * std::pow(1 + std::pow(x / 3, 6), 1.0 / 6) + 2);
}

double r_to_mos(double r) {
  if (r <= 0) return 1;
  if (r >= 100) return 4.5;
  // The cubic dips just under 1 for R below about 6.5.
  return std::clamp(1 + 0.035 * r + r * (r - 60) * (100 - r) * 7e-6, 1.0, 4.5);
}

namespace {

// Nearest-rank percentile.
double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

}  // namespace

QosReport score_run(std::span<const double> delays, std::size_t sent, std::size_t recv,
                    const EModelParams& params) {
  params.validate();
  if (recv != delays.size() || recv > sent) {
    throw QosError(QosErrc::CountMismatch, "recv " + std::to_string(recv) + " vs " +
                                               std::to_string(delays.size()) + " delays and " +
                                               std::to_string(sent) + " sent");
  }
  for (double d : delays) {
    if (d < 0 || std::isnan(d)) throw QosError(QosErrc::NegativeDelay, "negative per-packet delay");
  }

  QosReport rep;
  rep.pkts_sent = sent;
  rep.pkts_recv = recv;
  rep.loss_fraction = sent == 0 ? 0.0 : 1.0 - static_cast<double>(recv) / static_cast<double>(sent);
  if (recv == 0) {
    rep.no_packets_received = true;
    rep.mos = 1.0;
    rep.r_factor = 0;
    return rep;
  }

  rep.mean_e2e_delay_ms = std::accumulate(delays.begin(), delays.end(), 0.0) / static_cast<double>(recv);
  const std::vector<double> copy(delays.begin(), delays.end());
  switch (params.delay_stat) {
    case DelayStatistic::Mean: rep.scored_delay_ms = rep.mean_e2e_delay_ms; break;
    case DelayStatistic::P50: rep.scored_delay_ms = percentile(copy, 50); break;
    case DelayStatistic::P95: rep.scored_delay_ms = percentile(copy, 95); break;
    case DelayStatistic::P99: rep.scored_delay_ms = percentile(copy, 99); break;
  }
  rep.r_factor = params.r0 - idd(rep.scored_delay_ms) - params.ie -
                 params.loss_penalty_per_unit * rep.loss_fraction + params.advantage;
  rep.mos = r_to_mos(rep.r_factor);
  return rep;
}

std::string_view mos_label(double mos) {
  static constexpr std::array<std::string_view, 5> kLabels = {"bad", "poor", "fair", "good", "excellent"};
  const auto idx = static_cast<long>(std::floor(std::clamp(mos, 1.0, 5.0))) - 1;
  return kLabels[static_cast<std::size_t>(idx)];
}

}  // namespace voxbench::qos
