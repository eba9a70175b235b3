#pragma once

// Objective MOS estimate from per-packet one-way delays, using the E-model
// delay impairment (Idd) and the standard R -> MOS mapping.
//
//   R   = R0 - Idd(Ta) - Ie - 30 * loss_fraction + A
//   Idd = 0                                                  for Ta <= 100 ms
//       = 25 * ((1 + X^6)^(1/6) - 3 (1 + (X/3)^6)^(1/6) + 2)  otherwise, X = log2(Ta / 100)
//   MOS = 1                                        for R <= 0
//       = 4.5                                      for R >= 100
//       = 1 + 0.035 R + R (R - 60)(100 - R) 7e-6   otherwise, floored at 1
//
// The linear loss penalty is a simplification; the headline sweep is lossless.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

#include "voxbench/error.hpp"

namespace voxbench::qos {

enum class QosErrc { NegativeDelay, InvalidParams, CountMismatch };

using QosError = Error<QosErrc>;

enum class Protocol { IAX, RSW };

std::string_view to_string(Protocol p);

// Which statistic of the per-packet delays feeds Idd.
enum class DelayStatistic { Mean, P50, P95, P99 };

std::string_view to_string(DelayStatistic s);

struct EModelParams {
  double r0 = 93.2;
  double ie = 0;         // codec equipment impairment
  double advantage = 0;  // A factor
  double loss_penalty_per_unit = 30;
  DelayStatistic delay_stat = DelayStatistic::Mean;

  void validate() const;
};

struct QosReport {
  Protocol protocol = Protocol::IAX;
  double configured_delay_ms = 0;
  double mean_e2e_delay_ms = 0;
  double scored_delay_ms = 0;  // the statistic passed to Idd
  std::size_t pkts_sent = 0;
  std::size_t pkts_recv = 0;
  double loss_fraction = 0;
  double r_factor = 0;
  double mos = 1;
  double setup_time_ms = 0;
  bool no_packets_received = false;
};

double idd(double ta_ms);
double r_to_mos(double r);

// Score one run. `delays` holds one entry per (deduplicated) received packet.
QosReport score_run(std::span<const double> delays, std::size_t sent, std::size_t recv,
                    const EModelParams& params = {});

// 1 = bad ... 5 = excellent; a score belongs to the category it has reached,
// so 4.41 is "good".
std::string_view mos_label(double mos);

}  // namespace voxbench::qos
