#pragma once

// End-to-end delay sweep: one IAX call and one two-party RSW conference per
// grid point, each relayed through a co-located server over the emulated link,
// scored with the E-model and written out as CSV and JSONL.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "voxbench/error.hpp"
#include "voxbench/qos_scorer.hpp"

namespace voxbench::experiment {

inline constexpr std::string_view kVersion = "voxbench 0.1.0";

inline constexpr std::string_view kCsvHeader =
    "protocol,delay_ms,mean_e2e_delay_ms,setup_time_ms,pkts_sent,pkts_recv,loss_fraction,r_factor,mos";

enum class ExperimentErrc { InvalidConfig, ScenarioFailed, MissingProtocol, Io };

using ExperimentError = Error<ExperimentErrc>;

using qos::Protocol;

struct SweepConfig {
  double delay_start_ms = 0;
  double delay_end_ms = 2000;
  double delay_step_ms = 25;
  double call_duration_s = 10;
  double frame_interval_ms = 20;
  std::size_t payload_bytes = 160;
  double link_rate_bps = 128000;
  std::uint64_t seed = 1;
  std::vector<Protocol> protocols = {Protocol::IAX, Protocol::RSW};

  // netem knobs beyond fixed delay; all off for the headline sweep.
  double jitter_ms = 0;
  double loss_prob = 0;
  double dup_prob = 0;
  double reorder_prob = 0;
  std::size_t overhead_bytes = 28;
  double server_delay_ms = 0;

  qos::EModelParams emodel;
  unsigned jobs = 1;

  void validate() const;
  std::vector<double> delay_points() const;
  std::size_t frame_count() const;
};

// One JSON object per line, in dispatch order.
class TraceLog {
 public:
  void add(std::string line) { lines_.push_back(std::move(line)); }
  void append(TraceLog&& other);
  const std::vector<std::string>& lines() const { return lines_; }
  void write(std::ostream& os) const;

 private:
  std::vector<std::string> lines_;
};

struct SweepResult {
  std::vector<qos::QosReport> rows;  // ordered by (protocol, delay)
  SweepConfig config;
  std::string version = std::string(kVersion);
};

qos::QosReport run_scenario(Protocol protocol, double delay_ms, const SweepConfig& cfg,
                            TraceLog* trace = nullptr);

SweepResult run_sweep(const SweepConfig& cfg, TraceLog* trace = nullptr);

std::string to_csv(const SweepResult& result);
void emit_csv(const SweepResult& result, const std::string& path);
void emit_trace(const TraceLog& trace, const std::string& path);

// Parses CSV produced by to_csv back into report rows.
std::vector<qos::QosReport> parse_csv(std::string_view text);

struct GapPoint {
  double delay_ms = 0;
  double gap = 0;  // mos(IAX) - mos(RSW)
};

struct CompareReport {
  std::vector<GapPoint> points;
  double threshold = 0.01;
  double max_gap = 0;
  double max_gap_delay_ms = 0;
  double min_gap = 0;
  // Widest contiguous run of grid points whose gap exceeds the threshold.
  std::optional<std::pair<double, double>> edge_range;
};

CompareReport compare_report(const std::vector<qos::QosReport>& rows, double threshold = 0.01);
std::string format_report(const CompareReport& report);

// Key=value settings shared by the config file and the command line.
struct RunOptions {
  SweepConfig sweep;
  std::string out = "sweep.csv";
  std::string trace;
  std::string meta;
  double gap_threshold = 0.01;
};

// Keys use the long flag names ("delay-start", "link-rate", ...); underscores
// are accepted in place of dashes.
void apply_setting(RunOptions& opts, std::string_view key, std::string_view value);

// Lines of key=value; '#' starts a comment.
void load_config(RunOptions& opts, std::istream& in, const std::string& origin = "<config>");
void load_config_file(RunOptions& opts, const std::string& path);

// Config echo in the same key=value format, headed by the version string.
std::string describe(const SweepConfig& cfg);

}  // namespace voxbench::experiment
