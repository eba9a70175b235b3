#include "voxbench/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace voxbench::experiment {
namespace {

[[noreturn]] void invalid(const std::string& what) { throw ExperimentError(ExperimentErrc::InvalidConfig, what); }

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  value = trim(value);
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    invalid("bad value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

Protocol parse_protocol(std::string_view s) {
  std::string up(trim(s));
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
  if (up == "IAX") return Protocol::IAX;
  if (up == "RSW") return Protocol::RSW;
  invalid("unknown protocol '" + std::string(s) + "'");
}

qos::DelayStatistic parse_delay_stat(std::string_view s) {
  for (auto st : {qos::DelayStatistic::Mean, qos::DelayStatistic::P50, qos::DelayStatistic::P95,
                  qos::DelayStatistic::P99}) {
    if (qos::to_string(st) == trim(s)) return st;
  }
  invalid("unknown delay statistic '" + std::string(s) + "'");
}

std::vector<Protocol> normalized(std::vector<Protocol> ps) {
  std::sort(ps.begin(), ps.end());
  ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
  return ps;
}

}  // namespace

void SweepConfig::validate() const {
  if (!(delay_step_ms > 0)) invalid("delay-step must be > 0");
  if (!(delay_start_ms >= 0)) invalid("delay-start must be >= 0");
  if (!(delay_start_ms <= delay_end_ms)) invalid("delay-start must not exceed delay-end");
  if (!(frame_interval_ms > 0)) invalid("frame-ms must be > 0");
  if (!(call_duration_s > 0)) invalid("duration must be > 0");
  if (payload_bytes == 0) invalid("payload-bytes must be > 0");
  if (!(link_rate_bps > 0)) invalid("link-rate must be > 0");
  if (protocols.empty()) invalid("at least one protocol is required");
  if (frame_count() == 0) invalid("duration shorter than one frame");
  if (frame_count() > 65535) invalid("more than 65535 frames per call");
  for (double p : {loss_prob, dup_prob, reorder_prob}) {
    if (!(p >= 0 && p <= 1)) invalid("probabilities must lie in [0, 1]");
  }
  if (!(jitter_ms >= 0) || !(server_delay_ms >= 0)) invalid("jitter and server delay must be >= 0");
  try {
    emodel.validate();
  } catch (const qos::QosError& e) {
    invalid(e.what());
  }
}

std::vector<double> SweepConfig::delay_points() const {
  validate();
  // Small slack so that an end point reached by exact steps is not lost to rounding.
  const auto n = static_cast<std::size_t>(std::floor((delay_end_ms - delay_start_ms) / delay_step_ms + 1e-9)) + 1;
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(delay_start_ms + static_cast<double>(i) * delay_step_ms);
  return out;
}

std::size_t SweepConfig::frame_count() const {
  return static_cast<std::size_t>(std::llround(call_duration_s * 1000.0 / frame_interval_ms));
}

void TraceLog::append(TraceLog&& other) {
  lines_.insert(lines_.end(), std::make_move_iterator(other.lines_.begin()),
                std::make_move_iterator(other.lines_.end()));
  other.lines_.clear();
}

void TraceLog::write(std::ostream& os) const {
  for (const auto& line : lines_) os << line << '\n';
}

SweepResult run_sweep(const SweepConfig& cfg, TraceLog* trace) {
  cfg.validate();
  SweepResult result;
  result.config = cfg;
  result.config.protocols = normalized(cfg.protocols);

  struct Point {
    Protocol protocol;
    double delay;
  };
  std::vector<Point> grid;
  for (Protocol p : result.config.protocols) {
    for (double d : cfg.delay_points()) grid.push_back({p, d});
  }

  std::vector<qos::QosReport> rows(grid.size());
  std::vector<TraceLog> traces(trace ? grid.size() : 0);
  std::vector<std::exception_ptr> errors(grid.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        rows[i] = run_scenario(grid[i].protocol, grid[i].delay, cfg, trace ? &traces[i] : nullptr);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(cfg.jobs, static_cast<unsigned>(grid.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  // First failure in grid order, so the reported point does not depend on scheduling.
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  result.rows = std::move(rows);
  if (trace) {
    for (auto& t : traces) trace->append(std::move(t));
  }
  return result;
}

std::string to_csv(const SweepResult& result) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : result.rows) {
    out += qos::to_string(r.protocol);
    out += ',' + fixed3(r.configured_delay_ms);
    out += ',' + fixed3(r.mean_e2e_delay_ms);
    out += ',' + fixed3(r.setup_time_ms);
    out += ',' + std::to_string(r.pkts_sent);
    out += ',' + std::to_string(r.pkts_recv);
    out += ',' + fixed3(r.loss_fraction);
    out += ',' + fixed3(r.r_factor);
    out += ',' + fixed3(r.mos);
    out += '\n';
  }
  return out;
}

namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ExperimentError(ExperimentErrc::Io, "cannot open " + path + " for writing");
  os << content;
  os.flush();
  if (!os) throw ExperimentError(ExperimentErrc::Io, "write to " + path + " failed");
}

}  // namespace

void emit_csv(const SweepResult& result, const std::string& path) { write_file(path, to_csv(result)); }

void emit_trace(const TraceLog& trace, const std::string& path) {
  std::ostringstream os;
  trace.write(os);
  write_file(path, os.str());
}

std::vector<qos::QosReport> parse_csv(std::string_view text) {
  std::vector<qos::QosReport> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1) {
      if (line != kCsvHeader) throw ExperimentError(ExperimentErrc::Io, "unexpected CSV header");
      continue;
    }
    if (line.empty()) continue;

    std::vector<std::string_view> cells;
    for (std::size_t pos = 0;;) {
      const auto comma = line.find(',', pos);
      cells.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (cells.size() != 9) {
      throw ExperimentError(ExperimentErrc::Io, "CSV line " + std::to_string(line_no) + " has " +
                                                    std::to_string(cells.size()) + " fields");
    }
    try {
      qos::QosReport r;
      r.protocol = parse_protocol(cells[0]);
      r.configured_delay_ms = parse_number<double>("delay_ms", cells[1]);
      r.mean_e2e_delay_ms = parse_number<double>("mean_e2e_delay_ms", cells[2]);
      r.setup_time_ms = parse_number<double>("setup_time_ms", cells[3]);
      r.pkts_sent = parse_number<std::size_t>("pkts_sent", cells[4]);
      r.pkts_recv = parse_number<std::size_t>("pkts_recv", cells[5]);
      r.loss_fraction = parse_number<double>("loss_fraction", cells[6]);
      r.r_factor = parse_number<double>("r_factor", cells[7]);
      r.mos = parse_number<double>("mos", cells[8]);
      rows.push_back(r);
    } catch (const ExperimentError& e) {
      throw ExperimentError(ExperimentErrc::Io, "CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

CompareReport compare_report(const std::vector<qos::QosReport>& rows, double threshold) {
  std::map<double, double> iax;
  std::map<double, double> rsw;
  for (const auto& r : rows) (r.protocol == Protocol::IAX ? iax : rsw)[r.configured_delay_ms] = r.mos;
  if (iax.empty()) throw ExperimentError(ExperimentErrc::MissingProtocol, "no IAX rows to compare");
  if (rsw.empty()) throw ExperimentError(ExperimentErrc::MissingProtocol, "no RSW rows to compare");

  CompareReport rep;
  rep.threshold = threshold;
  for (const auto& [delay, mos] : iax) {
    const auto it = rsw.find(delay);
    if (it != rsw.end()) rep.points.push_back({delay, mos - it->second});
  }
  if (rep.points.empty()) throw ExperimentError(ExperimentErrc::MissingProtocol, "no common delay points");

  rep.max_gap = rep.points.front().gap;
  rep.max_gap_delay_ms = rep.points.front().delay_ms;
  rep.min_gap = rep.points.front().gap;
  std::size_t best_len = 0;
  std::size_t run_start = 0;
  std::size_t run_len = 0;
  for (std::size_t i = 0; i < rep.points.size(); ++i) {
    const auto& p = rep.points[i];
    if (p.gap > rep.max_gap) {
      rep.max_gap = p.gap;
      rep.max_gap_delay_ms = p.delay_ms;
    }
    rep.min_gap = std::min(rep.min_gap, p.gap);
    if (p.gap > threshold) {
      if (run_len == 0) run_start = i;
      ++run_len;
      if (run_len > best_len) {
        best_len = run_len;
        rep.edge_range = std::pair{rep.points[run_start].delay_ms, p.delay_ms};
      }
    } else {
      run_len = 0;
    }
  }
  return rep;
}

std::string format_report(const CompareReport& report) {
  std::ostringstream os;
  os << "delay_ms,mos_gap_iax_minus_rsw\n";
  for (const auto& p : report.points) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.3f,%.6f\n", p.delay_ms, p.gap);
    os << buf;
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "max gap %.6f MOS at %.3f ms; min gap %.6f MOS\n", report.max_gap,
                report.max_gap_delay_ms, report.min_gap);
  os << buf;
  if (report.edge_range) {
    std::snprintf(buf, sizeof buf, "IAX leads by more than %.4f MOS from %.3f to %.3f ms\n", report.threshold,
                  report.edge_range->first, report.edge_range->second);
  } else {
    std::snprintf(buf, sizeof buf, "IAX never leads by more than %.4f MOS\n", report.threshold);
  }
  os << buf;
  return os.str();
}

void apply_setting(RunOptions& opts, std::string_view raw_key, std::string_view value) {
  std::string key(trim(raw_key));
  std::replace(key.begin(), key.end(), '_', '-');
  value = trim(value);
  SweepConfig& c = opts.sweep;

  if (key == "delay-start") {
    c.delay_start_ms = parse_number<double>(key, value);
  } else if (key == "delay-end") {
    c.delay_end_ms = parse_number<double>(key, value);
  } else if (key == "delay-step") {
    c.delay_step_ms = parse_number<double>(key, value);
  } else if (key == "duration") {
    c.call_duration_s = parse_number<double>(key, value);
  } else if (key == "frame-ms") {
    c.frame_interval_ms = parse_number<double>(key, value);
  } else if (key == "payload-bytes") {
    c.payload_bytes = parse_number<std::size_t>(key, value);
  } else if (key == "link-rate") {
    c.link_rate_bps = parse_number<double>(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "protocol") {
    c.protocols.clear();
    std::string_view rest = value;
    while (true) {
      const auto comma = rest.find(',');
      c.protocols.push_back(parse_protocol(rest.substr(0, comma)));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
  } else if (key == "jitter") {
    c.jitter_ms = parse_number<double>(key, value);
  } else if (key == "loss") {
    c.loss_prob = parse_number<double>(key, value);
  } else if (key == "dup") {
    c.dup_prob = parse_number<double>(key, value);
  } else if (key == "reorder") {
    c.reorder_prob = parse_number<double>(key, value);
  } else if (key == "overhead-bytes") {
    c.overhead_bytes = parse_number<std::size_t>(key, value);
  } else if (key == "server-delay") {
    c.server_delay_ms = parse_number<double>(key, value);
  } else if (key == "delay-stat") {
    c.emodel.delay_stat = parse_delay_stat(value);
  } else if (key == "r0") {
    c.emodel.r0 = parse_number<double>(key, value);
  } else if (key == "ie") {
    c.emodel.ie = parse_number<double>(key, value);
  } else if (key == "jobs") {
    c.jobs = parse_number<unsigned>(key, value);
  } else if (key == "out") {
    opts.out = std::string(value);
  } else if (key == "trace") {
    opts.trace = std::string(value);
  } else if (key == "meta") {
    opts.meta = std::string(value);
  } else if (key == "threshold") {
    opts.gap_threshold = parse_number<double>(key, value);
  } else {
    invalid("unknown setting '" + key + "'");
  }
}

void load_config(RunOptions& opts, std::istream& in, const std::string& origin) {
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    std::string_view v = line;
    if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) invalid(origin + ":" + std::to_string(n) + ": expected key=value");
    try {
      apply_setting(opts, v.substr(0, eq), v.substr(eq + 1));
    } catch (const ExperimentError& e) {
      invalid(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void load_config_file(RunOptions& opts, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ExperimentError(ExperimentErrc::Io, "cannot open config " + path);
  load_config(opts, in, path);
}

std::string describe(const SweepConfig& c) {
  std::ostringstream os;
  os << "# " << kVersion << '\n';
  os << "delay-start=" << fixed3(c.delay_start_ms) << '\n';
  os << "delay-end=" << fixed3(c.delay_end_ms) << '\n';
  os << "delay-step=" << fixed3(c.delay_step_ms) << '\n';
  os << "duration=" << fixed3(c.call_duration_s) << '\n';
  os << "frame-ms=" << fixed3(c.frame_interval_ms) << '\n';
  os << "payload-bytes=" << c.payload_bytes << '\n';
  os << "link-rate=" << fixed3(c.link_rate_bps) << '\n';
  os << "seed=" << c.seed << '\n';
  os << "protocol=";
  for (std::size_t i = 0; i < c.protocols.size(); ++i) os << (i ? "," : "") << qos::to_string(c.protocols[i]);
  os << '\n';
  os << "jitter=" << fixed3(c.jitter_ms) << '\n';
  os << "loss=" << c.loss_prob << '\n';
  os << "dup=" << c.dup_prob << '\n';
  os << "reorder=" << c.reorder_prob << '\n';
  os << "overhead-bytes=" << c.overhead_bytes << '\n';
  os << "server-delay=" << fixed3(c.server_delay_ms) << '\n';
  os << "delay-stat=" << qos::to_string(c.emodel.delay_stat) << '\n';
  os << "r0=" << c.emodel.r0 << '\n';
  os << "ie=" << c.emodel.ie << '\n';
  return os.str();
}

}  // namespace voxbench::experiment
