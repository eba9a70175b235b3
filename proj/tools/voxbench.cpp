// voxbench: delay sweep of IAX versus RSW over an emulated link.
//
//   voxbench sweep [--config FILE] [--delay-start MS] ... [--out sweep.csv] [--trace trace.jsonl]
//   voxbench scenario --protocol IAX --delay 250
//   voxbench compare --csv sweep.csv [--threshold 0.01]

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "voxbench/experiment.hpp"

namespace ex = voxbench::experiment;

namespace {

struct Setting {
  const char* key;
  const char* help;
  std::string value;
  CLI::Option* opt = nullptr;
};

std::vector<Setting> sweep_settings() {
  return {
      {"delay-start", "first delay point, ms", {}},
      {"delay-end", "last delay point, ms", {}},
      {"delay-step", "delay increment, ms", {}},
      {"protocol", "IAX, RSW or IAX,RSW", {}},
      {"duration", "call duration per point, s", {}},
      {"frame-ms", "media frame interval, ms", {}},
      {"payload-bytes", "voice payload per frame", {}},
      {"link-rate", "link rate, bit/s", {}},
      {"seed", "RNG seed", {}},
      {"jitter", "uniform jitter half-width, ms", {}},
      {"loss", "loss probability", {}},
      {"dup", "duplication probability", {}},
      {"reorder", "reorder probability", {}},
      {"overhead-bytes", "per-packet IP+UDP overhead", {}},
      {"server-delay", "processing delay at the relay, ms", {}},
      {"delay-stat", "mean, p50, p95 or p99", {}},
      {"jobs", "worker threads", {}},
      {"out", "CSV output path", {}},
      {"trace", "JSONL trace output path", {}},
      {"meta", "config echo output path", {}},
      {"threshold", "MOS gap threshold for the report", {}},
  };
}

void print_report(const voxbench::qos::QosReport& r) {
  std::printf("protocol=%s\n", std::string(voxbench::qos::to_string(r.protocol)).c_str());
  std::printf("delay_ms=%.3f\nmean_e2e_delay_ms=%.3f\nsetup_time_ms=%.3f\n", r.configured_delay_ms,
              r.mean_e2e_delay_ms, r.setup_time_ms);
  std::printf("pkts_sent=%zu\npkts_recv=%zu\nloss_fraction=%.3f\n", r.pkts_sent, r.pkts_recv, r.loss_fraction);
  std::printf("r_factor=%.3f\nmos=%.3f (%s)\n", r.r_factor, r.mos,
              std::string(voxbench::qos::mos_label(r.mos)).c_str());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ex::ExperimentError(ex::ExperimentErrc::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IAX versus RSW voice quality under packet delay"};
  app.set_version_flag("--version", std::string(ex::kVersion));
  app.require_subcommand(1);

  auto* sweep = app.add_subcommand("sweep", "run the delay sweep and write CSV");
  std::string config_path;
  sweep->add_option("--config", config_path, "key=value config file; flags take precedence");
  auto settings = sweep_settings();
  for (auto& s : settings) s.opt = sweep->add_option(std::string("--") + s.key, s.value, s.help);

  auto* scenario = app.add_subcommand("scenario", "run a single grid point and print its report");
  std::string sc_protocol = "IAX";
  double sc_delay = 0;
  std::string sc_config;
  std::string sc_trace;
  scenario->add_option("--protocol", sc_protocol, "IAX or RSW");
  scenario->add_option("--delay", sc_delay, "one-way link delay, ms");
  scenario->add_option("--config", sc_config, "key=value config file for the remaining knobs");
  scenario->add_option("--trace", sc_trace, "JSONL trace output path");

  auto* compare = app.add_subcommand("compare", "summarize the IAX minus RSW MOS gap of a sweep CSV");
  std::string csv_path;
  double threshold = 0.01;
  compare->add_option("--csv", csv_path, "sweep CSV")->required();
  compare->add_option("--threshold", threshold, "MOS gap threshold");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sweep) {
      ex::RunOptions opts;
      if (!config_path.empty()) ex::load_config_file(opts, config_path);
      for (const auto& s : settings) {
        if (s.opt->count() > 0) ex::apply_setting(opts, s.key, s.value);
      }
      ex::TraceLog trace;
      const auto result = ex::run_sweep(opts.sweep, opts.trace.empty() ? nullptr : &trace);
      ex::emit_csv(result, opts.out);
      if (!opts.trace.empty()) ex::emit_trace(trace, opts.trace);
      if (!opts.meta.empty()) {
        std::ofstream meta(opts.meta);
        meta << ex::describe(result.config);
        if (!meta) throw ex::ExperimentError(ex::ExperimentErrc::Io, "write to " + opts.meta + " failed");
      }
      std::fprintf(stderr, "wrote %zu rows to %s\n", result.rows.size(), opts.out.c_str());
      if (result.config.protocols.size() == 2) {
        std::fputs(ex::format_report(ex::compare_report(result.rows, opts.gap_threshold)).c_str(), stdout);
      }
    } else if (*scenario) {
      ex::RunOptions opts;
      if (!sc_config.empty()) ex::load_config_file(opts, sc_config);
      ex::apply_setting(opts, "protocol", sc_protocol);
      opts.sweep.validate();
      ex::TraceLog trace;
      const auto report =
          ex::run_scenario(opts.sweep.protocols.front(), sc_delay, opts.sweep, sc_trace.empty() ? nullptr : &trace);
      if (!sc_trace.empty()) ex::emit_trace(trace, sc_trace);
      print_report(report);
    } else if (*compare) {
      const auto rows = ex::parse_csv(read_file(csv_path));
      std::fputs(ex::format_report(ex::compare_report(rows, threshold)).c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "voxbench: %s\n", e.what());
    return 1;
  }
  return 0;
}
