#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "nanoloc/errors.hpp"
#include "nanoloc/experiments.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nanoloc;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Writes to `path`, or stdout for "-".
void emit(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text;
  } else {
    write_text(path, text);
  }
}

// Scenario search path: the --config directory, ./scenarios, and the source tree.
std::vector<fs::path> scenario_dirs() {
  std::vector<fs::path> dirs = {fs::current_path() / "scenarios"};
#ifdef NANOLOC_SOURCE_DIR
  dirs.emplace_back(fs::path(NANOLOC_SOURCE_DIR) / "scenarios");
#endif
  return dirs;
}

#ifdef NANOLOC_SOURCE_DIR
const std::string kDefaultGraph = std::string(NANOLOC_SOURCE_DIR) + "/graphs/simplified_body.json";
#else
const std::string kDefaultGraph = "graphs/simplified_body.json";
#endif

struct Global {
  std::string config;
  std::string out = "out";
  std::uint64_t seed_offset = 0;
};

// ----------------------------------------------------------- channel sweep ---

struct SweepArgs {
  std::string tissues, stack, config, out = "-";
  double f_min = 0.1e12, f_max = 1e12, delta_f = 1e9, step = 0.0;
  double p_t = 5000.0, g_t = 5.09, g_r = 5.09, t0 = 310.0;
  std::string spreading = "per_layer", absorption = "effective";
};

int channel_sweep(const SweepArgs& a) {
  const auto tissues = a.tissues.empty() ? default_tissues() : TissueLibrary::load(a.tissues);
  const auto stack = a.stack.empty() ? default_stack(tissues) : LayerStack::load(a.stack, tissues);
  LinkParams link;
  ChannelOptions opts;
  if (!a.config.empty()) {
    const auto doc = read_json_file(a.config);
    if (doc.contains("link")) link = link_params_from_json(doc["link"]);
    if (doc.contains("channel")) opts = channel_options_from_json(doc["channel"]);
  } else {
    link.p_t = a.p_t;
    link.g_t = a.g_t;
    link.g_r = a.g_r;
    link.t0 = a.t0;
    link.band = {a.f_min, a.f_max};
    link.delta_f = a.delta_f;
    opts.spreading = parse_spreading_mode(a.spreading);
    opts.absorption_wavelength = parse_absorption_wavelength(a.absorption);
  }
  link.validate();
  Table t;
  t.name = "channel_sweep";
  t.columns = {"frequency_hz",   "loss_spread_db", "loss_abs_db",      "loss_total_db",
               "p_rb_db",        "noise_psd_w_hz", "capacity_fwd_bps", "capacity_back_bps"};
  const double step = a.step > 0.0 ? a.step : link.delta_f;
  for (double f : frequency_grid(link.band.f_min, link.band.f_max, step)) {
    const auto b = link_budget(stack, link, f, opts);
    t.add_row({f, b.loss_spread_db, b.loss_abs_db, b.loss_total_db, b.p_received_backscatter_db, b.noise_psd,
               b.capacity_fwd_bps, b.capacity_back_bps});
  }
  emit(a.out, t.to_csv());
  const auto fwd = channel_capacity(stack, link, LinkDirection::kForward, opts);
  const auto back = channel_capacity(stack, link, LinkDirection::kBackward, opts);
  std::cerr << "band capacity: forward " << format_number(fwd.bits_per_second) << " bps, backward "
            << format_number(back.bits_per_second) << " bps over " << fwd.subbands << " sub-bands\n";
  return 0;
}

// ------------------------------------------------------ simulate trajectory ---

struct TrajArgs {
  std::string graph = kDefaultGraph, inject, events, out;
  double duration = 100.0, dt = 0.01;
  std::uint64_t seed = 1;
};

int injection_from(const VesselGraph& g, const std::string& text) {
  if (text.empty()) return g.injection_points().front();
  if (auto id = g.find_by_name(text)) return *id;
  try {
    std::size_t used = 0;
    const int id = std::stoi(text, &used);
    if (used == text.size() && g.contains(id)) return id;
  } catch (const std::exception&) {
  }
  throw ValidationError("--inject", "no segment '" + text + "'");
}

std::vector<AnomalyEvent> events_from(const std::string& arg, const VesselGraph& g) {
  if (arg.empty()) return {};
  if (fs::exists(arg)) return events_from_json(read_json_file(arg), g);
  // A bare count scatters that many events with the default radius.
  std::size_t used = 0;
  int n = 0;
  try {
    n = std::stoi(arg, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != arg.size()) throw ValidationError("--events", "expected a JSON file or an event count");
  return scatter_events(g, n, 0.001, 1);
}

int simulate_trajectory(const TrajArgs& a, const Global& gl) {
  const auto g = VesselGraph::load(a.graph);
  const int inj = injection_from(g, a.inject);
  const auto events = events_from(a.events, g);
  Table traj;
  traj.name = "trajectory";
  traj.columns = {"t_s", "x_m", "y_m", "z_m", "segment_id"};
  Table hits;
  hits.name = "events";
  hits.columns = {"event_id", "t_s", "x_m", "y_m", "z_m", "segment_id"};
  EventSensor sensor(g, events);
  auto rng = Rng::derive(a.seed + gl.seed_offset, "trajectory");
  walk(g, inj, a.duration, a.dt, rng, [&](const BnsState& s) {
    traj.add_row({s.sim_time, s.position.x(), s.position.y(), s.position.z(), static_cast<std::int64_t>(s.segment_id)});
    for (int id : sensor.sense(s)) {
      const auto& e = sensor.event(id);
      hits.add_row({static_cast<std::int64_t>(id), s.sim_time, e.true_location.x(), e.true_location.y(),
                    e.true_location.z(), static_cast<std::int64_t>(e.segment_id)});
    }
    return true;
  });
  const fs::path dir = a.out.empty() ? fs::path(gl.out) / "trajectory" : fs::path(a.out);
  write_text(dir / "trajectory.csv", traj.to_csv());
  write_text(dir / "events.csv", hits.to_csv());
  std::cerr << "wrote " << traj.rows.size() << " states and " << hits.rows.size() << " event hits to " << dir.string()
            << "\n";
  return 0;
}

// --------------------------------------------------------- simulate visits ---

struct VisitArgs {
  std::string graph = kDefaultGraph, anchors = "paper20", inject, gate = "proximity", out;
  double duration = 10000.0, dt = 0.01, window = 10.0;
  int seeds = 50;
};

Placement anchors_from(const std::string& arg, const VesselGraph& g) {
  const auto stack = default_stack(default_tissues());
  if (arg == "paper20") return place_anchors("paper20", g, stack);
  return load_anchors(arg, g, {{"default", stack}});
}

int simulate_visits_cmd(const VisitArgs& a, const Global& gl) {
  const auto g = VesselGraph::load(a.graph);
  const auto placement = anchors_from(a.anchors, g);
  for (const auto& w : placement.warnings) std::cerr << "warning: " << w << "\n";
  CommSettings comm;
  comm.gate = parse_contact_gate(a.gate);
  const int inj = injection_from(g, a.inject);
  std::vector<VisitStats> cells(a.seeds);
  parallel_for(cells.size(), [&](std::size_t i) {
    cells[i] = simulate_visits(g, placement.anchors, comm, inj, a.duration, a.dt, gl.seed_offset + 1 + i);
  });
  Table t;
  t.name = "visit_intervals";
  t.columns = {"seed", "interval_s"};
  std::vector<double> all;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (double v : cells[i].intervals) {
      t.add_row({static_cast<std::int64_t>(gl.seed_offset + 1 + i), v});
      all.push_back(v);
    }
  }
  std::sort(all.begin(), all.end());
  auto q = [&](double p) {
    if (all.empty()) return std::nan("");
    const double pos = p * (all.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, all.size() - 1);
    return all[lo] + (pos - lo) * (all[hi] - all[lo]);
  };
  const auto le = std::count_if(all.begin(), all.end(), [&](double v) { return v <= a.window + 1e-9; });
  Table s;
  s.name = "visit_quantiles";
  s.columns = {"quantity", "value"};
  s.add_row({std::string("intervals"), static_cast<double>(all.size())});
  s.add_row({std::string("fraction_le_window"), all.empty() ? 0.0 : static_cast<double>(le) / all.size()});
  for (double p : {0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99}) s.add_row({"q" + format_number(p), q(p)});
  s.add_row({std::string("max_s"), all.empty() ? 0.0 : all.back()});
  const fs::path dir = a.out.empty() ? fs::path(gl.out) / "visits" : fs::path(a.out);
  write_text(dir / "visit_intervals.csv", t.to_csv());
  write_text(dir / "visit_quantiles.csv", s.to_csv());
  std::cout << s.to_csv();
  return 0;
}

// ------------------------------------------------------ simulate localize ---

struct LocArgs {
  std::string graph = kDefaultGraph, anchors = "paper20", events, imu_spec, inject, gate = "proximity", out;
  double duration = 300.0, dt = 0.01, bin_width = 0.025, constraint_std = 1e-3;
  int seeds = 50;
  bool vessel_constraint = false;
};

int simulate_localize(const LocArgs& a, const Global& gl) {
  const auto g = VesselGraph::load(a.graph);
  const auto placement = anchors_from(a.anchors, g);
  for (const auto& w : placement.warnings) std::cerr << "warning: " << w << "\n";
  const auto events = a.events.empty() ? scatter_events(g, 2000, 0.00025, 7) : events_from(a.events, g);
  LocalizationConfig lc;
  if (!a.imu_spec.empty()) lc.imu = imu_spec_from_json(read_json_file(a.imu_spec));
  lc.imu.validate();
  lc.estimator = estimator_config_for(lc.imu);
  lc.estimator.vessel_constraint = a.vessel_constraint;
  lc.estimator.constraint_std = a.constraint_std;
  lc.comm.gate = parse_contact_gate(a.gate);
  lc.duration = a.duration;
  lc.dt = a.dt;
  lc.injection = injection_from(g, a.inject);
  std::vector<LocalizationRun> runs(a.seeds);
  parallel_for(runs.size(), [&](std::size_t i) {
    runs[i] = simulate_localization(g, placement.anchors, events, lc, gl.seed_offset + 1 + i);
  });
  Table per;
  per.name = "events";
  per.columns = {"event_id",        "seed",       "distance_since_reset_m", "error_m",  "inertial_error_m",
                 "accel_noise_std", "accel_bias", "gyro_noise_std",         "gyro_bias"};
  BinnedStats abs(0.0, 1.0, a.bin_width), inert(0.0, 1.0, a.bin_width);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& r = runs[i];
    for (std::size_t k = 0; k < r.stamped.size(); ++k) {
      const auto& e = r.stamped[k];
      const auto& in = r.inertial[k];
      per.add_row({static_cast<std::int64_t>(e.event_id), static_cast<std::int64_t>(gl.seed_offset + 1 + i),
                   e.distance_since_reset_at_stamp, e.error_m, in.error_m, lc.imu.accel_noise_std,
                   lc.imu.accel_bias.x(), lc.imu.gyro_noise_std, lc.imu.gyro_bias.x()});
      abs.add(e.distance_since_reset_at_stamp, e.error_m);
      inert.add(in.distance_since_reset_at_stamp, in.error_m);
    }
  }
  Table bins;
  bins.name = "binned";
  bins.columns = {"bin_lo_m", "bin_hi_m", "n", "mean_error_m", "sem_error_m", "inertial_n", "inertial_mean_error_m",
                  "inertial_sem_error_m"};
  for (std::size_t b = 0; b < abs.bins(); ++b) {
    bins.add_row({abs.bin_lo(b), abs.bin_hi(b), static_cast<std::int64_t>(abs.count(b)), abs.mean(b), abs.sem(b),
                  static_cast<std::int64_t>(inert.count(b)), inert.mean(b), inert.sem(b)});
  }
  const fs::path dir = a.out.empty() ? fs::path(gl.out) / "localize" : fs::path(a.out);
  write_text(dir / "events.csv", per.to_csv());
  write_text(dir / "binned.csv", bins.to_csv());
  std::cerr << "wrote " << per.rows.size() << " stamped events to " << dir.string() << "\n";
  return 0;
}

// -------------------------------------------------------------------- run ---

struct RunArgs {
  std::string scenario;
  bool check = false;
  std::optional<int> seeds;
  std::optional<double> duration;
};

int run_cmd(const RunArgs& a, const Global& gl) {
  ScenarioConfig cfg;
  if (!gl.config.empty()) {
    cfg = load_scenario(gl.config);
  } else if (!a.scenario.empty()) {
    cfg = find_scenario(a.scenario, scenario_dirs());
  } else {
    throw ValidationError("run", "give a scenario name or --config <file>");
  }
  RunOptions opt;
  opt.seed_offset = gl.seed_offset;
  opt.seed_count = a.seeds;
  opt.duration_s = a.duration;
  const auto report = run_scenario(cfg, opt);
  const auto dir = write_report(report, gl.out);
  bool ok = true;
  for (const auto& c : report.checks) {
    std::cout << (c.passed ? "pass " : (c.gating ? "FAIL " : "info ")) << report.scenario << "." << c.id << ": "
              << format_number(c.value) << " (expected " << c.expected << ")\n";
    if (c.gating && !c.passed) ok = false;
  }
  std::cout << "wrote " << dir.string() << " in " << format_number(report.runtime_s) << " s\n";
  return a.check && !ok ? 1 : 0;
}

int compare_cmd(const std::string& a, const std::string& b) {
  const auto ra = read_report(a);
  const auto rb = read_report(b);
  const auto result = compare_report(ra, rb);
  std::cout << result.summary();
  return result.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"THz in-body nanonetwork channel, flow and localization simulator"};
  app.set_version_flag("--version", std::string(NANOLOC_VERSION));
  app.require_subcommand(1);
  app.fallthrough();
  Global gl;
  app.add_option("--config", gl.config, "Scenario JSON file for `run`")->check(CLI::ExistingFile);
  app.add_option("--out", gl.out, "Output directory")->capture_default_str();
  app.add_option("--seed-offset", gl.seed_offset, "Added to every seed")->capture_default_str();

  auto* channel = app.add_subcommand("channel", "Channel model utilities")->require_subcommand(1);
  SweepArgs sweep;
  auto* sw = channel->add_subcommand("sweep", "Loss, power, noise and capacity over frequency");
  sw->add_option("--tissues", sweep.tissues, "Tissue parameter file")->check(CLI::ExistingFile);
  sw->add_option("--stack", sweep.stack, "Layer stack file")->check(CLI::ExistingFile);
  sw->add_option("--link", sweep.config, "JSON with `link` and `channel` objects")->check(CLI::ExistingFile);
  sw->add_option("--f-min", sweep.f_min, "Band start, Hz")->capture_default_str();
  sw->add_option("--f-max", sweep.f_max, "Band end, Hz")->capture_default_str();
  sw->add_option("--delta-f", sweep.delta_f, "Sub-band width, Hz")->capture_default_str();
  sw->add_option("--step", sweep.step, "Row spacing, Hz (default delta-f)");
  sw->add_option("--p-t", sweep.p_t, "Transmit power, W")->capture_default_str();
  sw->add_option("--g-t", sweep.g_t, "Transmit gain, linear")->capture_default_str();
  sw->add_option("--g-r", sweep.g_r, "Receive gain, linear")->capture_default_str();
  sw->add_option("--t0", sweep.t0, "Reference temperature, K")->capture_default_str();
  sw->add_option("--spreading", sweep.spreading, "per_layer | total_distance")->capture_default_str();
  sw->add_option("--absorption-wavelength", sweep.absorption, "effective | vacuum")->capture_default_str();
  sw->add_option("-o,--csv", sweep.out, "CSV file, - for stdout")->capture_default_str();

  auto* sim = app.add_subcommand("simulate", "Monte-Carlo simulations")->require_subcommand(1);
  TrajArgs traj;
  auto* st = sim->add_subcommand("trajectory", "One sensor trajectory and the events it passes");
  st->add_option("--graph", traj.graph, "Vessel graph file")->check(CLI::ExistingFile)->capture_default_str();
  st->add_option("--inject", traj.inject, "Injection segment id or name");
  st->add_option("--duration", traj.duration, "Simulated time, s")->capture_default_str();
  st->add_option("--dt", traj.dt, "Step, s")->capture_default_str();
  st->add_option("--seed", traj.seed, "Seed")->capture_default_str();
  st->add_option("--events", traj.events, "Event JSON file or a count to scatter");
  st->add_option("--dir", traj.out, "Output directory (default <out>/trajectory)");

  VisitArgs visits;
  auto* sv = sim->add_subcommand("visits", "Intervals between consecutive anchor visits");
  sv->add_option("--graph", visits.graph, "Vessel graph file")->check(CLI::ExistingFile)->capture_default_str();
  sv->add_option("--anchors", visits.anchors, "paper20 or an anchor layout file")->capture_default_str();
  sv->add_option("--inject", visits.inject, "Injection segment id or name");
  sv->add_option("--gate", visits.gate, "proximity | link_budget")->capture_default_str();
  sv->add_option("--seeds", visits.seeds, "Number of seeds")->capture_default_str();
  sv->add_option("--duration", visits.duration, "Simulated time per seed, s")->capture_default_str();
  sv->add_option("--dt", visits.dt, "Step, s")->capture_default_str();
  sv->add_option("--window", visits.window, "Interval window, s")->capture_default_str();
  sv->add_option("--dir", visits.out, "Output directory (default <out>/visits)");

  LocArgs loc;
  auto* sl = sim->add_subcommand("localize", "Event localization error against distance since reset");
  sl->add_option("--graph", loc.graph, "Vessel graph file")->check(CLI::ExistingFile)->capture_default_str();
  sl->add_option("--anchors", loc.anchors, "paper20 or an anchor layout file")->capture_default_str();
  sl->add_option("--events", loc.events, "Event JSON file or a count to scatter");
  sl->add_option("--imu-spec", loc.imu_spec, "IMU spec JSON")->check(CLI::ExistingFile);
  sl->add_option("--inject", loc.inject, "Injection segment id or name");
  sl->add_option("--gate", loc.gate, "proximity | link_budget")->capture_default_str();
  sl->add_option("--seeds", loc.seeds, "Number of seeds")->capture_default_str();
  sl->add_option("--duration", loc.duration, "Simulated time per seed, s")->capture_default_str();
  sl->add_option("--dt", loc.dt, "Step, s")->capture_default_str();
  sl->add_option("--bin-width", loc.bin_width, "Distance bin width, m")->capture_default_str();
  sl->add_flag("--enable-vessel-constraint", loc.vessel_constraint, "Snap the estimate toward the nearest vessel");
  sl->add_option("--constraint-std", loc.constraint_std, "Vessel constraint std, m")->capture_default_str();
  sl->add_option("--dir", loc.out, "Output directory (default <out>/localize)");

  RunArgs run;
  auto* rc = app.add_subcommand("run", "Run a scenario and write <out>/<scenario>/");
  rc->add_option("scenario", run.scenario, "Scenario name or file");
  rc->add_flag("--check", run.check, "Exit nonzero when a gating check fails");
  rc->add_option("--seeds", run.seeds, "Keep only the first n seeds");
  rc->add_option("--duration", run.duration, "Override simulated duration, s");

  std::string cmp_a, cmp_b;
  auto* cc = app.add_subcommand("compare", "Compare a report against a baseline");
  cc->add_option("report", cmp_a, "Report directory or report.json")->required();
  cc->add_option("baseline", cmp_b, "Baseline directory or report.json")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (sw->parsed()) return channel_sweep(sweep);
    if (st->parsed()) return simulate_trajectory(traj, gl);
    if (sv->parsed()) return simulate_visits_cmd(visits, gl);
    if (sl->parsed()) return simulate_localize(loc, gl);
    if (rc->parsed()) return run_cmd(run, gl);
    if (cc->parsed()) return compare_cmd(cmp_a, cmp_b);
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
