#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "nanoloc/errors.hpp"
#include "nanoloc/experiments.hpp"

namespace nanoloc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> kKinds = {"absorption",      "losses",        "backscatter_power", "capacity",
                                      "visited_vessels", "anchor_visits", "localization"};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string(), "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), e.what());
  }
}

// Every file a scenario document may reference, as JSON pointers.
std::vector<std::string> referenced_paths(const json& doc) {
  std::vector<std::string> out;
  for (const char* key : {"tissues", "graph", "stack"}) {
    if (doc.contains(key)) out.push_back(doc[key].get<std::string>());
  }
  if (doc.contains("stacks")) {
    for (const auto& [name, path] : doc["stacks"].items()) out.push_back(path.get<std::string>());
  }
  if (doc.contains("anchors") && doc["anchors"].is_string() && doc["anchors"].get<std::string>() != "paper20") {
    out.push_back(doc["anchors"].get<std::string>());
  }
  if (doc.contains("events") && doc["events"].is_string()) out.push_back(doc["events"].get<std::string>());
  return out;
}

struct Resources {
  TissueLibrary tissues = default_tissues();
  std::map<std::string, LayerStack> stacks;
  std::optional<VesselGraph> graph;
  std::vector<Anchor> anchors;
  std::vector<std::string> warnings;
};

Resources load_resources(const ScenarioConfig& cfg) {
  Resources r;
  const auto& doc = cfg.doc;
  if (doc.contains("tissues")) r.tissues = TissueLibrary::load(cfg.resolve(doc["tissues"]));
  if (doc.contains("stacks")) {
    for (const auto& [name, path] : doc["stacks"].items()) {
      r.stacks.emplace(name, LayerStack::load(cfg.resolve(path.get<std::string>()), r.tissues));
    }
  }
  if (doc.contains("stack")) {
    r.stacks.insert_or_assign("default", LayerStack::load(cfg.resolve(doc["stack"]), r.tissues));
  }
  if (!r.stacks.count("default")) r.stacks.emplace("default", default_stack(r.tissues));
  if (doc.contains("graph")) r.graph = VesselGraph::load(cfg.resolve(doc["graph"]));
  if (doc.contains("anchors")) {
    if (!r.graph) throw ValidationError(cfg.name + ".anchors", "anchors need a graph");
    Placement p;
    if (doc["anchors"].is_string() && doc["anchors"].get<std::string>() == "paper20") {
      p = place_anchors("paper20", *r.graph, r.stacks.at("default"));
    } else if (doc["anchors"].is_string()) {
      p = load_anchors(cfg.resolve(doc["anchors"]), *r.graph, r.stacks);
    } else {
      p = place_anchors(doc["anchors"], *r.graph, r.stacks);
    }
    r.anchors = std::move(p.anchors);
    r.warnings = std::move(p.warnings);
  }
  return r;
}

std::vector<std::uint64_t> seeds_of(const json& doc, const RunOptions& opt) {
  std::vector<std::uint64_t> seeds;
  if (!doc.contains("seeds")) {
    seeds.push_back(1);
  } else if (doc["seeds"].is_array()) {
    seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
  } else {
    const auto first = doc["seeds"].value("first", std::uint64_t{1});
    const auto count = doc["seeds"].at("count").get<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) seeds.push_back(first + i);
  }
  if (opt.seed_count && *opt.seed_count >= 0 && static_cast<std::size_t>(*opt.seed_count) < seeds.size()) {
    seeds.resize(*opt.seed_count);
  }
  for (auto& s : seeds) s += opt.seed_offset;
  return seeds;
}

double duration_of(const json& doc, const RunOptions& opt) {
  return opt.duration_s ? *opt.duration_s : doc.at("duration_s").get<double>();
}

int injection_of(const json& doc, const VesselGraph& graph) {
  if (!doc.contains("injection")) return graph.injection_points().front();
  const auto& j = doc["injection"];
  if (j.is_number_integer()) return j.get<int>();
  if (auto id = graph.find_by_name(j.get<std::string>())) return *id;
  throw ValidationError("injection", "no segment named '" + j.get<std::string>() + "'");
}

CommSettings comm_of(const json& doc) {
  CommSettings c;
  if (doc.contains("link")) c.link = link_params_from_json(doc["link"]);
  if (doc.contains("channel")) c.channel = channel_options_from_json(doc["channel"]);
  if (doc.contains("comm")) {
    const auto& j = doc["comm"];
    c.carrier_hz = j.value("carrier_hz", c.carrier_hz);
    c.sensitivity.w_per_rt_hz = j.value("sensitivity_w_per_rt_hz", c.sensitivity.w_per_rt_hz);
    c.sensitivity.bandwidth_hz = j.value("sensitivity_bandwidth_hz", c.sensitivity.bandwidth_hz);
    if (j.contains("contact_gate")) c.gate = parse_contact_gate(j["contact_gate"].get<std::string>());
  }
  return c;
}

std::vector<double> grid_of(const json& j) {
  if (j.is_array()) return j.get<std::vector<double>>();
  return frequency_grid(j.at("from").get<double>(), j.at("to").get<double>(), j.at("step").get<double>());
}

Table make_table(const ScenarioConfig& cfg, const std::string& name, const std::string& analog,
                 std::vector<std::string> columns) {
  Table t;
  t.name = name;
  t.analog = analog;
  t.columns = std::move(columns);
  if (cfg.doc.contains("tolerances") && cfg.doc["tolerances"].contains(name)) {
    t.tolerance = tolerance_from_json(cfg.doc["tolerances"][name]);
  }
  return t;
}

std::string range_text(double lo, double hi) {
  return "[" + format_number(lo) + ", " + format_number(hi) + "]";
}

Check range_check(const std::string& id, const std::string& description, double value, double lo, double hi,
                  bool gating = true) {
  return {id, description, value >= lo && value <= hi, gating, value, "in " + range_text(lo, hi)};
}

// ---------------------------------------------------------------- channel ---

void run_absorption(const ScenarioConfig& cfg, const Resources& res, MetricsReport& rep) {
  const auto& doc = cfg.doc;
  const auto freqs = grid_of(doc.at("frequency_hz"));
  const auto names = doc.value("tissue_names", std::vector<std::string>{"blood", "dermis", "epidermis"});
  const auto wl = parse_absorption_wavelength(doc.value("absorption_wavelength", std::string("effective")));
  auto t = make_table(cfg, "absorption_coefficients", doc.value("analog", ""),
                      {"frequency_hz", "tissue", "eps_real", "eps_imag", "n_real", "n_imag", "lambda_g_m",
                       "mu_abs_per_m"});
  long violations = 0;
  double min_ratio = std::numeric_limits<double>::infinity();
  for (double f : freqs) {
    std::map<std::string, double> mu;
    for (const auto& name : names) {
      const auto o = optical_properties(res.tissues.at(name), f, wl);
      mu[name] = o.mu_abs;
      t.add_row({f, name, o.eps_r.real(), o.eps_r.imag(), o.n_real, o.n_imag, o.lambda_g, o.mu_abs});
    }
    if (mu.count("blood")) {
      for (const auto& [name, m] : mu) {
        if (name == "blood") continue;
        min_ratio = std::min(min_ratio, mu["blood"] / m);
        if (!(mu["blood"] > m)) ++violations;
      }
    }
  }
  rep.tables.push_back(std::move(t));
  if (doc.value("check_blood_dominates", true)) {
    rep.checks.push_back({"absorption_ordering", "blood absorbs more than dermis and epidermis at every grid frequency",
                          violations == 0, true, static_cast<double>(violations), "0 violating grid points"});
    rep.notes.push_back("smallest blood/skin absorption ratio on the grid: " + format_number(min_ratio));
  }
}

void run_losses(const ScenarioConfig& cfg, const Resources& res, MetricsReport& rep) {
  const auto& doc = cfg.doc;
  const double f = doc.at("frequency_hz").get<double>();
  const auto opts = doc.contains("channel") ? channel_options_from_json(doc["channel"]) : ChannelOptions{};
  const auto distances = grid_of(doc.at("distance_m"));
  const auto names = doc.value("tissue_names", std::vector<std::string>{"blood", "dermis", "epidermis"});
  auto layer = make_table(cfg, "layer_losses", doc.value("analog", ""),
                          {"tissue", "distance_m", "loss_spread_db", "loss_abs_db", "loss_total_db"});
  for (const auto& name : names) {
    for (double d : distances) {
      const auto l = path_loss_layer({res.tissues.at(name), d}, f, d, opts);
      layer.add_row({name, d, l.spread_db, l.abs_db, l.total_db()});
    }
  }
  const auto& stack = res.stacks.at("default");
  auto st = make_table(cfg, "stack_losses", "stacked epidermis, dermis and blood",
                       {"depth_m", "loss_spread_db", "loss_abs_db", "loss_total_db"});
  for (double d : distances) {
    if (d > stack.total_thickness() + 1e-12) continue;
    const auto l = path_loss_stack(stack.truncated(d), f, opts);
    st.add_row({d, l.spread_db, l.abs_db, l.total_db()});
  }
  const auto full = path_loss_stack(stack, f, opts);
  rep.checks.push_back({"absorption_dominance",
                        "absorption loss exceeds spreading loss through the full stack at " + format_number(f) + " Hz",
                        full.abs_db > full.spread_db, true, full.abs_db - full.spread_db, "abs - spread > 0 dB"});
  rep.notes.push_back("full stack: spreading " + format_number(full.spread_db) + " dB, absorption " +
                      format_number(full.abs_db) + " dB");
  if (doc.contains("goldens")) {
    const double tol = doc.value("golden_tolerance_db", 1e-6);
    for (const auto& g : doc["goldens"]) {
      const auto name = g.at("tissue").get<std::string>();
      const double d = g.at("distance_m").get<double>();
      const auto l = path_loss_layer({res.tissues.at(name), d}, f, d, opts);
      const double dev = std::max(std::abs(l.spread_db - g.at("loss_spread_db").get<double>()),
                                  std::abs(l.abs_db - g.at("loss_abs_db").get<double>()));
      rep.checks.push_back({"golden_" + name + "_" + format_number(d * 1e3) + "mm",
                            name + " layer losses match the closed-form reference", dev <= tol, true, dev,
                            "<= " + format_number(tol) + " dB"});
    }
  }
  rep.tables.push_back(std::move(layer));
  rep.tables.push_back(std::move(st));
}

void run_backscatter_power(const ScenarioConfig& cfg, const Resources& res, MetricsReport& rep) {
  const auto& doc = cfg.doc;
  const auto comm = comm_of(doc);
  const auto& stack = res.stacks.at("default");
  const auto depths = grid_of(doc.at("depth_m"));
  auto sweep = make_table(cfg, "received_power", doc.value("analog", ""),
                          {"frequency_hz", "depth_m", "loss_total_db", "p_rb_dbw"});
  auto term = make_table(cfg, "terminal_power", "received power through the full stack",
                         {"frequency_hz", "p_rb_dbw", "target_dbw", "deviation_db"});
  for (const auto& target : doc.at("targets")) {
    const double f = target.at("frequency_hz").get<double>();
    for (double d : depths) {
      if (d > stack.total_thickness() + 1e-12) continue;
      const auto sub = stack.truncated(d);
      sweep.add_row({f, d, path_loss_stack(sub, f, comm.channel).total_db(),
                     backscatter_power(sub, comm.link, f, comm.channel)});
    }
    const double p = backscatter_power(stack, comm.link, f, comm.channel);
    const double want = target.at("p_rb_dbw").get<double>();
    const double tol = target.value("tolerance_db", 4.0);
    term.add_row({f, p, want, p - want});
    rep.checks.push_back({"terminal_power_" + format_number(f / 1e12) + "THz",
                          "received backscatter power at full depth, " + format_number(f / 1e12) + " THz",
                          std::abs(p - want) <= tol, true, p, format_number(want) + " +/- " + format_number(tol) + " dB"});
  }
  rep.notes.push_back("receiver sensitivity threshold: " + format_number(comm.sensitivity.threshold_dbw()) + " dBW");
  rep.tables.push_back(std::move(sweep));
  rep.tables.push_back(std::move(term));
}

void run_capacity(const ScenarioConfig& cfg, const Resources& res, MetricsReport& rep, unsigned workers) {
  const auto& doc = cfg.doc;
  const auto comm = comm_of(doc);
  const auto& stack = res.stacks.at("default");
  std::vector<double> depths;
  for (double d : grid_of(doc.at("depth_m"))) {
    if (d <= stack.total_thickness() + 1e-12) depths.push_back(d);
  }
  struct Row {
    CapacityResult fwd, back;
  };
  std::vector<Row> rows(depths.size());
  parallel_for(
      depths.size(),
      [&](std::size_t i) {
        const auto sub = stack.truncated(depths[i]);
        rows[i] = {channel_capacity(sub, comm.link, LinkDirection::kForward, comm.channel),
                   channel_capacity(sub, comm.link, LinkDirection::kBackward, comm.channel)};
      },
      workers);
  auto t = make_table(cfg, "capacity", doc.value("analog", ""),
                      {"depth_m", "forward_bps", "backward_bps", "subbands", "capped_subbands_forward",
                       "capped_subbands_backward"});
  for (std::size_t i = 0; i < depths.size(); ++i) {
    t.add_row({depths[i], rows[i].fwd.bits_per_second, rows[i].back.bits_per_second,
               static_cast<std::int64_t>(rows[i].fwd.subbands), static_cast<std::int64_t>(rows[i].fwd.capped_subbands),
               static_cast<std::int64_t>(rows[i].back.capped_subbands)});
  }
  const auto full_fwd = channel_capacity(stack, comm.link, LinkDirection::kForward, comm.channel);
  const auto full_back = channel_capacity(stack, comm.link, LinkDirection::kBackward, comm.channel);
  const auto& ch = doc.at("checks");
  rep.checks.push_back(range_check("forward_capacity", "forward capacity through the full stack",
                                   full_fwd.bits_per_second, ch.at("forward_bps")[0], ch.at("forward_bps")[1]));
  rep.checks.push_back(range_check("backward_capacity", "backscattered capacity through the full stack",
                                   full_back.bits_per_second, ch.at("backward_bps")[0], ch.at("backward_bps")[1]));
  rep.tables.push_back(std::move(t));
}

// ------------------------------------------------------------ vasculature ---

void run_visited_vessels(const ScenarioConfig& cfg, const Resources& res, const RunOptions& opt,
                         MetricsReport& rep) {
  const auto& doc = cfg.doc;
  const auto& graph = *res.graph;
  const auto seeds = seeds_of(doc, opt);
  const double duration = duration_of(doc, opt);
  const double dt = doc.value("dt_s", 0.01);
  const double timeline_every = doc.value("timeline_every_s", 1.0);
  const int inj = injection_of(doc, graph);
  struct Cell {
    std::unordered_map<int, long> entries;
    std::unordered_map<int, long> steps;
    std::vector<std::pair<double, int>> timeline;
  };
  std::vector<Cell> cells(seeds.size());
  parallel_for(
      seeds.size(),
      [&](std::size_t i) {
        auto& c = cells[i];
        auto rng = Rng::derive(seeds[i], "trajectory");
        int last = -1;
        long k = 0;
        const long every = std::max(1L, std::lround(timeline_every / dt));
        walk(graph, inj, duration, dt, rng, [&](const BnsState& s) {
          if (s.segment_id != last) ++c.entries[s.segment_id];
          last = s.segment_id;
          ++c.steps[s.segment_id];
          if (i == 0 && k % every == 0) c.timeline.emplace_back(s.sim_time, s.segment_id);
          ++k;
          return true;
        });
      },
      opt.workers);
  std::map<int, long> entries, steps;
  long total_steps = 0;
  for (const auto& c : cells) {
    for (const auto& [id, n] : c.entries) entries[id] += n;
    for (const auto& [id, n] : c.steps) {
      steps[id] += n;
      total_steps += n;
    }
  }
  auto t = make_table(cfg, "segment_visits", doc.value("analog", ""),
                      {"segment_id", "name", "region", "entries", "time_fraction"});
  for (const auto& s : graph.segments()) {
    t.add_row({static_cast<std::int64_t>(s.id), s.name, s.region, static_cast<std::int64_t>(entries[s.id]),
               static_cast<double>(steps[s.id]) / std::max(1L, total_steps)});
  }
  auto tl = make_table(cfg, "visit_timeline", "segment occupied over time, first seed", {"t_s", "segment_id"});
  for (const auto& [time, id] : cells.front().timeline) tl.add_row({time, static_cast<std::int64_t>(id)});

  const auto core = doc.value("core_regions", std::vector<std::string>{"heart", "lung"});
  const auto ext = doc.value("extremity_regions", std::vector<std::string>{"arm", "hand", "leg", "foot"});
  long min_core = std::numeric_limits<long>::max(), max_ext = 0;
  for (const auto& s : graph.segments()) {
    if (std::find(core.begin(), core.end(), s.region) != core.end()) min_core = std::min(min_core, entries[s.id]);
    if (std::find(ext.begin(), ext.end(), s.region) != ext.end()) max_ext = std::max(max_ext, entries[s.id]);
  }
  rep.checks.push_back({"core_visited_more", "every heart/lung segment is entered more often than any extremity segment",
                        min_core > max_ext, true, static_cast<double>(min_core),
                        "> " + std::to_string(max_ext) + " (most-entered extremity segment)"});
  rep.tables.push_back(std::move(t));
  rep.tables.push_back(std::move(tl));
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * (v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - lo) * (v[hi] - v[lo]);
}

void run_anchor_visits(const ScenarioConfig& cfg, const Resources& res, const RunOptions& opt, MetricsReport& rep) {
  const auto& doc = cfg.doc;
  const auto& graph = *res.graph;
  const auto seeds = seeds_of(doc, opt);
  const double duration = duration_of(doc, opt);
  const double dt = doc.value("dt_s", 0.01);
  const int inj = injection_of(doc, graph);
  const auto comm = comm_of(doc);
  std::vector<VisitStats> cells(seeds.size());
  parallel_for(
      seeds.size(), [&](std::size_t i) { cells[i] = simulate_visits(graph, res.anchors, comm, inj, duration, dt, seeds[i]); },
      opt.workers);

  auto raw = make_table(cfg, "visit_intervals", doc.value("analog", ""), {"seed", "interval_s"});
  raw.tolerance.skip = true;
  std::vector<double> all;
  std::vector<double> per_seed_frac;
  const double window = doc.value("window_s", 10.0);
  double in_range = 0.0;
  long spells = 0;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    long le = 0;
    for (double v : cells[i].intervals) {
      raw.add_row({static_cast<std::int64_t>(seeds[i]), v});
      all.push_back(v);
      if (v <= window + 1e-9) ++le;
    }
    if (!cells[i].intervals.empty()) per_seed_frac.push_back(static_cast<double>(le) / cells[i].intervals.size());
    in_range += cells[i].in_range_time;
    spells += cells[i].in_range_spells;
  }
  const double frac = all.empty() ? 0.0
                                  : static_cast<double>(std::count_if(all.begin(), all.end(),
                                                                      [&](double v) { return v <= window + 1e-9; })) /
                                        all.size();
  const double max_iv = all.empty() ? 0.0 : *std::max_element(all.begin(), all.end());
  double frac_sem = std::nan("");
  if (per_seed_frac.size() > 1) {
    const double m = std::accumulate(per_seed_frac.begin(), per_seed_frac.end(), 0.0) / per_seed_frac.size();
    double ss = 0.0;
    for (double v : per_seed_frac) ss += (v - m) * (v - m);
    frac_sem = std::sqrt(ss / (per_seed_frac.size() - 1) / per_seed_frac.size());
  }
  const double mean_dwell = spells ? in_range / spells : 0.0;
  auto summary = make_table(cfg, "visit_summary", "visit-interval statistics over all seeds",
                            {"quantity", "value", "sem"});
  summary.add_row({std::string("intervals"), static_cast<double>(all.size()), std::nan("")});
  summary.add_row({std::string("fraction_le_window"), frac, frac_sem});
  summary.add_row({std::string("median_s"), quantile(all, 0.5), std::nan("")});
  summary.add_row({std::string("p95_s"), quantile(all, 0.95), std::nan("")});
  summary.add_row({std::string("max_s"), max_iv, std::nan("")});
  summary.add_row({std::string("mean_dwell_s"), mean_dwell, std::nan("")});

  const auto& ch = doc.at("checks");
  rep.checks.push_back(range_check("fraction_within_window",
                                   "fraction of consecutive anchor-visit intervals <= " + format_number(window) + " s",
                                   frac, ch.at("fraction_range")[0], ch.at("fraction_range")[1]));
  const double max_allowed = ch.value("max_interval_s", 120.0);
  rep.checks.push_back({"max_interval", "longest interval between consecutive anchor visits", max_iv <= max_allowed,
                        true, max_iv, "<= " + format_number(max_allowed) + " s"});
  if (ch.contains("torso_head_fraction_min")) {
    long core = 0;
    for (const auto& a : res.anchors) core += body_region(a.center) == BodyRegion::kTorsoHead;
    const double f = res.anchors.empty() ? 0.0 : static_cast<double>(core) / res.anchors.size();
    const double lo = ch["torso_head_fraction_min"].get<double>();
    rep.checks.push_back({"torso_head_anchors", "share of anchors over the torso and head", f >= lo, true, f,
                          ">= " + format_number(lo)});
  }
  // Payload airtime against the dwell under a patch; reported, never gating.
  const double airtime = doc.value("packet_bits", 256.0) / doc.value("payload_rate_bps", 1000.0);
  rep.checks.push_back({"payload_feasibility", "mean dwell inside a patch covers one packet airtime",
                        mean_dwell >= airtime, false, mean_dwell, ">= " + format_number(airtime) + " s"});
  for (const auto& w : res.warnings) rep.notes.push_back("placement warning: " + w);
  rep.tables.push_back(std::move(raw));
  rep.tables.push_back(std::move(summary));
}

// ---------------------------------------------------------- localization ---

struct GridEntry {
  std::string label;
  std::string panel;
  ImuSpec imu;
};

void run_localization(const ScenarioConfig& cfg, const Resources& res, const RunOptions& opt, MetricsReport& rep) {
  const auto& doc = cfg.doc;
  const auto& graph = *res.graph;
  const auto seeds = seeds_of(doc, opt);
  std::vector<GridEntry> grid;
  for (const auto& g : doc.at("imu_grid")) {
    grid.push_back({g.at("label").get<std::string>(), g.value("panel", ""), imu_spec_from_json(g.at("imu"))});
  }
  LocalizationConfig base;
  base.comm = comm_of(doc);
  base.duration = duration_of(doc, opt);
  base.dt = doc.value("dt_s", 0.01);
  base.injection = injection_of(doc, graph);
  const auto& ej = doc.value("estimator", json::object());
  base.estimator.vessel_constraint = ej.value("vessel_constraint", false);
  base.estimator.constraint_std = ej.value("constraint_std_m", base.estimator.constraint_std);
  base.estimator.reset_velocity_std = ej.value("reset_velocity_std_mps", base.estimator.reset_velocity_std);
  base.estimator.reset_attitude_std = ej.value("reset_attitude_std_rad", base.estimator.reset_attitude_std);
  base.constraint_every = ej.value("constraint_every_steps", 1);
  const std::vector<AnomalyEvent> events = doc.at("events").is_string()
                                               ? events_from_json(read_json(cfg.resolve(doc["events"])), graph)
                                               : events_from_json(doc["events"], graph);
  const auto& bj = doc.value("bins", json::object());
  const double lo = bj.value("lo_m", 0.0), hi = bj.value("hi_m", 1.0), width = bj.value("width_m", 0.025);

  struct Cell {
    BinnedStats abs{0, 1, 1}, inertial{0, 1, 1};
    long resets = 0, events = 0;
    double max_reset_error = 0.0;
  };
  const std::size_t n = grid.size() * seeds.size();
  std::vector<Cell> cells(n);
  parallel_for(
      n,
      [&](std::size_t idx) {
        const auto& g = grid[idx / seeds.size()];
        const auto seed = seeds[idx % seeds.size()];
        auto lc = base;
        lc.imu = g.imu;
        lc.estimator.accel_noise_std = g.imu.accel_noise_std;
        lc.estimator.gyro_noise_std = g.imu.gyro_noise_std;
        const auto run = simulate_localization(graph, res.anchors, events, lc, seed);
        Cell c{BinnedStats(lo, hi, width), BinnedStats(lo, hi, width), run.resets,
               static_cast<long>(run.stamped.size()), run.max_reset_error};
        for (const auto& s : run.stamped) c.abs.add(s.distance_since_reset_at_stamp, s.error_m);
        for (const auto& s : run.inertial) c.inertial.add(s.distance_since_reset_at_stamp, s.error_m);
        cells[idx] = std::move(c);
      },
      opt.workers);

  std::vector<BinnedStats> abs_curves, inert_curves;
  auto resets = make_table(cfg, "reset_summary", "anchor resets and stamped events per IMU setting",
                           {"label", "panel", "resets", "events", "max_reset_error_m"});
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    BinnedStats a(lo, hi, width), in(lo, hi, width);
    long r = 0, e = 0;
    double mre = 0.0;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& c = cells[gi * seeds.size() + si];
      a.add_cluster(c.abs);
      in.add_cluster(c.inertial);
      r += c.resets;
      e += c.events;
      mre = std::max(mre, c.max_reset_error);
    }
    abs_curves.push_back(a);
    inert_curves.push_back(in);
    resets.add_row({grid[gi].label, grid[gi].panel, static_cast<std::int64_t>(r), static_cast<std::int64_t>(e), mre});
  }

  auto curve_table = [&](const std::string& name, const std::string& analog, const std::vector<BinnedStats>& curves) {
    auto t = make_table(cfg, name, analog,
                        {"label", "panel", "accel_noise_std", "accel_bias", "gyro_noise_std", "gyro_bias", "bin_lo_m",
                         "bin_hi_m", "n", "mean_error_m", "sem_error_m"});
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      const auto& g = grid[gi];
      for (std::size_t b = 0; b < curves[gi].bins(); ++b) {
        t.add_row({g.label, g.panel, g.imu.accel_noise_std, g.imu.accel_bias.x(), g.imu.gyro_noise_std,
                   g.imu.gyro_bias.x(), curves[gi].bin_lo(b), curves[gi].bin_hi(b),
                   static_cast<std::int64_t>(curves[gi].count(b)), curves[gi].mean(b), curves[gi].sem(b)});
      }
    }
    return t;
  };
  rep.tables.push_back(curve_table("error_curves", doc.value("analog", ""), abs_curves));
  rep.tables.push_back(curve_table("inertial_error_curves",
                                   "error against the twin estimate reset to the true position", inert_curves));
  rep.tables.push_back(std::move(resets));

  // Shape checks. `metric` picks which curve family gates; the other one is
  // reported alongside without gating.
  const auto& ch = doc.value("checks", json::object());
  if (ch.empty()) return;
  const std::string metric = ch.value("metric", std::string("inertial"));
  const double rise_to = ch.value("rising_upto_m", 0.5);
  const double sem_factor = ch.value("sem_factor", 2.0);
  const auto default_label = ch.value("default_label", grid.front().label);
  const auto plateau = ch.value("plateau_m", std::vector<double>{0.75, 1.0});
  const auto plateau_range = ch.value("plateau_range_m", std::vector<double>{0.002, 0.005});
  const auto at_bin = ch.value("at_bin_m", std::vector<double>{0.475, 0.5});
  const double at_max = ch.value("at_bin_max_m", 0.002);
  const std::string ordering_panel = ch.value("ordering_panel", std::string("gyro_noise"));

  auto evaluate = [&](const std::vector<BinnedStats>& curves, const std::string& tag, bool gating) {
    // (a) non-decreasing up to rise_to, allowing a drop within the joint standard error.
    long drops = 0;
    double worst = 0.0;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      const auto& c = curves[gi];
      for (std::size_t b = 0; b + 1 < c.bins() && c.bin_hi(b + 1) <= rise_to + 1e-9; ++b) {
        const double m0 = c.mean(b), m1 = c.mean(b + 1);
        if (std::isnan(m0) || std::isnan(m1)) {
          ++drops;
          continue;
        }
        const double s0 = std::isnan(c.sem(b)) ? 0.0 : c.sem(b);
        const double s1 = std::isnan(c.sem(b + 1)) ? 0.0 : c.sem(b + 1);
        const double slack = sem_factor * std::hypot(s0, s1);
        if (m1 < m0 - slack) {
          ++drops;
          worst = std::max(worst, m0 - m1 - slack);
        }
      }
    }
    rep.checks.push_back({tag + "rising", "mean error non-decreasing over [0, " + format_number(rise_to * 1e3) +
                                              "] mm since reset, every IMU setting",
                          drops == 0, gating, static_cast<double>(drops), "0 significant drops"});
    // (b) ordering by gyro noise at every bin.
    std::vector<std::size_t> panel;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      if (grid[gi].panel == ordering_panel) panel.push_back(gi);
    }
    std::sort(panel.begin(), panel.end(),
              [&](auto a, auto b) { return grid[a].imu.gyro_noise_std < grid[b].imu.gyro_noise_std; });
    long disorder = 0;
    for (std::size_t p = 0; p + 1 < panel.size(); ++p) {
      const auto& c0 = curves[panel[p]];
      const auto& c1 = curves[panel[p + 1]];
      // Out of order means significantly lower, by the same joint-SEM slack as (a).
      for (std::size_t b = 0; b < c0.bins(); ++b) {
        const double s0 = std::isnan(c0.sem(b)) ? 0.0 : c0.sem(b);
        const double s1 = std::isnan(c1.sem(b)) ? 0.0 : c1.sem(b);
        if (!(c1.mean(b) >= c0.mean(b) - sem_factor * std::hypot(s0, s1))) ++disorder;
      }
    }
    rep.checks.push_back({tag + "ordered_by_gyro_noise", "no bin where a higher gyro noise curve is significantly lower",
                          disorder == 0 && panel.size() >= 2, gating, static_cast<double>(disorder),
                          "0 significantly out-of-order bins"});
    // (c) plateau and (d) error at the pinned bin, default setting.
    std::size_t def = 0;
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
      if (grid[gi].label == default_label) def = gi;
    }
    const auto& c = curves[def];
    double sum = 0.0;
    int bins = 0;
    double at_value = std::nan("");
    for (std::size_t b = 0; b < c.bins(); ++b) {
      if (c.bin_lo(b) >= plateau[0] - 1e-9 && c.bin_hi(b) <= plateau[1] + 1e-9 && !std::isnan(c.mean(b))) {
        sum += c.mean(b);
        ++bins;
      }
      if (std::abs(c.bin_lo(b) - at_bin[0]) < 1e-9) at_value = c.mean(b);
    }
    const double plateau_value = bins ? sum / bins : std::nan("");
    rep.checks.push_back(range_check(tag + "plateau",
                                     "mean error over [" + format_number(plateau[0] * 1e3) + ", " +
                                         format_number(plateau[1] * 1e3) + "] mm, default IMU",
                                     plateau_value, plateau_range[0], plateau_range[1], gating));
    rep.checks.push_back({tag + "error_at_500mm",
                          "mean error in the [" + format_number(at_bin[0] * 1e3) + ", " + format_number(at_bin[1] * 1e3) +
                              "] mm bin, default IMU",
                          at_value <= at_max, gating, at_value, "<= " + format_number(at_max) + " m"});
  };
  if (metric == "inertial") {
    evaluate(inert_curves, "", true);
    evaluate(abs_curves, "absolute_", false);
  } else {
    evaluate(abs_curves, "", true);
    evaluate(inert_curves, "inertial_", false);
  }
  // Doubling bias versus doubling noise, reported only.
  if (ch.contains("bias_vs_noise")) {
    for (const auto& pair : ch["bias_vs_noise"]) {
      auto find = [&](const std::string& label) {
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
          if (grid[gi].label == label) return gi;
        }
        throw ValidationError(cfg.name + ".checks.bias_vs_noise", "unknown label " + label);
      };
      const auto& curves = metric == "inertial" ? inert_curves : abs_curves;
      const auto& n0 = curves[find(pair.at("noise")[0])];
      const auto& n1 = curves[find(pair.at("noise")[1])];
      const auto& b0 = curves[find(pair.at("bias")[0])];
      const auto& b1 = curves[find(pair.at("bias")[1])];
      long violations = 0;
      for (std::size_t b = 0; b < n0.bins(); ++b) {
        if (!(std::abs(b1.mean(b) - b0.mean(b)) < std::abs(n1.mean(b) - n0.mean(b)))) ++violations;
      }
      rep.checks.push_back({"bias_vs_noise_" + pair.value("name", std::string("pair")),
                            "doubling bias moves the curve less than doubling noise, every bin", violations == 0,
                            false, static_cast<double>(violations), "0 bins"});
    }
  }
  for (const auto& w : res.warnings) rep.notes.push_back("placement warning: " + w);
}

}  // namespace

// ------------------------------------------------------------- config io ---

fs::path ScenarioConfig::resolve(const std::string& relative) const {
  const fs::path p(relative);
  return p.is_absolute() ? p : base_dir / p;
}

ScenarioConfig scenario_from_json(const json& doc, const fs::path& base_dir) {
  ScenarioConfig cfg;
  cfg.doc = doc;
  cfg.base_dir = base_dir;
  if (!doc.is_object()) throw ValidationError("scenario", "document must be an object");
  if (!doc.contains("name") || !doc["name"].is_string()) throw ValidationError("scenario.name", "required string");
  cfg.name = doc["name"].get<std::string>();
  if (!doc.contains("kind") || !kKinds.count(doc["kind"].get<std::string>())) {
    throw ValidationError(cfg.name + ".kind", "missing or unknown scenario kind");
  }
  cfg.kind = doc["kind"].get<std::string>();
  for (const auto& rel : referenced_paths(doc)) {
    if (!fs::exists(cfg.resolve(rel))) throw ValidationError(cfg.name, "referenced file does not exist: " + rel);
  }
  const bool simulated = cfg.kind == "visited_vessels" || cfg.kind == "anchor_visits" || cfg.kind == "localization";
  if (simulated) {
    if (!doc.contains("graph")) throw ValidationError(cfg.name + ".graph", "required");
    if (!doc.contains("duration_s") || !(doc["duration_s"].get<double>() > 0.0)) {
      throw ValidationError(cfg.name + ".duration_s", "must be > 0");
    }
    if (doc.contains("seeds")) {
      const auto& s = doc["seeds"];
      const bool empty = s.is_array() ? s.empty() : s.value("count", 0) <= 0;
      if (empty) throw ValidationError(cfg.name + ".seeds", "must be non-empty");
    }
  }
  if ((cfg.kind == "anchor_visits" || cfg.kind == "localization") && !doc.contains("anchors")) {
    throw ValidationError(cfg.name + ".anchors", "required");
  }
  return cfg;
}

ScenarioConfig load_scenario(const fs::path& path) {
  auto cfg = scenario_from_json(read_json(path), path.parent_path());
  cfg.source = path;
  return cfg;
}

ScenarioConfig find_scenario(const std::string& name_or_path, const std::vector<fs::path>& scenario_dirs) {
  if (fs::exists(name_or_path) && fs::is_regular_file(name_or_path)) return load_scenario(name_or_path);
  for (const auto& dir : scenario_dirs) {
    const auto p = dir / (name_or_path + ".json");
    if (fs::exists(p)) return load_scenario(p);
  }
  throw ValidationError(name_or_path, "no scenario file found");
}

// ----------------------------------------------------------------- report ---

bool MetricsReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed || !c.gating; });
}

const Table& MetricsReport::table(const std::string& name) const {
  for (const auto& t : tables) {
    if (t.name == name) return t;
  }
  throw std::out_of_range("report has no table " + name);
}

const Check* MetricsReport::check(const std::string& id) const {
  for (const auto& c : checks) {
    if (c.id == id) return &c;
  }
  return nullptr;
}

json MetricsReport::to_json() const {
  json tj = json::array();
  for (const auto& t : tables) tj.push_back(t.to_json());
  json cj = json::array();
  for (const auto& c : checks) {
    cj.push_back({{"id", c.id},
                  {"description", c.description},
                  {"passed", c.passed},
                  {"gating", c.gating},
                  {"value", std::isfinite(c.value) ? json(c.value) : json(format_number(c.value))},
                  {"expected", c.expected}});
  }
  return {{"scenario", scenario}, {"kind", kind}, {"fingerprint", fingerprint},
          {"checks", cj},         {"notes", notes}, {"tables", tj}};
}

MetricsReport MetricsReport::from_json(const json& doc) {
  MetricsReport r;
  try {
    r.scenario = doc.at("scenario").get<std::string>();
    r.kind = doc.value("kind", "");
    r.fingerprint = doc.value("fingerprint", json::object());
    for (const auto& c : doc.value("checks", json::array())) {
      Check k;
      k.id = c.at("id").get<std::string>();
      k.description = c.value("description", "");
      k.passed = c.value("passed", false);
      k.gating = c.value("gating", true);
      k.value = c.at("value").is_number() ? c["value"].get<double>() : std::nan("");
      k.expected = c.value("expected", "");
      r.checks.push_back(std::move(k));
    }
    r.notes = doc.value("notes", std::vector<std::string>{});
    for (const auto& t : doc.at("tables")) r.tables.push_back(Table::from_json(t));
  } catch (const json::exception& e) {
    throw ValidationError("report", e.what());
  }
  return r;
}

std::string MetricsReport::summary_markdown() const {
  std::ostringstream os;
  os << "# " << scenario << "\n\n";
  os << "kind: " << kind << "  \n";
  os << "config hash: " << fingerprint.value("config_hash", "") << "  \n";
  os << "version: " << fingerprint.value("version", "") << "\n\n";
  os << "## Checks\n\n| check | result | value | expected |\n|---|---|---|---|\n";
  for (const auto& c : checks) {
    os << "| " << c.id << " | " << (c.passed ? "pass" : (c.gating ? "FAIL" : "fail (informational)")) << " | "
       << format_number(c.value) << " | " << c.expected << " |\n";
  }
  os << "\n## Tables\n\n";
  for (const auto& t : tables) os << "- `" << t.name << ".csv` (" << t.rows.size() << " rows): " << t.analog << "\n";
  if (!notes.empty()) {
    os << "\n## Notes\n\n";
    for (const auto& n : notes) os << "- " << n << "\n";
  }
  return os.str();
}

MetricsReport run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricsReport rep;
  rep.scenario = config.name;
  rep.kind = config.kind;

  // Fingerprint: config document, every referenced file, seeds and code version.
  std::uint64_t h = fnv1a64(config.doc.dump());
  for (const auto& rel : referenced_paths(config.doc)) h = fnv1a64(read_file(config.resolve(rel)), h);
  h = fnv1a64(NANOLOC_VERSION, h);
  json run_opts = {{"seed_offset", options.seed_offset}};
  if (options.seed_count) run_opts["seed_count"] = *options.seed_count;
  if (options.duration_s) run_opts["duration_s"] = *options.duration_s;
  h = fnv1a64(run_opts.dump(), h);
  rep.fingerprint = {{"config_hash", hex64(h)}, {"version", NANOLOC_VERSION}, {"run_options", run_opts}};
  const bool simulated = config.doc.contains("graph");
  if (simulated) rep.fingerprint["seeds"] = seeds_of(config.doc, options);

  const auto res = load_resources(config);
  const auto& k = config.kind;
  if (k == "absorption") {
    run_absorption(config, res, rep);
  } else if (k == "losses") {
    run_losses(config, res, rep);
  } else if (k == "backscatter_power") {
    run_backscatter_power(config, res, rep);
  } else if (k == "capacity") {
    run_capacity(config, res, rep, options.workers);
  } else if (k == "visited_vessels") {
    run_visited_vessels(config, res, options, rep);
  } else if (k == "anchor_visits") {
    run_anchor_visits(config, res, options, rep);
  } else if (k == "localization") {
    run_localization(config, res, options, rep);
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

fs::path write_report(const MetricsReport& report, const fs::path& out_root) {
  fs::create_directories(out_root);
  const fs::path final_dir = out_root / report.scenario;
  std::random_device rd;
  const fs::path tmp = out_root / ("." + report.scenario + ".tmp-" + hex64((std::uint64_t{rd()} << 32) | rd()));
  try {
    fs::create_directories(tmp);
    auto write = [&](const fs::path& p, const std::string& content) {
      std::ofstream out(p, std::ios::binary);
      out << content;
      if (!out) throw std::runtime_error("write failed: " + p.string());
    };
    for (const auto& t : report.tables) write(tmp / (t.name + ".csv"), t.to_csv());
    write(tmp / "summary.md", report.summary_markdown());
    write(tmp / "report.json", report.to_json().dump(1) + "\n");
    if (fs::exists(final_dir)) fs::remove_all(final_dir);
    fs::rename(tmp, final_dir);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
  return final_dir;
}

MetricsReport read_report(const fs::path& report_dir) {
  const fs::path p = fs::is_directory(report_dir) ? report_dir / "report.json" : report_dir;
  return MetricsReport::from_json(read_json(p));
}

// ---------------------------------------------------------------- compare ---

bool CompareResult::ok() const {
  return std::none_of(deviations.begin(), deviations.end(), [](const Deviation& d) { return d.exceeded; });
}

std::string CompareResult::summary() const {
  std::ostringstream os;
  for (const auto& d : deviations) {
    os << (d.exceeded ? "EXCEEDED " : "ok       ") << d.table << " " << d.cell << ": abs " << format_number(d.abs_dev)
       << ", rel " << format_number(d.rel_dev) << ", allowed " << format_number(d.allowed) << "\n";
  }
  if (unjudged) os << unjudged << " cells without a standard error on both sides were not compared\n";
  os << (ok() ? "reports agree within tolerance\n" : "reports differ beyond tolerance\n");
  return os.str();
}

CompareResult compare_report(const MetricsReport& report, const MetricsReport& baseline) {
  if (report.scenario != baseline.scenario) {
    throw ValidationError("compare", "scenario names differ: " + report.scenario + " vs " + baseline.scenario);
  }
  CompareResult result;
  for (const auto& base : baseline.tables) {
    const Table* cur = nullptr;
    for (const auto& t : report.tables) {
      if (t.name == base.name) cur = &t;
    }
    if (!cur) throw ValidationError("compare." + base.name, "table missing from report");
    if (cur->columns != base.columns) throw ValidationError("compare." + base.name, "column sets differ");
    const auto& tol = base.tolerance;
    if (tol.skip) continue;
    if (cur->rows.size() != base.rows.size()) throw ValidationError("compare." + base.name, "row counts differ");
    Deviation worst{base.name, "", 0.0, 0.0, 0.0, false};
    auto consider = [&](Deviation d) {
      if (d.exceeded) result.deviations.push_back(d);
      if (d.abs_dev > worst.abs_dev || (d.exceeded && !worst.exceeded)) worst = d;
    };
    for (std::size_t r = 0; r < base.rows.size(); ++r) {
      for (std::size_t c = 0; c < base.columns.size(); ++c) {
        const auto& a = cur->rows[r][c];
        const auto& b = base.rows[r][c];
        const std::string cell = "row " + std::to_string(r + 1) + " column " + base.columns[c];
        if (std::holds_alternative<std::string>(b) || std::holds_alternative<std::string>(a)) {
          if (a != b) throw ValidationError("compare." + base.name, "key mismatch at " + cell);
          continue;
        }
        if (tol.statistical && base.columns[c] != tol.mean_column) continue;
        const double va = cur->number(r, base.columns[c]);
        const double vb = base.number(r, base.columns[c]);
        if (std::isnan(va) && std::isnan(vb)) continue;
        Deviation d{base.name, cell, std::abs(va - vb), 0.0, 0.0, false};
        d.rel_dev = d.abs_dev / std::max(std::abs(vb), 1e-300);
        if (tol.statistical) {
          const double sa = cur->number(r, tol.sem_column), sb = base.number(r, tol.sem_column);
          // No spread estimate on one side (a single seed reached the bin).
          if (std::isnan(sa) || std::isnan(sb)) {
            ++result.unjudged;
            continue;
          }
          d.allowed = tol.k * std::hypot(sa, sb) + tol.abs;
          d.exceeded = !(d.abs_dev <= d.allowed);
        } else {
          d.allowed = std::max(tol.abs, tol.rel * std::abs(vb));
          d.exceeded = !(d.abs_dev <= tol.abs || d.rel_dev <= tol.rel);
        }
        consider(d);
      }
    }
    if (!worst.exceeded) result.deviations.push_back(worst);
  }
  return result;
}

}  // namespace nanoloc
