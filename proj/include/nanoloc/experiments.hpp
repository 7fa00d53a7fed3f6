#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nanoloc/anchors.hpp"
#include "nanoloc/channel.hpp"
#include "nanoloc/imu.hpp"
#include "nanoloc/table.hpp"
#include "nanoloc/vasculature.hpp"

namespace nanoloc {

/// Worker count: NANOLOC_THREADS if set, else the hardware concurrency.
unsigned worker_count();

/// Runs task(i) for i in [0, n) on a pool of workers. Results must be written
/// to per-index slots; the first exception is rethrown after all workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task, unsigned workers = 0);

/// Detects anchor-visit starts: the step at which the sensor enters the
/// region of an anchor it was outside of on the previous step.
class AnchorTracker {
 public:
  AnchorTracker(const VesselGraph& graph, const std::vector<Anchor>& anchors, const CommSettings& comm);

  /// Anchors whose region the sensor entered this step.
  std::vector<std::size_t> update(const BnsState& state);
  /// Number of anchors whose region currently contains the sensor.
  std::size_t inside_count() const;

 private:
  const std::vector<Anchor>* anchors_;
  const CommSettings* comm_;
  std::vector<bool> reachable_;  // link budget allows contact at all
  std::unordered_map<int, std::vector<std::size_t>> candidates_;
  std::vector<bool> inside_;
};

struct VisitStats {
  std::vector<double> intervals;  // s, between consecutive visit starts
  long visits = 0;
  double in_range_time = 0.0;     // s spent inside any anchor region
  long in_range_spells = 0;
};

VisitStats simulate_visits(const VesselGraph& graph, const std::vector<Anchor>& anchors, const CommSettings& comm,
                           int injection, double duration, double dt, std::uint64_t seed);

struct LocalizationConfig {
  ImuSpec imu;
  EstimatorConfig estimator;
  CommSettings comm;
  int injection = 0;
  double duration = 300.0;
  double dt = 0.01;
  int constraint_every = 1;  // steps between vessel-constraint updates
  int sensor_id = 1;
  bool audit = false;        // check covariance health and packet provenance every step
};

struct LocalizationRun {
  std::vector<StampedEvent> stamped;   // absolute estimate (anchor box resets)
  std::vector<StampedEvent> inertial;  // twin estimate reset to the true position
  std::vector<AnchorTable> tables;
  SinkView sink;
  long resets = 0;
  double max_reset_error = 0.0;      // m, absolute estimate right after a reset
  double min_covariance_eig = 0.0;   // audit only
  long packets_out_of_range = 0;     // audit only
};

LocalizationRun simulate_localization(const VesselGraph& graph, const std::vector<Anchor>& anchors,
                                      const std::vector<AnomalyEvent>& events, const LocalizationConfig& config,
                                      std::uint64_t seed);

/// Running mean/variance per distance bin.
class BinnedStats {
 public:
  BinnedStats(double lo, double hi, double width);

  void add(double x, double value);
  void merge(const BinnedStats& other);
  /// Merges `cluster` as one independent group (one seed). Once two or more
  /// groups are added, sem() is the cluster-robust standard error, since
  /// samples within a group are correlated.
  void add_cluster(const BinnedStats& cluster);
  std::size_t bins() const { return n_.size(); }
  double bin_lo(std::size_t i) const { return lo_ + i * width_; }
  double bin_hi(std::size_t i) const { return lo_ + (i + 1) * width_; }
  long count(std::size_t i) const { return n_[i]; }
  double mean(std::size_t i) const;
  double sem(std::size_t i) const;

 private:
  double lo_, width_;
  std::vector<long> n_;
  std::vector<double> sum_, sumsq_;
  // per-bin group moments: sum S_g^2, sum S_g n_g, sum n_g^2, groups with data
  std::vector<double> g_ss_, g_sn_, g_nn_;
  std::vector<long> groups_;
  bool clustered_ = false;
};

struct Check {
  std::string id;
  std::string description;
  bool passed = false;
  bool gating = true;
  double value = 0.0;
  std::string expected;
};

struct MetricsReport {
  std::string scenario;
  std::string kind;
  std::vector<Table> tables;
  std::vector<Check> checks;
  std::vector<std::string> notes;
  nlohmann::json fingerprint;
  double runtime_s = 0.0;

  bool all_passed() const;
  const Table& table(const std::string& name) const;
  const Check* check(const std::string& id) const;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& doc);
  std::string summary_markdown() const;
};

struct ScenarioConfig {
  std::string name;
  std::string kind;
  std::filesystem::path source;   // scenario file, empty when built in memory
  std::filesystem::path base_dir; // relative paths resolve against this
  nlohmann::json doc;

  std::filesystem::path resolve(const std::string& relative) const;
};

/// Validates the document; every referenced file must resolve.
ScenarioConfig scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
ScenarioConfig load_scenario(const std::filesystem::path& path);
/// Accepts a path or a bare scenario name looked up under `scenario_dirs`.
ScenarioConfig find_scenario(const std::string& name_or_path, const std::vector<std::filesystem::path>& scenario_dirs);

struct RunOptions {
  std::uint64_t seed_offset = 0;
  std::optional<int> seed_count;      // keep only the first n seeds
  std::optional<double> duration_s;   // override simulated duration
  unsigned workers = 0;               // 0 = worker_count()
};

MetricsReport run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

/// Writes <out>/<scenario>/{<table>.csv, summary.md, report.json}. Files are
/// assembled in a sibling temporary directory and renamed into place, so a
/// failure leaves no partial output.
std::filesystem::path write_report(const MetricsReport& report, const std::filesystem::path& out_root);
MetricsReport read_report(const std::filesystem::path& report_dir);

struct Deviation {
  std::string table;
  std::string cell;  // "row N column C" or "bin key"
  double abs_dev = 0.0;
  double rel_dev = 0.0;
  double allowed = 0.0;
  bool exceeded = false;
};

struct CompareResult {
  std::vector<Deviation> deviations;  // worst per table, plus every exceeded cell
  long unjudged = 0;                  // statistical cells skipped for lack of a standard error
  bool ok() const;
  std::string summary() const;
};

/// Throws ValidationError when scenario names or table schemas differ.
CompareResult compare_report(const MetricsReport& report, const MetricsReport& baseline);

}  // namespace nanoloc
