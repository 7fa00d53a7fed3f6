#include "nanoloc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>

#include "nanoloc/errors.hpp"

namespace nanoloc {

unsigned worker_count() {
  if (const char* env = std::getenv("NANOLOC_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& task, unsigned workers) {
  if (workers == 0) workers = worker_count();
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

AnchorTracker::AnchorTracker(const VesselGraph& graph, const std::vector<Anchor>& anchors, const CommSettings& comm)
    : anchors_(&anchors), comm_(&comm), reachable_(anchors.size()), inside_(anchors.size(), false) {
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    reachable_[i] = comm.gate == ContactGate::kProximity ||
                    meets_sensitivity(anchor_link_power_dbw(anchors[i], comm), comm.sensitivity);
  }
  for (const auto& s : graph.segments()) {
    auto& list = candidates_[s.id];
    VesselSegment flat = s;
    flat.start.z() = 0.0;
    flat.end.z() = 0.0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
      if (!reachable_[i]) continue;
      const Vec3 c(anchors[i].center.x(), anchors[i].center.y(), 0.0);
      const double d = flat.length() > 0.0 ? closest_point_on_segment(flat, c).distance : (flat.start - c).norm();
      if (d <= anchors[i].patch_half_width) list.push_back(i);
    }
  }
}

std::vector<std::size_t> AnchorTracker::update(const BnsState& state) {
  std::vector<bool> now(inside_.size(), false);
  auto it = candidates_.find(state.segment_id);
  if (it != candidates_.end()) {
    for (auto i : it->second) {
      now[i] = horizontal_distance((*anchors_)[i].center, state.position) <= (*anchors_)[i].patch_half_width;
    }
  }
  std::vector<std::size_t> entered;
  for (std::size_t i = 0; i < now.size(); ++i) {
    if (now[i] && !inside_[i]) entered.push_back(i);
  }
  inside_ = std::move(now);
  return entered;
}

std::size_t AnchorTracker::inside_count() const { return std::count(inside_.begin(), inside_.end(), true); }

VisitStats simulate_visits(const VesselGraph& graph, const std::vector<Anchor>& anchors, const CommSettings& comm,
                           int injection, double duration, double dt, std::uint64_t seed) {
  VisitStats stats;
  AnchorTracker tracker(graph, anchors, comm);
  auto rng = Rng::derive(seed, "trajectory");
  bool first = true;
  bool was_inside = false;
  double last_visit = -1.0;
  walk(graph, injection, duration, dt, rng, [&](const BnsState& s) {
    const auto entered = tracker.update(s);
    const bool inside = tracker.inside_count() > 0;
    if (!first && !entered.empty()) {
      if (last_visit >= 0.0) stats.intervals.push_back(s.sim_time - last_visit);
      last_visit = s.sim_time;
      ++stats.visits;
    }
    if (inside) stats.in_range_time += dt;
    if (inside && !was_inside) ++stats.in_range_spells;
    was_inside = inside;
    first = false;
    return true;
  });
  return stats;
}

LocalizationRun simulate_localization(const VesselGraph& graph, const std::vector<Anchor>& anchors,
                                      const std::vector<AnomalyEvent>& events, const LocalizationConfig& config,
                                      std::uint64_t seed) {
  config.imu.validate();
  const double dt = config.dt;
  if (std::abs(dt * config.imu.sample_rate - 1.0) > 1e-9) {
    throw ValidationError("dt_s", "must equal 1 / imu sample rate");
  }
  LocalizationRun run;
  run.min_covariance_eig = std::numeric_limits<double>::infinity();
  auto traj_rng = Rng::derive(seed, "trajectory");
  auto imu_rng = Rng::derive(seed, "imu");
  auto reset_rng = Rng::derive(seed, "reset");
  EventSensor sensor(graph, events);
  AnchorTracker tracker(graph, anchors, config.comm);
  for (const auto& a : anchors) run.tables.push_back({a.id, {}});

  BnsState prev;
  EstimatorState est;
  EstimatorState inert;
  std::vector<StampedEvent> pending;
  long k = 0;
  walk(graph, config.injection, config.duration, dt, traj_rng, [&](const BnsState& s) {
    if (k == 0) {
      est = estimator_from_truth(s, config.estimator);
      inert = est;
      tracker.update(s);
    } else {
      const auto sample = synthesize_imu(prev, s, config.imu, imu_rng);
      est = predict(est, sample, dt, config.estimator);
      inert = predict(inert, sample, dt, config.estimator);
      if (config.estimator.vessel_constraint && k % config.constraint_every == 0) {
        est = vessel_constraint_update(est, graph, config.estimator);
        inert = vessel_constraint_update(inert, graph, config.estimator);
      }
      for (auto i : tracker.update(s)) {
        const auto& anchor = anchors[i];
        auto result = exchange(anchor, s, config.sensor_id, est, pending, s.sim_time, config.comm);
        for (const auto& p : result.packets) {
          if (config.audit && !in_comm_range(anchor, s.position, config.comm)) ++run.packets_out_of_range;
          run.tables[i].append(p);
        }
        est = anchor_update(est, result.directive, reset_rng, config.estimator);
        run.max_reset_error = std::max(run.max_reset_error, (est.position - s.position).norm());
        ResetDirective exact = result.directive;
        exact.center = s.position;
        exact.patch_half_width = 0.0;
        exact.skin_thickness = 0.0;
        inert = anchor_update(inert, exact, reset_rng, config.estimator);
        ++run.resets;
      }
    }
    for (int id : sensor.sense(s)) {
      const auto& ev = sensor.event(id);
      run.stamped.push_back(stamp_event(est, ev));
      pending.push_back(run.stamped.back());
      run.inertial.push_back(stamp_event(inert, ev));
    }
    if (config.audit) {
      run.min_covariance_eig = std::min(
          {run.min_covariance_eig, covariance_min_eigenvalue(est.covariance), covariance_min_eigenvalue(inert.covariance)});
    }
    prev = s;
    ++k;
    return true;
  });
  run.sink = merge_tables(run.tables);
  if (!config.audit) run.min_covariance_eig = 0.0;
  return run;
}

BinnedStats::BinnedStats(double lo, double hi, double width) : lo_(lo), width_(width) {
  if (!(width > 0.0) || !(hi > lo)) throw DomainError("invalid bin layout");
  const auto n = static_cast<std::size_t>(std::llround((hi - lo) / width));
  n_.assign(n, 0);
  sum_.assign(n, 0.0);
  sumsq_.assign(n, 0.0);
  g_ss_.assign(n, 0.0);
  g_sn_.assign(n, 0.0);
  g_nn_.assign(n, 0.0);
  groups_.assign(n, 0);
}

void BinnedStats::add(double x, double value) {
  if (x < lo_) return;
  auto i = static_cast<std::size_t>(std::floor((x - lo_) / width_));
  if (i >= n_.size()) {
    if (x > bin_hi(n_.size() - 1)) return;
    i = n_.size() - 1;
  }
  ++n_[i];
  sum_[i] += value;
  sumsq_[i] += value * value;
}

void BinnedStats::merge(const BinnedStats& other) {
  if (other.n_.size() != n_.size()) throw ContractViolation("bin layouts differ");
  for (std::size_t i = 0; i < n_.size(); ++i) {
    n_[i] += other.n_[i];
    sum_[i] += other.sum_[i];
    sumsq_[i] += other.sumsq_[i];
  }
}

void BinnedStats::add_cluster(const BinnedStats& cluster) {
  merge(cluster);
  clustered_ = true;
  for (std::size_t i = 0; i < n_.size(); ++i) {
    if (!cluster.n_[i]) continue;
    const double s = cluster.sum_[i], c = static_cast<double>(cluster.n_[i]);
    g_ss_[i] += s * s;
    g_sn_[i] += s * c;
    g_nn_[i] += c * c;
    ++groups_[i];
  }
}

double BinnedStats::mean(std::size_t i) const { return n_[i] ? sum_[i] / n_[i] : std::nan(""); }

double BinnedStats::sem(std::size_t i) const {
  if (n_[i] < 2) return std::nan("");
  const double m = mean(i);
  if (clustered_) {
    const long g = groups_[i];
    if (g < 2) return std::nan("");
    const double resid = std::max(0.0, g_ss_[i] - 2.0 * m * g_sn_[i] + m * m * g_nn_[i]);
    return std::sqrt(resid * g / (g - 1.0)) / n_[i];
  }
  const double var = std::max(0.0, (sumsq_[i] - n_[i] * m * m) / (n_[i] - 1));
  return std::sqrt(var / n_[i]);
}

}  // namespace nanoloc
