#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "nanoloc/errors.hpp"
#include "nanoloc/imu.hpp"
#include "support/fixtures.hpp"

using namespace nanoloc;
using nanoloc::testing::make_segment;

namespace {

VesselGraph straight_line() {
  return VesselGraph({make_segment(1, {0, 0, 0}, {1, 0, 0}, 0.1, {{2, 1.0}}),
                      make_segment(2, {1, 0, 0}, {0, 0, 0}, 0.1, {{1, 1.0}})},
                     {1});
}

// Kolmogorov-Smirnov distance of a sample against U[lo, hi].
double ks_uniform(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = (x[i] - lo) / (hi - lo);
    d = std::max({d, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return d;
}

}  // namespace

TEST_CASE("unaccelerated motion reads gravity only") {
  const auto g = straight_line();
  Rng rng(1);
  const auto s0 = initial_state(g, 1, 0.1);
  const auto s1 = step(s0, g, 0.01, rng);
  const auto m = synthesize_imu(s0, s1, ImuSpec{}, rng);
  const Vec3 reference = s0.orientation.conjugate() * -kGravity;
  CHECK((m.accel - reference).norm() < 1e-12);
  CHECK(m.gyro.norm() < 1e-12);
}

TEST_CASE("accelerometer bias is additive") {
  const auto g = straight_line();
  Rng rng(1);
  const auto s0 = initial_state(g, 1, 0.1);
  const auto s1 = step(s0, g, 0.01, rng);
  const auto clean = synthesize_imu(s0, s1, ImuSpec{}, rng);
  ImuSpec biased;
  biased.accel_bias = {0.1, 0.0, 0.0};
  const auto m = synthesize_imu(s0, s1, biased, rng);
  CHECK((m.accel - clean.accel - Vec3(0.1, 0, 0)).norm() < 1e-15);
  CHECK((m.gyro - clean.gyro).norm() == 0.0);
}

TEST_CASE("noise has the declared standard deviation") {
  const auto g = straight_line();
  Rng walk_rng(1), rng(2);
  const auto s0 = initial_state(g, 1, 0.1);
  const auto s1 = step(s0, g, 0.01, walk_rng);
  const auto clean = synthesize_imu(s0, s1, ImuSpec{}, rng);
  ImuSpec spec;
  spec.accel_noise_std = 0.05;
  spec.gyro_noise_std = 0.01;
  const int n = 20000;
  double sa = 0.0, sa2 = 0.0, sg2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto m = synthesize_imu(s0, s1, spec, rng);
    const double da = m.accel.x() - clean.accel.x();
    sa += da;
    sa2 += da * da;
    sg2 += m.gyro.z() * m.gyro.z();
  }
  CHECK(std::abs(sa / n) < 4.0 * 0.05 / std::sqrt(n));
  // The sample std has relative standard error 1/sqrt(2n) = 0.5%.
  CHECK(std::sqrt(sa2 / n) == doctest::Approx(0.05).epsilon(0.025));
  CHECK(std::sqrt(sg2 / n) == doctest::Approx(0.01).epsilon(0.025));
}

TEST_CASE("stationary sensor stays put and only the covariance grows") {
  EstimatorState st;
  st.position = {0.1, 0.2, 0.3};
  st.orientation = Quat(Eigen::AngleAxisd(0.3, Vec3(1, 2, 3).normalized()));
  ImuSample m;
  m.accel = st.orientation.conjugate() * -kGravity;
  EstimatorConfig cfg;
  cfg.accel_noise_std = 0.01;
  cfg.gyro_noise_std = 0.001;
  const auto next = predict(st, m, 0.01, cfg);
  CHECK((next.position - st.position).norm() < 1e-15);
  CHECK(next.orientation.angularDistance(st.orientation) < 1e-12);
  CHECK(next.covariance(3, 3) == doctest::Approx(1e-8));
  CHECK(next.covariance(6, 6) == doctest::Approx(1e-10));
  CHECK(next.covariance(0, 0) == 0.0);
  const auto later = predict(next, m, 0.01, cfg);
  CHECK(later.covariance(0, 0) == doctest::Approx(1e-12));
  CHECK(later.covariance.trace() > next.covariance.trace());
}

TEST_CASE("covariance trace never decreases under prediction") {
  EstimatorConfig cfg;
  cfg.accel_noise_std = 0.02;
  cfg.gyro_noise_std = 0.003;
  EstimatorState st;
  st.covariance = Matrix9::Identity() * 1e-6;
  Rng rng(8);
  ImuSample m;
  for (int k = 0; k < 500; ++k) {
    m.accel = Vec3(rng.normal(1.0), rng.normal(1.0), 9.81 + rng.normal(1.0));
    m.gyro = Vec3(rng.normal(0.1), rng.normal(0.1), rng.normal(0.1));
    const auto next = predict(st, m, 0.01, cfg);
    CHECK(next.covariance.trace() > st.covariance.trace());
    CHECK(covariance_min_eigenvalue(next.covariance) > 0.0);
    st = next;
  }
}

TEST_CASE("perfect IMU dead reckoning on the shipped graph") {
  const auto g = VesselGraph::load(nanoloc::testing::asset("graphs/simplified_body.json"));
  const ImuSpec spec;
  const auto cfg = estimator_config_for(spec);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto tr = trajectory(g, 23, 100.0, 0.01, seed);
    Rng rng(seed);
    auto est = estimator_from_truth(tr.states[0], cfg);
    double worst = 0.0;
    for (std::size_t k = 1; k < tr.states.size(); ++k) {
      est = predict(est, synthesize_imu(tr.states[k - 1], tr.states[k], spec, rng), 0.01, cfg);
      worst = std::max(worst, (est.position - tr.states[k].position).norm());
      CHECK((est.velocity - tr.states[k].velocity).norm() < 1e-9);
    }
    MESSAGE("seed " << seed << ": max error " << worst << " m");
    CHECK(worst <= 1e-3);
    CHECK(worst <= 1e-8);
  }
}

TEST_CASE("junction steps report the mean velocity") {
  const auto f = nanoloc::testing::two_segment_loop(0.3);
  Rng rng(1);
  auto s = initial_state(f, 1);
  int turns = 0;
  for (int k = 0; k < 400; ++k) {
    const auto next = step(s, f, 0.01, rng);
    if (next.segment_id != s.segment_id) {
      ++turns;
      CHECK((next.velocity - (next.position - s.position) / 0.01).norm() < 1e-12);
    } else {
      CHECK(next.velocity.norm() == doctest::Approx(0.3));
    }
    s = next;
  }
  CHECK(turns > 0);
}

TEST_CASE("degenerate reset box puts the estimate on the anchor") {
  EstimatorState st;
  st.position = {1, 2, 3};
  ResetDirective d;
  d.center = {0.1, 1.0, 0.0};
  d.patch_half_width = 0.0;
  d.skin_thickness = 0.0;
  d.in_range = true;
  Rng rng(1);
  const auto next = anchor_update(st, d, rng, EstimatorConfig{});
  CHECK(next.position == d.center);
  CHECK(next.covariance.block<3, 3>(0, 0).isZero(0.0));
  CHECK(next.distance_since_reset == 0.0);
  d.in_range = false;
  CHECK_THROWS_AS(anchor_update(st, d, rng, EstimatorConfig{}), ContractViolation);
}

TEST_CASE("reset errors are uniform over the box") {
  ResetDirective d;
  d.center = {0.0, 1.0, 0.0};
  d.in_range = true;
  Rng rng(77);
  std::vector<double> xs, ys, zs;
  const int n = 100000;
  const double bound = std::sqrt(2.0 * 0.025 * 0.025 + 0.0025 * 0.0025);
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto st = anchor_update(EstimatorState{}, d, rng, EstimatorConfig{});
    worst = std::max(worst, (st.position - d.center).norm());
    xs.push_back(st.position.x() - d.center.x());
    ys.push_back(st.position.y() - d.center.y());
    zs.push_back(st.position.z() - d.center.z());
  }
  CHECK(worst <= bound);
  // KS critical value at p = 0.01 is about 1.63 / sqrt(n).
  const double crit = 1.63 / std::sqrt(n);
  CHECK(ks_uniform(xs, -0.025, 0.025) < crit);
  CHECK(ks_uniform(ys, -0.025, 0.025) < crit);
  CHECK(ks_uniform(zs, -0.0025, 0.0) < crit);
  CHECK(*std::max_element(zs.begin(), zs.end()) <= 0.0);
}

TEST_CASE("vessel constraint") {
  const auto g = straight_line();
  EstimatorConfig cfg;
  cfg.vessel_constraint = true;
  cfg.constraint_std = 1e-3;
  EstimatorState st;
  st.covariance = Matrix9::Identity() * 1e-4;  // 10 mm prior std everywhere

  SUBCASE("on the centerline only the covariance contracts") {
    st.position = {0.5, 0.0, 0.0};
    const auto next = vessel_constraint_update(st, g, cfg);
    CHECK((next.position - st.position).norm() < 1e-15);
    CHECK(next.covariance(1, 1) < st.covariance(1, 1));
    CHECK(next.covariance(0, 0) == doctest::Approx(st.covariance(0, 0)));
  }
  SUBCASE("10 mm off: scalar Kalman oracle") {
    st.position = {0.5, 0.01, 0.0};
    const auto next = vessel_constraint_update(st, g, cfg);
    // K = 1e-4 / (1e-4 + 1e-6) = 100/101 on the offset axis.
    CHECK(next.position.y() == doctest::Approx(0.01 / 101.0).epsilon(1e-9));
    CHECK(next.position.x() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(next.covariance(1, 1) == doctest::Approx(1e-4 * 1e-6 / (1e-4 + 1e-6)).epsilon(1e-9));
    CHECK(std::abs(next.position.y()) < std::abs(st.position.y()));
  }
  SUBCASE("disabled is the identity") {
    st.position = {0.5, 0.01, 0.0};
    cfg.vessel_constraint = false;
    const auto next = vessel_constraint_update(st, g, cfg);
    CHECK(next.position == st.position);
    CHECK(next.covariance == st.covariance);
  }
  SUBCASE("beyond an end the range to the node is constrained") {
    st.position = {1.01, 0.0, 0.0};
    const auto next = vessel_constraint_update(st, g, cfg);
    CHECK(next.position.x() == doctest::Approx(1.0 + 0.01 / 101.0).epsilon(1e-9));
  }
}

TEST_CASE("event stamped right after a reset is within the box") {
  const auto g = straight_line();
  Rng rng(5);
  const auto truth0 = initial_state(g, 1, 0.5);
  ResetDirective d;
  d.center = {0.5, 0.0, 0.0};
  d.in_range = true;
  d.velocity = truth0.velocity;
  d.orientation = truth0.orientation;
  const ImuSpec spec;
  const auto cfg = estimator_config_for(spec);
  for (int i = 0; i < 200; ++i) {
    auto st = anchor_update(estimator_from_truth(truth0, cfg), d, rng, cfg);
    const auto truth1 = step(truth0, g, 0.01, rng);
    st = predict(st, synthesize_imu(truth0, truth1, spec, rng), 0.01, cfg);
    AnomalyEvent e;
    e.true_location = truth1.position + Vec3(0.0005, 0, 0);
    e.sensing_radius = 0.001;
    const auto s = stamp_event(st, e);
    const double box = std::sqrt(2.0 * 0.025 * 0.025 + 0.0025 * 0.0025);
    CHECK(s.error_m <= box + e.sensing_radius + 0.1 * 0.01 + 1e-12);
    CHECK(s.distance_since_reset_at_stamp == doctest::Approx(0.001));
  }
}

TEST_CASE("imu spec json") {
  const auto s = imu_spec_from_json({{"accel_noise_std", 0.01}, {"gyro_bias", 0.002}, {"accel_bias", {0.1, 0, 0}}});
  CHECK(s.gyro_bias == Vec3(0.002, 0.002, 0.002));
  CHECK(s.accel_bias == Vec3(0.1, 0, 0));
  CHECK(s.sample_rate == 100.0);
  const auto again = imu_spec_from_json(to_json(s));
  CHECK(again.accel_noise_std == s.accel_noise_std);
  CHECK_THROWS_AS(imu_spec_from_json({{"gyro_noise_std", -1.0}}).validate(), ValidationError);
  CHECK(covariance_min_eigenvalue(Matrix9::Identity()) == doctest::Approx(1.0));
}
