#pragma once

#include <Eigen/Core>
#include <json.hpp>

#include "nanoloc/geometry.hpp"
#include "nanoloc/rng.hpp"
#include "nanoloc/vasculature.hpp"

namespace nanoloc {

struct ImuSpec {
  double accel_noise_std = 0.0;  // m/s^2 per axis
  Vec3 accel_bias = Vec3::Zero();  // m/s^2
  double gyro_noise_std = 0.0;   // rad/s per axis
  Vec3 gyro_bias = Vec3::Zero();   // rad/s
  double sample_rate = 100.0;    // Hz

  void validate() const;
};

/// Accepts scalar biases (applied to every axis) or [x, y, z].
ImuSpec imu_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ImuSpec& spec);

struct ImuSample {
  double t = 0.0;
  Vec3 accel = Vec3::Zero();  // specific force, body frame
  Vec3 gyro = Vec3::Zero();   // body frame
};

/// Measurement for the interval [s0, s1]: true specific force and rate are
/// finite differences of the pair, in the body frame of s0, plus bias and noise.
ImuSample synthesize_imu(const BnsState& s0, const BnsState& s1, const ImuSpec& spec, Rng& rng);

using Matrix9 = Eigen::Matrix<double, 9, 9>;

struct EstimatorState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quat orientation = Quat::Identity();
  Matrix9 covariance = Matrix9::Zero();  // over (dp, dv, dtheta), dtheta in the body frame
  double distance_since_reset = 0.0;
  double t = 0.0;
};

/// Estimator noise model and reset priors.
struct EstimatorConfig {
  double accel_noise_std = 0.0;        // process noise fed to the filter
  double gyro_noise_std = 0.0;
  double reset_velocity_std = 1e-3;    // m/s
  double reset_attitude_std = 1e-3;    // rad
  bool vessel_constraint = false;
  double constraint_std = 1e-3;        // m
};

EstimatorConfig estimator_config_for(const ImuSpec& spec);

/// Filter state seeded from a known kinematic state (zero position uncertainty).
EstimatorState estimator_from_truth(const BnsState& truth, const EstimatorConfig& config);

/// Strapdown propagation over one sample interval with covariance propagation.
EstimatorState predict(const EstimatorState& state, const ImuSample& sample, double dt,
                       const EstimatorConfig& config);

/// Issued by an anchor when it talks to a sensor; carries what the sensor
/// needs to re-initialize.
struct ResetDirective {
  int anchor_id = 0;
  Vec3 center = Vec3::Zero();
  double patch_half_width = 0.025;  // m
  double skin_thickness = 0.0025;   // m
  double issued_at = 0.0;           // anchor clock, s
  bool in_range = false;
  Vec3 velocity = Vec3::Zero();        // flow velocity of the current segment
  Quat orientation = Quat::Identity();  // tangent-aligned attitude of the current segment
};

/// Resets the estimate to the anchor location with a uniform error box.
/// Throws ContractViolation when the directive was not issued in range.
EstimatorState anchor_update(const EstimatorState& state, const ResetDirective& directive, Rng& rng,
                             const EstimatorConfig& config);

/// Pseudo-measurement "the sensor lies on a vessel centerline". Identity when
/// the constraint is disabled in `config`.
EstimatorState vessel_constraint_update(const EstimatorState& state, const VesselGraph& graph,
                                        const EstimatorConfig& config);

struct StampedEvent {
  int event_id = 0;
  Vec3 true_location = Vec3::Zero();
  Vec3 estimated_location = Vec3::Zero();
  double distance_since_reset_at_stamp = 0.0;
  double error_m = 0.0;
  double t = 0.0;
};

StampedEvent stamp_event(const EstimatorState& state, const AnomalyEvent& event);

/// Symmetrizes and returns the smallest eigenvalue.
double covariance_min_eigenvalue(const Matrix9& covariance);

}  // namespace nanoloc
