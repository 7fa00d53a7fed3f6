#include "nanoloc/imu.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "nanoloc/errors.hpp"

namespace nanoloc {

using nlohmann::json;

namespace {

Vec3 bias_from_json(const json& j) {
  if (j.is_number()) return Vec3::Constant(j.get<double>());
  if (j.is_array() && j.size() == 3) return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  throw ValidationError("imu", "bias must be a number or [x, y, z]");
}

template <int Rows>
void kalman_update(EstimatorState& st, const Eigen::Matrix<double, Rows, 9>& h,
                   const Eigen::Matrix<double, Rows, 1>& innovation, double meas_std) {
  using MatR = Eigen::Matrix<double, Rows, Rows>;
  const MatR r = MatR::Identity() * meas_std * meas_std;
  const MatR s = h * st.covariance * h.transpose() + r;
  const Eigen::Matrix<double, 9, Rows> k = st.covariance * h.transpose() * s.inverse();
  const Eigen::Matrix<double, 9, 1> dx = k * innovation;
  const Matrix9 ikh = Matrix9::Identity() - k * h;
  st.covariance = ikh * st.covariance * ikh.transpose() + k * r * k.transpose();
  st.covariance = 0.5 * (st.covariance + st.covariance.transpose()).eval();
  st.position += dx.segment<3>(0);
  st.velocity += dx.segment<3>(3);
  st.orientation = (st.orientation * quat_exp(dx.segment<3>(6))).normalized();
}

}  // namespace

void ImuSpec::validate() const {
  if (!(accel_noise_std >= 0.0) || !(gyro_noise_std >= 0.0)) {
    throw ValidationError("imu", "noise std must be >= 0");
  }
  if (!(sample_rate > 0.0)) throw ValidationError("imu.sample_rate_hz", "must be > 0");
  if (!accel_bias.allFinite() || !gyro_bias.allFinite()) throw ValidationError("imu", "bias must be finite");
}

ImuSpec imu_spec_from_json(const json& doc) {
  ImuSpec s;
  s.accel_noise_std = doc.value("accel_noise_std", 0.0);
  s.gyro_noise_std = doc.value("gyro_noise_std", 0.0);
  if (doc.contains("accel_bias")) s.accel_bias = bias_from_json(doc["accel_bias"]);
  if (doc.contains("gyro_bias")) s.gyro_bias = bias_from_json(doc["gyro_bias"]);
  s.sample_rate = doc.value("sample_rate_hz", 100.0);
  s.validate();
  return s;
}

json to_json(const ImuSpec& s) {
  return {{"accel_noise_std", s.accel_noise_std},
          {"accel_bias", {s.accel_bias.x(), s.accel_bias.y(), s.accel_bias.z()}},
          {"gyro_noise_std", s.gyro_noise_std},
          {"gyro_bias", {s.gyro_bias.x(), s.gyro_bias.y(), s.gyro_bias.z()}},
          {"sample_rate_hz", s.sample_rate}};
}

ImuSample synthesize_imu(const BnsState& s0, const BnsState& s1, const ImuSpec& spec, Rng& rng) {
  const double dt = s1.sim_time - s0.sim_time;
  if (!(dt > 0.0)) throw DomainError("truth pair must be ordered in time");
  const Vec3 accel_world = (s1.velocity - s0.velocity) / dt;
  ImuSample m;
  m.t = s0.sim_time;
  m.accel = s0.orientation.conjugate() * (accel_world - kGravity);
  m.gyro = quat_log(s0.orientation.conjugate() * s1.orientation) / dt;
  m.accel += spec.accel_bias;
  m.gyro += spec.gyro_bias;
  for (int i = 0; i < 3; ++i) m.accel[i] += rng.normal(spec.accel_noise_std);
  for (int i = 0; i < 3; ++i) m.gyro[i] += rng.normal(spec.gyro_noise_std);
  return m;
}

EstimatorConfig estimator_config_for(const ImuSpec& spec) {
  EstimatorConfig c;
  c.accel_noise_std = spec.accel_noise_std;
  c.gyro_noise_std = spec.gyro_noise_std;
  return c;
}

EstimatorState estimator_from_truth(const BnsState& truth, const EstimatorConfig& config) {
  EstimatorState st;
  st.position = truth.position;
  st.velocity = truth.velocity;
  st.orientation = truth.orientation;
  st.t = truth.sim_time;
  st.covariance.block<3, 3>(3, 3) = Eigen::Matrix3d::Identity() * config.reset_velocity_std * config.reset_velocity_std;
  st.covariance.block<3, 3>(6, 6) = Eigen::Matrix3d::Identity() * config.reset_attitude_std * config.reset_attitude_std;
  return st;
}

EstimatorState predict(const EstimatorState& state, const ImuSample& sample, double dt,
                       const EstimatorConfig& config) {
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  EstimatorState next = state;
  const Eigen::Matrix3d rot = state.orientation.toRotationMatrix();
  const Vec3 accel_world = rot * sample.accel + kGravity;
  // Semi-implicit Euler: velocity first, then position with the new velocity.
  next.velocity += accel_world * dt;
  const Vec3 dp = next.velocity * dt;
  next.position += dp;
  const Quat dq = quat_exp(sample.gyro * dt);
  next.orientation = (state.orientation * dq).normalized();
  next.distance_since_reset += dp.norm();
  next.t = state.t + dt;

  Matrix9 f = Matrix9::Identity();
  f.block<3, 3>(0, 3) = Eigen::Matrix3d::Identity() * dt;
  f.block<3, 3>(3, 6) = -rot * skew(sample.accel) * dt;
  f.block<3, 3>(0, 6) = f.block<3, 3>(3, 6) * dt;
  f.block<3, 3>(6, 6) = dq.toRotationMatrix().transpose();
  Matrix9 q = Matrix9::Zero();
  const double qa = config.accel_noise_std * dt;
  const double qg = config.gyro_noise_std * dt;
  q.block<3, 3>(3, 3) = Eigen::Matrix3d::Identity() * qa * qa;
  q.block<3, 3>(6, 6) = Eigen::Matrix3d::Identity() * qg * qg;
  next.covariance = f * state.covariance * f.transpose() + q;
  next.covariance = 0.5 * (next.covariance + next.covariance.transpose()).eval();
  return next;
}

EstimatorState anchor_update(const EstimatorState& state, const ResetDirective& directive, Rng& rng,
                             const EstimatorConfig& config) {
  if (!directive.in_range) {
    throw ContractViolation("anchor_update called outside the communication region of anchor " +
                            std::to_string(directive.anchor_id));
  }
  const double w = directive.patch_half_width;
  const double ts = directive.skin_thickness;
  EstimatorState next = state;
  Vec3 eps = Vec3::Zero();
  if (w > 0.0) {
    eps.x() = rng.uniform(-w, w);
    eps.y() = rng.uniform(-w, w);
  }
  if (ts > 0.0) eps.z() = rng.uniform(-ts, 0.0);
  next.position = directive.center + eps;
  next.velocity = directive.velocity;
  next.orientation = directive.orientation.normalized();
  next.covariance.setZero();
  // Mean-square error of the box about the anchor: w^2/3 laterally and
  // t^2/12 + (t/2)^2 = t^2/3 in depth.
  next.covariance(0, 0) = w * w / 3.0;
  next.covariance(1, 1) = w * w / 3.0;
  next.covariance(2, 2) = ts * ts / 3.0;
  next.covariance.block<3, 3>(3, 3) =
      Eigen::Matrix3d::Identity() * config.reset_velocity_std * config.reset_velocity_std;
  next.covariance.block<3, 3>(6, 6) =
      Eigen::Matrix3d::Identity() * config.reset_attitude_std * config.reset_attitude_std;
  next.distance_since_reset = 0.0;
  return next;
}

EstimatorState vessel_constraint_update(const EstimatorState& state, const VesselGraph& graph,
                                        const EstimatorConfig& config) {
  if (!config.vessel_constraint) return state;
  EstimatorState next = state;
  const auto cp = graph.closest_point(state.position);
  const Vec3 offset = state.position - cp.point;
  if (cp.at_endpoint) {
    // Past a segment end the nearest centerline point is a node: constrain the
    // range to it.
    const double dist = offset.norm();
    if (dist < 1e-12) return next;
    Eigen::Matrix<double, 1, 9> h = Eigen::Matrix<double, 1, 9>::Zero();
    h.block<1, 3>(0, 0) = (offset / dist).transpose();
    Eigen::Matrix<double, 1, 1> y;
    y(0) = -dist;
    kalman_update<1>(next, h, y, config.constraint_std);
    return next;
  }
  // Interior point: constrain the two directions normal to the centerline.
  const Vec3 tangent = graph.segment(cp.segment_id).tangent();
  Vec3 n1 = tangent.unitOrthogonal();
  Vec3 n2 = tangent.cross(n1);
  Eigen::Matrix<double, 2, 9> h = Eigen::Matrix<double, 2, 9>::Zero();
  h.block<1, 3>(0, 0) = n1.transpose();
  h.block<1, 3>(1, 0) = n2.transpose();
  Eigen::Vector2d y(-n1.dot(offset), -n2.dot(offset));
  kalman_update<2>(next, h, y, config.constraint_std);
  return next;
}

StampedEvent stamp_event(const EstimatorState& state, const AnomalyEvent& event) {
  StampedEvent s;
  s.event_id = event.id;
  s.true_location = event.true_location;
  s.estimated_location = state.position;
  s.distance_since_reset_at_stamp = state.distance_since_reset;
  s.error_m = (state.position - event.true_location).norm();
  s.t = state.t;
  return s;
}

double covariance_min_eigenvalue(const Matrix9& covariance) {
  const Matrix9 sym = 0.5 * (covariance + covariance.transpose());
  return Eigen::SelfAdjointEigenSolver<Matrix9>(sym, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace nanoloc
