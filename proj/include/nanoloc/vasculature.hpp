#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "nanoloc/geometry.hpp"
#include "nanoloc/rng.hpp"

namespace nanoloc {

enum class VesselKind { kArtery, kVein, kOrganTransition };

struct Branch {
  int id = 0;
  double p = 1.0;
};

struct VesselSegment {
  int id = 0;
  VesselKind kind = VesselKind::kArtery;
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  double flow_speed = 0.0;  // m/s
  std::vector<Branch> downstream;
  std::string name;    // optional, informational
  std::string region;  // optional: heart, lung, head, torso, arm, hand, leg, foot

  double length() const { return (end - start).norm(); }
  Vec3 tangent() const { return (end - start).normalized(); }
  Vec3 point_at(double arc) const { return start + arc * tangent(); }
};

struct ClosestPoint {
  int segment_id = 0;
  double arc = 0.0;
  Vec3 point = Vec3::Zero();
  double distance = 0.0;
  bool at_endpoint = false;  // projection clamped to a segment end
};

class VesselGraph {
 public:
  VesselGraph() = default;
  /// Validates every invariant; throws ValidationError naming the segment.
  VesselGraph(std::vector<VesselSegment> segments, std::vector<int> injection_points);

  static VesselGraph from_json(const nlohmann::json& doc);
  static VesselGraph load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const std::vector<VesselSegment>& segments() const { return segments_; }
  const VesselSegment& segment(int id) const;
  bool contains(int id) const { return index_.count(id) != 0; }
  std::size_t index_of(int id) const;
  const std::vector<int>& injection_points() const { return injection_points_; }
  double total_length() const { return total_length_; }
  std::optional<int> find_by_name(const std::string& name) const;

  /// Nearest centerline point over all segments (ties go to the lower id).
  ClosestPoint closest_point(const Vec3& p) const;

 private:
  std::vector<VesselSegment> segments_;
  std::vector<int> injection_points_;
  std::unordered_map<int, std::size_t> index_;
  double total_length_ = 0.0;
};

ClosestPoint closest_point_on_segment(const VesselSegment& seg, const Vec3& p);

/// Ground-truth kinematic state of one sensor.
struct BnsState {
  Vec3 position = Vec3::Zero();
  int segment_id = 0;
  double arc_offset = 0.0;
  Vec3 velocity = Vec3::Zero();  // mean velocity over the step ending here; flow velocity off junctions
  Quat orientation = Quat::Identity();  // body-to-world, body x along the flow
  double sim_time = 0.0;
};

/// Sensor placed at `arc` along `segment_id`, body x-axis aligned with the tangent.
BnsState initial_state(const VesselGraph& graph, int segment_id, double arc = 0.0);

/// Advances by dt. Time left over when a segment end is reached is spent on the
/// next segment, chosen by the branch probabilities.
BnsState step(const BnsState& state, const VesselGraph& graph, double dt, Rng& rng);

struct Trajectory {
  std::vector<BnsState> states;  // states[0] is the injection state
  std::vector<int> segment_log;  // segment id per state
};

/// Calls `visit` for every state, including the initial one, without storing
/// the series. Returning false from `visit` stops the walk early.
void walk(const VesselGraph& graph, int injection_segment, double duration, double dt, Rng& rng,
          const std::function<bool(const BnsState&)>& visit);

Trajectory trajectory(const VesselGraph& graph, int injection_segment, double duration, double dt,
                      std::uint64_t seed);

/// Number of times each segment was entered (the injection counts as an entry).
std::unordered_map<int, long> segment_entry_counts(const std::vector<int>& segment_log);

struct AnomalyEvent {
  int id = 0;
  Vec3 true_location = Vec3::Zero();
  double sensing_radius = 0.001;  // m
  int segment_id = 0;
};

/// Places `count` events uniformly by arc length over the whole graph.
std::vector<AnomalyEvent> scatter_events(const VesselGraph& graph, int count, double sensing_radius,
                                         std::uint64_t seed);

std::vector<AnomalyEvent> events_from_json(const nlohmann::json& doc, const VesselGraph& graph);
nlohmann::json to_json(const std::vector<AnomalyEvent>& events);

/// Detects events inside the sensing ball (open ball). An event fires once per
/// pass and is re-armed when the sensor leaves its radius.
class EventSensor {
 public:
  EventSensor(const VesselGraph& graph, std::vector<AnomalyEvent> events);

  std::vector<int> sense(const BnsState& state);
  const std::vector<AnomalyEvent>& events() const { return events_; }
  const AnomalyEvent& event(int id) const;
  void reset() { inside_.clear(); }

 private:
  std::vector<AnomalyEvent> events_;
  std::unordered_map<int, std::size_t> by_id_;
  std::unordered_map<int, std::vector<std::size_t>> candidates_;  // segment id -> event indices
  std::vector<std::size_t> inside_;
};

/// Coarse body envelope of the shipped graph frame: torso and head span
/// |x| <= 0.15 m and y >= 0.85 m; everything else is a limb.
enum class BodyRegion { kTorsoHead, kLimb };
BodyRegion body_region(const Vec3& point);

VesselKind parse_vessel_kind(const std::string& text);
std::string to_string(VesselKind kind);

}  // namespace nanoloc
