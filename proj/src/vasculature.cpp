#include "nanoloc/vasculature.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include "nanoloc/errors.hpp"

namespace nanoloc {

using nlohmann::json;

namespace {

std::string seg_where(int id) { return "segment " + std::to_string(id); }

Vec3 vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected [x, y, z]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Quat align_x_to(const Vec3& tangent) { return Quat::FromTwoVectors(Vec3::UnitX(), tangent).normalized(); }

}  // namespace

VesselKind parse_vessel_kind(const std::string& text) {
  if (text == "artery") return VesselKind::kArtery;
  if (text == "vein") return VesselKind::kVein;
  if (text == "organ_transition") return VesselKind::kOrganTransition;
  throw ValidationError("kind", "unknown vessel kind '" + text + "'");
}

std::string to_string(VesselKind kind) {
  switch (kind) {
    case VesselKind::kArtery:
      return "artery";
    case VesselKind::kVein:
      return "vein";
    case VesselKind::kOrganTransition:
      return "organ_transition";
  }
  return "artery";
}

VesselGraph::VesselGraph(std::vector<VesselSegment> segments, std::vector<int> injection_points)
    : segments_(std::move(segments)), injection_points_(std::move(injection_points)) {
  if (segments_.empty()) throw ValidationError("segments", "graph has no segments");
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto& s = segments_[i];
    if (!index_.emplace(s.id, i).second) throw ValidationError(seg_where(s.id), "duplicate segment id");
  }
  for (const auto& s : segments_) {
    if (!(s.flow_speed > 0.0)) throw ValidationError(seg_where(s.id), "flow_speed must be > 0");
    if (!(s.length() > 0.0)) throw ValidationError(seg_where(s.id), "zero-length segment (start == end)");
    if (s.downstream.empty()) throw ValidationError(seg_where(s.id), "no downstream segments");
    double sum = 0.0;
    for (const auto& b : s.downstream) {
      if (!contains(b.id)) {
        throw ValidationError(seg_where(s.id), "dangling downstream id " + std::to_string(b.id));
      }
      if (!(b.p >= 0.0 && b.p <= 1.0)) {
        throw ValidationError(seg_where(s.id), "branch probability outside [0, 1]");
      }
      sum += b.p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ValidationError(seg_where(s.id), "branch probabilities sum to " + std::to_string(sum));
    }
    total_length_ += s.length();
  }
  if (injection_points_.empty()) throw ValidationError("injection_points", "at least one injection point");
  for (int id : injection_points_) {
    if (!contains(id)) throw ValidationError("injection_points", "unknown segment " + std::to_string(id));
  }

  // Every segment must reach every injection point: search the reversed graph.
  std::vector<std::vector<std::size_t>> upstream(segments_.size());
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    for (const auto& b : segments_[i].downstream) {
      if (b.p > 0.0) upstream[index_.at(b.id)].push_back(i);
    }
  }
  for (int inj : injection_points_) {
    std::vector<bool> seen(segments_.size(), false);
    std::deque<std::size_t> queue{index_.at(inj)};
    seen[queue.front()] = true;
    while (!queue.empty()) {
      const auto cur = queue.front();
      queue.pop_front();
      for (auto u : upstream[cur]) {
        if (!seen[u]) {
          seen[u] = true;
          queue.push_back(u);
        }
      }
    }
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (!seen[i]) {
        throw ValidationError(seg_where(segments_[i].id),
                              "cannot reach injection point " + std::to_string(inj));
      }
    }
  }
}

VesselGraph VesselGraph::from_json(const json& doc) {
  std::vector<VesselSegment> segments;
  std::vector<int> injection;
  try {
    for (const auto& j : doc.at("segments")) {
      VesselSegment s;
      s.id = j.at("id").get<int>();
      try {
        s.kind = parse_vessel_kind(j.at("kind").get<std::string>());
        s.start = vec_from_json(j.at("start_xyz_m"));
        s.end = vec_from_json(j.at("end_xyz_m"));
        s.flow_speed = j.at("flow_speed_mps").get<double>();
        for (const auto& b : j.at("downstream")) s.downstream.push_back({b.at("id").get<int>(), b.at("p").get<double>()});
        s.name = j.value("name", "");
        s.region = j.value("region", "");
      } catch (const ValidationError& e) {
        throw ValidationError(seg_where(s.id), e.what());
      } catch (const std::exception& e) {
        throw ValidationError(seg_where(s.id), e.what());
      }
      segments.push_back(std::move(s));
    }
    injection = doc.at("injection_points").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ValidationError("graph", e.what());
  }
  return VesselGraph(std::move(segments), std::move(injection));
}

VesselGraph VesselGraph::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open graph file");
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), e.what());
  }
}

json VesselGraph::to_json() const {
  json segs = json::array();
  for (const auto& s : segments_) {
    json down = json::array();
    for (const auto& b : s.downstream) down.push_back({{"id", b.id}, {"p", b.p}});
    json j = {{"id", s.id},
              {"kind", nanoloc::to_string(s.kind)},
              {"start_xyz_m", vec_to_json(s.start)},
              {"end_xyz_m", vec_to_json(s.end)},
              {"flow_speed_mps", s.flow_speed},
              {"downstream", down}};
    if (!s.name.empty()) j["name"] = s.name;
    if (!s.region.empty()) j["region"] = s.region;
    segs.push_back(std::move(j));
  }
  return {{"segments", segs}, {"injection_points", injection_points_}};
}

const VesselSegment& VesselGraph::segment(int id) const { return segments_[index_of(id)]; }

std::size_t VesselGraph::index_of(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown segment id " + std::to_string(id));
  return it->second;
}

std::optional<int> VesselGraph::find_by_name(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s.id;
  }
  return std::nullopt;
}

ClosestPoint closest_point_on_segment(const VesselSegment& seg, const Vec3& p) {
  const Vec3 d = seg.end - seg.start;
  const double len2 = d.squaredNorm();
  double t = (p - seg.start).dot(d) / len2;
  ClosestPoint cp;
  cp.segment_id = seg.id;
  if (t <= 0.0) {
    t = 0.0;
    cp.at_endpoint = true;
  } else if (t >= 1.0) {
    t = 1.0;
    cp.at_endpoint = true;
  }
  cp.arc = t * std::sqrt(len2);
  cp.point = seg.start + t * d;
  cp.distance = (p - cp.point).norm();
  return cp;
}

ClosestPoint VesselGraph::closest_point(const Vec3& p) const {
  ClosestPoint best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const auto& s : segments_) {
    const auto cp = closest_point_on_segment(s, p);
    if (cp.distance < best.distance || (cp.distance == best.distance && cp.segment_id < best.segment_id)) {
      best = cp;
    }
  }
  return best;
}

BnsState initial_state(const VesselGraph& graph, int segment_id, double arc) {
  const auto& s = graph.segment(segment_id);
  if (arc < 0.0 || arc > s.length()) throw DomainError("arc offset outside segment");
  BnsState st;
  st.segment_id = segment_id;
  st.arc_offset = arc;
  st.position = s.point_at(arc);
  st.velocity = s.flow_speed * s.tangent();
  st.orientation = align_x_to(s.tangent());
  return st;
}

BnsState step(const BnsState& state, const VesselGraph& graph, double dt, Rng& rng) {
  BnsState next = state;
  const VesselSegment* seg = &graph.segment(state.segment_id);
  double remaining_time = dt;
  double arc = state.arc_offset;
  bool turned = false;
  while (true) {
    const double length = seg->length();
    const double reach = seg->flow_speed * remaining_time;
    if (arc + reach <= length) {
      arc += reach;
      break;
    }
    remaining_time -= (length - arc) / seg->flow_speed;
    const double u = rng.uniform01();
    double cumulative = 0.0;
    int chosen = seg->downstream.back().id;
    for (const auto& b : seg->downstream) {
      cumulative += b.p;
      if (u < cumulative) {
        chosen = b.id;
        break;
      }
    }
    const VesselSegment* nxt = &graph.segment(chosen);
    // Shortest-arc turn keeps the roll about the flow axis.
    next.orientation = (Quat::FromTwoVectors(seg->tangent(), nxt->tangent()) * next.orientation).normalized();
    seg = nxt;
    arc = 0.0;
    turned = true;
  }
  next.segment_id = seg->id;
  next.arc_offset = arc;
  next.position = seg->point_at(arc);
  // A step that turns a corner reports its mean velocity, so the sampled
  // kinematics integrate back to the same positions.
  next.velocity = turned ? Vec3((next.position - state.position) / dt) : Vec3(seg->flow_speed * seg->tangent());
  next.sim_time = state.sim_time + dt;
  return next;
}

void walk(const VesselGraph& graph, int injection_segment, double duration, double dt, Rng& rng,
          const std::function<bool(const BnsState&)>& visit) {
  if (!(duration >= 0.0)) throw DomainError("duration must be >= 0");
  if (!(dt > 0.0)) throw DomainError("dt must be > 0");
  const auto steps = static_cast<long>(std::floor(duration / dt + 1e-9));
  BnsState st = initial_state(graph, injection_segment);
  if (!visit(st)) return;
  for (long k = 1; k <= steps; ++k) {
    st = step(st, graph, dt, rng);
    st.sim_time = k * dt;  // avoid accumulating rounding in the clock
    if (!visit(st)) return;
  }
}

Trajectory trajectory(const VesselGraph& graph, int injection_segment, double duration, double dt,
                      std::uint64_t seed) {
  Trajectory tr;
  auto rng = Rng::derive(seed, "trajectory");
  tr.states.reserve(static_cast<std::size_t>(duration / dt) + 2);
  walk(graph, injection_segment, duration, dt, rng, [&](const BnsState& s) {
    tr.states.push_back(s);
    tr.segment_log.push_back(s.segment_id);
    return true;
  });
  return tr;
}

std::unordered_map<int, long> segment_entry_counts(const std::vector<int>& segment_log) {
  std::unordered_map<int, long> counts;
  for (std::size_t i = 0; i < segment_log.size(); ++i) {
    if (i == 0 || segment_log[i] != segment_log[i - 1]) ++counts[segment_log[i]];
  }
  return counts;
}

std::vector<AnomalyEvent> scatter_events(const VesselGraph& graph, int count, double sensing_radius,
                                         std::uint64_t seed) {
  if (count < 0) throw DomainError("event count must be >= 0");
  if (!(sensing_radius > 0.0)) throw DomainError("sensing radius must be > 0");
  auto rng = Rng::derive(seed, "events");
  std::vector<AnomalyEvent> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    double arc = rng.uniform(0.0, graph.total_length());
    const VesselSegment* chosen = &graph.segments().back();
    for (const auto& s : graph.segments()) {
      if (arc <= s.length()) {
        chosen = &s;
        break;
      }
      arc -= s.length();
    }
    arc = std::clamp(arc, 0.0, chosen->length());
    out.push_back({i + 1, chosen->point_at(arc), sensing_radius, chosen->id});
  }
  return out;
}

std::vector<AnomalyEvent> events_from_json(const json& doc, const VesselGraph& graph) {
  if (doc.contains("scatter")) {
    const auto& s = doc["scatter"];
    return scatter_events(graph, s.at("count").get<int>(), s.value("sensing_radius_m", 0.001),
                          s.value("seed", std::uint64_t{1}));
  }
  std::vector<AnomalyEvent> out;
  const json& list = doc.is_array() ? doc : doc.at("events");
  for (const auto& j : list) {
    AnomalyEvent e;
    e.id = j.at("id").get<int>();
    const std::string where = "event " + std::to_string(e.id);
    e.segment_id = j.at("segment_id").get<int>();
    if (!graph.contains(e.segment_id)) throw ValidationError(where, "unknown segment");
    const auto& seg = graph.segment(e.segment_id);
    e.sensing_radius = j.value("sensing_radius_m", 0.001);
    if (!(e.sensing_radius > 0.0)) throw ValidationError(where, "sensing_radius_m must be > 0");
    if (j.contains("arc_m")) {
      const double arc = j["arc_m"].get<double>();
      if (arc < 0.0 || arc > seg.length()) throw ValidationError(where, "arc_m outside segment");
      e.true_location = seg.point_at(arc);
    } else {
      e.true_location = vec_from_json(j.at("location_xyz_m"));
      if (closest_point_on_segment(seg, e.true_location).distance > 1e-9) {
        throw ValidationError(where, "location is not on the segment centerline");
      }
    }
    out.push_back(e);
  }
  return out;
}

json to_json(const std::vector<AnomalyEvent>& events) {
  json list = json::array();
  for (const auto& e : events) {
    list.push_back({{"id", e.id},
                    {"segment_id", e.segment_id},
                    {"location_xyz_m", vec_to_json(e.true_location)},
                    {"sensing_radius_m", e.sensing_radius}});
  }
  return {{"events", list}};
}

EventSensor::EventSensor(const VesselGraph& graph, std::vector<AnomalyEvent> events) : events_(std::move(events)) {
  for (std::size_t i = 0; i < events_.size(); ++i) {
    if (!by_id_.emplace(events_[i].id, i).second) {
      throw ValidationError("event " + std::to_string(events_[i].id), "duplicate event id");
    }
  }
  // A sensor on segment s can only be inside balls that touch s.
  for (const auto& s : graph.segments()) {
    auto& list = candidates_[s.id];
    for (std::size_t i = 0; i < events_.size(); ++i) {
      if (closest_point_on_segment(s, events_[i].true_location).distance < events_[i].sensing_radius) {
        list.push_back(i);
      }
    }
  }
}

const AnomalyEvent& EventSensor::event(int id) const { return events_.at(by_id_.at(id)); }

std::vector<int> EventSensor::sense(const BnsState& state) {
  auto within = [&](std::size_t i) {
    return (state.position - events_[i].true_location).norm() < events_[i].sensing_radius;
  };
  std::erase_if(inside_, [&](std::size_t i) { return !within(i); });
  std::vector<int> fired;
  auto it = candidates_.find(state.segment_id);
  if (it == candidates_.end()) return fired;
  for (auto i : it->second) {
    if (within(i) && std::find(inside_.begin(), inside_.end(), i) == inside_.end()) {
      inside_.push_back(i);
      fired.push_back(events_[i].id);
    }
  }
  return fired;
}

BodyRegion body_region(const Vec3& point) {
  return (std::abs(point.x()) <= 0.15 && point.y() >= 0.85) ? BodyRegion::kTorsoHead : BodyRegion::kLimb;
}

}  // namespace nanoloc
