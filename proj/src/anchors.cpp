#include "nanoloc/anchors.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include "nanoloc/errors.hpp"

namespace nanoloc {

using nlohmann::json;

namespace {

double horizontal_reach(const VesselGraph& graph, const Vec3& center) {
  double best = std::numeric_limits<double>::infinity();
  const Vec3 flat_center(center.x(), center.y(), 0.0);
  for (const auto& s : graph.segments()) {
    VesselSegment flat = s;
    flat.start.z() = 0.0;
    flat.end.z() = 0.0;
    if (!(flat.length() > 0.0)) {
      best = std::min(best, (flat.start - flat_center).norm());
      continue;
    }
    best = std::min(best, closest_point_on_segment(flat, flat_center).distance);
  }
  return best;
}

std::vector<std::string> placement_warnings(const std::vector<Anchor>& anchors, const VesselGraph& graph) {
  std::vector<std::string> warnings;
  for (const auto& a : anchors) {
    const double reach = horizontal_reach(graph, a.center);
    if (reach > a.patch_half_width) {
      warnings.push_back("anchor " + std::to_string(a.id) + " is " + std::to_string(reach * 1e3) +
                         " mm from the nearest vessel and can never be visited");
    }
  }
  return warnings;
}

}  // namespace

void Anchor::validate() const {
  const std::string where = "anchor " + std::to_string(id);
  if (!(patch_half_width > 0.0)) throw ValidationError(where, "patch_half_width_m must be > 0");
  if (!(skin_thickness >= 0.0)) throw ValidationError(where, "skin_thickness_m must be >= 0");
  if (clock_offset != 0.0) throw ValidationError(where, "anchors are synchronized; clock offset must be 0");
  if (!center.allFinite()) throw ValidationError(where, "center must be finite");
}

ContactGate parse_contact_gate(const std::string& text) {
  if (text == "link_budget") return ContactGate::kLinkBudget;
  if (text == "proximity") return ContactGate::kProximity;
  throw ValidationError("contact_gate", "expected 'link_budget' or 'proximity', got '" + text + "'");
}

std::string to_string(ContactGate gate) { return gate == ContactGate::kLinkBudget ? "link_budget" : "proximity"; }

double anchor_link_power_dbw(const Anchor& anchor, const CommSettings& comm) {
  return backscatter_power(anchor.stack, comm.link, comm.carrier_hz, comm.channel);
}

bool in_comm_range(const Anchor& anchor, const Vec3& bns_position, const CommSettings& comm) {
  if (horizontal_distance(anchor.center, bns_position) > anchor.patch_half_width) return false;
  if (comm.gate == ContactGate::kProximity) return true;
  return meets_sensitivity(anchor_link_power_dbw(anchor, comm), comm.sensitivity);
}

ExchangeResult exchange(const Anchor& anchor, const BnsState& truth, int sensor_id, const EstimatorState& estimate,
                        std::vector<StampedEvent>& pending, double sim_time, const CommSettings& comm) {
  if (!in_comm_range(anchor, truth.position, comm)) {
    throw ContractViolation("exchange with anchor " + std::to_string(anchor.id) + " while out of range");
  }
  ExchangeResult out;
  const double rx_time = sim_time + anchor.clock_offset;
  for (const auto& e : pending) {
    SensorPacket p;
    p.anchor_id = anchor.id;
    p.sensor_id = sensor_id;
    p.reading = 1.0;
    p.unit = "event";
    p.location_stamp = e.estimated_location;
    p.event_id = e.event_id;
    p.rx_time = rx_time;
    out.packets.push_back(std::move(p));
  }
  SensorPacket heartbeat;
  heartbeat.anchor_id = anchor.id;
  heartbeat.sensor_id = sensor_id;
  heartbeat.reading = estimate.distance_since_reset;
  heartbeat.unit = "m";
  heartbeat.location_stamp = estimate.position;
  heartbeat.rx_time = rx_time;
  out.packets.push_back(std::move(heartbeat));
  pending.clear();

  auto& d = out.directive;
  d.anchor_id = anchor.id;
  d.center = anchor.center;
  d.patch_half_width = anchor.patch_half_width;
  d.skin_thickness = anchor.skin_thickness;
  d.issued_at = rx_time;
  d.in_range = true;
  d.velocity = truth.velocity;
  d.orientation = truth.orientation;
  return out;
}

void AnchorTable::append(const SensorPacket& packet) {
  if (packet.anchor_id != anchor_id) throw ContractViolation("packet belongs to another anchor");
  auto pos = std::upper_bound(rows.begin(), rows.end(), packet.rx_time,
                              [](double t, const SensorPacket& p) { return t < p.rx_time; });
  rows.insert(pos, packet);
}

SinkView merge_tables(const std::vector<AnchorTable>& tables) {
  using Key = std::tuple<double, int, int, int>;  // rx_time, anchor, sensor, event (-1 = none)
  auto key_of = [](const SensorPacket& p) { return Key{p.rx_time, p.anchor_id, p.sensor_id, p.event_id.value_or(-1)}; };
  std::set<Key> seen;
  SinkView view;
  for (const auto& t : tables) {
    for (const auto& p : t.rows) {
      if (seen.insert(key_of(p)).second) view.merged.push_back(p);
    }
  }
  std::sort(view.merged.begin(), view.merged.end(),
            [&](const SensorPacket& a, const SensorPacket& b) { return key_of(a) < key_of(b); });
  for (const auto& p : view.merged) {
    auto it = view.last_known.find(p.sensor_id);
    if (it == view.last_known.end() || p.rx_time >= it->second.rx_time) {
      view.last_known[p.sensor_id] = {p.location_stamp, p.rx_time, p.anchor_id};
    }
  }
  return view;
}

void export_ndjson(const SinkView& view, std::ostream& out) {
  for (const auto& p : view.merged) {
    json j = {{"anchor_id", p.anchor_id},
              {"sensor_id", p.sensor_id},
              {"rx_time_s", p.rx_time},
              {"reading", p.reading},
              {"unit", p.unit},
              {"location_xyz_m", {p.location_stamp.x(), p.location_stamp.y(), p.location_stamp.z()}},
              {"event_id", p.event_id ? json(*p.event_id) : json(nullptr)}};
    out << j.dump() << '\n';
  }
}

json paper20_layout() {
  // Torso and head carry 13 of the 20 patches; the rest sit on the limbs.
  static const double centers[20][2] = {
      {-0.290, 1.030}, {0.065, 0.930},  {0.080, 1.020},  {0.030, 1.640},  {-0.075, 1.235},
      {0.100, 1.420},  {0.005, 1.405},  {-0.036, 1.520}, {0.036, 1.520},  {-0.010, 1.160},
      {0.005, 0.970},  {0.080, 1.120},  {-0.080, 1.020}, {-0.030, 1.640}, {-0.222, 1.290},
      {0.222, 1.290},  {-0.092, 0.700}, {0.092, 0.700},  {-0.092, 0.300}, {0.092, 0.300}};
  json list = json::array();
  for (int i = 0; i < 20; ++i) {
    list.push_back({{"id", i + 1},
                    {"center_xyz_m", {centers[i][0], centers[i][1], 0.0}},
                    {"patch_half_width_m", 0.025},
                    {"stack_ref", "default"}});
  }
  return list;
}

Placement place_anchors(const std::string& preset, const VesselGraph& graph, const LayerStack& default_stack) {
  if (preset != "paper20") throw ValidationError("anchors", "unknown preset '" + preset + "'");
  return place_anchors(paper20_layout(), graph, {{"default", default_stack}});
}

Placement place_anchors(const json& layout, const VesselGraph& graph, const std::map<std::string, LayerStack>& stacks) {
  const json& list = layout.is_object() ? layout.at("anchors") : layout;
  Placement out;
  std::set<int> ids;
  for (const auto& j : list) {
    Anchor a;
    try {
      a.id = j.at("id").get<int>();
      const auto& c = j.at("center_xyz_m");
      a.center = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
      a.patch_half_width = j.value("patch_half_width_m", 0.025);
      a.skin_thickness = j.value("skin_thickness_m", 0.0025);
      a.stack_ref = j.value("stack_ref", std::string("default"));
    } catch (const json::exception& e) {
      throw ValidationError("anchors", e.what());
    }
    const std::string where = "anchor " + std::to_string(a.id);
    if (!ids.insert(a.id).second) throw ValidationError(where, "duplicate anchor id");
    auto it = stacks.find(a.stack_ref);
    if (it == stacks.end()) throw ValidationError(where, "unknown stack_ref '" + a.stack_ref + "'");
    a.stack = it->second;
    a.validate();
    out.anchors.push_back(std::move(a));
  }
  out.warnings = placement_warnings(out.anchors, graph);
  return out;
}

Placement load_anchors(const std::filesystem::path& path, const VesselGraph& graph,
                       const std::map<std::string, LayerStack>& stacks) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open anchor layout");
  try {
    return place_anchors(json::parse(in), graph, stacks);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), e.what());
  }
}

json to_json(const std::vector<Anchor>& anchors) {
  json list = json::array();
  for (const auto& a : anchors) {
    list.push_back({{"id", a.id},
                    {"center_xyz_m", {a.center.x(), a.center.y(), a.center.z()}},
                    {"patch_half_width_m", a.patch_half_width},
                    {"skin_thickness_m", a.skin_thickness},
                    {"stack_ref", a.stack_ref}});
  }
  return list;
}

}  // namespace nanoloc
