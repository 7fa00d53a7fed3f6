#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nanoloc/channel.hpp"
#include "nanoloc/imu.hpp"

namespace nanoloc {

struct Anchor {
  int id = 0;
  Vec3 center = Vec3::Zero();
  double patch_half_width = 0.025;  // m
  double skin_thickness = 0.0025;   // m
  std::string stack_ref = "default";
  LayerStack stack;
  double clock_offset = 0.0;  // anchors are synchronized

  void validate() const;
};

/// How the anchor decides that a sensor is reachable.
enum class ContactGate {
  kLinkBudget,  // inside the patch and above the receiver sensitivity
  kProximity,   // inside the patch only
};

ContactGate parse_contact_gate(const std::string& text);
std::string to_string(ContactGate gate);

struct CommSettings {
  LinkParams link;
  ChannelOptions channel;
  double carrier_hz = 0.5e12;
  Sensitivity sensitivity;
  ContactGate gate = ContactGate::kLinkBudget;
};

/// Received backscatter power through the anchor's stack at the carrier.
double anchor_link_power_dbw(const Anchor& anchor, const CommSettings& comm);

bool in_comm_range(const Anchor& anchor, const Vec3& bns_position, const CommSettings& comm);

struct SensorPacket {
  int anchor_id = 0;
  int sensor_id = 0;
  double reading = 0.0;
  std::string unit;
  Vec3 location_stamp = Vec3::Zero();
  std::optional<int> event_id;
  double rx_time = 0.0;  // anchor clock
};

struct ExchangeResult {
  std::vector<SensorPacket> packets;
  ResetDirective directive;
};

/// One packet per pending event plus a heartbeat carrying the current stamp.
/// `pending` is cleared (every transfer is acknowledged).
ExchangeResult exchange(const Anchor& anchor, const BnsState& truth, int sensor_id,
                        const EstimatorState& estimate, std::vector<StampedEvent>& pending, double sim_time,
                        const CommSettings& comm);

struct AnchorTable {
  int anchor_id = 0;
  std::vector<SensorPacket> rows;  // ordered by rx_time

  void append(const SensorPacket& packet);
};

struct SinkEntry {
  Vec3 location = Vec3::Zero();
  double rx_time = 0.0;
  int anchor_id = 0;
};

struct SinkView {
  std::vector<SensorPacket> merged;        // ordered by rx_time
  std::map<int, SinkEntry> last_known;     // per sensor
};

/// Union of the tables with duplicate rows, keyed by
/// (anchor_id, sensor_id, rx_time, event_id), dropped.
SinkView merge_tables(const std::vector<AnchorTable>& tables);

/// Writes one JSON object per merged packet.
void export_ndjson(const SinkView& view, std::ostream& out);

struct Placement {
  std::vector<Anchor> anchors;
  std::vector<std::string> warnings;  // anchors that can never be visited
};

/// `preset` names a built-in layout ("paper20"); otherwise `layout` is an
/// explicit list [{id, center_xyz_m, patch_half_width_m, stack_ref}].
Placement place_anchors(const std::string& preset, const VesselGraph& graph, const LayerStack& default_stack);
Placement place_anchors(const nlohmann::json& layout, const VesselGraph& graph,
                        const std::map<std::string, LayerStack>& stacks);
Placement load_anchors(const std::filesystem::path& path, const VesselGraph& graph,
                       const std::map<std::string, LayerStack>& stacks);

nlohmann::json paper20_layout();
nlohmann::json to_json(const std::vector<Anchor>& anchors);

}  // namespace nanoloc
