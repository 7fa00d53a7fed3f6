#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "nanoloc/vasculature.hpp"

namespace nanoloc::testing {

inline std::filesystem::path source_dir() { return NANOLOC_SOURCE_DIR; }
inline std::filesystem::path asset(const std::string& relative) { return source_dir() / relative; }

inline VesselSegment make_segment(int id, Vec3 a, Vec3 b, double speed, std::vector<Branch> down,
                                  VesselKind kind = VesselKind::kArtery) {
  VesselSegment s;
  s.id = id;
  s.kind = kind;
  s.start = a;
  s.end = b;
  s.flow_speed = speed;
  s.downstream = std::move(down);
  return s;
}

// A -> B -> A, each 0.1 m, at `speed`.
inline VesselGraph two_segment_loop(double speed = 0.1) {
  return VesselGraph({make_segment(1, {0, 0, 0}, {0.1, 0, 0}, speed, {{2, 1.0}}),
                      make_segment(2, {0.1, 0, 0}, {0, 0, 0}, speed, {{1, 1.0}}, VesselKind::kVein)},
                     {1});
}

// Segment 1 splits into 2 (p) and 3 (1 - p); both return to 1.
inline VesselGraph fork(double p) {
  return VesselGraph({make_segment(1, {0, 0, 0}, {0.01, 0, 0}, 0.1, {{2, p}, {3, 1.0 - p}}),
                      make_segment(2, {0.01, 0, 0}, {0, 0.01, 0}, 0.1, {{1, 1.0}}),
                      make_segment(3, {0.01, 0, 0}, {0, -0.01, 0}, 0.1, {{1, 1.0}})},
                     {1});
}

}  // namespace nanoloc::testing
