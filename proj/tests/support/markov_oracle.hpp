#pragma once

#include <map>
#include <vector>

#include <Eigen/Dense>

#include "nanoloc/vasculature.hpp"

namespace nanoloc::testing {

// Stationary distribution of the embedded jump chain over segments: the
// long-run share of segment entries. Solves pi (P - I) = 0 with sum(pi) = 1
// by replacing one balance equation with the normalization.
inline std::map<int, double> stationary_entries(const VesselGraph& graph) {
  const auto& segs = graph.segments();
  const auto n = static_cast<Eigen::Index>(segs.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (const auto& s : segs) {
    for (const auto& b : s.downstream) {
      p(static_cast<Eigen::Index>(graph.index_of(s.id)), static_cast<Eigen::Index>(graph.index_of(b.id))) += b.p;
    }
  }
  Eigen::MatrixXd a = (p - Eigen::MatrixXd::Identity(n, n)).transpose();
  a.row(n - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd pi = a.fullPivLu().solve(rhs);
  std::map<int, double> out;
  for (const auto& s : segs) out[s.id] = pi(static_cast<Eigen::Index>(graph.index_of(s.id)));
  return out;
}

}  // namespace nanoloc::testing
