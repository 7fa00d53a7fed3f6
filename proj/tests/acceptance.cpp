// Acceptance run: one PASS/FAIL line per criterion, with the measured values.
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nanoloc/experiments.hpp"
#include "support/fixtures.hpp"
#include "support/markov_oracle.hpp"

using namespace nanoloc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool passed = true;
  std::vector<std::string> details;

  void require(bool ok, const std::string& what) {
    passed = passed && ok;
    details.push_back(std::string(ok ? "ok   " : "MISS ") + what);
  }
};

fs::path out_root() {
  const auto p = fs::current_path() / "acceptance_out";
  fs::create_directories(p);
  return p;
}

MetricsReport run(const std::string& name, const RunOptions& opt = {}) {
  const auto cfg = load_scenario(nanoloc::testing::asset("scenarios/" + name + ".json"));
  auto rep = run_scenario(cfg, opt);
  write_report(rep, out_root());
  return rep;
}

void require_check(Outcome& o, const MetricsReport& rep, const std::string& id) {
  const auto* c = rep.check(id);
  if (!c) {
    o.require(false, rep.scenario + "." + id + " missing");
    return;
  }
  o.require(c->passed, rep.scenario + "." + id + " = " + format_number(c->value) + " (expected " + c->expected + ")");
}

int report(int number, const std::string& title, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0.0) {
    o.require(secs < limit_s, "runtime " + format_number(std::round(secs * 100) / 100) + " s < " +
                                  format_number(limit_s) + " s");
  }
  std::printf("%s criterion %d: %s (%.2f s)\n", o.passed ? "PASS" : "FAIL", number, title.c_str(), secs);
  for (const auto& d : o.details) std::printf("       %s\n", d.c_str());
  std::fflush(stdout);
  return o.passed ? 0 : 1;
}

Outcome terminal_power() {
  Outcome o;
  const auto rep = run("fig6");
  for (const char* id : {"terminal_power_0.5THz", "terminal_power_0.8THz", "terminal_power_1THz"}) {
    require_check(o, rep, id);
  }
  return o;
}

Outcome capacity() {
  Outcome o;
  const auto rep = run("fig7cap");
  require_check(o, rep, "forward_capacity");
  require_check(o, rep, "backward_capacity");
  return o;
}

Outcome absorption() {
  Outcome o;
  require_check(o, run("fig4"), "absorption_ordering");
  require_check(o, run("fig5"), "absorption_dominance");
  return o;
}

Outcome visits() {
  Outcome o;
  const auto rep = run("fig8");
  require_check(o, rep, "fraction_within_window");
  require_check(o, rep, "max_interval");
  return o;
}

Outcome error_curves() {
  Outcome o;
  const auto rep = run("fig9");
  require_check(o, rep, "rising");
  require_check(o, rep, "ordered_by_gyro_noise");
  require_check(o, rep, "plateau");
  require_check(o, rep, "error_at_500mm");
  return o;
}

Outcome oracles() {
  Outcome o;
  const auto g = VesselGraph::load(nanoloc::testing::asset("graphs/simplified_body.json"));

  // Zero-noise dead reckoning against the ground truth, 100 s at 100 Hz.
  {
    const ImuSpec spec;
    const auto cfg = estimator_config_for(spec);
    double worst = 0.0;
    int seeds_over = 0;
    const int seeds = 20;
    for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
      const auto tr = trajectory(g, g.injection_points().front(), 100.0, 0.01, seed);
      Rng rng(seed);
      auto est = estimator_from_truth(tr.states[0], cfg);
      double seed_worst = 0.0;
      for (std::size_t k = 1; k < tr.states.size(); ++k) {
        est = predict(est, synthesize_imu(tr.states[k - 1], tr.states[k], spec, rng), 0.01, cfg);
        seed_worst = std::max(seed_worst, (est.position - tr.states[k].position).norm());
      }
      worst = std::max(worst, seed_worst);
      seeds_over += seed_worst > 1e-3;
    }
    o.require(worst <= 1e-3, "dead reckoning max error " + format_number(worst) + " m over " +
                                 std::to_string(seeds) + " seeds (" + std::to_string(seeds_over) +
                                 " above 1e-3 m)");
  }

  // Branching frequencies at a {0.7, 0.3} junction.
  {
    const auto f = nanoloc::testing::fork(0.7);
    Rng rng(11);
    auto s = initial_state(f, 1);
    long to2 = 0, total = 0;
    int last = 1;
    while (total < 100000) {
      s = step(s, f, 0.05, rng);
      if (s.segment_id != last && last == 1) {
        to2 += s.segment_id == 2;
        ++total;
      }
      last = s.segment_id;
    }
    const double p = static_cast<double>(to2) / total;
    o.require(std::abs(p - 0.7) <= 0.01, "branch split " + format_number(p) + " vs 0.7 over 1e5 crossings");
  }

  // Stationary entry distribution against the embedded Markov chain.
  {
    const auto pi = nanoloc::testing::stationary_entries(g);
    std::map<int, long> counts;
    long total = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto rng = Rng::derive(seed, "trajectory");
      int last = -1;
      walk(g, g.injection_points().front(), 20000.0, 0.01, rng, [&](const BnsState& s) {
        if (s.segment_id != last) {
          ++counts[s.segment_id];
          ++total;
        }
        last = s.segment_id;
        return true;
      });
    }
    double tv = 0.0;
    for (const auto& [id, p] : pi) tv += std::abs(p - static_cast<double>(counts[id]) / total);
    tv *= 0.5;
    o.require(tv <= 0.02, "stationary visit distribution TV " + format_number(tv) + " over 10 seeds");
  }

  // n^2 = eps_r.
  {
    double worst = 0.0;
    for (const auto& m : default_tissues().models()) {
      for (double f = 0.1e12; f <= 1e12 + 1.0; f += 0.01e12) {
        const auto op = optical_properties(m, f);
        const std::complex<double> n(op.n_real, -op.n_imag);
        worst = std::max(worst, std::abs(n * n - op.eps_r) / std::abs(op.eps_r));
      }
    }
    o.require(worst <= 1e-12, "permittivity round trip max relative error " + format_number(worst));
  }
  return o;
}

Outcome determinism() {
  Outcome o;
  auto same = [&](const std::string& name, const RunOptions& opt) {
    const auto cfg = load_scenario(nanoloc::testing::asset("scenarios/" + name + ".json"));
    const auto a = run_scenario(cfg, opt);
    RunOptions other = opt;
    other.workers = 1;
    const auto b = run_scenario(cfg, other);
    bool identical = a.tables.size() == b.tables.size();
    for (std::size_t i = 0; identical && i < a.tables.size(); ++i) {
      identical = a.tables[i].to_csv() == b.tables[i].to_csv();
    }
    std::string what = name + " CSVs byte-identical across reruns";
    if (opt.seed_count) what += " (" + std::to_string(*opt.seed_count) + " seeds, " + format_number(*opt.duration_s) + " s)";
    o.require(identical, what);
  };
  for (const char* name : {"fig4", "fig5", "fig6", "fig7cap", "fig7visits"}) same(name, {});
  RunOptions reduced;
  reduced.seed_count = 5;
  reduced.duration_s = 1000.0;
  same("fig8", reduced);
  reduced.duration_s = 120.0;
  same("fig9", reduced);
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  failures += report(1, "backscattered power at full depth", 5.0, terminal_power);
  failures += report(2, "capacity orders of magnitude", 10.0, capacity);
  failures += report(3, "absorption ordering and dominance", 5.0, absorption);
  failures += report(4, "anchor visit statistics", 180.0, visits);
  failures += report(5, "localization error-curve shape", 300.0, error_curves);
  failures += report(6, "oracle equivalences", 120.0, oracles);
  failures += report(7, "determinism", 0.0, determinism);
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
