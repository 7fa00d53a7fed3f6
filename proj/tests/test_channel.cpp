#include <cmath>
#include <numbers>

#include <doctest.h>

#include "nanoloc/channel.hpp"
#include "nanoloc/errors.hpp"
#include "support/fixtures.hpp"

using namespace nanoloc;

namespace {

// mpmath references, see tests/oracles/channel_goldens.py.
struct BloodLoss {
  double d, spread, abs;
};
constexpr BloodLoss kBloodLoss[] = {{0.5e-3, 26.769659070885625, 74.509319037249862},
                                    {1.0e-3, 32.790258984165249, 149.01863807449972},
                                    {2.0e-3, 38.810858897444873, 298.03727614899945}};
constexpr double kStackSpread = 83.612990796920514;
constexpr double kStackAbs = 216.50497045558154;
constexpr double kStackTotal = 300.11796125250205;
constexpr double kStackNoise = 4.2800118996115324e-21;
constexpr double kStackPrb = -549.11186681490874;

DielectricModel lossless(double eps) {
  HavriliakNegamiParams hn;
  hn.eps_inf = eps;
  hn.terms = {{0.0, 1e-12, 1.0, 1.0}};
  return {"lossless", hn};
}

}  // namespace

TEST_CASE("blood layer losses at 0.5 THz match the reference") {
  const auto blood = default_tissues().at("blood");
  for (const auto& g : kBloodLoss) {
    const auto l = path_loss_layer({blood, g.d}, 0.5e12, g.d);
    CHECK(l.spread_db == doctest::Approx(g.spread).epsilon(1e-12));
    CHECK(l.abs_db == doctest::Approx(g.abs).epsilon(1e-12));
  }
}

TEST_CASE("default stack loss, noise and received power at 0.5 THz") {
  const auto stack = default_stack(default_tissues());
  CHECK(stack.total_thickness() == doctest::Approx(2.5e-3).epsilon(1e-15));
  const auto l = path_loss_stack(stack, 0.5e12);
  CHECK(l.spread_db == doctest::Approx(kStackSpread).epsilon(1e-12));
  CHECK(l.abs_db == doctest::Approx(kStackAbs).epsilon(1e-12));
  CHECK(l.total_db() == doctest::Approx(kStackTotal).epsilon(1e-12));
  CHECK(noise_psd(stack, LinkParams{}, 0.5e12) == doctest::Approx(kStackNoise).epsilon(1e-10));
  CHECK(backscatter_power(stack, LinkParams{}, 0.5e12) == doctest::Approx(kStackPrb).epsilon(1e-12));
}

TEST_CASE("spreading loss vanishes at d = lambda_g / (4 pi)") {
  const auto blood = default_tissues().at("blood");
  const auto o = optical_properties(blood, 0.5e12);
  const double d = o.lambda_g / (4.0 * std::numbers::pi);
  CHECK(std::abs(path_loss_layer({blood, d}, 0.5e12, d).spread_db) < 1e-12);
}

TEST_CASE("lossless layer has no absorption loss") {
  const auto m = lossless(2.25);
  for (double d : {1e-5, 1e-3, 1e-1}) CHECK(path_loss_layer({m, d}, 0.5e12, d).abs_db == 0.0);
}

TEST_CASE("single-layer stack reduces to the layer loss") {
  const auto dermis = default_tissues().at("dermis");
  const LayerStack s({{dermis, 1.3e-3}});
  const auto a = path_loss_stack(s, 0.7e12);
  const auto b = path_loss_layer({dermis, 1.3e-3}, 0.7e12, 1.3e-3);
  CHECK(a.spread_db == b.spread_db);
  CHECK(a.abs_db == b.abs_db);
}

TEST_CASE("doubling thickness doubles absorption and adds 6 dB spreading per layer") {
  const auto stack = default_stack(default_tissues());
  for (double f : {0.2e12, 0.5e12, 0.9e12}) {
    const auto a = path_loss_stack(stack, f);
    const auto b = path_loss_stack(stack.scaled(2.0), f);
    CHECK(b.abs_db == doctest::Approx(2.0 * a.abs_db).epsilon(1e-13));
    CHECK(b.spread_db - a.spread_db ==
          doctest::Approx(3.0 * 20.0 * std::log10(2.0)).epsilon(1e-12));
  }
}

TEST_CASE("lossless zero-spreading stack returns P_T + G_T + G_R") {
  const auto m = lossless(2.25);
  const auto o = optical_properties(m, 0.5e12);
  const LayerStack s({{m, o.lambda_g / (4.0 * std::numbers::pi)}});
  const LinkParams p;
  CHECK(backscatter_power(s, p, 0.5e12) ==
        doctest::Approx(p.p_t_db() + p.g_t_db() + p.g_r_db()).epsilon(1e-12));
  CHECK(p.p_t_db() == doctest::Approx(36.989700043360187));
}

TEST_CASE("noise is zero without absorption and saturates at kT") {
  const LinkParams p;
  CHECK(noise_psd(LayerStack({{lossless(2.0), 1e-3}}), p, 0.5e12) == 0.0);
  const LayerStack thick({{default_tissues().at("blood"), 0.05}});
  CHECK(noise_psd(thick, p, 1e12) == doctest::Approx(kBoltzmann * 310.0).epsilon(1e-12));
  CHECK(kBoltzmann * 310.0 == doctest::Approx(4.28e-21).epsilon(1e-3));
}

TEST_CASE("capacity edge cases") {
  const auto stack = default_stack(default_tissues());
  LinkParams p;
  p.p_t = 0.0;
  CHECK(channel_capacity(stack, p, LinkDirection::kForward).bits_per_second == 0.0);
  CHECK(channel_capacity(stack, p, LinkDirection::kBackward).bits_per_second == 0.0);

  // N = 0 everywhere: every sub-band hits the SNR cap and is flagged.
  LinkParams q;
  q.band = {0.1e12, 0.2e12};
  q.delta_f = 10e9;
  ChannelOptions opt;
  opt.max_snr_db = 100.0;
  const auto c = channel_capacity(LayerStack({{lossless(2.0), 1e-3}}), q, LinkDirection::kForward, opt);
  CHECK(c.subbands == 10);
  CHECK(c.capped_subbands == 10);
  CHECK(c.bits_per_second == doctest::Approx(10 * 10e9 * std::log2(1.0 + 1e10)).epsilon(1e-12));
}

TEST_CASE("capacity is the sum of its sub-bands and backward never exceeds forward") {
  const auto stack = default_stack(default_tissues()).truncated(0.5e-3);
  const LinkParams p;
  const auto fwd = channel_capacity(stack, p, LinkDirection::kForward);
  const auto back = channel_capacity(stack, p, LinkDirection::kBackward);
  CHECK(fwd.subbands == 900);
  double sum = 0.0;
  for (int k = 0; k < fwd.subbands; ++k) {
    sum += subband_capacity(stack, p, LinkDirection::kForward, p.band.f_min + (k + 0.5) * p.delta_f);
  }
  CHECK(fwd.bits_per_second == doctest::Approx(sum).epsilon(1e-12));
  CHECK(back.bits_per_second <= fwd.bits_per_second);
  CHECK(fwd.bits_per_second > 0.0);
}

TEST_CASE("domain errors") {
  const auto blood = default_tissues().at("blood");
  CHECK_THROWS_AS(path_loss_layer({blood, 1e-3}, 0.5e12, 0.0), DomainError);
  CHECK_THROWS_AS(path_loss_layer({blood, 1e-3}, 0.5e12, -1e-3), DomainError);
  CHECK_THROWS_AS(path_loss_layer({blood, 1e-3}, 5e9, 1e-3), DomainError);
  CHECK_THROWS_AS(path_loss_layer({blood, 1e-3}, 11e12, 1e-3), DomainError);
  CHECK_THROWS_AS(path_loss_stack(LayerStack{}, 0.5e12), DomainError);
  CHECK_THROWS_AS(LayerStack({{blood, 0.0}}), ValidationError);
  LinkParams p;
  p.delta_f = 2e12;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("truncation keeps the outer layers") {
  const auto stack = default_stack(default_tissues());
  const auto t = stack.truncated(1e-3);
  REQUIRE(t.layers().size() == 2);
  CHECK(t.layers()[0].dielectric.tissue_name == "epidermis");
  CHECK(t.layers()[1].thickness == doctest::Approx(0.8e-3));
  CHECK(stack.truncated(1.0).total_thickness() == doctest::Approx(2.5e-3));
}

TEST_CASE("total-distance spreading uses one Friis term") {
  const auto blood = default_tissues().at("blood");
  const LayerStack s({{blood, 1e-3}, {blood, 1e-3}});
  ChannelOptions opt;
  opt.spreading = SpreadingMode::kTotalDistance;
  const auto whole = path_loss_layer({blood, 2e-3}, 0.5e12, 2e-3);
  const auto l = path_loss_stack(s, 0.5e12, opt);
  CHECK(l.spread_db == doctest::Approx(whole.spread_db).epsilon(1e-12));
  CHECK(l.abs_db == doctest::Approx(whole.abs_db).epsilon(1e-12));
}

TEST_CASE("stack and link files") {
  const auto lib = default_tissues();
  const auto s = LayerStack::load(nanoloc::testing::asset("stacks/default.json"), lib);
  CHECK(s.total_thickness() == doctest::Approx(2.5e-3));
  const auto p = link_params_from_json(to_json(LinkParams{}));
  CHECK(p.p_t == 5000.0);
  CHECK(p.g_t == 5.09);
  const auto o = channel_options_from_json(to_json(ChannelOptions{}));
  CHECK(o.spreading == SpreadingMode::kPerLayer);
  CHECK_THROWS_AS(parse_spreading_mode("sideways"), ValidationError);
}

TEST_CASE("sensitivity threshold") {
  const Sensitivity s;
  CHECK(s.threshold_dbw() == doctest::Approx(10.0 * std::log10(0.25e-15)));
  CHECK(meets_sensitivity(-150.0, s));
  CHECK_FALSE(meets_sensitivity(-160.0, s));
  CHECK(frequency_grid(0.1e12, 1e12, 0.01e12).size() == 91);
}
