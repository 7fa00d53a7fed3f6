#include <cmath>
#include <complex>

#include <doctest.h>

#include "nanoloc/dielectric.hpp"
#include "nanoloc/errors.hpp"
#include "support/fixtures.hpp"

using namespace nanoloc;

namespace {

// mpmath references at 50 digits, see tests/oracles/channel_goldens.py.
constexpr double kDermisRe = 4.9650397359070602, kDermisIm = -1.4563901374710337;
constexpr double kBloodRe = 3.7089230243237121, kBloodIm = -3.2743651464180499;
constexpr double kEpidermisRe = 3.4060597921352442, kEpidermisIm = -2.4927391057637348;
constexpr double kBloodMu = 34312.809460861799;

void check_close(std::complex<double> got, double re, double im, double rel = 1e-12) {
  CHECK(std::abs(got.real() - re) <= rel * std::abs(re));
  CHECK(std::abs(got.imag() - im) <= rel * std::abs(im));
}

}  // namespace

TEST_CASE("permittivity matches the high-precision reference at 0.5 THz") {
  const auto lib = default_tissues();
  check_close(eval_permittivity(lib.at("blood"), 0.5e12), kBloodRe, kBloodIm);
  check_close(eval_permittivity(lib.at("dermis"), 0.5e12), kDermisRe, kDermisIm);
  check_close(eval_permittivity(lib.at("epidermis"), 0.5e12), kEpidermisRe, kEpidermisIm);
}

TEST_CASE("double Debye tends to eps_1 at low frequency") {
  const auto eps = eval_permittivity(default_tissues().at("blood"), 1.0);
  CHECK(eps.real() == doctest::Approx(130.0).epsilon(1e-9));
  CHECK(std::abs(eps.imag()) < 1e-6);
}

TEST_CASE("degenerate Havriliak-Negami returns eps_inf") {
  HavriliakNegamiParams hn;
  hn.eps_inf = 3.7;
  hn.terms = {{0.0, 1e-12, 0.9, 0.8}, {0.0, 2e-9, 1.0, 1.0}};
  const DielectricModel m{"flat", hn};
  for (double f : {1e9, 0.3e12, 0.5e12, 5e12}) {
    const auto eps = eval_permittivity(m, f);
    CHECK(eps.real() == 3.7);
    CHECK(eps.imag() == 0.0);
  }
}

TEST_CASE("loss sign convention: imaginary part is never positive") {
  const auto lib = default_tissues();
  for (const auto& m : lib.models()) {
    for (double f = 0.1e12; f <= 1e12; f += 0.05e12) CHECK(eval_permittivity(m, f).imag() <= 0.0);
  }
}

TEST_CASE("non-positive frequency is a domain error") {
  const auto lib = default_tissues();
  CHECK_THROWS_AS(eval_permittivity(lib.at("blood"), 0.0), DomainError);
  CHECK_THROWS_AS(eval_permittivity(lib.at("dermis"), -1.0), DomainError);
}

TEST_CASE("refractive index round-trips to the permittivity") {
  const auto lib = default_tissues();
  for (const auto& m : lib.models()) {
    for (double f = 0.1e12; f <= 1.0e12 + 1.0; f += 0.01e12) {
      const auto o = optical_properties(m, f);
      const std::complex<double> n(o.n_real, -o.n_imag);
      const auto sq = n * n;
      CHECK(std::abs(sq - o.eps_r) <= 1e-12 * std::abs(o.eps_r));
      CHECK(o.n_imag >= 0.0);
      CHECK(o.lambda_g == doctest::Approx(kSpeedOfLight / f / o.n_real).epsilon(1e-14));
    }
  }
}

TEST_CASE("blood absorption coefficient at 0.5 THz") {
  const auto o = optical_properties(default_tissues().at("blood"), 0.5e12);
  CHECK(o.mu_abs == doctest::Approx(kBloodMu).epsilon(1e-12));
}

TEST_CASE("vacuum-wavelength absorption differs by the factor n_real") {
  const auto& blood = default_tissues().at("blood");
  const auto eff = optical_properties(blood, 0.5e12, AbsorptionWavelength::kEffective);
  const auto vac = optical_properties(blood, 0.5e12, AbsorptionWavelength::kVacuum);
  CHECK(eff.mu_abs / vac.mu_abs == doctest::Approx(eff.n_real).epsilon(1e-12));
}

TEST_CASE("lossless medium has no absorption") {
  const auto o = optical_properties_from_permittivity({2.25, 0.0}, 0.5e12);
  CHECK(o.n_imag == 0.0);
  CHECK(o.mu_abs == 0.0);
  CHECK(o.n_real == doctest::Approx(1.5));
}

TEST_CASE("tissue file round trip and validation") {
  const auto lib = TissueLibrary::load(nanoloc::testing::asset("tissues/default.json"));
  CHECK(lib.models().size() == 3);
  CHECK(lib.at("blood") == default_tissues().at("blood"));
  CHECK(lib.at("dermis") == default_tissues().at("dermis"));
  const auto again = TissueLibrary::from_json(lib.to_json());
  for (const auto& m : lib.models()) CHECK(again.at(m.tissue_name) == m);

  auto doc = lib.to_json();
  doc[0]["parameters"]["tau_1_s"] = -1.0;
  CHECK_THROWS_AS(TissueLibrary::from_json(doc), ValidationError);
  auto doc2 = lib.to_json();
  doc2[1]["parameters"]["terms"][0]["alpha"] = 1.5;
  CHECK_THROWS_AS(TissueLibrary::from_json(doc2), ValidationError);
  CHECK_THROWS(lib.at("bone"));
}

TEST_CASE("blank conductivity is stored as zero") {
  auto doc = default_tissues().to_json();
  for (auto& e : doc) {
    if (e["name"] == "epidermis") e["parameters"].erase("sigma_s_per_m");
    if (e["name"] == "dermis") e["parameters"]["sigma_s_per_m"] = nullptr;
  }
  const auto lib = TissueLibrary::from_json(doc);
  const auto& hn = std::get<HavriliakNegamiParams>(lib.at("epidermis").model);
  CHECK(hn.sigma == 0.0);
  CHECK_FALSE(std::isnan(hn.sigma));
  CHECK(std::get<HavriliakNegamiParams>(lib.at("dermis").model).sigma == 0.0);
}
