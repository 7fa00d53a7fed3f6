#include "nanoloc/dielectric.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "nanoloc/errors.hpp"

namespace nanoloc {

using cd = std::complex<double>;
using nlohmann::json;

namespace {

void require_frequency(double frequency) {
  if (!(frequency > 0.0) || !std::isfinite(frequency)) {
    throw DomainError("frequency must be positive and finite, got " + std::to_string(frequency));
  }
}

cd double_debye(const DoubleDebyeParams& p, double omega) {
  const cd j(0.0, 1.0);
  return p.eps_inf + (p.eps_1 - p.eps_2) / (1.0 + j * omega * p.tau_1) +
         (p.eps_2 - p.eps_inf) / (1.0 + j * omega * p.tau_2);
}

cd havriliak_negami(const HavriliakNegamiParams& p, double omega) {
  cd eps(p.eps_inf, 0.0);
  for (const auto& term : p.terms) {
    // (j w tau)^alpha on the principal branch: (w tau)^alpha * e^{j pi alpha / 2}
    const cd jwt_alpha = std::polar(std::pow(omega * term.tau, term.alpha),
                                    0.5 * std::numbers::pi * term.alpha);
    eps += term.eps / std::pow(1.0 + jwt_alpha, term.beta);
  }
  eps -= cd(0.0, p.sigma / (omega * kVacuumPermittivity));
  return eps;
}

}  // namespace

void validate(const DielectricModel& model) {
  const std::string where = "tissue '" + model.tissue_name + "'";
  if (const auto* dd = std::get_if<DoubleDebyeParams>(&model.model)) {
    if (!(dd->eps_inf > 0.0)) throw ValidationError(where, "eps_inf must be > 0");
    if (!(dd->tau_1 > 0.0) || !(dd->tau_2 > 0.0)) throw ValidationError(where, "relaxation times must be > 0");
    return;
  }
  const auto& hn = std::get<HavriliakNegamiParams>(model.model);
  if (!(hn.eps_inf > 0.0)) throw ValidationError(where, "eps_inf must be > 0");
  if (!(hn.sigma >= 0.0)) throw ValidationError(where, "sigma must be >= 0");
  for (std::size_t i = 0; i < hn.terms.size(); ++i) {
    const auto& t = hn.terms[i];
    const std::string w = where + " term " + std::to_string(i + 1);
    if (!(t.tau > 0.0)) throw ValidationError(w, "tau must be > 0");
    if (!(t.alpha > 0.0 && t.alpha <= 1.0)) throw ValidationError(w, "alpha must lie in (0, 1]");
    if (!(t.beta > 0.0 && t.beta <= 1.0)) throw ValidationError(w, "beta must lie in (0, 1]");
  }
}

cd eval_permittivity(const DielectricModel& model, double frequency) {
  require_frequency(frequency);
  const double omega = 2.0 * std::numbers::pi * frequency;
  return std::visit(
      [omega](const auto& p) -> cd {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, DoubleDebyeParams>) {
          return double_debye(p, omega);
        } else {
          return havriliak_negami(p, omega);
        }
      },
      model.model);
}

OpticalProperties optical_properties_from_permittivity(cd eps_r, double frequency,
                                                       AbsorptionWavelength wavelength) {
  require_frequency(frequency);
  cd n = std::sqrt(eps_r);  // principal branch: real part >= 0
  if (n.real() < 0.0) n = -n;
  if (!(n.real() > 0.0)) throw DomainError("refractive index has no positive real part");

  OpticalProperties out;
  out.frequency = frequency;
  out.eps_r = eps_r;
  out.n_real = n.real();
  out.n_imag = std::abs(n.imag());
  const double lambda0 = kSpeedOfLight / frequency;
  out.lambda_g = lambda0 / out.n_real;
  const double lambda = wavelength == AbsorptionWavelength::kEffective ? out.lambda_g : lambda0;
  out.mu_abs = 4.0 * std::numbers::pi * out.n_imag / lambda;
  return out;
}

OpticalProperties optical_properties(const DielectricModel& model, double frequency,
                                     AbsorptionWavelength wavelength) {
  return optical_properties_from_permittivity(eval_permittivity(model, frequency), frequency, wavelength);
}

// --- serialization ---------------------------------------------------------

json to_json(const DielectricModel& model) {
  json entry;
  entry["name"] = model.tissue_name;
  if (const auto* dd = std::get_if<DoubleDebyeParams>(&model.model)) {
    entry["model_kind"] = "double_debye";
    entry["parameters"] = {{"eps_inf", dd->eps_inf}, {"eps_1", dd->eps_1}, {"eps_2", dd->eps_2},
                           {"tau_1_s", dd->tau_1}, {"tau_2_s", dd->tau_2}};
  } else {
    const auto& hn = std::get<HavriliakNegamiParams>(model.model);
    entry["model_kind"] = "havriliak_negami";
    json terms = json::array();
    for (const auto& t : hn.terms) {
      terms.push_back({{"eps", t.eps}, {"tau_s", t.tau}, {"alpha", t.alpha}, {"beta", t.beta}});
    }
    entry["parameters"] = {{"eps_inf", hn.eps_inf}, {"terms", terms}, {"sigma_s_per_m", hn.sigma}};
  }
  return entry;
}

DielectricModel dielectric_from_json(const json& entry) {
  DielectricModel model;
  try {
    model.tissue_name = entry.at("name").get<std::string>();
    const auto kind = entry.at("model_kind").get<std::string>();
    const auto& p = entry.at("parameters");
    if (kind == "double_debye") {
      DoubleDebyeParams dd;
      dd.eps_inf = p.at("eps_inf").get<double>();
      dd.eps_1 = p.at("eps_1").get<double>();
      dd.eps_2 = p.at("eps_2").get<double>();
      dd.tau_1 = p.at("tau_1_s").get<double>();
      dd.tau_2 = p.at("tau_2_s").get<double>();
      model.model = dd;
    } else if (kind == "havriliak_negami") {
      HavriliakNegamiParams hn;
      hn.eps_inf = p.at("eps_inf").get<double>();
      // Blank conductivity (missing or null) means none.
      if (p.contains("sigma_s_per_m") && !p["sigma_s_per_m"].is_null()) hn.sigma = p["sigma_s_per_m"].get<double>();
      for (const auto& t : p.at("terms")) {
        hn.terms.push_back({t.at("eps").get<double>(), t.at("tau_s").get<double>(),
                            t.at("alpha").get<double>(), t.at("beta").get<double>()});
      }
      model.model = hn;
    } else {
      throw ValidationError("tissue '" + model.tissue_name + "'", "unknown model_kind '" + kind + "'");
    }
  } catch (const json::exception& e) {
    throw ValidationError("tissue entry", e.what());
  }
  validate(model);
  return model;
}

TissueLibrary::TissueLibrary(std::vector<DielectricModel> models) : models_(std::move(models)) {
  for (const auto& m : models_) validate(m);
}

TissueLibrary TissueLibrary::from_json(const json& doc) {
  if (!doc.is_array()) throw ValidationError("tissues", "expected a list of tissue entries");
  std::vector<DielectricModel> models;
  for (const auto& entry : doc) models.push_back(dielectric_from_json(entry));
  return TissueLibrary(std::move(models));
}

TissueLibrary TissueLibrary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open tissue file");
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), e.what());
  }
}

json TissueLibrary::to_json() const {
  json doc = json::array();
  for (const auto& m : models_) doc.push_back(nanoloc::to_json(m));
  return doc;
}

const DielectricModel& TissueLibrary::at(const std::string& name) const {
  for (const auto& m : models_) {
    if (m.tissue_name == name) return m;
  }
  throw ValidationError("tissue '" + name + "'", "not present in tissue library");
}

bool TissueLibrary::contains(const std::string& name) const {
  for (const auto& m : models_) {
    if (m.tissue_name == name) return true;
  }
  return false;
}

const TissueLibrary& default_tissues() {
  static const TissueLibrary lib = [] {
  DielectricModel blood{"blood", DoubleDebyeParams{2.1, 130.0, 3.8, 14.4e-12, 0.1e-12}};
  DielectricModel dermis{"dermis", HavriliakNegamiParams{4.0,
                                                         {{5.96, 1.6e-12, 0.92, 0.8},
                                                          {380.4, 159e-9, 0.97, 0.99}},
                                                         0.1}};
  DielectricModel epidermis{"epidermis", HavriliakNegamiParams{3.0, {{89.61, 15.9e-12, 0.95, 0.96}}, 0.0}};
  return TissueLibrary({blood, dermis, epidermis});
  }();
  return lib;
}

AbsorptionWavelength parse_absorption_wavelength(const std::string& text) {
  if (text == "effective") return AbsorptionWavelength::kEffective;
  if (text == "vacuum") return AbsorptionWavelength::kVacuum;
  throw ValidationError("absorption_wavelength", "expected 'effective' or 'vacuum', got '" + text + "'");
}

std::string to_string(AbsorptionWavelength mode) {
  return mode == AbsorptionWavelength::kEffective ? "effective" : "vacuum";
}

}  // namespace nanoloc
