#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace nanoloc {

inline constexpr double kSpeedOfLight = 299792458.0;      // m/s
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m
inline constexpr double kBoltzmann = 1.380649e-23;       // J/K

/// Two-pole Debye relaxation, used for high-water-content tissue (blood).
struct DoubleDebyeParams {
  double eps_inf = 1.0;
  double eps_1 = 1.0;
  double eps_2 = 1.0;
  double tau_1 = 1e-12;  // s
  double tau_2 = 1e-12;  // s

  bool operator==(const DoubleDebyeParams&) const = default;
};

struct HavriliakNegamiTerm {
  double eps = 0.0;
  double tau = 1e-12;  // s
  double alpha = 1.0;
  double beta = 1.0;

  bool operator==(const HavriliakNegamiTerm&) const = default;
};

/// Havriliak-Negami relaxation with optional static ionic conductivity.
/// A blank conductivity is stored as 0, never NaN.
struct HavriliakNegamiParams {
  double eps_inf = 1.0;
  std::vector<HavriliakNegamiTerm> terms;
  double sigma = 0.0;  // S/m

  bool operator==(const HavriliakNegamiParams&) const = default;
};

struct DielectricModel {
  std::string tissue_name;
  std::variant<DoubleDebyeParams, HavriliakNegamiParams> model;

  bool operator==(const DielectricModel&) const = default;
};

/// Which wavelength divides 4*pi*n'' in the absorption coefficient.
enum class AbsorptionWavelength { kEffective, kVacuum };

struct OpticalProperties {
  double frequency = 0.0;        // Hz
  std::complex<double> eps_r;
  double n_real = 0.0;
  double n_imag = 0.0;           // >= 0
  double lambda_g = 0.0;         // m, vacuum wavelength / n_real
  double mu_abs = 0.0;           // 1/m
};

/// Checks the parameter invariants; throws ValidationError naming the tissue.
void validate(const DielectricModel& model);

/// Complex relative permittivity at `frequency` (Hz). The imaginary part is
/// non-positive (loss) under the e^{+jwt} convention.
std::complex<double> eval_permittivity(const DielectricModel& model, double frequency);

OpticalProperties optical_properties(const DielectricModel& model, double frequency,
                                     AbsorptionWavelength wavelength = AbsorptionWavelength::kEffective);

/// Refractive index and absorption derived from an already evaluated permittivity.
OpticalProperties optical_properties_from_permittivity(std::complex<double> eps_r, double frequency,
                                                       AbsorptionWavelength wavelength =
                                                           AbsorptionWavelength::kEffective);

/// Tissue parameter library, read from / written to a JSON list of
/// {name, model_kind, parameters}.
class TissueLibrary {
 public:
  TissueLibrary() = default;
  explicit TissueLibrary(std::vector<DielectricModel> models);

  static TissueLibrary from_json(const nlohmann::json& doc);
  static TissueLibrary load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const DielectricModel& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<DielectricModel>& models() const { return models_; }

 private:
  std::vector<DielectricModel> models_;
};

nlohmann::json to_json(const DielectricModel& model);
DielectricModel dielectric_from_json(const nlohmann::json& entry);

/// Built-in parameter set for blood, dermis and epidermis.
const TissueLibrary& default_tissues();

AbsorptionWavelength parse_absorption_wavelength(const std::string& text);
std::string to_string(AbsorptionWavelength mode);

}  // namespace nanoloc
