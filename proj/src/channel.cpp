#include "nanoloc/channel.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "nanoloc/errors.hpp"

namespace nanoloc {

using nlohmann::json;

namespace {

constexpr double kMinFrequency = 0.01e12;
constexpr double kMaxFrequency = 10e12;
const double kDbPerNeper = 10.0 * std::log10(std::numbers::e);

void require_band_frequency(double frequency) {
  if (!(frequency >= kMinFrequency && frequency <= kMaxFrequency)) {
    throw DomainError("frequency outside [0.01, 10] THz: " + std::to_string(frequency));
  }
}

double to_db(double linear) { return 10.0 * std::log10(linear); }

}  // namespace

LayerStack::LayerStack(std::vector<TissueLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!(layers_[i].thickness > 0.0)) {
      throw ValidationError("layer " + std::to_string(i) + " (" + layers_[i].dielectric.tissue_name + ")",
                            "thickness must be > 0");
    }
  }
}

double LayerStack::total_thickness() const {
  double total = 0.0;
  for (const auto& l : layers_) total += l.thickness;
  return total;
}

LayerStack LayerStack::scaled(double factor) const {
  auto layers = layers_;
  for (auto& l : layers) l.thickness *= factor;
  return LayerStack(std::move(layers));
}

LayerStack LayerStack::truncated(double depth) const {
  std::vector<TissueLayer> out;
  double remaining = depth;
  for (const auto& l : layers_) {
    if (remaining <= 0.0) break;
    TissueLayer part = l;
    part.thickness = std::min(l.thickness, remaining);
    remaining -= part.thickness;
    out.push_back(std::move(part));
  }
  return LayerStack(std::move(out));
}

LayerStack LayerStack::from_json(const json& doc, const TissueLibrary& tissues) {
  std::vector<TissueLayer> layers;
  try {
    for (const auto& l : doc.at("layers")) {
      layers.push_back({tissues.at(l.at("tissue").get<std::string>()), l.at("thickness_m").get<double>()});
    }
  } catch (const json::exception& e) {
    throw ValidationError("stack", e.what());
  }
  if (layers.empty()) throw ValidationError("stack", "at least one layer required");
  return LayerStack(std::move(layers));
}

LayerStack LayerStack::load(const std::filesystem::path& path, const TissueLibrary& tissues) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open stack file");
  try {
    return from_json(json::parse(in), tissues);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string(), e.what());
  }
}

LayerStack default_stack(const TissueLibrary& tissues) {
  return LayerStack({{tissues.at("epidermis"), 200e-6}, {tissues.at("dermis"), 1800e-6}, {tissues.at("blood"), 500e-6}});
}

void LinkParams::validate() const {
  if (!(band.f_min < band.f_max)) throw ValidationError("link.band", "f_min must be < f_max");
  if (!(delta_f > 0.0) || delta_f > band.f_max - band.f_min) {
    throw ValidationError("link.delta_f", "must satisfy 0 < delta_f <= f_max - f_min");
  }
  if (!(t0 > 0.0)) throw ValidationError("link.t0", "must be > 0");
  if (!(p_t >= 0.0)) throw ValidationError("link.p_t", "must be >= 0");
  if (!(g_t > 0.0) || !(g_r > 0.0)) throw ValidationError("link.gain", "gains must be > 0");
}

double LinkParams::p_t_db() const { return to_db(p_t); }
double LinkParams::g_t_db() const { return to_db(g_t); }
double LinkParams::g_r_db() const { return to_db(g_r); }

LayerLoss path_loss_layer(const TissueLayer& layer, double frequency, double distance,
                          const ChannelOptions& options) {
  if (!(distance > 0.0)) throw DomainError("distance must be > 0");
  require_band_frequency(frequency);
  const auto optics = optical_properties(layer.dielectric, frequency, options.absorption_wavelength);
  LayerLoss loss;
  loss.abs_db = kDbPerNeper * optics.mu_abs * distance;
  loss.spread_db = 20.0 * std::log10(4.0 * std::numbers::pi * distance / optics.lambda_g);
  return loss;
}

LayerLoss path_loss_stack(const LayerStack& stack, double frequency, const ChannelOptions& options) {
  if (stack.empty()) throw DomainError("layer stack is empty");
  LayerLoss total;
  double optical_path = 0.0;  // sum of d_i * n'_i
  for (const auto& layer : stack.layers()) {
    const auto l = path_loss_layer(layer, frequency, layer.thickness, options);
    total.abs_db += l.abs_db;
    total.spread_db += l.spread_db;
    optical_path += layer.thickness *
                    optical_properties(layer.dielectric, frequency, options.absorption_wavelength).n_real;
  }
  if (options.spreading == SpreadingMode::kTotalDistance) {
    // One Friis term over the full depth with the path-averaged effective wavelength.
    const double depth = stack.total_thickness();
    const double lambda_eff = kSpeedOfLight / frequency * depth / optical_path;
    total.spread_db = 20.0 * std::log10(4.0 * std::numbers::pi * depth / lambda_eff);
  }
  return total;
}

double backscatter_power(const LayerStack& stack, const LinkParams& params, double frequency,
                         const ChannelOptions& options) {
  const double loss = path_loss_stack(stack, frequency, options).total_db();
  return params.p_t_db() + params.g_t_db() - 2.0 * loss + params.g_r_db() + options.backscatter_efficiency_db;
}

double noise_psd(const LayerStack& stack, const LinkParams& params, double frequency) {
  if (stack.empty()) throw DomainError("layer stack is empty");
  require_band_frequency(frequency);
  double exponent = 0.0;
  for (const auto& layer : stack.layers()) {
    const auto optics = optical_properties(layer.dielectric, frequency);
    exponent += 4.0 * std::numbers::pi * frequency * layer.thickness * optics.n_imag / kSpeedOfLight;
  }
  return kBoltzmann * params.t0 * -std::expm1(-exponent);
}

double subband_capacity(const LayerStack& stack, const LinkParams& params, LinkDirection direction, double frequency,
                        const ChannelOptions& options, bool* capped) {
  const double bandwidth = params.band.f_max - params.band.f_min;
  const double loss_db = path_loss_stack(stack, frequency, options).total_db();
  // Flat signal PSD over the band, in dB(W/Hz).
  double signal_db = params.p_t_db() - to_db(bandwidth);
  if (direction == LinkDirection::kBackward) signal_db += params.g_t_db() - loss_db;
  const double n = noise_psd(stack, params, frequency);
  double snr_db;
  if (n == 0.0) {
    snr_db = options.max_snr_db;
    if (capped) *capped = true;
  } else {
    snr_db = signal_db - loss_db - to_db(n);
  }
  const double snr = std::pow(10.0, snr_db / 10.0);
  return params.delta_f * std::log1p(snr) / std::numbers::ln2;
}

CapacityResult channel_capacity(const LayerStack& stack, const LinkParams& params, LinkDirection direction,
                                const ChannelOptions& options) {
  params.validate();
  const double bandwidth = params.band.f_max - params.band.f_min;
  const int subbands = static_cast<int>(std::floor(bandwidth / params.delta_f + 1e-9));
  CapacityResult result;
  result.subbands = subbands;
  if (params.p_t == 0.0) return result;

  for (int k = 0; k < subbands; ++k) {
    const double f = params.band.f_min + (k + 0.5) * params.delta_f;
    bool capped = false;
    result.bits_per_second += subband_capacity(stack, params, direction, f, options, &capped);
    result.capped_subbands += capped;
  }
  return result;
}

LinkBudget link_budget(const LayerStack& stack, const LinkParams& params, double frequency,
                       const ChannelOptions& options) {
  const auto loss = path_loss_stack(stack, frequency, options);
  LinkBudget b;
  b.frequency = frequency;
  b.loss_spread_db = loss.spread_db;
  b.loss_abs_db = loss.abs_db;
  b.loss_total_db = loss.total_db();
  b.p_received_backscatter_db = params.p_t_db() + params.g_t_db() - 2.0 * b.loss_total_db + params.g_r_db() +
                                options.backscatter_efficiency_db;
  b.noise_psd = noise_psd(stack, params, frequency);
  if (params.p_t > 0.0) {
    b.capacity_fwd_bps = subband_capacity(stack, params, LinkDirection::kForward, frequency, options);
    b.capacity_back_bps = subband_capacity(stack, params, LinkDirection::kBackward, frequency, options);
  }
  return b;
}

double Sensitivity::threshold_dbw() const { return to_db(w_per_rt_hz * std::sqrt(bandwidth_hz)); }

bool meets_sensitivity(double received_dbw, const Sensitivity& sensitivity) {
  return received_dbw >= sensitivity.threshold_dbw();
}

std::vector<double> frequency_grid(double f_min, double f_max, double step) {
  if (!(step > 0.0) || !(f_min <= f_max)) throw DomainError("invalid frequency grid");
  const auto n = static_cast<long>(std::floor((f_max - f_min) / step + 1e-9));
  std::vector<double> grid;
  grid.reserve(n + 1);
  for (long k = 0; k <= n; ++k) grid.push_back(f_min + k * step);
  return grid;
}

SpreadingMode parse_spreading_mode(const std::string& text) {
  if (text == "per_layer") return SpreadingMode::kPerLayer;
  if (text == "total_distance") return SpreadingMode::kTotalDistance;
  throw ValidationError("spreading", "expected 'per_layer' or 'total_distance', got '" + text + "'");
}

std::string to_string(SpreadingMode mode) {
  return mode == SpreadingMode::kPerLayer ? "per_layer" : "total_distance";
}

LinkParams link_params_from_json(const json& doc) {
  LinkParams p;
  p.p_t = doc.value("p_t_w", p.p_t);
  p.g_t = doc.value("g_t", p.g_t);
  p.g_r = doc.value("g_r", p.g_r);
  p.band.f_min = doc.value("f_min_hz", p.band.f_min);
  p.band.f_max = doc.value("f_max_hz", p.band.f_max);
  p.delta_f = doc.value("delta_f_hz", p.delta_f);
  p.t0 = doc.value("t0_k", p.t0);
  p.validate();
  return p;
}

json to_json(const LinkParams& p) {
  return {{"p_t_w", p.p_t},           {"g_t", p.g_t},           {"g_r", p.g_r}, {"f_min_hz", p.band.f_min},
          {"f_max_hz", p.band.f_max}, {"delta_f_hz", p.delta_f}, {"t0_k", p.t0}};
}

ChannelOptions channel_options_from_json(const json& doc) {
  ChannelOptions o;
  if (doc.contains("absorption_wavelength")) {
    o.absorption_wavelength = parse_absorption_wavelength(doc["absorption_wavelength"].get<std::string>());
  }
  if (doc.contains("spreading")) o.spreading = parse_spreading_mode(doc["spreading"].get<std::string>());
  o.backscatter_efficiency_db = doc.value("backscatter_efficiency_db", o.backscatter_efficiency_db);
  o.max_snr_db = doc.value("max_snr_db", o.max_snr_db);
  return o;
}

json to_json(const ChannelOptions& o) {
  return {{"absorption_wavelength", to_string(o.absorption_wavelength)},
          {"spreading", to_string(o.spreading)},
          {"backscatter_efficiency_db", o.backscatter_efficiency_db},
          {"max_snr_db", o.max_snr_db}};
}

}  // namespace nanoloc
