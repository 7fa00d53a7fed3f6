#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nanoloc/dielectric.hpp"

namespace nanoloc {

struct TissueLayer {
  DielectricModel dielectric;
  double thickness = 0.0;  // m
};

/// Ordered tissue layers, outermost first (epidermis, dermis, blood).
class LayerStack {
 public:
  LayerStack() = default;
  explicit LayerStack(std::vector<TissueLayer> layers);

  const std::vector<TissueLayer>& layers() const { return layers_; }
  double total_thickness() const;
  bool empty() const { return layers_.empty(); }

  /// Copy with every thickness multiplied by `factor`.
  LayerStack scaled(double factor) const;
  /// The first `depth` metres of the stack, cutting the last layer short.
  LayerStack truncated(double depth) const;

  static LayerStack from_json(const nlohmann::json& doc, const TissueLibrary& tissues);
  static LayerStack load(const std::filesystem::path& path, const TissueLibrary& tissues);

 private:
  std::vector<TissueLayer> layers_;
};

/// 200 um epidermis + 1800 um dermis + 500 um blood.
LayerStack default_stack(const TissueLibrary& tissues);

struct Band {
  double f_min = 0.1e12;  // Hz
  double f_max = 1.0e12;  // Hz
};

struct LinkParams {
  double p_t = 5000.0;   // W, transmit peak power
  double g_t = 5.09;     // linear
  double g_r = 5.09;     // linear
  Band band;
  double delta_f = 1e9;  // Hz
  double t0 = 310.0;     // K

  void validate() const;
  double p_t_db() const;
  double g_t_db() const;
  double g_r_db() const;
};

enum class SpreadingMode { kPerLayer, kTotalDistance };

struct ChannelOptions {
  AbsorptionWavelength absorption_wavelength = AbsorptionWavelength::kEffective;
  SpreadingMode spreading = SpreadingMode::kPerLayer;
  double backscatter_efficiency_db = 0.0;
  double max_snr_db = 300.0;
};

struct LayerLoss {
  double spread_db = 0.0;
  double abs_db = 0.0;
  double total_db() const { return spread_db + abs_db; }
};

struct LinkBudget {
  double frequency = 0.0;
  double loss_spread_db = 0.0;
  double loss_abs_db = 0.0;
  double loss_total_db = 0.0;
  double p_received_backscatter_db = 0.0;  // dBW
  double noise_psd = 0.0;                  // W/Hz
  double capacity_fwd_bps = 0.0;           // one delta_f sub-band centred here
  double capacity_back_bps = 0.0;
};

enum class LinkDirection { kForward, kBackward };

struct CapacityResult {
  double bits_per_second = 0.0;
  int subbands = 0;
  int capped_subbands = 0;  // sub-bands where N = 0 and the SNR cap applied
};

/// Spreading and absorption loss (dB, positive = attenuation) over `distance`
/// metres of one tissue.
LayerLoss path_loss_layer(const TissueLayer& layer, double frequency, double distance,
                          const ChannelOptions& options = {});

/// Stack loss with each layer traversed over its full thickness.
LayerLoss path_loss_stack(const LayerStack& stack, double frequency, const ChannelOptions& options = {});

/// Round-trip received power in dBW: P_T + G_T - 2 L_tot + G_R (+ efficiency).
double backscatter_power(const LayerStack& stack, const LinkParams& params, double frequency,
                         const ChannelOptions& options = {});

/// Molecular absorption noise PSD (W/Hz) over the stack.
double noise_psd(const LayerStack& stack, const LinkParams& params, double frequency);

/// Capacity of the delta_f sub-band centred at `frequency`, with the signal
/// power spread flat over the whole band.
double subband_capacity(const LayerStack& stack, const LinkParams& params, LinkDirection direction, double frequency,
                        const ChannelOptions& options = {}, bool* capped = nullptr);

CapacityResult channel_capacity(const LayerStack& stack, const LinkParams& params, LinkDirection direction,
                                const ChannelOptions& options = {});

LinkBudget link_budget(const LayerStack& stack, const LinkParams& params, double frequency,
                       const ChannelOptions& options = {});

/// Receiver sensitivity quoted as a noise-equivalent power (W/Hz^{1/2});
/// the detectable power is sensitivity * sqrt(bandwidth).
struct Sensitivity {
  double w_per_rt_hz = 0.25e-15;
  double bandwidth_hz = 1.0;
  double threshold_dbw() const;
};

bool meets_sensitivity(double received_dbw, const Sensitivity& sensitivity);

/// Inclusive frequency grid [f_min, f_max] with the given step.
std::vector<double> frequency_grid(double f_min, double f_max, double step);

SpreadingMode parse_spreading_mode(const std::string& text);
std::string to_string(SpreadingMode mode);
LinkParams link_params_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const LinkParams& params);
ChannelOptions channel_options_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ChannelOptions& options);

}  // namespace nanoloc
