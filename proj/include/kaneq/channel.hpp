#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace kaneq {

// Smooth monotone saturating EAM transmission curve. transmission() is
// decreasing in the drive voltage and spans the configured extinction ratio
// over the drive range [bias - vpp/2, bias + vpp/2].
struct EamCurve {
    double knee_voltage = 0.0; // V, center of the tanh knee
    double slope = 2.0;        // 1/V, steepness; must be > 0
    double extinction_db = 10.0;
    double bias = 0.0; // V
    bool enabled = true;
};

double eam_transmission(const EamCurve& eam, double v, double vpp);

// Static saturable amplifier G = G0 * exp(-(G - 1) * P_in / P_sat_internal),
// parameterized by the input power at which the gain is compressed by 3 dB.
struct SoaCurve {
    double small_signal_gain_db = 20.0;
    double saturation_power_dbm = -14.0; // input-referred 3-dB point
    bool enabled = true;
};

double soa_gain(const SoaCurve& soa, double p_in_watts);

struct LinkConfig {
    double baud_rate = 56e9;
    int sps_sim = 8; // physics oversampling
    int sps_out = 2; // equalizer-facing oversampling
    double wavelength = 1540e-9;          // m
    double fiber_length = 2200.0;         // m
    double dispersion_ps_nm_km = 16.3;    // ps * nm^-1 * km^-1
    double launch_power_dbm = 4.1;
    double rop_dbm = -2.0; // received optical power at the SOA input
    double drive_vpp = 2.0;
    EamCurve eam;
    SoaCurve soa;
    double rx_bandwidth = 33e9; // first-order lowpass corner
    bool rx_lowpass = true;
    // Receiver noise: in-band variance = (thermal + ase * (G_eff - 1)) * rx_bandwidth.
    double thermal_psd = 6.8e-23;
    double ase_psd = 4.0e-20;
    uint64_t rng_seed = 1;

    void validate() const;
};

double accumulated_dispersion_ps_nm(const LinkConfig& cfg);

// Synchronized received sequence paired with ground truth. samples are
// standardized to zero mean / unit variance; samples[sps_out * i] is the
// center sample of symbol i.
struct WaveformFrame {
    std::vector<double> samples;
    std::vector<uint8_t> symbols;
    int sps_out = 2;
    double rop_dbm = 0.0;
    uint64_t seed = 0;
    uint64_t config_hash = 0;
    double cd_ps_nm = 0.0;
    double standardize_mean = 0.0;
    double standardize_std = 1.0;

    long n_symbols() const { return static_cast<long>(symbols.size()); }
};

// Uniform i.i.d. PAM4 indices, deterministic in the seed.
std::vector<uint8_t> generate_symbols(long n, uint64_t seed);

// NRZ drive through the EAM onto a CW carrier; mean |E|^2 = launch power.
std::vector<std::complex<double>> modulate(const std::vector<uint8_t>& symbols,
                                           const LinkConfig& cfg);

// All-pass chromatic dispersion in the frequency domain; exact identity for
// zero fiber length.
void propagate_fiber(std::vector<std::complex<double>>& field, const LinkConfig& cfg);

// Scales the field so its mean power equals cfg.rop_dbm (the VOA sits in
// front of the SOA).
void apply_voa(std::vector<std::complex<double>>& field, const LinkConfig& cfg);

// Instantaneous saturable gain per sample. Returns the effective power gain
// (mean output power over mean input power) for the ASE noise model.
double amplify_soa(std::vector<std::complex<double>>& field, const LinkConfig& cfg);

// Square-law detection, zero-phase receiver lowpass, additive Gaussian
// noise. g_eff feeds the ASE term; noise_seed selects the noise stream.
std::vector<double> detect_and_frontend(const std::vector<std::complex<double>>& field,
                                        const LinkConfig& cfg, double g_eff,
                                        uint64_t noise_seed);

// Full chain: symbols -> EAM -> fiber -> VOA -> SOA -> detection ->
// decimation to sps_out with ideal symbol-phase alignment -> standardization.
WaveformFrame build_frame(const LinkConfig& cfg, long n_symbols, uint64_t seed);

// Genie-aided 4-level slicer BER: per-level conditional means from ground
// truth, midpoint thresholds, Gray bit counting on center samples.
double slicer_ber(const WaveformFrame& frame);

// dB estimate from center samples: var(conditional means) / var(residual).
double estimate_snr_db(const WaveformFrame& frame);

void save_frame(const WaveformFrame& frame, const std::string& path);
WaveformFrame load_frame(const std::string& path);
void export_frame_csv(const WaveformFrame& frame, const std::string& path);

} // namespace kaneq
