#include "kaneq/channel.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>

#include "kaneq/common.hpp"
#include "kaneq/config.hpp"

namespace kaneq {

namespace {

constexpr double kSpeedOfLight = 299792458.0;

// FFTW plan creation is not thread-safe; execution on distinct arrays is.
class FftEngine {
public:
    static FftEngine& instance() {
        static FftEngine eng;
        return eng;
    }

    void transform(std::vector<std::complex<double>>& data, bool inverse) {
        const size_t n = data.size();
        fftw_plan plan = get_plan(n, inverse);
        fftw_execute_dft(plan, reinterpret_cast<fftw_complex*>(data.data()),
                         reinterpret_cast<fftw_complex*>(data.data()));
        if (inverse) {
            const double scale = 1.0 / static_cast<double>(n);
            for (auto& v : data) v *= scale;
        }
    }

private:
    fftw_plan get_plan(size_t n, bool inverse) {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_pair(n, inverse);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        // Planning with ESTIMATE keeps runs reproducible and leaves the
        // caller's buffer untouched.
        std::vector<std::complex<double>> scratch(n);
        fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n),
                                          reinterpret_cast<fftw_complex*>(scratch.data()),
                                          reinterpret_cast<fftw_complex*>(scratch.data()),
                                          inverse ? FFTW_BACKWARD : FFTW_FORWARD, FFTW_ESTIMATE);
        plans_.emplace(key, plan);
        return plan;
    }

    std::mutex mu_;
    std::map<std::pair<size_t, bool>, fftw_plan> plans_;
};

double mean_power(const std::vector<std::complex<double>>& field) {
    double acc = 0.0;
    for (const auto& v : field) acc += std::norm(v);
    return acc / static_cast<double>(field.size());
}

} // namespace

void LinkConfig::validate() const {
    if (baud_rate <= 0.0) throw std::invalid_argument("link: baud_rate must be positive");
    if (sps_out < 1 || sps_sim < 4) throw std::invalid_argument("link: need sps_sim >= 4, sps_out >= 1");
    if (sps_sim % sps_out != 0)
        throw std::invalid_argument("link: sps_sim must be an integer multiple of sps_out");
    if (fiber_length < 0.0) throw std::invalid_argument("link: fiber_length must be >= 0");
    if (!std::isfinite(dispersion_ps_nm_km)) throw std::invalid_argument("link: dispersion not finite");
    if (eam.enabled && (eam.slope <= 0.0 || eam.extinction_db < 0.0))
        throw std::invalid_argument("link: EAM curve must be monotone (slope > 0, extinction >= 0)");
    if (soa.enabled && soa.small_signal_gain_db <= 3.1)
        throw std::invalid_argument("link: SOA small-signal gain must exceed 3 dB for the saturable model");
    if (rx_bandwidth <= 0.0) throw std::invalid_argument("link: rx_bandwidth must be positive");
    if (thermal_psd < 0.0 || ase_psd < 0.0) throw std::invalid_argument("link: noise PSDs must be >= 0");
    if (drive_vpp <= 0.0) throw std::invalid_argument("link: drive_vpp must be positive");
}

double accumulated_dispersion_ps_nm(const LinkConfig& cfg) {
    return cfg.dispersion_ps_nm_km * cfg.fiber_length / 1000.0;
}

double eam_transmission(const EamCurve& eam, double v, double vpp) {
    const double v_lo = eam.bias - 0.5 * vpp;
    const double v_hi = eam.bias + 0.5 * vpp;
    if (!eam.enabled) {
        // Flat curve: power linear in drive, full swing.
        return (v_hi - v) / (v_hi - v_lo);
    }
    if (eam.slope <= 0.0 || eam.extinction_db < 0.0)
        throw std::invalid_argument("eam_transmission: curve must be monotone");
    const double t_min = std::pow(10.0, -eam.extinction_db / 10.0);
    if (t_min >= 1.0) return 1.0; // 0 dB extinction collapses all levels
    auto raw = [&](double vv) { return 0.5 * (1.0 - std::tanh(eam.slope * (vv - eam.knee_voltage))); };
    const double r_lo = raw(v_lo);
    const double r_hi = raw(v_hi);
    return t_min + (1.0 - t_min) * (raw(v) - r_hi) / (r_lo - r_hi);
}

double soa_gain(const SoaCurve& soa, double p_in_watts) {
    const double g0 = db_to_linear(soa.small_signal_gain_db);
    if (!soa.enabled) return 1.0;
    if (p_in_watts <= 0.0) return g0;
    const double g3 = g0 * std::pow(10.0, -0.3);
    if (g3 <= 1.0) throw std::invalid_argument("soa_gain: small-signal gain too low for model");
    const double p3 = dbm_to_watts(soa.saturation_power_dbm);
    const double p_sat_internal = (g3 - 1.0) * p3 / std::log(g0 / g3);
    const double r = p_in_watts / p_sat_internal;
    // g = g0 * exp(-(g - 1) * r): bracketed Newton on [1, g0].
    double lo = 1.0, hi = g0;
    double g = g0 / (1.0 + r); // decent starting point
    if (g < lo) g = lo;
    for (int it = 0; it < 60; ++it) {
        const double e = std::exp(-(g - 1.0) * r);
        const double f = g - g0 * e;
        if (f > 0.0)
            hi = g;
        else
            lo = g;
        const double fp = 1.0 + g0 * e * r;
        double next = g - f / fp;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - g) < 1e-15 * g) {
            g = next;
            break;
        }
        g = next;
    }
    return g;
}

std::vector<uint8_t> generate_symbols(long n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_symbols: need n >= 1");
    Rng rng(seed);
    std::vector<uint8_t> sym(static_cast<size_t>(n));
    for (auto& s : sym) s = static_cast<uint8_t>(rng.pam4_symbol());
    return sym;
}

std::vector<std::complex<double>> modulate(const std::vector<uint8_t>& symbols,
                                           const LinkConfig& cfg) {
    cfg.validate();
    const double vpp = cfg.drive_vpp;
    // Higher PAM level -> lower drive voltage -> higher transmission.
    double level_t[4];
    for (int s = 0; s < 4; ++s) {
        const double v = cfg.eam.bias + (0.5 - s / 3.0) * vpp;
        level_t[s] = eam_transmission(cfg.eam, v, vpp);
    }
    const long n = static_cast<long>(symbols.size()) * cfg.sps_sim;
    std::vector<std::complex<double>> field(static_cast<size_t>(n));
    double power_acc = 0.0;
    for (size_t i = 0; i < symbols.size(); ++i) {
        const double amp = std::sqrt(level_t[symbols[i]]);
        power_acc += level_t[symbols[i]];
        for (int j = 0; j < cfg.sps_sim; ++j)
            field[i * cfg.sps_sim + j] = amp;
    }
    const double p_mean = power_acc / static_cast<double>(symbols.size());
    const double target = dbm_to_watts(cfg.launch_power_dbm);
    const double scale = p_mean > 0.0 ? std::sqrt(target / p_mean) : 0.0;
    for (auto& v : field) v *= scale;
    return field;
}

void propagate_fiber(std::vector<std::complex<double>>& field, const LinkConfig& cfg) {
    if (field.size() < 2) throw std::invalid_argument("propagate_fiber: need at least 2 samples");
    if (cfg.fiber_length == 0.0) return;
    const double d_si = cfg.dispersion_ps_nm_km * 1e-6; // s/m^2
    const double beta2 = -d_si * cfg.wavelength * cfg.wavelength / (2.0 * M_PI * kSpeedOfLight);
    const double fs = cfg.baud_rate * cfg.sps_sim;
    const size_t n = field.size();
    FftEngine::instance().transform(field, false);
    for (size_t i = 0; i < n; ++i) {
        double fbin = static_cast<double>(i);
        if (fbin > static_cast<double>(n) / 2.0) fbin -= static_cast<double>(n);
        const double omega = 2.0 * M_PI * fbin * fs / static_cast<double>(n);
        const double phase = 0.5 * beta2 * omega * omega * cfg.fiber_length;
        field[i] *= std::complex<double>(std::cos(phase), std::sin(phase));
    }
    FftEngine::instance().transform(field, true);
}

void apply_voa(std::vector<std::complex<double>>& field, const LinkConfig& cfg) {
    const double p_now = mean_power(field);
    const double p_target = dbm_to_watts(cfg.rop_dbm);
    if (p_now <= 0.0) throw std::invalid_argument("apply_voa: zero input power");
    if (p_target > p_now * (1.0 + 1e-9))
        throw std::invalid_argument("apply_voa: requested ROP above available power (VOA loss would be negative)");
    const double scale = std::sqrt(p_target / p_now);
    for (auto& v : field) v *= scale;
}

double amplify_soa(std::vector<std::complex<double>>& field, const LinkConfig& cfg) {
    if (!cfg.soa.enabled) return 1.0;
    const double p_in = mean_power(field);
    const long n = static_cast<long>(field.size());
    std::complex<double>* data = field.data();
    const SoaCurve soa = cfg.soa;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const double p = std::norm(data[i]);
        data[i] *= std::sqrt(soa_gain(soa, p));
    }
    const double p_out = mean_power(field);
    return p_in > 0.0 ? p_out / p_in : db_to_linear(soa.small_signal_gain_db);
}

std::vector<double> detect_and_frontend(const std::vector<std::complex<double>>& field,
                                        const LinkConfig& cfg, double g_eff,
                                        uint64_t noise_seed) {
    const size_t n = field.size();
    std::vector<double> wave(n);
    for (size_t i = 0; i < n; ++i) wave[i] = std::norm(field[i]);

    if (cfg.rx_lowpass) {
        // Zero-phase first-order magnitude response; group delay is left out
        // so the ideal clock recovery contract holds exactly.
        std::vector<std::complex<double>> spec(wave.begin(), wave.end());
        FftEngine::instance().transform(spec, false);
        const double fs = cfg.baud_rate * cfg.sps_sim;
        for (size_t i = 0; i < n; ++i) {
            double fbin = static_cast<double>(i);
            if (fbin > static_cast<double>(n) / 2.0) fbin -= static_cast<double>(n);
            const double f = fbin * fs / static_cast<double>(n);
            spec[i] *= 1.0 / std::sqrt(1.0 + (f / cfg.rx_bandwidth) * (f / cfg.rx_bandwidth));
        }
        FftEngine::instance().transform(spec, true);
        for (size_t i = 0; i < n; ++i) wave[i] = spec[i].real();
    }

    const double ase = cfg.ase_psd * std::max(0.0, g_eff - 1.0);
    const double sigma = std::sqrt((cfg.thermal_psd + ase) * cfg.rx_bandwidth);
    if (sigma > 0.0) {
        Rng rng(noise_seed);
        for (auto& v : wave) v += sigma * rng.gaussian();
    }
    return wave;
}

WaveformFrame build_frame(const LinkConfig& cfg, long n_symbols, uint64_t seed) {
    cfg.validate();
    if (n_symbols < 1) throw std::invalid_argument("build_frame: need n_symbols >= 1");

    WaveformFrame frame;
    frame.symbols = generate_symbols(n_symbols, derive_seed(seed, "symbols"));
    frame.sps_out = cfg.sps_out;
    frame.rop_dbm = cfg.rop_dbm;
    frame.seed = seed;
    frame.cd_ps_nm = accumulated_dispersion_ps_nm(cfg);
    frame.config_hash = link_config_hash(cfg);

    auto field = modulate(frame.symbols, cfg);
    propagate_fiber(field, cfg);
    apply_voa(field, cfg);
    const double g_eff = amplify_soa(field, cfg);
    auto wave = detect_and_frontend(field, cfg, g_eff, derive_seed(seed, "noise"));

    // Decimate with ideal symbol-phase alignment: output sample j sits at
    // full-rate index j*(sps_sim/sps_out) + sps_sim/2, so sample sps_out*i is
    // the center of symbol i. The final boundary sample wraps around.
    const long hop = cfg.sps_sim / cfg.sps_out;
    const long n_full = static_cast<long>(wave.size());
    const long n_out = n_symbols * cfg.sps_out;
    frame.samples.resize(static_cast<size_t>(n_out));
    for (long j = 0; j < n_out; ++j)
        frame.samples[static_cast<size_t>(j)] = wave[static_cast<size_t>((j * hop + cfg.sps_sim / 2) % n_full)];

    double mean = 0.0;
    for (double v : frame.samples) mean += v;
    mean /= static_cast<double>(n_out);
    double var = 0.0;
    for (double v : frame.samples) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n_out);
    const double sd = std::sqrt(var);
    frame.standardize_mean = mean;
    frame.standardize_std = sd > 0.0 ? sd : 1.0;
    for (auto& v : frame.samples) v = (v - frame.standardize_mean) / frame.standardize_std;
    return frame;
}

double slicer_ber(const WaveformFrame& frame) {
    const long n = frame.n_symbols();
    double mean[4] = {0, 0, 0, 0};
    long count[4] = {0, 0, 0, 0};
    for (long i = 0; i < n; ++i) {
        mean[frame.symbols[static_cast<size_t>(i)]] += frame.samples[static_cast<size_t>(i) * frame.sps_out];
        count[frame.symbols[static_cast<size_t>(i)]] += 1;
    }
    for (int s = 0; s < 4; ++s)
        if (count[s]) mean[s] /= static_cast<double>(count[s]);
    const double th01 = 0.5 * (mean[0] + mean[1]);
    const double th12 = 0.5 * (mean[1] + mean[2]);
    const double th23 = 0.5 * (mean[2] + mean[3]);
    long errs = 0;
    for (long i = 0; i < n; ++i) {
        const double v = frame.samples[static_cast<size_t>(i) * frame.sps_out];
        int hat = v < th12 ? (v < th01 ? 0 : 1) : (v < th23 ? 2 : 3);
        errs += bit_errors_between(hat, frame.symbols[static_cast<size_t>(i)]);
    }
    return static_cast<double>(errs) / static_cast<double>(2 * n);
}

double estimate_snr_db(const WaveformFrame& frame) {
    const long n = frame.n_symbols();
    double mean[4] = {0, 0, 0, 0};
    long count[4] = {0, 0, 0, 0};
    for (long i = 0; i < n; ++i) {
        mean[frame.symbols[static_cast<size_t>(i)]] += frame.samples[static_cast<size_t>(i) * frame.sps_out];
        count[frame.symbols[static_cast<size_t>(i)]] += 1;
    }
    double grand = 0.0;
    for (int s = 0; s < 4; ++s) {
        if (count[s]) mean[s] /= static_cast<double>(count[s]);
        grand += mean[s] * static_cast<double>(count[s]);
    }
    grand /= static_cast<double>(n);
    double sig = 0.0, noise = 0.0;
    for (long i = 0; i < n; ++i) {
        const double m = mean[frame.symbols[static_cast<size_t>(i)]];
        const double v = frame.samples[static_cast<size_t>(i) * frame.sps_out];
        sig += (m - grand) * (m - grand);
        noise += (v - m) * (v - m);
    }
    if (noise <= 0.0) return 99.0;
    return linear_to_db(sig / noise);
}

// ---------------------------------------------------------------------------
// Frame container: little-endian header, f32 samples, u8 symbols.

namespace {

constexpr uint32_t kFrameMagic = 0x46514b45; // "EKQF" little-endian bytes "EKQF"
constexpr uint32_t kFrameVersion = 1;

} // namespace

void save_frame(const WaveformFrame& frame, const std::string& path) {
    FILE* f = fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("frame: cannot open " + path + " for writing");
    auto put = [&](const void* p, size_t sz) {
        if (fwrite(p, sz, 1, f) != 1) {
            fclose(f);
            throw std::runtime_error("frame: write failed for " + path);
        }
    };
    uint32_t u32;
    uint64_t u64;
    u32 = kFrameMagic;
    put(&u32, 4);
    u32 = kFrameVersion;
    put(&u32, 4);
    u64 = frame.config_hash;
    put(&u64, 8);
    u64 = frame.seed;
    put(&u64, 8);
    u32 = static_cast<uint32_t>(frame.sps_out);
    put(&u32, 4);
    u32 = 0;
    put(&u32, 4); // reserved
    u64 = static_cast<uint64_t>(frame.symbols.size());
    put(&u64, 8);
    u64 = static_cast<uint64_t>(frame.samples.size());
    put(&u64, 8);
    double d;
    d = frame.rop_dbm;
    put(&d, 8);
    d = frame.cd_ps_nm;
    put(&d, 8);
    d = frame.standardize_mean;
    put(&d, 8);
    d = frame.standardize_std;
    put(&d, 8);
    for (double v : frame.samples) {
        float fv = static_cast<float>(v);
        put(&fv, 4);
    }
    if (!frame.symbols.empty() &&
        fwrite(frame.symbols.data(), 1, frame.symbols.size(), f) != frame.symbols.size()) {
        fclose(f);
        throw std::runtime_error("frame: write failed for " + path);
    }
    if (fclose(f) != 0) throw std::runtime_error("frame: close failed for " + path);
}

WaveformFrame load_frame(const std::string& path) {
    FILE* f = fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("frame: cannot open " + path);
    auto get = [&](void* p, size_t sz) {
        if (fread(p, sz, 1, f) != 1) {
            fclose(f);
            throw std::runtime_error("frame: truncated file " + path);
        }
    };
    uint32_t u32;
    uint64_t u64;
    get(&u32, 4);
    if (u32 != kFrameMagic) {
        fclose(f);
        throw std::runtime_error("frame: bad magic in " + path);
    }
    get(&u32, 4);
    if (u32 != kFrameVersion) {
        fclose(f);
        throw std::runtime_error("frame: unsupported version in " + path);
    }
    WaveformFrame frame;
    get(&u64, 8);
    frame.config_hash = u64;
    get(&u64, 8);
    frame.seed = u64;
    get(&u32, 4);
    frame.sps_out = static_cast<int>(u32);
    get(&u32, 4); // reserved
    uint64_t n_sym, n_samp;
    get(&n_sym, 8);
    get(&n_samp, 8);
    get(&frame.rop_dbm, 8);
    get(&frame.cd_ps_nm, 8);
    get(&frame.standardize_mean, 8);
    get(&frame.standardize_std, 8);
    frame.samples.resize(n_samp);
    for (auto& v : frame.samples) {
        float fv;
        get(&fv, 4);
        v = static_cast<double>(fv);
    }
    frame.symbols.resize(n_sym);
    if (n_sym && fread(frame.symbols.data(), 1, n_sym, f) != n_sym) {
        fclose(f);
        throw std::runtime_error("frame: truncated symbols in " + path);
    }
    fclose(f);
    if (frame.samples.size() != frame.symbols.size() * static_cast<size_t>(frame.sps_out))
        throw std::runtime_error("frame: sample/symbol count mismatch in " + path);
    return frame;
}

void export_frame_csv(const WaveformFrame& frame, const std::string& path) {
    FILE* f = fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("frame: cannot open " + path + " for writing");
    fprintf(f, "symbol_index,symbol,bit_msb,bit_lsb");
    for (int j = 0; j < frame.sps_out; ++j) fprintf(f, ",sample%d", j);
    fprintf(f, "\n");
    for (long i = 0; i < frame.n_symbols(); ++i) {
        const int sym = frame.symbols[static_cast<size_t>(i)];
        const int bits = gray_bits(sym);
        fprintf(f, "%ld,%d,%d,%d", i, sym, (bits >> 1) & 1, bits & 1);
        for (int j = 0; j < frame.sps_out; ++j)
            fprintf(f, ",%.9g", frame.samples[static_cast<size_t>(i) * frame.sps_out + j]);
        fprintf(f, "\n");
    }
    if (fclose(f) != 0) throw std::runtime_error("frame: close failed for " + path);
}

} // namespace kaneq
