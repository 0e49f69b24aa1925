#include "kaneq/equalizer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "kaneq/common.hpp"
#include "kaneq/kernels.hpp"
#include "kaneq/spline.hpp"

namespace kaneq {

long EqualizerModel::receptive_field() const {
    long rf = 1;
    long stride = 1;
    for (const auto& sp : specs) {
        rf += static_cast<long>(sp.k - 1) * stride;
        stride *= sp.s;
    }
    return rf;
}

long EqualizerModel::total_stride() const {
    long d = 1;
    for (const auto& sp : specs) d *= sp.s;
    return d;
}

long EqualizerModel::delay_symbols() const {
    const long rf = receptive_field();
    const int c_last = out_per_position();
    double d = static_cast<double>(rf - 1) / (2.0 * sps) - (c_last - 1) / 2.0;
    long delay = std::lround(d);
    return delay > 0 ? delay : 0;
}

long EqualizerModel::n_trainable() const {
    long n = 0;
    for (size_t l = 0; l < specs.size(); ++l) {
        n += specs[l].n_weights();
        n += static_cast<long>(layers[l].bias.size());
    }
    return n;
}

EqualizerModel validate_architecture(std::vector<ConvLayerSpec> specs, int sps) {
    if (specs.empty()) throw std::invalid_argument("architecture: no layers");
    if (sps < 1) throw std::invalid_argument("architecture: sps must be >= 1");
    long stride_prod = 1;
    for (size_t l = 0; l < specs.size(); ++l) {
        const auto& sp = specs[l];
        if (sp.k < 1 || sp.s < 1)
            throw std::invalid_argument("architecture: kernel and stride must be >= 1");
        if (sp.kind == LayerKind::Kan && sp.g < 2)
            throw std::invalid_argument("architecture: KAN layer needs at least 2 grid points");
        if (l == 0) {
            if (sp.c_in != 1) throw std::invalid_argument("architecture: first layer c_in must be 1");
        } else if (sp.c_in != specs[l - 1].c_out) {
            throw std::invalid_argument("architecture: c_in of layer " + std::to_string(l + 1) +
                                        " must equal c_out of layer " + std::to_string(l));
        }
        stride_prod *= sp.s;
    }
    if (stride_prod % sps != 0)
        throw std::invalid_argument("architecture: stride product " + std::to_string(stride_prod) +
                                    " not divisible by sps " + std::to_string(sps) +
                                    " (last-layer c_out would not be an integer)");
    const long c_last = stride_prod / sps;
    if (specs.back().c_out != c_last)
        throw std::invalid_argument("architecture: last-layer c_out must be prod(S)/sps = " +
                                    std::to_string(c_last) + ", got " +
                                    std::to_string(specs.back().c_out));

    EqualizerModel model;
    model.sps = sps;
    model.specs = std::move(specs);
    model.layers.resize(model.specs.size());
    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        model.layers[l].w.assign(static_cast<size_t>(sp.n_weights()), 0.0);
        model.layers[l].mask.assign(static_cast<size_t>(sp.n_connections()), 1);
        if (sp.use_bias) model.layers[l].bias.assign(static_cast<size_t>(sp.c_out), 0.0);
    }
    return model;
}

void init_params(EqualizerModel& model, uint64_t seed) {
    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        auto& lp = model.layers[l];
        Rng rng(derive_seed(seed, "layer-init", l));
        const double fan_in = static_cast<double>(sp.c_in) * sp.k;
        const double bound = 1.0 / std::sqrt(fan_in);
        if (sp.kind == LayerKind::Kan) {
            // Near-linear start: each function is a ramp with fan-in scaled
            // slope plus small per-coefficient noise.
            SplineGrid grid(sp.g);
            for (long c = 0; c < sp.n_connections(); ++c) {
                double wslope = rng.uniform(-bound, bound);
                for (int kk = 0; kk < sp.g; ++kk)
                    lp.w[static_cast<size_t>(c) * sp.g + kk] =
                        grid.point(kk) * wslope + 0.05 * rng.gaussian();
            }
        } else {
            for (long c = 0; c < sp.n_connections(); ++c)
                lp.w[static_cast<size_t>(c)] = rng.uniform(-bound, bound);
        }
        for (auto& b : lp.bias) b = 0.0;
    }
}

EqualizerModel make_fir(int taps) {
    ConvLayerSpec sp;
    sp.c_in = 1;
    sp.c_out = 1;
    sp.k = taps;
    sp.s = 2;
    sp.kind = LayerKind::Linear;
    sp.use_bias = false;
    auto model = validate_architecture({sp}, 2);
    model.family = "fir";
    return model;
}

EqualizerModel make_kan1(int taps, int g) {
    ConvLayerSpec sp;
    sp.c_in = 1;
    sp.c_out = 1;
    sp.k = taps;
    sp.s = 2;
    sp.kind = LayerKind::Kan;
    sp.g = g;
    auto model = validate_architecture({sp}, 2);
    model.family = "kan1";
    return model;
}

EqualizerModel make_cnn2(int c1, int k1, int s1, int k2, int s2) {
    ConvLayerSpec a;
    a.c_in = 1;
    a.c_out = c1;
    a.k = k1;
    a.s = s1;
    a.kind = LayerKind::ReluLinear;
    a.use_bias = true;
    ConvLayerSpec b;
    b.c_in = c1;
    b.c_out = s1 * s2 / 2;
    b.k = k2;
    b.s = s2;
    b.kind = LayerKind::Linear;
    b.use_bias = true;
    auto model = validate_architecture({a, b}, 2);
    model.family = "cnn2";
    return model;
}

EqualizerModel make_kan2(int c1, int k1, int s1, int g1, int k2, int s2, int g2) {
    ConvLayerSpec a;
    a.c_in = 1;
    a.c_out = c1;
    a.k = k1;
    a.s = s1;
    a.kind = LayerKind::Kan;
    a.g = g1;
    ConvLayerSpec b;
    b.c_in = c1;
    b.c_out = s1 * s2 / 2;
    b.k = k2;
    b.s = s2;
    b.kind = LayerKind::Kan;
    b.g = g2;
    auto model = validate_architecture({a, b}, 2);
    model.family = "kan2";
    return model;
}

static long out_positions(long n_in, int k, int s) {
    if (n_in < k) return 0;
    return (n_in - k) / s + 1;
}

std::vector<double> model_forward(const EqualizerModel& model, const double* x, long n,
                                  ForwardCache* cache) {
    if (n < model.receptive_field())
        throw std::invalid_argument("model_forward: input shorter than receptive field");
    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.act.assign(model.specs.size() + 1, {});
    fc.len.assign(model.specs.size() + 1, 0);
    fc.act[0].assign(x, x + n);
    fc.len[0] = n;

    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        const auto& lp = model.layers[l];
        const long n_in = fc.len[l];
        const long n_pos = out_positions(n_in, sp.k, sp.s);
        fc.act[l + 1].assign(static_cast<size_t>(sp.c_out) * n_pos, 0.0);
        fc.len[l + 1] = n_pos;
        const double* in = fc.act[l].data();
        double* out = fc.act[l + 1].data();
        if (sp.kind == LayerKind::Kan) {
            SplineGrid grid(sp.g);
            kernels::kan_forward(in, n_in, sp.c_in, lp.w.data(), lp.mask.data(), sp.c_out, sp.k,
                                 sp.s, sp.g, grid.t, out, n_pos);
        } else {
            kernels::conv_forward(in, n_in, sp.c_in, lp.w.data(),
                                  lp.bias.empty() ? nullptr : lp.bias.data(), lp.mask.data(),
                                  sp.c_out, sp.k, sp.s, sp.kind == LayerKind::ReluLinear, out,
                                  n_pos);
        }
    }

    const int c_last = model.out_per_position();
    const long n_pos = fc.len.back();
    const auto& last = fc.act.back();
    std::vector<double> est(static_cast<size_t>(n_pos) * c_last);
    for (long p = 0; p < n_pos; ++p)
        for (int c = 0; c < c_last; ++c)
            est[static_cast<size_t>(p) * c_last + c] = last[static_cast<size_t>(c) * n_pos + p];
    return est;
}

ModelGrads model_backward(const EqualizerModel& model, const ForwardCache& cache,
                          const std::vector<double>& upstream_estimates) {
    const size_t n_layers = model.specs.size();
    if (cache.act.size() != n_layers + 1)
        throw std::invalid_argument("model_backward: cache does not match model");
    const int c_last = model.out_per_position();
    const long n_pos_last = cache.len.back();
    if (upstream_estimates.size() != static_cast<size_t>(n_pos_last) * c_last)
        throw std::invalid_argument("model_backward: upstream size mismatch");

    ModelGrads grads;
    grads.w.resize(n_layers);
    grads.bias.resize(n_layers);

    // Estimate order back to channel-major.
    std::vector<double> gy(static_cast<size_t>(c_last) * n_pos_last);
    for (long p = 0; p < n_pos_last; ++p)
        for (int c = 0; c < c_last; ++c)
            gy[static_cast<size_t>(c) * n_pos_last + p] =
                upstream_estimates[static_cast<size_t>(p) * c_last + c];

    for (size_t l = n_layers; l-- > 0;) {
        const auto& sp = model.specs[l];
        const auto& lp = model.layers[l];
        const long n_in = cache.len[l];
        const long n_pos = cache.len[l + 1];
        const double* in = cache.act[l].data();

        if (sp.kind == LayerKind::ReluLinear) {
            // Fold the activation derivative into gy (output 0 means the
            // unit was clipped, derivative 0).
            const auto& out = cache.act[l + 1];
            for (size_t idx = 0; idx < gy.size(); ++idx)
                if (out[idx] <= 0.0) gy[idx] = 0.0;
        }

        grads.w[l].assign(lp.w.size(), 0.0);
        grads.bias[l].assign(lp.bias.size(), 0.0);
        std::vector<double> gx;
        const bool need_gx = l > 0;
        if (need_gx) gx.assign(static_cast<size_t>(sp.c_in) * n_in, 0.0);

        if (sp.kind == LayerKind::Kan) {
            SplineGrid grid(sp.g);
            kernels::kan_grad_params(in, n_in, sp.c_in, gy.data(), n_pos, sp.c_out, sp.k, sp.s,
                                     sp.g, grid.t, lp.mask.data(), grads.w[l].data());
            if (need_gx)
                kernels::kan_grad_input(in, n_in, sp.c_in, lp.w.data(), lp.mask.data(), sp.c_out,
                                        sp.k, sp.s, sp.g, grid.t, gy.data(), n_pos, gx.data());
        } else {
            kernels::conv_grad_params(in, n_in, sp.c_in, gy.data(), n_pos, sp.c_out, sp.k, sp.s,
                                      lp.mask.data(), grads.w[l].data(),
                                      grads.bias[l].empty() ? nullptr : grads.bias[l].data());
            if (need_gx)
                kernels::conv_grad_input(lp.w.data(), lp.mask.data(), sp.c_in, sp.c_out, sp.k,
                                         sp.s, gy.data(), n_pos, gx.data(), n_in);
        }
        gy = std::move(gx);
    }
    return grads;
}

RangeForward forward_range(const EqualizerModel& model, const double* samples, long n_samples,
                           long n_symbols, long sym_begin, long sym_end, ForwardCache* cache) {
    const long rf = model.receptive_field();
    const long d = model.total_stride();
    const int c_last = model.out_per_position();
    const long delay = model.delay_symbols();
    // Estimates the frame supports.
    const long n_pos_frame = n_samples >= rf ? (n_samples - rf) / d + 1 : 0;
    const long n_est_frame = n_pos_frame * c_last;
    long lo = sym_begin < delay ? delay : sym_begin;
    long hi = sym_end;
    if (hi > delay + n_est_frame) hi = delay + n_est_frame;
    if (hi > n_symbols) hi = n_symbols;
    RangeForward rf_out;
    if (lo >= hi) {
        rf_out.sym_begin = rf_out.sym_end = lo;
        return rf_out;
    }
    const long e0 = lo - delay;
    const long e1 = hi - delay; // exclusive
    const long p0 = e0 / c_last;
    const long p1 = (e1 - 1) / c_last;
    const long off = p0 * d;
    const long slice = (p1 - p0) * d + rf;
    rf_out.est = model_forward(model, samples + off, slice, cache);
    rf_out.sym_begin = lo;
    rf_out.sym_end = hi;
    rf_out.est_begin = e0 - p0 * c_last;
    rf_out.slice_offset = off;
    return rf_out;
}

RvmsReport count_rvms(const EqualizerModel& model) {
    RvmsReport rep;
    long total_conn = 0;
    long masked_conn = 0;
    long stride_prod = 1;
    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        stride_prod *= sp.s;
        long active = 0;
        for (uint8_t m : model.layers[l].mask) active += m != 0;
        total_conn += sp.n_connections();
        masked_conn += sp.n_connections() - active;
        // One multiplication per active weight (or per active spline via its
        // LUT slope) per output position; positions per symbol shrink with
        // the accumulated stride.
        const double pos_per_symbol = static_cast<double>(model.sps) / stride_prod;
        rep.per_layer.push_back(active * pos_per_symbol);
        rep.total += rep.per_layer.back();
    }
    rep.pruned_fraction = total_conn ? static_cast<double>(masked_conn) / total_conn : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned binary, little-endian, f64 weights, packed masks.

namespace {

constexpr uint32_t kCkptMagic = 0x4b45514d; // "MQEK" read little-endian as "KEQM"
constexpr uint32_t kCkptVersion = 1;

void put_u32(FILE* f, uint32_t v) { fwrite(&v, 4, 1, f); }
void put_u64(FILE* f, uint64_t v) { fwrite(&v, 8, 1, f); }
void put_f64(FILE* f, double v) { fwrite(&v, 8, 1, f); }

uint32_t get_u32(FILE* f) {
    uint32_t v = 0;
    if (fread(&v, 4, 1, f) != 1) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
uint64_t get_u64(FILE* f) {
    uint64_t v = 0;
    if (fread(&v, 8, 1, f) != 1) throw std::runtime_error("checkpoint: truncated file");
    return v;
}
double get_f64(FILE* f) {
    double v = 0;
    if (fread(&v, 8, 1, f) != 1) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

} // namespace

void save_checkpoint(const EqualizerModel& model, const std::string& path) {
    FILE* f = fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    put_u32(f, kCkptMagic);
    put_u32(f, kCkptVersion);
    put_u32(f, static_cast<uint32_t>(model.sps));
    put_u32(f, static_cast<uint32_t>(model.specs.size()));
    uint64_t fam = fnv1a(model.family);
    put_u64(f, fam);
    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        put_u32(f, static_cast<uint32_t>(sp.kind));
        put_u32(f, sp.use_bias ? 1u : 0u);
        put_u32(f, static_cast<uint32_t>(sp.c_in));
        put_u32(f, static_cast<uint32_t>(sp.c_out));
        put_u32(f, static_cast<uint32_t>(sp.k));
        put_u32(f, static_cast<uint32_t>(sp.s));
        put_u32(f, static_cast<uint32_t>(sp.g));
        const auto& lp = model.layers[l];
        for (double v : lp.w) put_f64(f, v);
        for (double v : lp.bias) put_f64(f, v);
        const long n_conn = sp.n_connections();
        for (long base = 0; base < n_conn; base += 8) {
            uint8_t byte = 0;
            for (int b = 0; b < 8 && base + b < n_conn; ++b)
                if (lp.mask[static_cast<size_t>(base + b)]) byte |= static_cast<uint8_t>(1u << b);
            fwrite(&byte, 1, 1, f);
        }
    }
    // Family string appended for readability of the container.
    uint32_t fam_len = static_cast<uint32_t>(model.family.size());
    put_u32(f, fam_len);
    fwrite(model.family.data(), 1, fam_len, f);
    if (fclose(f) != 0) throw std::runtime_error("checkpoint: write failed for " + path);
    (void)fam;
}

EqualizerModel load_checkpoint(const std::string& path) {
    FILE* f = fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
    try {
        if (get_u32(f) != kCkptMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
        if (get_u32(f) != kCkptVersion)
            throw std::runtime_error("checkpoint: unsupported version in " + path);
        const int sps = static_cast<int>(get_u32(f));
        const uint32_t n_layers = get_u32(f);
        get_u64(f); // family hash, informational
        std::vector<ConvLayerSpec> specs;
        std::vector<LayerParams> params;
        for (uint32_t l = 0; l < n_layers; ++l) {
            ConvLayerSpec sp;
            sp.kind = static_cast<LayerKind>(get_u32(f));
            sp.use_bias = get_u32(f) != 0;
            sp.c_in = static_cast<int>(get_u32(f));
            sp.c_out = static_cast<int>(get_u32(f));
            sp.k = static_cast<int>(get_u32(f));
            sp.s = static_cast<int>(get_u32(f));
            sp.g = static_cast<int>(get_u32(f));
            LayerParams lp;
            lp.w.resize(static_cast<size_t>(sp.n_weights()));
            for (auto& v : lp.w) v = get_f64(f);
            if (sp.use_bias) {
                lp.bias.resize(static_cast<size_t>(sp.c_out));
                for (auto& v : lp.bias) v = get_f64(f);
            }
            const long n_conn = sp.n_connections();
            lp.mask.assign(static_cast<size_t>(n_conn), 0);
            for (long base = 0; base < n_conn; base += 8) {
                uint8_t byte = 0;
                if (fread(&byte, 1, 1, f) != 1)
                    throw std::runtime_error("checkpoint: truncated mask in " + path);
                for (int b = 0; b < 8 && base + b < n_conn; ++b)
                    lp.mask[static_cast<size_t>(base + b)] = (byte >> b) & 1;
            }
            specs.push_back(sp);
            params.push_back(std::move(lp));
        }
        auto model = validate_architecture(specs, sps);
        model.layers = std::move(params);
        uint32_t fam_len = get_u32(f);
        model.family.resize(fam_len);
        if (fam_len && fread(model.family.data(), 1, fam_len, f) != fam_len)
            throw std::runtime_error("checkpoint: truncated family in " + path);
        fclose(f);
        return model;
    } catch (...) {
        fclose(f);
        throw;
    }
}

} // namespace kaneq
