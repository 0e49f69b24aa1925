#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace kaneq {

enum class LayerKind : int { Linear = 0, ReluLinear = 1, Kan = 2 };

struct ConvLayerSpec {
    int c_in = 1;
    int c_out = 1;
    int k = 1; // kernel taps
    int s = 1; // stride in this layer's input samples
    LayerKind kind = LayerKind::Linear;
    int g = 0; // spline grid points (Kan only)
    bool use_bias = false;

    long n_connections() const { return static_cast<long>(c_out) * c_in * k; }
    long n_weights() const {
        return kind == LayerKind::Kan ? n_connections() * g : n_connections();
    }
};

struct LayerParams {
    std::vector<double> w;      // Linear: [i][j][m]; Kan: [i][j][m][k]
    std::vector<double> bias;   // [i], only when use_bias
    std::vector<uint8_t> mask;  // [i][j][m], 1 = active
};

// A composed convolutional equalizer. Consumes samples at `sps` per symbol
// and emits one soft estimate per symbol: the last layer carries
// prod(S) / sps output channels so that symbols enter and leave at equal
// rate.
struct EqualizerModel {
    int sps = 2;
    std::string family; // "fir", "kan1", "cnn2", "kan2"
    std::vector<ConvLayerSpec> specs;
    std::vector<LayerParams> layers;

    long receptive_field() const;
    long total_stride() const;
    int out_per_position() const { return specs.back().c_out; }
    // Symbol index estimated by the first output, centering the receptive
    // field on the estimated symbol group.
    long delay_symbols() const;

    long n_trainable() const;
};

// Checks channel chaining and the last-layer c_out = prod(S)/sps rule.
// Returns a model skeleton with zeroed parameters.
EqualizerModel validate_architecture(std::vector<ConvLayerSpec> specs, int sps);

void init_params(EqualizerModel& model, uint64_t seed);

EqualizerModel make_fir(int taps);
EqualizerModel make_kan1(int taps, int g = 17);
EqualizerModel make_cnn2(int c1, int k1, int s1, int k2, int s2);
EqualizerModel make_kan2(int c1, int k1, int s1, int g1, int k2, int s2, int g2);

struct ForwardCache {
    // act[0] is the input slice, act[l] the post-activation output of layer l.
    std::vector<std::vector<double>> act;
    std::vector<long> len; // per-level positions (per channel)
};

// Estimates for an input buffer, flattened in symbol order
// (estimate e = position * c_out_last + channel).
std::vector<double> model_forward(const EqualizerModel& model, const double* x, long n,
                                  ForwardCache* cache = nullptr);

struct ModelGrads {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> bias;
};

ModelGrads model_backward(const EqualizerModel& model, const ForwardCache& cache,
                          const std::vector<double>& upstream_estimates);

// Forward over the slice of `samples` needed to estimate symbols
// [sym_begin, sym_end); the range is clipped to what the frame supports.
struct RangeForward {
    long sym_begin = 0;
    long sym_end = 0;  // exclusive
    long est_begin = 0; // index into est of sym_begin's estimate
    std::vector<double> est;
    long slice_offset = 0; // sample offset of the forward slice
};

RangeForward forward_range(const EqualizerModel& model, const double* samples, long n_samples,
                           long n_symbols, long sym_begin, long sym_end,
                           ForwardCache* cache = nullptr);

struct RvmsReport {
    std::vector<double> per_layer; // multiplications per equalized symbol
    double total = 0.0;
    double pruned_fraction = 0.0;
};

RvmsReport count_rvms(const EqualizerModel& model);

void save_checkpoint(const EqualizerModel& model, const std::string& path);
EqualizerModel load_checkpoint(const std::string& path);

} // namespace kaneq
