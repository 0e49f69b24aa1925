#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kaneq/equalizer.hpp"

namespace kaneq {

struct WaveformFrame;

struct TrainConfig {
    long block_symbols = 360;
    long iterations = 1500;       // paper scale: 7600
    double lr = 1.77e-3;          // search grid {1, 1.77, 3.16, 5.62}e-3
    double lr_factor = 0.4;
    double l1_weight = 5e-3;
    long test_blocks = 50;        // paper scale: 200
    long ber_avg_window = 10;
    long plateau_patience = 200;
    double plateau_rel_improve = 1e-3;
    long loss_smooth_window = 50;
    double min_lr = 1e-5;
    // Test BER is always evaluated inside the final averaging window; in
    // between it is sampled every this many iterations.
    long test_eval_stride = 10;   // paper scale: 1
    uint64_t seed = 1;

    void validate() const;
};

struct TrainRecord {
    std::vector<double> loss;     // per iteration, MSE + L1 penalty
    std::vector<double> lr;       // per iteration
    std::vector<double> test_ber; // per iteration, NaN where not evaluated
    double final_mean_ber = 0.0;  // mean over the last ber_avg_window iterations
    bool diverged = false;
};

// Mean squared error against targets plus its gradient 2(e - t)/N.
std::pair<double, std::vector<double>> mse_loss(std::span<const double> estimates,
                                                std::span<const double> targets);

// l1_weight * sum |theta| over unmasked weights (KAN coefficients included,
// biases excluded). When grads is given, the subgradient l1_weight * sign(theta)
// is accumulated into it.
double l1_penalty(const EqualizerModel& model, double l1_weight, ModelGrads* grads);

// Streaming block training: one 360-symbol block per iteration (cycling
// through the pre-test region), MSE + L1, adaptive-moment update, plateau
// LR schedule, test BER on the held-out tail.
TrainRecord train(EqualizerModel& model, const WaveformFrame& frame, const TrainConfig& cfg);

// Hard-decision BER over symbols [sym_begin, sym_end), clipped to the
// estimable range.
double evaluate_ber(const EqualizerModel& model, const WaveformFrame& frame, long sym_begin,
                    long sym_end);

double max_mean_ber(const std::vector<double>& per_frame_mean_ber);

void save_train_record_csv(const TrainRecord& rec, const std::string& path);

} // namespace kaneq
