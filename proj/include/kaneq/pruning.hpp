#pragma once

#include <string>
#include <vector>

#include "kaneq/equalizer.hpp"
#include "kaneq/training.hpp"

namespace kaneq {

struct WaveformFrame;

struct PruneConfig {
    // {0, 1.25, 2.5, 5, 10, 15, 20, ..., 95} percent.
    std::vector<double> thresholds_pct;
    TrainConfig retrain;

    static std::vector<double> default_thresholds();
    void validate() const;
};

// Per-layer, per-connection magnitudes: |w| for linear weights, sum_k |a_k|
// for spline functions. Masked connections report 0.
std::vector<std::vector<double>> connection_magnitudes(const EqualizerModel& model);

struct PruneInfo {
    std::vector<long> masked_per_layer;
    bool dead_layer = false; // some layer lost all of its connections
};

// Masks connections whose magnitude falls strictly below
// threshold_pct/100 * (max magnitude of their layer); masked weights are
// zeroed.
PruneInfo prune(EqualizerModel& model, double threshold_pct);

struct PruneSweepEntry {
    double threshold_pct = 0.0;
    double rvms = 0.0;   // worst (max) over the retrained per-frame models
    double metric = 0.0; // max over frames of mean test BER
    bool failed = false;
    std::vector<EqualizerModel> models; // one per frame
    int witness_frame = 0;              // frame attaining the metric
};

// For each threshold: clone the trained per-frame models, prune, retrain on
// the same frames with the same schedule restarted, and record rvms plus
// max{mean BER}. models[i] must have been trained on frames[i].
std::vector<PruneSweepEntry> prune_and_retrain(const std::vector<EqualizerModel>& models,
                                               const std::vector<WaveformFrame>& frames,
                                               const PruneConfig& cfg);

void save_prune_sweep_csv(const std::vector<PruneSweepEntry>& sweep,
                          const std::vector<std::string>& checkpoint_paths,
                          const std::string& path);

} // namespace kaneq
