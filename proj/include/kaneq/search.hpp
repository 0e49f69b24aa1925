#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kaneq/channel.hpp"
#include "kaneq/equalizer.hpp"
#include "kaneq/pruning.hpp"
#include "kaneq/training.hpp"

namespace kaneq {

// One fully specified architecture + learning rate drawn from the search
// grid.
struct Candidate {
    std::string arch_id;
    std::string family;
    int taps = 0, g = 0;                                 // fir / kan1
    int c1 = 0, k1 = 0, s1 = 0, g1 = 0, k2 = 0, s2 = 0, g2 = 0; // 2-layer nets
    double lr = 0.0;

    EqualizerModel build() const;
    std::string descriptor() const;
};

struct SearchSpace {
    bool fir = true;
    bool kan1 = true;
    bool cnn2 = true;
    bool kan2 = true;
    std::vector<double> lr_grid = {1e-3, 1.77e-3, 3.16e-3, 5.62e-3};
};

// Deterministic cross-product enumeration; combinations whose last-layer
// c_out would not be an integer are excluded.
std::vector<Candidate> enumerate_search_space(const SearchSpace& space);

// Keeps every fir/kan1 architecture and an evenly strided sample of the
// 2-layer families so that at most max_archs distinct architectures remain
// (LR variants follow their architecture). max_archs <= 0 keeps everything.
std::vector<Candidate> select_campaign_subset(const std::vector<Candidate>& candidates,
                                              long max_archs);

struct CampaignConfig {
    std::string out_dir;
    uint64_t root_seed = 7;
    TrainConfig train_cfg;
    std::vector<double> thresholds = PruneConfig::default_thresholds();
};

struct CampaignResultRow {
    std::string arch_id;
    std::string family;
    std::string descriptor;
    double lr = 0.0;
    std::string stage;  // "trained" or "pruned"
    double threshold_pct = -1.0; // -1 for the trained stage
    double rvms = 0.0;
    double metric = 0.0; // max over frames of mean test BER; NaN when failed
    std::string status;  // "ok" or "failed"
    std::string checkpoint;
};

struct CampaignResult {
    std::vector<CampaignResultRow> rows;
    long runs_executed = 0; // trainings actually performed (0 on full resume)
};

// Trains every candidate on every frame (best LR per architecture), runs the
// pruning sweep on the winners and records every (rvms, metric) point.
// Per-architecture results persist under out_dir/runs/<arch_id>/ and are
// reused on re-runs, so a completed campaign resumes with zero new training.
CampaignResult run_campaign(const std::vector<Candidate>& candidates,
                            const std::vector<WaveformFrame>& frames,
                            const CampaignConfig& cfg);

void save_campaign_csv(const std::vector<CampaignResultRow>& rows, const std::string& path);
std::vector<CampaignResultRow> load_campaign_csv(const std::string& path);

struct ParetoPoint {
    double rvms = 0.0;
    double metric = 0.0;
    std::string descriptor;
    std::string checkpoint;
};

// Points not dominated in (rvms down, metric down); ties on both coordinates
// deduplicated; sorted by rvms.
std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points);

void save_pareto_csv(const std::vector<ParetoPoint>& front, const std::string& path);

struct SweepConfig {
    std::vector<double> budgets = {21, 51, 121, 321};
    double budget_tolerance = 0.10; // accept checkpoints within +-10 % rvms
    double rop_min = -30.0;
    double rop_max = 2.0;
    double rop_step = 2.0; // paper scale: 1
    int n_frames = 2;
    long frame_symbols = 280000;
    LinkConfig link;
    uint64_t seed = 99;
    std::string out_dir;
};

struct SweepRow {
    double budget = 0.0;
    double actual_rvms = 0.0;
    double rop_dbm = 0.0;
    double mean_ber = 0.0;
    std::string descriptor;
};

struct SweepOutcome {
    std::vector<SweepRow> rows;
    std::vector<double> missing_budgets; // no checkpoint within tolerance
};

// Evaluates the pruned-Pareto models closest to each rvms budget over the
// ROP grid on freshly seeded frames. One CSV per budget under out_dir.
SweepOutcome deployment_sweep(const std::vector<CampaignResultRow>& rows,
                              const SweepConfig& cfg);

} // namespace kaneq
