#include "kaneq/pruning.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "kaneq/channel.hpp"
#include "kaneq/common.hpp"

namespace kaneq {

std::vector<double> PruneConfig::default_thresholds() {
    std::vector<double> th = {0.0, 1.25, 2.5, 5.0};
    for (double v = 10.0; v <= 95.0; v += 5.0) th.push_back(v);
    return th;
}

void PruneConfig::validate() const {
    if (thresholds_pct.empty()) throw std::invalid_argument("prune config: empty threshold list");
    double prev = -1.0;
    for (double t : thresholds_pct) {
        if (t < 0.0 || t >= 100.0)
            throw std::invalid_argument("prune config: thresholds must lie in [0, 100)");
        if (t <= prev) throw std::invalid_argument("prune config: thresholds must be ascending");
        prev = t;
    }
    retrain.validate();
}

std::vector<std::vector<double>> connection_magnitudes(const EqualizerModel& model) {
    std::vector<std::vector<double>> mags(model.specs.size());
    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        const auto& lp = model.layers[l];
        mags[l].assign(static_cast<size_t>(sp.n_connections()), 0.0);
        const int per_conn = sp.kind == LayerKind::Kan ? sp.g : 1;
        for (long c = 0; c < sp.n_connections(); ++c) {
            if (!lp.mask[static_cast<size_t>(c)]) continue;
            double acc = 0.0;
            for (int kk = 0; kk < per_conn; ++kk)
                acc += std::abs(lp.w[static_cast<size_t>(c) * per_conn + kk]);
            mags[l][static_cast<size_t>(c)] = acc;
        }
    }
    return mags;
}

PruneInfo prune(EqualizerModel& model, double threshold_pct) {
    if (threshold_pct < 0.0 || threshold_pct >= 100.0)
        throw std::invalid_argument("prune: threshold must lie in [0, 100)");
    const auto mags = connection_magnitudes(model);
    PruneInfo info;
    info.masked_per_layer.assign(model.specs.size(), 0);
    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        auto& lp = model.layers[l];
        double max_mag = 0.0;
        for (long c = 0; c < sp.n_connections(); ++c)
            if (lp.mask[static_cast<size_t>(c)] && mags[l][static_cast<size_t>(c)] > max_mag)
                max_mag = mags[l][static_cast<size_t>(c)];
        const double cutoff = threshold_pct / 100.0 * max_mag;
        const int per_conn = sp.kind == LayerKind::Kan ? sp.g : 1;
        long active = 0;
        for (long c = 0; c < sp.n_connections(); ++c) {
            if (!lp.mask[static_cast<size_t>(c)]) {
                ++info.masked_per_layer[l];
                continue;
            }
            // Strict inequality: magnitudes equal to the cutoff survive.
            if (mags[l][static_cast<size_t>(c)] < cutoff) {
                lp.mask[static_cast<size_t>(c)] = 0;
                for (int kk = 0; kk < per_conn; ++kk)
                    lp.w[static_cast<size_t>(c) * per_conn + kk] = 0.0;
                ++info.masked_per_layer[l];
            } else {
                ++active;
            }
        }
        if (active == 0) info.dead_layer = true;
    }
    return info;
}

std::vector<PruneSweepEntry> prune_and_retrain(const std::vector<EqualizerModel>& models,
                                               const std::vector<WaveformFrame>& frames,
                                               const PruneConfig& cfg) {
    cfg.validate();
    if (models.empty() || models.size() != frames.size())
        throw std::invalid_argument("prune_and_retrain: need one trained model per frame");

    std::vector<PruneSweepEntry> sweep;
    sweep.reserve(cfg.thresholds_pct.size());
    for (double th : cfg.thresholds_pct) {
        PruneSweepEntry entry;
        entry.threshold_pct = th;
        std::vector<double> frame_bers;
        bool dead = false;
        for (size_t i = 0; i < models.size(); ++i) {
            EqualizerModel m = models[i];
            PruneInfo info = prune(m, th);
            if (info.dead_layer) {
                dead = true;
                entry.models.push_back(std::move(m));
                continue;
            }
            TrainConfig rcfg = cfg.retrain;
            rcfg.seed = derive_seed(cfg.retrain.seed, "retrain", i);
            TrainRecord rec = train(m, frames[i], rcfg);
            if (rec.diverged) dead = true;
            frame_bers.push_back(rec.final_mean_ber);
            entry.models.push_back(std::move(m));
        }
        if (dead || frame_bers.size() != models.size()) {
            entry.failed = true;
            entry.metric = std::nan("");
        } else {
            entry.metric = max_mean_ber(frame_bers);
            for (size_t i = 0; i < frame_bers.size(); ++i)
                if (frame_bers[i] == entry.metric) {
                    entry.witness_frame = static_cast<int>(i);
                    break;
                }
        }
        double worst_rvms = 0.0;
        for (const auto& m : entry.models) {
            const double r = count_rvms(m).total;
            if (r > worst_rvms) worst_rvms = r;
        }
        entry.rvms = worst_rvms;
        sweep.push_back(std::move(entry));
    }
    return sweep;
}

void save_prune_sweep_csv(const std::vector<PruneSweepEntry>& sweep,
                          const std::vector<std::string>& checkpoint_paths,
                          const std::string& path) {
    FILE* f = fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("prune sweep: cannot open " + path + " for writing");
    fprintf(f, "threshold_pct,rvms,metric,status,checkpoint\n");
    for (size_t i = 0; i < sweep.size(); ++i) {
        const auto& e = sweep[i];
        fprintf(f, "%.10g,%.10g,", e.threshold_pct, e.rvms);
        if (std::isnan(e.metric))
            fprintf(f, ",failed,");
        else
            fprintf(f, "%.10g,ok,", e.metric);
        if (i < checkpoint_paths.size()) fprintf(f, "%s", checkpoint_paths[i].c_str());
        fprintf(f, "\n");
    }
    if (fclose(f) != 0) throw std::runtime_error("prune sweep: close failed for " + path);
}

} // namespace kaneq
