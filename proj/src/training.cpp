#include "kaneq/training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "kaneq/channel.hpp"
#include "kaneq/common.hpp"

namespace kaneq {

void TrainConfig::validate() const {
    if (block_symbols < 1 || iterations < 1 || test_blocks < 0 || ber_avg_window < 1 ||
        plateau_patience < 1 || loss_smooth_window < 1 || test_eval_stride < 1)
        throw std::invalid_argument("train config: counts must be positive");
    if (lr <= 0.0 || min_lr <= 0.0) throw std::invalid_argument("train config: lr must be positive");
    if (lr_factor <= 0.0 || lr_factor >= 1.0)
        throw std::invalid_argument("train config: lr_factor must lie in (0, 1)");
    if (l1_weight < 0.0) throw std::invalid_argument("train config: l1_weight must be >= 0");
}

std::pair<double, std::vector<double>> mse_loss(std::span<const double> estimates,
                                                std::span<const double> targets) {
    if (estimates.size() != targets.size())
        throw std::invalid_argument("mse_loss: length mismatch");
    const size_t n = estimates.size();
    std::vector<double> grads(n);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double e = estimates[i] - targets[i];
        acc += e * e;
        grads[i] = 2.0 * e / static_cast<double>(n);
    }
    return {acc / static_cast<double>(n), std::move(grads)};
}

double l1_penalty(const EqualizerModel& model, double l1_weight, ModelGrads* grads) {
    double acc = 0.0;
    for (size_t l = 0; l < model.specs.size(); ++l) {
        const auto& sp = model.specs[l];
        const auto& lp = model.layers[l];
        const int per_conn = sp.kind == LayerKind::Kan ? sp.g : 1;
        for (long c = 0; c < sp.n_connections(); ++c) {
            if (!lp.mask[static_cast<size_t>(c)]) continue;
            for (int kk = 0; kk < per_conn; ++kk) {
                const size_t idx = static_cast<size_t>(c) * per_conn + kk;
                const double w = lp.w[idx];
                acc += std::abs(w);
                if (grads && w != 0.0)
                    grads->w[l][idx] += l1_weight * (w > 0.0 ? 1.0 : -1.0);
            }
        }
    }
    return l1_weight * acc;
}

namespace {

struct AdamState {
    std::vector<std::vector<double>> m_w, v_w, m_b, v_b;
    long step = 0;

    explicit AdamState(const EqualizerModel& model) {
        m_w.resize(model.layers.size());
        v_w.resize(model.layers.size());
        m_b.resize(model.layers.size());
        v_b.resize(model.layers.size());
        for (size_t l = 0; l < model.layers.size(); ++l) {
            m_w[l].assign(model.layers[l].w.size(), 0.0);
            v_w[l].assign(model.layers[l].w.size(), 0.0);
            m_b[l].assign(model.layers[l].bias.size(), 0.0);
            v_b[l].assign(model.layers[l].bias.size(), 0.0);
        }
    }

    void update(EqualizerModel& model, const ModelGrads& grads, double lr) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (size_t l = 0; l < model.layers.size(); ++l) {
            const auto& sp = model.specs[l];
            auto& lp = model.layers[l];
            const int per_conn = sp.kind == LayerKind::Kan ? sp.g : 1;
            const long nw = static_cast<long>(lp.w.size());
            for (long i = 0; i < nw; ++i) {
                if (!lp.mask[static_cast<size_t>(i / per_conn)]) continue;
                const double g = grads.w[l][static_cast<size_t>(i)];
                double& m = m_w[l][static_cast<size_t>(i)];
                double& v = v_w[l][static_cast<size_t>(i)];
                m = beta1 * m + (1.0 - beta1) * g;
                v = beta2 * v + (1.0 - beta2) * g * g;
                lp.w[static_cast<size_t>(i)] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            }
            for (size_t i = 0; i < lp.bias.size(); ++i) {
                const double g = grads.bias[l][i];
                double& m = m_b[l][i];
                double& v = v_b[l][i];
                m = beta1 * m + (1.0 - beta1) * g;
                v = beta2 * v + (1.0 - beta2) * g * g;
                lp.bias[i] -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
            }
        }
    }
};

} // namespace

double evaluate_ber(const EqualizerModel& model, const WaveformFrame& frame, long sym_begin,
                    long sym_end) {
    auto fw = forward_range(model, frame.samples.data(), static_cast<long>(frame.samples.size()),
                            frame.n_symbols(), sym_begin, sym_end);
    if (fw.sym_end <= fw.sym_begin) return 0.0;
    long errs = 0;
    for (long s = fw.sym_begin; s < fw.sym_end; ++s) {
        const double est = fw.est[static_cast<size_t>(fw.est_begin + (s - fw.sym_begin))];
        errs += bit_errors_between(slice_pam4(est), frame.symbols[static_cast<size_t>(s)]);
    }
    return static_cast<double>(errs) / static_cast<double>(2 * (fw.sym_end - fw.sym_begin));
}

double max_mean_ber(const std::vector<double>& per_frame_mean_ber) {
    if (per_frame_mean_ber.empty())
        throw std::invalid_argument("max_mean_ber: need at least one frame");
    double worst = per_frame_mean_ber[0];
    for (double b : per_frame_mean_ber)
        if (b > worst) worst = b;
    return worst;
}

TrainRecord train(EqualizerModel& model, const WaveformFrame& frame, const TrainConfig& cfg) {
    cfg.validate();
    const long n_sym = frame.n_symbols();
    const long b = cfg.block_symbols;
    const long test_begin = n_sym - cfg.test_blocks * b;
    if (test_begin < b)
        throw std::invalid_argument("train: frame too short for one training block plus the test region");
    const long n_train_blocks = test_begin / b;

    TrainRecord rec;
    rec.loss.reserve(static_cast<size_t>(cfg.iterations));
    rec.lr.reserve(static_cast<size_t>(cfg.iterations));
    rec.test_ber.assign(static_cast<size_t>(cfg.iterations),
                        std::numeric_limits<double>::quiet_NaN());

    AdamState adam(model);
    double lr = cfg.lr;
    double best_smoothed = std::numeric_limits<double>::infinity();
    long plateau_counter = 0;

    ForwardCache cache;
    std::vector<double> targets;
    std::vector<double> upstream;

    for (long it = 0; it < cfg.iterations; ++it) {
        const long blk = it % n_train_blocks;
        const long s0 = blk * b;
        const long s1 = std::min(s0 + b, test_begin);
        auto fw = forward_range(model, frame.samples.data(),
                                static_cast<long>(frame.samples.size()), n_sym, s0, s1, &cache);
        const long n_est = fw.sym_end - fw.sym_begin;
        if (n_est <= 0) throw std::invalid_argument("train: block produced no estimates");

        targets.resize(static_cast<size_t>(n_est));
        for (long s = fw.sym_begin; s < fw.sym_end; ++s)
            targets[static_cast<size_t>(s - fw.sym_begin)] =
                kTargetLevels[frame.symbols[static_cast<size_t>(s)]];

        auto [mse, mse_grads] =
            mse_loss(std::span<const double>(fw.est.data() + fw.est_begin,
                                             static_cast<size_t>(n_est)),
                     targets);

        upstream.assign(fw.est.size(), 0.0);
        for (long i = 0; i < n_est; ++i)
            upstream[static_cast<size_t>(fw.est_begin + i)] = mse_grads[static_cast<size_t>(i)];

        auto grads = model_backward(model, cache, upstream);
        const double penalty = l1_penalty(model, cfg.l1_weight, &grads);
        const double loss = mse + penalty;

        if (!std::isfinite(loss)) {
            rec.diverged = true;
            rec.loss.push_back(loss);
            rec.lr.push_back(lr);
            break;
        }

        adam.update(model, grads, lr);
        rec.loss.push_back(loss);
        rec.lr.push_back(lr);

        // Plateau schedule on the smoothed training loss.
        const long w = std::min<long>(cfg.loss_smooth_window, static_cast<long>(rec.loss.size()));
        double smoothed = 0.0;
        for (long i = static_cast<long>(rec.loss.size()) - w; i < static_cast<long>(rec.loss.size()); ++i)
            smoothed += rec.loss[static_cast<size_t>(i)];
        smoothed /= static_cast<double>(w);
        if (smoothed < best_smoothed * (1.0 - cfg.plateau_rel_improve)) {
            best_smoothed = smoothed;
            plateau_counter = 0;
        } else if (++plateau_counter >= cfg.plateau_patience) {
            lr = std::max(cfg.min_lr, lr * cfg.lr_factor);
            plateau_counter = 0;
        }

        const bool in_final_window = it >= cfg.iterations - cfg.ber_avg_window;
        if (in_final_window || it % cfg.test_eval_stride == 0)
            rec.test_ber[static_cast<size_t>(it)] = evaluate_ber(model, frame, test_begin, n_sym);
    }

    if (rec.diverged) {
        rec.final_mean_ber = 0.5;
        return rec;
    }
    double acc = 0.0;
    long cnt = 0;
    for (long it = cfg.iterations - cfg.ber_avg_window; it < cfg.iterations; ++it) {
        if (it < 0) continue;
        const double v = rec.test_ber[static_cast<size_t>(it)];
        if (!std::isnan(v)) {
            acc += v;
            ++cnt;
        }
    }
    rec.final_mean_ber = cnt ? acc / static_cast<double>(cnt) : 0.5;
    return rec;
}

void save_train_record_csv(const TrainRecord& rec, const std::string& path) {
    FILE* f = fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("train record: cannot open " + path + " for writing");
    fprintf(f, "iteration,loss,test_ber,lr\n");
    for (size_t i = 0; i < rec.loss.size(); ++i) {
        fprintf(f, "%zu,%.10g,", i, rec.loss[i]);
        if (i < rec.test_ber.size() && !std::isnan(rec.test_ber[i]))
            fprintf(f, "%.10g", rec.test_ber[i]);
        fprintf(f, ",%.10g\n", rec.lr[i]);
    }
    if (fclose(f) != 0) throw std::runtime_error("train record: close failed for " + path);
}

} // namespace kaneq
