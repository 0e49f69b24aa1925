#include "kaneq/search.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "kaneq/common.hpp"

namespace fs = std::filesystem;

namespace kaneq {

EqualizerModel Candidate::build() const {
    if (family == "fir") return make_fir(taps);
    if (family == "kan1") return make_kan1(taps, g);
    if (family == "cnn2") return make_cnn2(c1, k1, s1, k2, s2);
    if (family == "kan2") return make_kan2(c1, k1, s1, g1, k2, s2, g2);
    throw std::invalid_argument("candidate: unknown family " + family);
}

std::string Candidate::descriptor() const {
    char buf[160];
    if (family == "fir")
        snprintf(buf, sizeof(buf), "family=fir taps=%d", taps);
    else if (family == "kan1")
        snprintf(buf, sizeof(buf), "family=kan1 taps=%d g=%d", taps, g);
    else if (family == "cnn2")
        snprintf(buf, sizeof(buf), "family=cnn2 c1=%d k1=%d s1=%d k2=%d s2=%d", c1, k1, s1, k2, s2);
    else
        snprintf(buf, sizeof(buf), "family=kan2 c1=%d k1=%d s1=%d g1=%d k2=%d s2=%d g2=%d", c1, k1,
                 s1, g1, k2, s2, g2);
    return buf;
}

std::vector<Candidate> enumerate_search_space(const SearchSpace& space) {
    std::vector<Candidate> out;
    const int taps_grid[] = {21, 51, 121, 321};
    const int c_grid[] = {2, 4, 8};
    const int k_grid[] = {8, 32, 64};
    const int s1_grid[] = {1, 2, 4};
    const int s2_grid[] = {2, 4, 8};
    const int g_grid[] = {5, 9};
    char buf[96];

    auto push_lrs = [&](Candidate cand) {
        for (double lr : space.lr_grid) {
            cand.lr = lr;
            out.push_back(cand);
        }
    };

    if (space.kan2) {
        for (int c1 : c_grid)
            for (int k1 : k_grid)
                for (int s1 : s1_grid)
                    for (int g1 : g_grid)
                        for (int k2 : k_grid)
                            for (int s2 : s2_grid)
                                for (int g2 : g_grid) {
                                    if ((s1 * s2) % 2 != 0) continue; // non-integer c_out
                                    Candidate c;
                                    c.family = "kan2";
                                    c.c1 = c1;
                                    c.k1 = k1;
                                    c.s1 = s1;
                                    c.g1 = g1;
                                    c.k2 = k2;
                                    c.s2 = s2;
                                    c.g2 = g2;
                                    snprintf(buf, sizeof(buf), "kan2-c%d-k%ds%dg%d-k%ds%dg%d", c1,
                                             k1, s1, g1, k2, s2, g2);
                                    c.arch_id = buf;
                                    push_lrs(c);
                                }
    }
    if (space.cnn2) {
        for (int c1 : c_grid)
            for (int k1 : k_grid)
                for (int s1 : s1_grid)
                    for (int k2 : k_grid)
                        for (int s2 : s2_grid) {
                            if ((s1 * s2) % 2 != 0) continue;
                            Candidate c;
                            c.family = "cnn2";
                            c.c1 = c1;
                            c.k1 = k1;
                            c.s1 = s1;
                            c.k2 = k2;
                            c.s2 = s2;
                            snprintf(buf, sizeof(buf), "cnn2-c%d-k%ds%d-k%ds%d", c1, k1, s1, k2, s2);
                            c.arch_id = buf;
                            push_lrs(c);
                        }
    }
    if (space.kan1) {
        for (int taps : taps_grid) {
            Candidate c;
            c.family = "kan1";
            c.taps = taps;
            c.g = 17;
            snprintf(buf, sizeof(buf), "kan1-%d", taps);
            c.arch_id = buf;
            push_lrs(c);
        }
    }
    if (space.fir) {
        for (int taps : taps_grid) {
            Candidate c;
            c.family = "fir";
            c.taps = taps;
            snprintf(buf, sizeof(buf), "fir-%d", taps);
            c.arch_id = buf;
            push_lrs(c);
        }
    }
    return out;
}

std::vector<Candidate> select_campaign_subset(const std::vector<Candidate>& candidates,
                                              long max_archs) {
    // Group by architecture, preserving enumeration order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<Candidate>> groups;
    for (const auto& c : candidates) {
        if (!groups.count(c.arch_id)) order.push_back(c.arch_id);
        groups[c.arch_id].push_back(c);
    }
    if (max_archs <= 0 || static_cast<long>(order.size()) <= max_archs) return candidates;

    std::vector<std::string> small, big;
    for (const auto& id : order) {
        const std::string& fam = groups[id].front().family;
        (fam == "fir" || fam == "kan1" ? small : big).push_back(id);
    }
    std::vector<std::string> keep = small;
    if (static_cast<long>(keep.size()) > max_archs) keep.resize(static_cast<size_t>(max_archs));
    const long slots = max_archs - static_cast<long>(keep.size());
    if (slots > 0 && !big.empty()) {
        // Evenly strided per 2-layer family so both stay represented.
        std::vector<std::string> kan2_ids, cnn2_ids;
        for (const auto& id : big)
            (groups[id].front().family == "kan2" ? kan2_ids : cnn2_ids).push_back(id);
        const long q_kan2 = std::min<long>(slots / 2 + slots % 2, static_cast<long>(kan2_ids.size()));
        const long q_cnn2 = std::min<long>(slots - q_kan2, static_cast<long>(cnn2_ids.size()));
        for (long j = 0; j < q_kan2; ++j)
            keep.push_back(kan2_ids[static_cast<size_t>(j * static_cast<long>(kan2_ids.size()) / q_kan2)]);
        for (long j = 0; j < q_cnn2; ++j)
            keep.push_back(cnn2_ids[static_cast<size_t>(j * static_cast<long>(cnn2_ids.size()) / q_cnn2)]);
    }
    std::vector<Candidate> out;
    for (const auto& id : order) {
        if (std::find(keep.begin(), keep.end(), id) == keep.end()) continue;
        for (const auto& c : groups[id]) out.push_back(c);
    }
    return out;
}

namespace {

std::string row_to_csv(const CampaignResultRow& r) {
    char buf[512];
    std::string metric_str;
    if (!std::isnan(r.metric)) {
        char mb[48];
        snprintf(mb, sizeof(mb), "%.10g", r.metric);
        metric_str = mb;
    }
    snprintf(buf, sizeof(buf), "%s,%s,%s,%.10g,%s,%.10g,%.10g,%s,%s,%s", r.arch_id.c_str(),
             r.family.c_str(), r.descriptor.c_str(), r.lr, r.stage.c_str(), r.threshold_pct,
             r.rvms, metric_str.c_str(), r.status.c_str(), r.checkpoint.c_str());
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

CampaignResultRow row_from_csv(const std::string& line) {
    auto f = split_csv_line(line);
    if (f.size() != 10) throw std::runtime_error("campaign csv: malformed row: " + line);
    CampaignResultRow r;
    r.arch_id = f[0];
    r.family = f[1];
    r.descriptor = f[2];
    r.lr = std::stod(f[3]);
    r.stage = f[4];
    r.threshold_pct = std::stod(f[5]);
    r.rvms = std::stod(f[6]);
    r.metric = f[7].empty() ? std::nan("") : std::stod(f[7]);
    r.status = f[8];
    r.checkpoint = f[9];
    return r;
}

const char* kCampaignHeader = "arch_id,family,descriptor,lr,stage,threshold_pct,rvms,metric,status,checkpoint";

void write_rows(const std::vector<CampaignResultRow>& rows, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("campaign: cannot write " + tmp);
        out << kCampaignHeader << "\n";
        for (const auto& r : rows) out << row_to_csv(r) << "\n";
    }
    fs::rename(tmp, path);
}

std::vector<CampaignResultRow> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("campaign: cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCampaignHeader)
        throw std::runtime_error("campaign: unexpected header in " + path);
    std::vector<CampaignResultRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(row_from_csv(line));
    }
    return rows;
}

} // namespace

void save_campaign_csv(const std::vector<CampaignResultRow>& rows, const std::string& path) {
    write_rows(rows, path);
}

std::vector<CampaignResultRow> load_campaign_csv(const std::string& path) {
    return read_rows(path);
}

CampaignResult run_campaign(const std::vector<Candidate>& candidates,
                            const std::vector<WaveformFrame>& frames,
                            const CampaignConfig& cfg) {
    if (frames.empty()) throw std::invalid_argument("campaign: need at least one frame");
    if (candidates.empty()) return {};

    // Group LR variants under their architecture, enumeration order kept.
    std::vector<std::string> order;
    std::map<std::string, std::vector<Candidate>> groups;
    for (const auto& c : candidates) {
        if (!groups.count(c.arch_id)) order.push_back(c.arch_id);
        groups[c.arch_id].push_back(c);
    }

    fs::create_directories(fs::path(cfg.out_dir) / "runs");

    std::vector<std::vector<CampaignResultRow>> arch_rows(order.size());
    long executed = 0;

#pragma omp parallel for schedule(dynamic) reduction(+ : executed)
    for (long a = 0; a < static_cast<long>(order.size()); ++a) {
        const std::string& id = order[static_cast<size_t>(a)];
        const auto& variants = groups[id];
        const fs::path dir = fs::path(cfg.out_dir) / "runs" / id;
        const fs::path result_path = dir / "result.csv";

        if (fs::exists(result_path)) {
            arch_rows[static_cast<size_t>(a)] = read_rows(result_path.string());
            continue;
        }
        fs::create_directories(dir);

        const size_t n_frames = frames.size();
        std::vector<std::vector<EqualizerModel>> models(variants.size());
        std::vector<double> lr_metric(variants.size(), std::nan(""));
        std::vector<int> lr_witness(variants.size(), 0);

        for (size_t v = 0; v < variants.size(); ++v) {
            const Candidate& cand = variants[v];
            std::vector<double> bers;
            bool failed = false;
            for (size_t i = 0; i < n_frames; ++i) {
                EqualizerModel model = cand.build();
                init_params(model, derive_seed(cfg.root_seed, id + "/init", v * 1000 + i));
                TrainConfig tc = cfg.train_cfg;
                tc.lr = cand.lr;
                tc.seed = derive_seed(cfg.root_seed, id + "/train", v * 1000 + i);
                TrainRecord rec = train(model, frames[i], tc);
                ++executed;
                char name[64];
                snprintf(name, sizeof(name), "lr%zu_f%zu.ckpt", v, i);
                save_checkpoint(model, (dir / name).string());
                if (rec.diverged) failed = true;
                bers.push_back(rec.final_mean_ber);
                models[v].push_back(std::move(model));
            }
            if (!failed) {
                lr_metric[v] = max_mean_ber(bers);
                for (size_t i = 0; i < bers.size(); ++i)
                    if (bers[i] == lr_metric[v]) {
                        lr_witness[v] = static_cast<int>(i);
                        break;
                    }
            }
        }

        long best = -1;
        for (size_t v = 0; v < variants.size(); ++v)
            if (!std::isnan(lr_metric[v]) &&
                (best < 0 || lr_metric[v] < lr_metric[static_cast<size_t>(best)]))
                best = static_cast<long>(v);

        std::vector<CampaignResultRow> rows;
        CampaignResultRow base;
        base.arch_id = id;
        base.family = variants.front().family;
        base.descriptor = variants.front().descriptor();
        base.stage = "trained";
        base.threshold_pct = -1.0;
        if (best < 0) {
            base.lr = variants.front().lr;
            base.rvms = count_rvms(variants.front().build()).total;
            base.metric = std::nan("");
            base.status = "failed";
            rows.push_back(base);
            arch_rows[static_cast<size_t>(a)] = rows;
            write_rows(rows, result_path.string());
            continue;
        }
        const Candidate& winner = variants[static_cast<size_t>(best)];
        base.lr = winner.lr;
        base.rvms = count_rvms(models[static_cast<size_t>(best)][0]).total;
        base.metric = lr_metric[static_cast<size_t>(best)];
        base.status = "ok";
        {
            char name[64];
            snprintf(name, sizeof(name), "lr%ld_f%d.ckpt", best, lr_witness[static_cast<size_t>(best)]);
            base.checkpoint = (fs::path("runs") / id / name).string();
        }
        rows.push_back(base);

        PruneConfig pc;
        pc.thresholds_pct = cfg.thresholds;
        pc.retrain = cfg.train_cfg;
        pc.retrain.lr = winner.lr;
        pc.retrain.seed = derive_seed(cfg.root_seed, id + "/retrain");
        auto sweep = prune_and_retrain(models[static_cast<size_t>(best)], frames, pc);
        executed += static_cast<long>(sweep.size() * n_frames);
        for (size_t tix = 0; tix < sweep.size(); ++tix) {
            const auto& entry = sweep[tix];
            CampaignResultRow r = base;
            r.stage = "pruned";
            r.threshold_pct = entry.threshold_pct;
            r.rvms = entry.rvms;
            r.metric = entry.metric;
            r.status = entry.failed ? "failed" : "ok";
            r.checkpoint.clear();
            if (!entry.failed) {
                char name[64];
                snprintf(name, sizeof(name), "thr%02zu_f%d.ckpt", tix, entry.witness_frame);
                save_checkpoint(entry.models[static_cast<size_t>(entry.witness_frame)],
                                (dir / name).string());
                r.checkpoint = (fs::path("runs") / id / name).string();
            }
            rows.push_back(r);
        }
        arch_rows[static_cast<size_t>(a)] = rows;
        write_rows(rows, result_path.string());
    }

    CampaignResult result;
    result.runs_executed = executed;
    for (const auto& rows : arch_rows)
        result.rows.insert(result.rows.end(), rows.begin(), rows.end());
    save_campaign_csv(result.rows, (fs::path(cfg.out_dir) / "results.csv").string());
    return result;
}

std::vector<ParetoPoint> pareto_front(std::vector<ParetoPoint> points) {
    std::erase_if(points, [](const ParetoPoint& p) { return std::isnan(p.metric); });
    std::sort(points.begin(), points.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
        if (a.rvms != b.rvms) return a.rvms < b.rvms;
        return a.metric < b.metric;
    });
    std::vector<ParetoPoint> front;
    double best = std::numeric_limits<double>::infinity();
    for (auto& p : points) {
        if (p.metric < best) {
            best = p.metric;
            front.push_back(std::move(p));
        }
    }
    return front;
}

void save_pareto_csv(const std::vector<ParetoPoint>& front, const std::string& path) {
    FILE* f = fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("pareto: cannot open " + path + " for writing");
    fprintf(f, "rvms,metric,descriptor,checkpoint\n");
    for (const auto& p : front)
        fprintf(f, "%.10g,%.10g,%s,%s\n", p.rvms, p.metric, p.descriptor.c_str(),
                p.checkpoint.c_str());
    if (fclose(f) != 0) throw std::runtime_error("pareto: close failed for " + path);
}

SweepOutcome deployment_sweep(const std::vector<CampaignResultRow>& rows, const SweepConfig& cfg) {
    SweepOutcome outcome;
    struct Pick {
        double budget;
        const CampaignResultRow* row;
        EqualizerModel model;
    };
    std::vector<Pick> picks;
    for (double budget : cfg.budgets) {
        const CampaignResultRow* chosen = nullptr;
        for (const auto& r : rows) {
            if (r.stage != "pruned" || r.status != "ok" || r.checkpoint.empty()) continue;
            if (std::abs(r.rvms - budget) > cfg.budget_tolerance * budget) continue;
            if (!chosen || r.metric < chosen->metric ||
                (r.metric == chosen->metric && r.rvms < chosen->rvms))
                chosen = &r;
        }
        if (!chosen) {
            outcome.missing_budgets.push_back(budget);
            continue;
        }
        picks.push_back({budget, chosen, load_checkpoint(chosen->checkpoint)});
    }

    if (!picks.empty()) {
        for (double rop = cfg.rop_min; rop <= cfg.rop_max + 1e-9; rop += cfg.rop_step) {
            LinkConfig link = cfg.link;
            link.rop_dbm = rop;
            std::vector<WaveformFrame> frames;
            for (int i = 0; i < cfg.n_frames; ++i)
                frames.push_back(build_frame(link, cfg.frame_symbols,
                                             derive_seed(cfg.seed, "sweep-frame",
                                                         static_cast<uint64_t>((rop - cfg.rop_min) / cfg.rop_step) * 1000 + i)));
            for (auto& pick : picks) {
                double acc = 0.0;
                for (const auto& fr : frames) acc += evaluate_ber(pick.model, fr, 0, fr.n_symbols());
                SweepRow row;
                row.budget = pick.budget;
                row.actual_rvms = pick.row->rvms;
                row.rop_dbm = rop;
                row.mean_ber = acc / static_cast<double>(frames.size());
                row.descriptor = pick.row->descriptor;
                outcome.rows.push_back(row);
            }
        }
    }

    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        for (const auto& pick : picks) {
            char name[64];
            snprintf(name, sizeof(name), "sweep_rvms%g.csv", pick.budget);
            FILE* f = fopen((fs::path(cfg.out_dir) / name).string().c_str(), "w");
            if (!f) throw std::runtime_error("sweep: cannot write output CSV");
            fprintf(f, "rop_dbm,mean_ber,budget_rvms,actual_rvms,descriptor\n");
            for (const auto& row : outcome.rows)
                if (row.budget == pick.budget)
                    fprintf(f, "%.10g,%.10g,%.10g,%.10g,%s\n", row.rop_dbm, row.mean_ber,
                            row.budget, row.actual_rvms, row.descriptor.c_str());
            if (fclose(f) != 0) throw std::runtime_error("sweep: close failed");
        }
    }
    return outcome;
}

} // namespace kaneq
