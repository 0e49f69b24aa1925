#include <omp.h>

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kaneq/channel.hpp"
#include "kaneq/common.hpp"
#include "kaneq/config.hpp"
#include "kaneq/equalizer.hpp"
#include "kaneq/pruning.hpp"
#include "kaneq/search.hpp"
#include "kaneq/training.hpp"

namespace fs = std::filesystem;
using namespace kaneq;

namespace {

std::string timestamp() {
    char buf[64];
    std::time_t t = std::time(nullptr);
    std::strftime(buf, sizeof(buf), "%Y-%m-%d %H:%M:%S", std::gmtime(&t));
    return buf;
}

void write_manifest(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(std::stod(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    return out;
}

LinkConfig load_link(const std::string& config_path) {
    return config_path.empty() ? LinkConfig{} : link_config_from_file(config_path);
}

struct TrainFlags {
    long iterations = -1;
    double lr = -1.0;
    double l1 = -1.0;
    long test_blocks = -1;
    long stride = -1;
    uint64_t seed = 1;
    bool paper_scale = false;

    void add_to(CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--iterations", iterations, "Training iterations (desk default 1500)");
        cmd->add_option("--lr", lr, "Initial learning rate (default 1.77e-3)");
        cmd->add_option("--l1", l1, "L1 regularization weight (default 5e-3)");
        cmd->add_option("--test-blocks", test_blocks, "Held-out test blocks (desk default 50)");
        cmd->add_option("--test-stride", stride, "Test BER evaluation stride (desk default 10)");
        if (with_seed) cmd->add_option("--seed", seed, "Run seed");
        cmd->add_flag("--paper-scale", paper_scale,
                      "Use the full-scale procedure (7600 iterations, 200 test blocks, stride 1)");
    }

    TrainConfig build() const {
        TrainConfig cfg;
        if (paper_scale) {
            cfg.iterations = 7600;
            cfg.test_blocks = 200;
            cfg.test_eval_stride = 1;
        }
        if (iterations > 0) cfg.iterations = iterations;
        if (lr > 0) cfg.lr = lr;
        if (l1 >= 0) cfg.l1_weight = l1;
        if (test_blocks >= 0) cfg.test_blocks = test_blocks;
        if (stride > 0) cfg.test_eval_stride = stride;
        cfg.seed = seed;
        return cfg;
    }
};

int cmd_simulate(const std::string& config_path, double rop, long symbols, uint64_t seed,
                 const std::string& out, const std::string& csv, bool paper_scale) {
    LinkConfig link = load_link(config_path);
    if (!std::isnan(rop)) link.rop_dbm = rop;
    if (symbols == 0) {
        std::cerr << "simulate: --symbols must be >= 1\n";
        return 1;
    }
    if (symbols < 0) symbols = paper_scale ? 2800000 : 280000;
    WaveformFrame frame = build_frame(link, symbols, seed);
    save_frame(frame, out);
    if (!csv.empty()) export_frame_csv(frame, csv);
    printf("wrote %s: %ld symbols at %d sps, ROP %.2f dBm, CD %.2f ps/nm, SNR est %.1f dB, slicer BER %.3g\n",
           out.c_str(), frame.n_symbols(), frame.sps_out, frame.rop_dbm, frame.cd_ps_nm,
           estimate_snr_db(frame), slicer_ber(frame));
    return 0;
}

int cmd_train(const std::string& frame_path, const std::string& arch_path,
              const std::string& out_dir, const TrainFlags& flags) {
    WaveformFrame frame = load_frame(frame_path);
    EqualizerModel model = model_from_file(arch_path);
    TrainConfig cfg = flags.build();
    init_params(model, derive_seed(cfg.seed, "init"));
    TrainRecord rec = train(model, frame, cfg);
    fs::create_directories(out_dir);
    save_train_record_csv(rec, (fs::path(out_dir) / "record.csv").string());
    save_checkpoint(model, (fs::path(out_dir) / "model.ckpt").string());
    const RvmsReport rvms = count_rvms(model);
    char num[64];
    std::vector<std::pair<std::string, std::string>> mf;
    mf.emplace_back("command", "train");
    snprintf(num, sizeof(num), "%016llx", static_cast<unsigned long long>(frame.config_hash));
    mf.emplace_back("frame_config_hash", num);
    mf.emplace_back("frame", frame_path);
    mf.emplace_back("arch", arch_path);
    snprintf(num, sizeof(num), "%llu", static_cast<unsigned long long>(cfg.seed));
    mf.emplace_back("seed", num);
    snprintf(num, sizeof(num), "%ld", cfg.iterations);
    mf.emplace_back("iterations", num);
    snprintf(num, sizeof(num), "%.10g", cfg.lr);
    mf.emplace_back("lr", num);
    snprintf(num, sizeof(num), "%.10g", rvms.total);
    mf.emplace_back("rvms", num);
    snprintf(num, sizeof(num), "%.10g", rec.final_mean_ber);
    mf.emplace_back("final_mean_ber", num);
    mf.emplace_back("outputs", "record.csv model.ckpt");
    mf.emplace_back("completed", rec.diverged ? "diverged" : "true");
    mf.emplace_back("timestamp_utc", timestamp());
    write_manifest((fs::path(out_dir) / "manifest.txt").string(), mf);
    printf("trained %s: rvms %.4g, final mean BER %.4g%s\n", model.family.c_str(), rvms.total,
           rec.final_mean_ber, rec.diverged ? " (diverged)" : "");
    return rec.diverged ? 1 : 0;
}

int cmd_prune(const std::string& ckpt_path, const std::vector<std::string>& frame_paths,
              const std::string& out_dir, const std::string& thresholds_str,
              const TrainFlags& flags) {
    if (frame_paths.empty()) {
        std::cerr << "prune: need at least one --frame\n";
        return 1;
    }
    EqualizerModel trained = load_checkpoint(ckpt_path);
    std::vector<WaveformFrame> frames;
    for (const auto& p : frame_paths) frames.push_back(load_frame(p));
    // The same trained model is paired with each frame when only a single
    // checkpoint is supplied.
    std::vector<EqualizerModel> models(frames.size(), trained);

    PruneConfig pc;
    pc.thresholds_pct =
        thresholds_str.empty() ? PruneConfig::default_thresholds() : parse_double_list(thresholds_str);
    pc.retrain = flags.build();
    auto sweep = prune_and_retrain(models, frames, pc);

    fs::create_directories(out_dir);
    std::vector<std::string> ckpts;
    for (size_t i = 0; i < sweep.size(); ++i) {
        char name[64];
        snprintf(name, sizeof(name), "thr%02zu.ckpt", i);
        if (!sweep[i].failed) {
            save_checkpoint(sweep[i].models[static_cast<size_t>(sweep[i].witness_frame)],
                            (fs::path(out_dir) / name).string());
            ckpts.push_back(name);
        } else {
            ckpts.push_back("");
        }
    }
    save_prune_sweep_csv(sweep, ckpts, (fs::path(out_dir) / "prune.csv").string());
    printf("pruned %zu thresholds -> %s/prune.csv\n", sweep.size(), out_dir.c_str());
    return 0;
}

int cmd_campaign(const std::string& config_path, const std::string& out_dir, uint64_t seed,
                 int n_frames, long symbols, long max_candidates, const std::string& families,
                 const std::string& lrs_str, const std::string& thresholds_str,
                 const TrainFlags& flags, bool full_grid, bool paper_scale) {
    LinkConfig link = load_link(config_path);
    link.rop_dbm = -2.0; // search data is collected at -2 dBm
    if (paper_scale) {
        if (n_frames < 0) n_frames = 8;
        if (symbols < 0) symbols = 2800000;
    }
    if (n_frames < 0) n_frames = 2;
    if (symbols < 0) symbols = 280000;

    fs::create_directories(fs::path(out_dir) / "frames");
    std::ofstream log((fs::path(out_dir) / "campaign.log").string(), std::ios::app);
    log << timestamp() << " campaign start seed=" << seed << " frames=" << n_frames
        << " symbols=" << symbols << "\n";

    // Frames round-trip through the on-disk container so resumed and fresh
    // campaigns train on identical (f32-quantized) data.
    std::vector<WaveformFrame> frames;
    for (int i = 0; i < n_frames; ++i) {
        const fs::path p = fs::path(out_dir) / "frames" / ("frame" + std::to_string(i) + ".bin");
        if (!fs::exists(p)) {
            WaveformFrame fr = build_frame(link, symbols, derive_seed(seed, "frame", i));
            save_frame(fr, p.string());
        }
        frames.push_back(load_frame(p.string()));
    }

    SearchSpace space;
    if (!families.empty()) {
        space.fir = families.find("fir") != std::string::npos;
        space.kan1 = families.find("kan1") != std::string::npos;
        space.cnn2 = families.find("cnn2") != std::string::npos;
        space.kan2 = families.find("kan2") != std::string::npos;
    }
    if (!lrs_str.empty()) space.lr_grid = parse_double_list(lrs_str);
    auto candidates = enumerate_search_space(space);
    if (!full_grid) candidates = select_campaign_subset(candidates, max_candidates);

    CampaignConfig cc;
    cc.out_dir = out_dir;
    cc.root_seed = seed;
    cc.train_cfg = flags.build();
    if (!thresholds_str.empty()) cc.thresholds = parse_double_list(thresholds_str);

    auto result = run_campaign(candidates, frames, cc);
    log << timestamp() << " campaign done rows=" << result.rows.size()
        << " trainings=" << result.runs_executed << "\n";
    printf("campaign complete: %zu result rows, %ld trainings executed -> %s/results.csv\n",
           result.rows.size(), result.runs_executed, out_dir.c_str());
    return 0;
}

int cmd_pareto(const std::string& in_path, const std::string& out_path, const std::string& family,
               bool unpruned) {
    std::ifstream probe(in_path);
    if (!probe) {
        std::cerr << "pareto: cannot open " << in_path << "\n";
        return 1;
    }
    std::string header;
    std::getline(probe, header);
    probe.close();

    std::vector<ParetoPoint> points;
    if (header.rfind("arch_id,", 0) == 0) {
        auto rows = load_campaign_csv(in_path);
        for (const auto& r : rows) {
            if (r.status != "ok") continue;
            if (!family.empty() && r.family != family) continue;
            if (unpruned ? (r.stage != "pruned" || r.threshold_pct != 0.0) : (r.stage != "pruned"))
                continue;
            ParetoPoint p;
            p.rvms = r.rvms;
            p.metric = r.metric;
            char buf[256];
            snprintf(buf, sizeof(buf), "%s lr=%.10g thr=%.10g", r.descriptor.c_str(), r.lr,
                     r.threshold_pct);
            p.descriptor = buf;
            p.checkpoint = r.checkpoint;
            points.push_back(p);
        }
    } else {
        // Plain points: rvms,metric[,descriptor[,checkpoint]]
        std::ifstream in(in_path);
        std::string line;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            ParetoPoint p;
            size_t c1 = line.find(',');
            if (c1 == std::string::npos) continue;
            p.rvms = std::stod(line.substr(0, c1));
            size_t c2 = line.find(',', c1 + 1);
            p.metric = std::stod(line.substr(c1 + 1, c2 == std::string::npos ? std::string::npos
                                                                             : c2 - c1 - 1));
            if (c2 != std::string::npos) {
                size_t c3 = line.find(',', c2 + 1);
                p.descriptor = line.substr(c2 + 1, c3 == std::string::npos ? std::string::npos
                                                                           : c3 - c2 - 1);
                if (c3 != std::string::npos) p.checkpoint = line.substr(c3 + 1);
            }
            points.push_back(p);
        }
    }
    auto front = pareto_front(std::move(points));
    save_pareto_csv(front, out_path);
    printf("frontier: %zu points -> %s\n", front.size(), out_path.c_str());
    return 0;
}

int cmd_sweep(const std::string& campaign_dir, const std::string& out_dir,
              const std::string& budgets_str, double rop_min, double rop_max, double rop_step,
              int n_frames, long symbols, const std::string& config_path, uint64_t seed,
              bool paper_scale) {
    auto rows = load_campaign_csv((fs::path(campaign_dir) / "results.csv").string());
    for (auto& r : rows)
        if (!r.checkpoint.empty()) r.checkpoint = (fs::path(campaign_dir) / r.checkpoint).string();

    SweepConfig sc;
    sc.link = load_link(config_path);
    if (!budgets_str.empty()) sc.budgets = parse_double_list(budgets_str);
    sc.rop_min = rop_min;
    sc.rop_max = rop_max;
    sc.rop_step = paper_scale ? 1.0 : rop_step;
    sc.n_frames = n_frames;
    sc.frame_symbols = symbols > 0 ? symbols : (paper_scale ? 2800000 : 280000);
    sc.seed = seed;
    sc.out_dir = out_dir;
    auto outcome = deployment_sweep(rows, sc);
    for (double b : outcome.missing_budgets)
        fprintf(stderr, "sweep: gap at %g rvms, no pruned checkpoint within %.0f%%\n", b,
                sc.budget_tolerance * 100);
    printf("sweep: %zu rows -> %s\n", outcome.rows.size(), out_dir.c_str());
    return outcome.missing_budgets.empty() ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"PAM4 PON equalizer toolkit: channel simulation, KAN/CNN/FIR training, pruning, "
                 "Pareto search"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "Worker thread count (default: OMP_NUM_THREADS)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a synchronized 2-sps waveform frame");
    std::string sim_config, sim_out = "frame.bin", sim_csv;
    double sim_rop = std::nan("");
    long sim_symbols = -1;
    uint64_t sim_seed = 1;
    bool sim_paper = false;
    sim->add_option("--config", sim_config, "Link config file (key = value)");
    sim->add_option("--rop", sim_rop, "Received optical power in dBm");
    sim->add_option("--symbols", sim_symbols, "Frame length in PAM4 symbols (desk default 280000)");
    sim->add_option("--seed", sim_seed, "Frame seed");
    sim->add_option("--out", sim_out, "Output frame container");
    sim->add_option("--export-csv", sim_csv, "Also export the frame as CSV");
    sim->add_flag("--paper-scale", sim_paper, "Default to 2.8e6 symbols");

    // train
    auto* tr = app.add_subcommand("train", "Train one equalizer on one frame");
    std::string tr_frame, tr_arch, tr_out = "run";
    TrainFlags tr_flags;
    tr->add_option("--frame", tr_frame, "Frame container")->required();
    tr->add_option("--arch", tr_arch, "Architecture config file")->required();
    tr->add_option("--out-dir", tr_out, "Output directory");
    tr_flags.add_to(tr);

    // prune
    auto* pr = app.add_subcommand("prune", "Threshold sweep with retraining on a trained checkpoint");
    std::string pr_ckpt, pr_out = "prune", pr_thresholds;
    std::vector<std::string> pr_frames;
    TrainFlags pr_flags;
    pr->add_option("--checkpoint", pr_ckpt, "Trained model checkpoint")->required();
    pr->add_option("--frame", pr_frames, "Frame container(s) for retraining")->required();
    pr->add_option("--out-dir", pr_out, "Output directory");
    pr->add_option("--thresholds", pr_thresholds, "Comma-separated percent thresholds");
    pr_flags.add_to(pr);

    // campaign
    auto* ca = app.add_subcommand("campaign", "Hyperparameter search over the architecture grid");
    std::string ca_config, ca_out = "campaign", ca_families, ca_lrs, ca_thresholds;
    uint64_t ca_seed = 7;
    int ca_frames = -1;
    long ca_symbols = -1, ca_max = 32;
    bool ca_full = false;
    TrainFlags ca_flags;
    ca->add_option("--config", ca_config, "Link config file");
    ca->add_option("--out-dir", ca_out, "Campaign directory (resumable)");
    ca->add_option("--seed", ca_seed, "Campaign root seed");
    ca->add_option("--frames", ca_frames, "Training sequences (desk default 2, paper 8)");
    ca->add_option("--symbols", ca_symbols, "Symbols per sequence");
    ca->add_option("--max-candidates", ca_max, "Architecture subset size (desk default 32)");
    ca->add_option("--families", ca_families, "Comma-separated subset of fir,kan1,cnn2,kan2");
    ca->add_option("--lrs", ca_lrs, "Learning-rate grid override");
    ca->add_option("--thresholds", ca_thresholds, "Pruning threshold override");
    ca->add_flag("--full-grid", ca_full, "Run the entire architecture grid");
    ca_flags.add_to(ca, /*with_seed=*/false);

    // pareto
    auto* pa = app.add_subcommand("pareto", "Extract the Pareto frontier from a results CSV");
    std::string pa_in, pa_out = "frontier.csv", pa_family;
    bool pa_unpruned = false;
    pa->add_option("--in", pa_in, "results.csv or plain rvms,metric CSV")->required();
    pa->add_option("--out", pa_out, "Frontier CSV");
    pa->add_option("--family", pa_family, "Restrict to one family");
    pa->add_flag("--unpruned", pa_unpruned, "Use only threshold-0 entries");

    // sweep
    auto* sw = app.add_subcommand("sweep", "BER vs ROP for Pareto models at rvms budgets");
    std::string sw_campaign, sw_out = "sweep", sw_budgets, sw_config;
    double sw_min = -30, sw_max = 2, sw_step = 2;
    int sw_frames = 2;
    long sw_symbols = -1;
    uint64_t sw_seed = 99;
    bool sw_paper = false;
    sw->add_option("--campaign", sw_campaign, "Campaign directory")->required();
    sw->add_option("--out-dir", sw_out, "Output directory");
    sw->add_option("--budgets", sw_budgets, "rvms budgets (default 21,51,121,321)");
    sw->add_option("--rop-min", sw_min, "Lowest ROP in dBm");
    sw->add_option("--rop-max", sw_max, "Highest ROP in dBm");
    sw->add_option("--rop-step", sw_step, "ROP step in dB (desk default 2)");
    sw->add_option("--frames", sw_frames, "Fresh frames per ROP");
    sw->add_option("--symbols", sw_symbols, "Symbols per frame");
    sw->add_option("--config", sw_config, "Link config file");
    sw->add_option("--seed", sw_seed, "Sweep seed");
    sw->add_flag("--paper-scale", sw_paper, "1 dB steps and 2.8e6-symbol frames");

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) omp_set_num_threads(threads);

    try {
        if (app.got_subcommand(sim))
            return cmd_simulate(sim_config, sim_rop, sim_symbols, sim_seed, sim_out, sim_csv,
                                sim_paper);
        if (app.got_subcommand(tr)) return cmd_train(tr_frame, tr_arch, tr_out, tr_flags);
        if (app.got_subcommand(pr))
            return cmd_prune(pr_ckpt, pr_frames, pr_out, pr_thresholds, pr_flags);
        if (app.got_subcommand(ca))
            return cmd_campaign(ca_config, ca_out, ca_seed, ca_frames, ca_symbols, ca_max,
                                ca_families, ca_lrs, ca_thresholds, ca_flags, ca_full,
                                ca_flags.paper_scale);
        if (app.got_subcommand(pa)) return cmd_pareto(pa_in, pa_out, pa_family, pa_unpruned);
        if (app.got_subcommand(sw))
            return cmd_sweep(sw_campaign, sw_out, sw_budgets, sw_min, sw_max, sw_step, sw_frames,
                             sw_symbols, sw_config, sw_seed, sw_paper);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
