// End-to-end acceptance suite. Each numbered criterion prints exactly one
// [PASS]/[FAIL] line; the process exits non-zero if any criterion fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include "mhri/checkpoint.hpp"
#include "mhri/config_io.hpp"
#include "mhri/data.hpp"
#include "mhri/dist.hpp"
#include "mhri/evaluator.hpp"
#include "mhri/gradcheck_suite.hpp"
#include "mhri/model.hpp"
#include "mhri/ops.hpp"
#include "mhri/response_model.hpp"
#include "mhri/scene_model.hpp"
#include "mhri/synth.hpp"
#include "mhri/trainer.hpp"

using namespace mhri;

namespace {

struct CliResult {
    int exit_code;
    std::string output;
};

CliResult run_cli(const std::string& args) {
    const std::string cmd = std::string(MHRI_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return {-1, "popen failed"};
    std::string output;
    std::array<char, 4096> buf;
    size_t got;
    while ((got = ::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), got);
    const int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, std::move(output)};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

int g_failures = 0;

void report(int id, const std::string& name, bool passed, const std::string& detail) {
    std::printf("[%s] criterion %d: %s — %s\n", passed ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!passed) ++g_failures;
}

std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

void criterion_gradcheck() {
    const double t0 = now_seconds();
    const CliResult r = run_cli("gradcheck --instances 20");
    const double elapsed = now_seconds() - t0;
    const bool passed = r.exit_code == 0 && elapsed < 60.0;
    report(1, "gradient verification", passed,
           "gradcheck exit " + std::to_string(r.exit_code) + ", " + fmt(elapsed, 1) +
               " s (< 60 s); every op vs central differences on >= 20 instances");
}

// ---------------------------------------------------------------- criterion 2

void criterion_loss_identities() {
    bool ce_bitwise = true, kl_nonneg = true, kl_zero_at_prior = true, priors_normalized = true;

    SynthConfig synth;
    synth.n_episodes = 6;
    synth.seed = 7;
    const std::vector<Episode> episodes = generate_dataset(synth);
    ModelConfig mc;
    mc.d_v = synth.d_v;
    mc.d_t = synth.d_t;
    mc.seed = 11;
    MhriModel model(mc);
    ScenePriorParams sp;
    ResponsePriorParams rp;

    for (const Episode& ep : episodes) {
        const MaskSet masks = build_masks(ep, ep.size());
        EpisodeForward fwd = model.forward_episode(ep, ep.size());

        // Disabling a lambda (or the flag) must reproduce the pure-CE loss
        // bitwise, because the result is the CE tensor itself.
        const LossParts s_l0 = scene_loss(fwd.scene, ep, masks, sp, 0.0, true);
        const LossParts s_off = scene_loss(fwd.scene, ep, masks, sp, 0.01, false);
        const LossParts s_on = scene_loss(fwd.scene, ep, masks, sp, 0.01, true);
        ce_bitwise = ce_bitwise && s_l0.total.value() == s_l0.ce.value() &&
                     s_off.total.value() == s_off.ce.value() &&
                     s_l0.total.value() == s_off.total.value();
        const LossParts r_l0 = response_loss(fwd.response, ep, masks, rp, 0.0, true);
        const LossParts r_off = response_loss(fwd.response, ep, masks, rp, 0.01, false);
        const LossParts r_on = response_loss(fwd.response, ep, masks, rp, 0.01, true);
        ce_bitwise = ce_bitwise && r_l0.total.value() == r_l0.ce.value() &&
                     r_off.total.value() == r_off.ce.value() &&
                     r_l0.total.value() == r_off.total.value();

        kl_nonneg = kl_nonneg && s_on.kl.value() >= -1e-9 && r_on.kl.value() >= -1e-9;
    }

    // KL component of zero when every prediction row equals its prior.
    {
        const Episode& ep = episodes[0];
        const MaskSet masks = build_masks(ep, ep.size());
        std::vector<double> scene_rows, resp_rows;
        for (int i = 0; i < ep.size(); ++i) {
            std::optional<int> prev;
            if (i > 0) prev = ep.utterances[static_cast<size_t>(i - 1)].scene.speaker;
            const Dist sd = scene_prior(prev, sp);
            for (size_t c = 0; c < 3; ++c) scene_rows.push_back(sd[c]);
            const Dist rd = response_prior(ep.utterances[static_cast<size_t>(i)].scene, prev, rp);
            for (size_t c = 0; c < 4; ++c) resp_rows.push_back(rd[c]);
        }
        ScenePrediction sp_pred;
        sp_pred.speaker_probs = Tensor::from_data({ep.size(), 3}, scene_rows);
        sp_pred.speaker_logits = Tensor::zeros({ep.size(), 3});
        sp_pred.listener_logits = Tensor::zeros({ep.size(), 3});
        sp_pred.listener_probs = sigmoid(sp_pred.listener_logits);
        kl_zero_at_prior =
            kl_zero_at_prior && scene_loss(sp_pred, ep, masks, sp, 1.0, true).kl.value() == 0.0;

        ResponsePrediction rp_pred;
        rp_pred.probs = Tensor::from_data({ep.size(), 4}, resp_rows);
        rp_pred.logits = Tensor::zeros({ep.size(), 4});
        kl_zero_at_prior = kl_zero_at_prior &&
                           response_loss(rp_pred, ep, masks, rp, 1.0, true).kl.value() == 0.0;
    }

    // Non-negativity of the KL op over a random sweep.
    RngStream rng(23);
    for (int it = 0; it < 500; ++it) {
        const int c = rng.uniform_int(2, 6);
        auto draw = [&](int n) {
            std::vector<double> v(static_cast<size_t>(n));
            double total = 0.0;
            for (double& x : v) {
                x = rng.uniform() + 1e-4;
                total += x;
            }
            for (double& x : v) x /= total;
            return v;
        };
        const Dist p(draw(c)), q(draw(c));
        kl_nonneg = kl_nonneg && kl_divergence(p, q) >= -1e-9 && kl_divergence(p, p) <= 1e-9;
    }

    // Prior normalization across a parameter sweep.
    for (double alpha : {0.01, 0.05, 0.1, 1.0 / 3.0, 0.6, 0.95}) {
        ScenePriorParams params;
        params.alpha_repeat = alpha;
        for (const std::optional<int> prev : {std::optional<int>{}, std::optional<int>{0},
                                              std::optional<int>{1}, std::optional<int>{2}}) {
            const Dist d = scene_prior(prev, params);
            double total = 0.0;
            for (size_t c = 0; c < d.size(); ++c) total += d[c];
            priors_normalized = priors_normalized && std::abs(total - 1.0) <= 1e-9;
        }
    }
    for (double pr : {0.4, 0.6, 0.8, 0.95}) {
        for (double pn : {0.01, 0.04, 0.1}) {
            for (double pu : {0.5, 0.8, 0.9, 0.99}) {
                for (double beta : {0.05, 0.5, 0.95}) {
                    if (pr + pn > 1.0) continue;
                    ResponsePriorParams params;
                    params.p_respond_addressed = pr;
                    params.p_none_addressed = pn;
                    params.p_none_unaddressed = pu;
                    params.beta_self_turn = beta;
                    for (int speaker : {0, 1}) {
                        for (int target : {0, 1, 2}) {
                            if (target == speaker) continue;
                            SceneLabel s;
                            s.speaker = speaker;
                            s.listeners = {0, 0, 0};
                            s.listeners[static_cast<size_t>(target)] = 1;
                            for (const std::optional<int> prev :
                                 {std::optional<int>{}, std::optional<int>{2}}) {
                                const Dist d = response_prior(s, prev, params);
                                double total = 0.0;
                                for (size_t c = 0; c < d.size(); ++c) total += d[c];
                                priors_normalized =
                                    priors_normalized && std::abs(total - 1.0) <= 1e-9;
                            }
                        }
                    }
                }
            }
        }
    }

    const bool passed = ce_bitwise && kl_nonneg && kl_zero_at_prior && priors_normalized;
    report(2, "loss-structure identities", passed,
           std::string("pure-CE bitwise: ") + (ce_bitwise ? "yes" : "NO") +
               "; KL >= -1e-9: " + (kl_nonneg ? "yes" : "NO") +
               "; KL == 0 at prior: " + (kl_zero_at_prior ? "yes" : "NO") +
               "; priors normalized: " + (priors_normalized ? "yes" : "NO"));
}

// ------------------------------------------------------- criteria 3, 4 and 7

struct EndToEnd {
    CrossValResult cv;
    std::vector<Episode> episodes;
    std::string out_dir;
    double train_seconds = 0.0;
};

EndToEnd run_end_to_end(const std::string& tmp) {
    EndToEnd e2e;
    SynthConfig synth;  // defaults: 60 episodes
    synth.seed = 42;
    e2e.episodes = generate_dataset(synth);

    ModelConfig mc;  // defaults
    mc.d_v = synth.d_v;
    mc.d_t = synth.d_t;
    TrainConfig tc;  // defaults: lr 1e-4, batch 8, 30 epochs, 6 folds
    tc.seed = 42;

    e2e.out_dir = tmp + "/cv";
    const double t0 = now_seconds();
    e2e.cv = cross_validate(e2e.episodes, mc, tc, e2e.out_dir);
    e2e.train_seconds = now_seconds() - t0;
    return e2e;
}

void criterion_end_to_end(const EndToEnd& e2e) {
    double epoch1 = 0.0, epoch10 = 0.0;
    for (const FoldResult& fold : e2e.cv.folds) {
        epoch1 += fold.epoch_logs[0].total;
        epoch10 += fold.epoch_logs[9].total;
    }
    epoch1 /= static_cast<double>(e2e.cv.folds.size());
    epoch10 /= static_cast<double>(e2e.cv.folds.size());

    const double acc = e2e.cv.aggregate.acc_average.value_or(0.0);
    const bool time_ok = e2e.train_seconds < 900.0;
    const bool acc_ok = acc >= 0.80;
    const bool progress_ok = epoch10 <= 0.8 * epoch1;
    report(3, "synthetic end-to-end", time_ok && acc_ok && progress_ok,
           "6-fold CV in " + fmt(e2e.train_seconds, 0) + " s (< 900), held-out accuracy " +
               fmt(acc) + " (>= 0.80), epoch-10 loss " + fmt(epoch10) + " vs 0.8*epoch-1 " +
               fmt(0.8 * epoch1));
}

void criterion_baseline_gap(const EndToEnd& e2e) {
    const MetricsReport baseline = run_gaze_baseline(e2e.episodes);
    const double model_mis = e2e.cv.aggregate.acc_misaligned.value_or(0.0);
    const double base_mis = baseline.acc_misaligned.value_or(1.0);
    const double base_aligned = baseline.acc_aligned.value_or(0.0);
    const bool gap_ok = model_mis - base_mis >= 0.15;
    const bool competitive_ok = base_aligned >= 0.60;
    report(4, "baseline gap on gaze-misaligned turns", gap_ok && competitive_ok,
           "model G!=L " + fmt(model_mis) + " vs baseline G!=L " + fmt(base_mis) + " (gap " +
               fmt(100.0 * (model_mis - base_mis), 1) + " points, >= 15); baseline G=L " +
               fmt(base_aligned) + " (>= 0.60)");
}

void criterion_latency(const EndToEnd& e2e, const std::string& tmp) {
    const std::string data = tmp + "/latency_data.jsonl";
    save_dataset(e2e.episodes, data);
    const CliResult r = run_cli("predict --checkpoint " + e2e.out_dir + "/fold0.ckpt --data " +
                                data + " --out " + tmp + "/preds.jsonl --measure-latency "
                                "--repetitions 5");
    double mean = -1.0;
    const std::string key = "per-decision time: mean ";
    const size_t pos = r.output.find(key);
    if (pos != std::string::npos) mean = std::stod(r.output.substr(pos + key.size()));
    const bool passed = r.exit_code == 0 && mean > 0.0 && mean < 0.05;
    report(7, "per-decision latency", passed,
           "mean " + fmt(mean, 6) + " s per decision (< 0.05 s), default model config");
}

// ---------------------------------------------------------------- criterion 5

void criterion_ablation() {
    SynthConfig synth;
    synth.seed = 42;
    const std::vector<Episode> episodes = generate_dataset(synth);
    ModelConfig mc;
    mc.d_v = synth.d_v;
    mc.d_t = synth.d_t;
    TrainConfig tc;

    const AblationResult result = run_ablation(episodes, mc, tc, {1, 2, 3});

    static const bool expect[6][3] = {{false, false, false}, {false, false, true},
                                      {true, false, false},  {true, false, true},
                                      {true, true, false},   {true, true, true}};
    bool rows_ok = result.rows.size() == 6;
    for (size_t r = 0; rows_ok && r < 6; ++r) {
        rows_ok = result.rows[r].row_id == static_cast<char>('a' + r) &&
                  result.rows[r].flags.multitask == expect[r][0] &&
                  result.rows[r].flags.kl_s == expect[r][1] &&
                  result.rows[r].flags.kl_r == expect[r][2];
    }

    auto kl_r_mass = [&](size_t row) {
        double acc = 0.0;
        for (const CrossValResult& cv : result.runs[row]) {
            for (const FoldResult& fold : cv.folds) {
                for (const EpochLog& log : fold.epoch_logs) acc += std::abs(log.l_kl_r);
            }
        }
        return acc;
    };
    const bool logs_ok = kl_r_mass(0) == 0.0 && kl_r_mass(4) == 0.0 && kl_r_mass(1) > 0.0 &&
                         kl_r_mass(3) > 0.0 && kl_r_mass(5) > 0.0;

    const double row_a = result.rows[0].metrics.acc_average.value_or(0.0);
    const double row_f = result.rows[5].metrics.acc_average.value_or(0.0);
    const bool acc_ok = row_f >= row_a - 0.01;

    report(5, "ablation harness", rows_ok && logs_ok && acc_ok,
           std::string("rows (a)-(f) with the exact flag grid: ") + (rows_ok ? "yes" : "NO") +
               "; KLr logs zero on a/e, nonzero on b/d/f: " + (logs_ok ? "yes" : "NO") +
               "; row f " + fmt(row_f) + " >= row a " + fmt(row_a) + " - 0.01 over 3 seeds: " +
               (acc_ok ? "yes" : "NO"));
}

// ---------------------------------------------------------------- criterion 6

void criterion_determinism(const std::string& tmp) {
    const std::string data = tmp + "/det_data.jsonl";
    const CliResult gen = run_cli("generate --out " + data + " --seed 5 --episodes 8");

    const std::string cfg = tmp + "/det_cfg.json";
    write_text_file(cfg, "{\"epochs\": 5, \"k_folds\": 2, \"seed\": 12}");
    const std::string run_a = tmp + "/det_a";
    const std::string run_b = tmp + "/det_b";
    const CliResult a = run_cli("train --data " + data + " --config " + cfg + " --out " + run_a);
    const CliResult b = run_cli("train --data " + data + " --config " + cfg + " --out " + run_b);

    bool files_ok = gen.exit_code == 0 && a.exit_code == 0 && b.exit_code == 0;
    for (const char* name : {"/fold0.ckpt", "/fold1.ckpt", "/train_log.jsonl", "/metrics.json"}) {
        const std::string fa = slurp(run_a + name);
        files_ok = files_ok && !fa.empty() && fa == slurp(run_b + name);
    }

    // Checkpoint round trip: evaluating the reloaded models gives
    // byte-identical reports.
    const std::string rep_a = tmp + "/det_rep_a.json";
    const std::string rep_b = tmp + "/det_rep_b.json";
    const CliResult ea = run_cli("evaluate --checkpoint " + run_a + "/fold0.ckpt --data " + data +
                                 " --report " + rep_a);
    const CliResult eb = run_cli("evaluate --checkpoint " + run_b + "/fold0.ckpt --data " + data +
                                 " --report " + rep_b);
    const bool eval_ok = ea.exit_code == 0 && eb.exit_code == 0 && slurp(rep_a) == slurp(rep_b) &&
                         !slurp(rep_a).empty();

    report(6, "training and checkpoint determinism", files_ok && eval_ok,
           std::string("two identical train runs byte-identical: ") + (files_ok ? "yes" : "NO") +
               "; save->load->evaluate bit-stable: " + (eval_ok ? "yes" : "NO"));
}

// ---------------------------------------------------------------- criterion 8

void criterion_data_fidelity(const std::string& tmp) {
    const std::string data = tmp + "/fidelity.jsonl";
    const CliResult gen = run_cli("generate --out " + data + " --seed 42");
    bool ok = gen.exit_code == 0;

    std::vector<Episode> episodes;
    std::string detail;
    try {
        episodes = load_dataset(data);  // schema validation happens on load
    } catch (const std::exception& ex) {
        ok = false;
        detail = std::string("load failed: ") + ex.what();
    }

    double worst_dev = 0.0;
    if (ok) {
        const SynthConfig defaults;
        const StatsReport s = dataset_stats(episodes);
        ok = ok && s.n_utterances >= 1000;
        const std::pair<double, double> checks[] = {
            {s.frac_consistency, defaults.p_consistency},
            {s.frac_look_without_speak, defaults.p_lws},
            {s.frac_speak_without_look, defaults.p_swl},
            {s.multi_listener_fraction, defaults.p_multi_listener},
            {s.casual_fraction, defaults.p_casual},
        };
        for (const auto& [measured, configured] : checks) {
            worst_dev = std::max(worst_dev, std::abs(measured - configured));
        }
        ok = ok && worst_dev <= 0.03;

        // Byte-identical persistence round trip.
        const std::string again = tmp + "/fidelity2.jsonl";
        save_dataset(episodes, again);
        ok = ok && slurp(data) == slurp(again);
        detail = std::to_string(s.n_utterances) + " utterances (>= 1000), worst fraction " +
                 "deviation " + fmt(worst_dev * 100.0, 2) + " points (<= 3), schema valid, " +
                 "save/load round trip byte-identical";
    }
    report(8, "synthetic data fidelity", ok, detail);
}

}  // namespace

int main() {
    const std::string tmp = (std::filesystem::temp_directory_path() /
                             ("mhri_acceptance_" + std::to_string(::getpid())))
                                .string();
    std::filesystem::create_directories(tmp);

    std::fprintf(stderr, "acceptance: criteria 1-2...\n");
    criterion_gradcheck();
    criterion_loss_identities();

    std::fprintf(stderr, "acceptance: criteria 3-4 (full 6-fold cross-validation)...\n");
    const EndToEnd e2e = run_end_to_end(tmp);
    criterion_end_to_end(e2e);
    criterion_baseline_gap(e2e);

    std::fprintf(stderr, "acceptance: criterion 5 (6 ablation rows x 3 seeds, the long one)...\n");
    criterion_ablation();

    std::fprintf(stderr, "acceptance: criteria 6-8...\n");
    criterion_determinism(tmp);
    criterion_latency(e2e, tmp);
    criterion_data_fidelity(tmp);

    std::filesystem::remove_all(tmp);
    if (g_failures == 0) {
        std::printf("acceptance: all 8 criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    return 1;
}
