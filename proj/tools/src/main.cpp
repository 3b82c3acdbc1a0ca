// Command-line front end for the mhri library: synthetic data generation,
// training, evaluation, ablations, the gaze baseline, gradient checks and
// embedding export.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mhri/checkpoint.hpp"
#include "mhri/config_io.hpp"
#include "mhri/data.hpp"
#include "mhri/errors.hpp"
#include "mhri/evaluator.hpp"
#include "mhri/gradcheck_suite.hpp"
#include "mhri/synth.hpp"
#include "mhri/trainer.hpp"

namespace {

using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUserError = 1;
constexpr int kExitInternalError = 2;

void echo_config(const std::string& name, const json& resolved) {
    std::cout << "resolved config (" << name << "): " << resolved.dump() << "\n";
}

std::vector<mhri::Episode> load_data_or_fail(const std::string& path) {
    std::vector<mhri::Episode> episodes = mhri::load_dataset(path);
    if (episodes.empty()) throw mhri::SchemaError("dataset '" + path + "' holds no episodes");
    return episodes;
}

// ---- generate ----

struct GenerateOpts {
    std::string config_path;
    std::string out_path;
    std::optional<int64_t> seed;
    std::optional<int> episodes;
};

int cmd_generate(const GenerateOpts& opts) {
    mhri::SynthConfig config;
    if (!opts.config_path.empty()) {
        config = mhri::parse_synth_config(mhri::read_text_file(opts.config_path));
    }
    if (opts.seed.has_value()) config.seed = static_cast<uint64_t>(*opts.seed);
    if (opts.episodes.has_value()) config.n_episodes = *opts.episodes;
    config.validate();
    echo_config("generate", json::parse(mhri::synth_config_to_json(config)));

    const std::vector<mhri::Episode> episodes = mhri::generate_dataset(config);
    mhri::save_dataset(episodes, opts.out_path);
    mhri::write_text_file(opts.out_path + ".config.json", mhri::synth_config_to_json(config));

    const mhri::StatsReport stats = mhri::dataset_stats(episodes);
    std::cout << "wrote " << episodes.size() << " episodes (" << stats.n_utterances
              << " utterances) to " << opts.out_path << "\n";
    return kExitOk;
}

// ---- train ----

struct TrainOpts {
    std::string data_path;
    std::string config_path;
    std::string out_dir;
    std::optional<int> folds;
    std::optional<int64_t> seed;
};

int cmd_train(const TrainOpts& opts) {
    const std::vector<mhri::Episode> episodes = load_data_or_fail(opts.data_path);

    mhri::ModelConfig model_config;
    mhri::TrainConfig train_config;
    if (!opts.config_path.empty()) {
        mhri::apply_train_config(mhri::read_text_file(opts.config_path), model_config, train_config);
    }
    if (opts.folds.has_value()) train_config.k_folds = *opts.folds;
    if (opts.seed.has_value()) train_config.seed = static_cast<uint64_t>(*opts.seed);
    model_config.d_v = episodes.front().d_v;
    model_config.d_t = episodes.front().d_t;
    train_config.validate();
    model_config.validate();

    const std::string resolved = mhri::train_config_to_json(model_config, train_config);
    echo_config("train", json::parse(resolved));
    std::filesystem::create_directories(opts.out_dir);
    mhri::write_text_file(opts.out_dir + "/train_config.resolved.json", resolved);

    const mhri::CrossValResult result =
        mhri::cross_validate(episodes, model_config, train_config, opts.out_dir,
                             [](const std::string& line) { std::cout << line << "\n"; });

    std::cout << mhri::render_results_table({{"model (cross-validated)", result.aggregate}});
    std::cout << "fold checkpoints and logs written to " << opts.out_dir << "\n";
    return kExitOk;
}

// ---- evaluate ----

struct EvaluateOpts {
    std::string checkpoint_path;
    std::string data_path;
    std::string report_path;
    bool single_task = false;
};

int cmd_evaluate(const EvaluateOpts& opts) {
    echo_config("evaluate", json{{"checkpoint", opts.checkpoint_path},
                                 {"data", opts.data_path},
                                 {"report", opts.report_path},
                                 {"single_task", opts.single_task}});
    mhri::MhriModel model = mhri::load_checkpoint(opts.checkpoint_path);
    const std::vector<mhri::Episode> episodes = load_data_or_fail(opts.data_path);
    const mhri::MetricsReport metrics =
        mhri::evaluate_model(model, episodes, /*use_scene=*/!opts.single_task);
    if (!opts.report_path.empty()) {
        mhri::write_text_file(opts.report_path, mhri::metrics_to_json(metrics) + "\n");
    }
    std::cout << mhri::render_results_table({{"model", metrics}});
    return kExitOk;
}

// ---- baseline ----

int cmd_baseline(const std::string& data_path, const std::string& report_path) {
    echo_config("baseline", json{{"data", data_path}, {"report", report_path}});
    const std::vector<mhri::Episode> episodes = load_data_or_fail(data_path);
    const mhri::MetricsReport metrics = mhri::run_gaze_baseline(episodes);
    if (!report_path.empty()) {
        mhri::write_text_file(report_path, mhri::metrics_to_json(metrics) + "\n");
    }
    std::cout << mhri::render_results_table({{"if-then gaze baseline", metrics}});
    return kExitOk;
}

// ---- ablate ----

struct AblateOpts {
    std::string data_path;
    std::string config_path;
    std::string out_dir;
    std::vector<int64_t> seeds;
};

int cmd_ablate(const AblateOpts& opts) {
    const std::vector<mhri::Episode> episodes = load_data_or_fail(opts.data_path);

    mhri::ModelConfig model_config;
    mhri::TrainConfig train_config;
    if (!opts.config_path.empty()) {
        mhri::apply_train_config(mhri::read_text_file(opts.config_path), model_config, train_config);
    }
    model_config.d_v = episodes.front().d_v;
    model_config.d_t = episodes.front().d_t;
    std::vector<uint64_t> seeds;
    for (int64_t s : opts.seeds) seeds.push_back(static_cast<uint64_t>(s));
    if (seeds.empty()) seeds.push_back(train_config.seed);

    json resolved = json::parse(mhri::train_config_to_json(model_config, train_config));
    resolved["seeds"] = seeds;
    echo_config("ablate", resolved);

    const mhri::AblationResult result = mhri::run_ablation(
        episodes, model_config, train_config, seeds,
        [](const std::string& line) { std::cout << line << "\n"; });

    std::filesystem::create_directories(opts.out_dir);
    const std::string table = mhri::render_ablation_table(result.rows);
    mhri::write_text_file(opts.out_dir + "/ablation_table.txt", table);

    std::ofstream rows_out(opts.out_dir + "/ablation.jsonl", std::ios::binary);
    std::ofstream log_out(opts.out_dir + "/ablation_train_log.jsonl", std::ios::binary);
    if (!rows_out || !log_out) throw mhri::IoError("cannot write into " + opts.out_dir);
    for (size_t r = 0; r < result.rows.size(); ++r) {
        const mhri::AblationRow& row = result.rows[r];
        json j;
        j["row"] = std::string(1, row.row_id);
        j["multitask"] = row.flags.multitask;
        j["kl_s"] = row.flags.kl_s;
        j["kl_r"] = row.flags.kl_r;
        j["metrics"] = json::parse(mhri::metrics_to_json(row.metrics));
        rows_out << j.dump() << '\n';
        for (size_t s = 0; s < result.runs[r].size(); ++s) {
            for (const mhri::FoldResult& fold : result.runs[r][s].folds) {
                for (const mhri::EpochLog& log : fold.epoch_logs) {
                    json lj = json::parse(mhri::epoch_log_to_json(log));
                    lj["row"] = std::string(1, row.row_id);
                    lj["seed"] = seeds[s];
                    log_out << lj.dump() << '\n';
                }
            }
        }
    }
    std::cout << table;
    std::cout << "ablation artifacts written to " << opts.out_dir << "\n";
    return kExitOk;
}

// ---- predict ----

struct PredictOpts {
    std::string checkpoint_path;
    std::string data_path;
    std::string out_path;
    bool measure_latency = false;
    int repetitions = 5;
    bool single_task = false;
};

int cmd_predict(const PredictOpts& opts) {
    echo_config("predict", json{{"checkpoint", opts.checkpoint_path},
                                {"data", opts.data_path},
                                {"out", opts.out_path},
                                {"measure_latency", opts.measure_latency},
                                {"repetitions", opts.repetitions},
                                {"single_task", opts.single_task}});
    mhri::MhriModel model = mhri::load_checkpoint(opts.checkpoint_path);
    const std::vector<mhri::Episode> episodes = load_data_or_fail(opts.data_path);
    const bool use_scene = !opts.single_task;

    std::ostream* out = &std::cout;
    std::ofstream file;
    if (!opts.out_path.empty()) {
        file.open(opts.out_path, std::ios::binary);
        if (!file) throw mhri::IoError("cannot open for writing: " + opts.out_path);
        out = &file;
    }
    size_t cursor = 0;
    const mhri::PredictionSet set = mhri::predict_responses(model, episodes, use_scene);
    for (const mhri::Episode& ep : episodes) {
        for (int i = 0; i < ep.size(); ++i, ++cursor) {
            if (!set.scored[cursor]) continue;
            json j;
            j["episode_id"] = ep.episode_id;
            j["index"] = i;
            j["decision"] = set.predictions[cursor];
            j["truth"] = set.truth[cursor];
            (*out) << j.dump() << '\n';
        }
    }

    if (opts.measure_latency) {
        const mhri::LatencyReport lat =
            mhri::measure_latency(model, episodes, opts.repetitions, use_scene);
        std::cout << "per-decision time: mean " << lat.mean_seconds << " s, std "
                  << lat.std_seconds << " s (" << lat.episodes << " episodes, " << lat.repetitions
                  << " repetitions)\n";
    }
    return kExitOk;
}

// ---- export-embeddings ----

int cmd_export(const std::string& checkpoint_path, const std::string& data_path,
               const std::string& out_path, bool single_task) {
    echo_config("export-embeddings", json{{"checkpoint", checkpoint_path},
                                          {"data", data_path},
                                          {"out", out_path},
                                          {"single_task", single_task}});
    mhri::MhriModel model = mhri::load_checkpoint(checkpoint_path);
    const std::vector<mhri::Episode> episodes = load_data_or_fail(data_path);
    mhri::export_embeddings(model, episodes, out_path, !single_task);
    std::cout << "embeddings written to " << out_path << "\n";
    return kExitOk;
}

// ---- gradcheck ----

int cmd_gradcheck(int64_t seed, int instances) {
    echo_config("gradcheck", json{{"seed", seed}, {"instances", instances}});
    const mhri::GradCheckReport report =
        mhri::run_gradcheck_suite(static_cast<uint64_t>(seed), instances);
    std::cout << mhri::render_gradcheck_report(report);
    return report.all_passed ? kExitOk : kExitInternalError;
}

// ---- stats ----

int cmd_stats(const std::string& data_path) {
    echo_config("stats", json{{"data", data_path}});
    const std::vector<mhri::Episode> episodes = load_data_or_fail(data_path);
    std::cout << mhri::render_stats(mhri::dataset_stats(episodes));
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-party interaction response decision modeling"};
    app.require_subcommand(1);

    GenerateOpts gen;
    CLI::App* generate = app.add_subcommand("generate", "Generate a synthetic dataset");
    generate->add_option("--config", gen.config_path, "Synthesizer config file (JSON)");
    generate->add_option("--out", gen.out_path, "Output dataset path (JSONL)")->required();
    generate->add_option("--seed", gen.seed, "Seed override");
    generate->add_option("--episodes", gen.episodes, "Episode count override");

    TrainOpts train;
    CLI::App* train_cmd = app.add_subcommand("train", "Cross-validated training");
    train_cmd->add_option("--data", train.data_path, "Dataset path")->required();
    train_cmd->add_option("--config", train.config_path, "Training config file (JSON)");
    train_cmd->add_option("--folds", train.folds, "Fold count override");
    train_cmd->add_option("--seed", train.seed, "Seed override");
    train_cmd->add_option("--out", train.out_dir, "Output directory")->required();

    EvaluateOpts eval;
    CLI::App* eval_cmd = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval.checkpoint_path, "Checkpoint path")->required();
    eval_cmd->add_option("--data", eval.data_path, "Dataset path")->required();
    eval_cmd->add_option("--report", eval.report_path, "Metrics report output path (JSON)");
    eval_cmd->add_flag("--single-task", eval.single_task,
                       "Feed the response head a zero scene block (single-task checkpoints)");

    std::string baseline_data, baseline_report;
    CLI::App* baseline_cmd = app.add_subcommand("baseline", "Run the if-then gaze baseline");
    baseline_cmd->add_option("--data", baseline_data, "Dataset path")->required();
    baseline_cmd->add_option("--report", baseline_report, "Metrics report output path (JSON)");

    AblateOpts ablate;
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "Run the six-row ablation grid");
    ablate_cmd->add_option("--data", ablate.data_path, "Dataset path")->required();
    ablate_cmd->add_option("--config", ablate.config_path, "Training config file (JSON)");
    ablate_cmd->add_option("--seeds", ablate.seeds, "Seeds, comma separated")
        ->delimiter(',')
        ->required();
    ablate_cmd->add_option("--out", ablate.out_dir, "Output directory")->required();

    PredictOpts predict;
    CLI::App* predict_cmd = app.add_subcommand("predict", "Per-utterance response decisions");
    predict_cmd->add_option("--checkpoint", predict.checkpoint_path, "Checkpoint path")->required();
    predict_cmd->add_option("--data", predict.data_path, "Dataset path")->required();
    predict_cmd->add_option("--out", predict.out_path, "Prediction output path (JSONL, default stdout)");
    predict_cmd->add_flag("--measure-latency", predict.measure_latency,
                          "Measure mean per-decision wall-clock time");
    predict_cmd->add_option("--repetitions", predict.repetitions, "Latency repetitions")
        ->check(CLI::PositiveNumber);
    predict_cmd->add_flag("--single-task", predict.single_task,
                          "Feed the response head a zero scene block (single-task checkpoints)");

    int64_t gradcheck_seed = 20240611;
    int gradcheck_instances = 20;
    CLI::App* gradcheck_cmd =
        app.add_subcommand("gradcheck", "Verify every gradient against finite differences");
    gradcheck_cmd->add_option("--seed", gradcheck_seed, "Suite seed");
    gradcheck_cmd->add_option("--instances", gradcheck_instances, "Random instances per case")
        ->check(CLI::PositiveNumber);

    std::string export_ckpt, export_data, export_out;
    bool export_single_task = false;
    CLI::App* export_cmd =
        app.add_subcommand("export-embeddings", "Write hidden vectors for scored utterances");
    export_cmd->add_option("--checkpoint", export_ckpt, "Checkpoint path")->required();
    export_cmd->add_option("--data", export_data, "Dataset path")->required();
    export_cmd->add_option("--out", export_out, "CSV output path")->required();
    export_cmd->add_flag("--single-task", export_single_task,
                         "Feed the response head a zero scene block (single-task checkpoints)");

    std::string stats_data;
    CLI::App* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
    stats_cmd->add_option("--data", stats_data, "Dataset path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUserError;
    }

    try {
        if (generate->parsed()) return cmd_generate(gen);
        if (train_cmd->parsed()) return cmd_train(train);
        if (eval_cmd->parsed()) return cmd_evaluate(eval);
        if (baseline_cmd->parsed()) return cmd_baseline(baseline_data, baseline_report);
        if (ablate_cmd->parsed()) return cmd_ablate(ablate);
        if (predict_cmd->parsed()) return cmd_predict(predict);
        if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_seed, gradcheck_instances);
        if (export_cmd->parsed()) {
            return cmd_export(export_ckpt, export_data, export_out, export_single_task);
        }
        if (stats_cmd->parsed()) return cmd_stats(stats_data);
    } catch (const mhri::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const mhri::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const mhri::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const mhri::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const mhri::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const mhri::SerializationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    }
    return kExitInternalError;
}
