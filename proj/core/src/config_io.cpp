#include "mhri/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mhri/errors.hpp"

namespace mhri {

using nlohmann::json;

namespace {

json parse_object(const std::string& text, const char* what) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& ex) {
        throw ParseError(std::string(what) + ": " + ex.what());
    }
    if (!j.is_object()) throw ParseError(std::string(what) + ": expected a JSON object");
    return j;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) {
            throw ConfigError(std::string(what) + ": unknown key '" + it.key() + "'");
        }
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

SynthConfig parse_synth_config(const std::string& json_text) {
    const json j = parse_object(json_text, "synth config");
    static const std::set<std::string> known = {
        "n_episodes", "min_utterances", "max_utterances", "d_v", "d_t",
        "p_consistency", "p_lws", "p_swl", "p_multi_listener", "p_casual",
        "p_text_cue", "noise_sigma", "p_respond_exception", "seed"};
    reject_unknown(j, known, "synth config");

    SynthConfig c;
    get_if(j, "n_episodes", c.n_episodes);
    get_if(j, "min_utterances", c.min_utterances);
    get_if(j, "max_utterances", c.max_utterances);
    get_if(j, "d_v", c.d_v);
    get_if(j, "d_t", c.d_t);
    get_if(j, "p_consistency", c.p_consistency);
    get_if(j, "p_lws", c.p_lws);
    get_if(j, "p_swl", c.p_swl);
    get_if(j, "p_multi_listener", c.p_multi_listener);
    get_if(j, "p_casual", c.p_casual);
    get_if(j, "p_text_cue", c.p_text_cue);
    get_if(j, "noise_sigma", c.noise_sigma);
    get_if(j, "p_respond_exception", c.p_respond_exception);
    get_if(j, "seed", c.seed);
    c.validate();
    return c;
}

std::string synth_config_to_json(const SynthConfig& c) {
    json j;
    j["n_episodes"] = c.n_episodes;
    j["min_utterances"] = c.min_utterances;
    j["max_utterances"] = c.max_utterances;
    j["d_v"] = c.d_v;
    j["d_t"] = c.d_t;
    j["p_consistency"] = c.p_consistency;
    j["p_lws"] = c.p_lws;
    j["p_swl"] = c.p_swl;
    j["p_multi_listener"] = c.p_multi_listener;
    j["p_casual"] = c.p_casual;
    j["p_text_cue"] = c.p_text_cue;
    j["noise_sigma"] = c.noise_sigma;
    j["p_respond_exception"] = c.p_respond_exception;
    j["seed"] = c.seed;
    return j.dump(2);
}

void apply_train_config(const std::string& json_text, ModelConfig& model, TrainConfig& train) {
    const json j = parse_object(json_text, "train config");
    static const std::set<std::string> known = {
        "d_model", "n_heads", "n_layers", "max_seq", "coupling", "fuse_local_bias",
        "lr", "batch_size", "epochs", "dropout", "lambda_s", "lambda_r", "k_folds", "seed",
        "multitask", "kl_s", "kl_r",
        "beta1", "beta2", "adam_eps", "weight_decay", "grad_clip", "clip_norm",
        "alpha_repeat", "p_respond_addressed", "p_none_addressed", "p_none_unaddressed",
        "beta_self_turn"};
    reject_unknown(j, known, "train config");

    get_if(j, "d_model", model.d_model);
    get_if(j, "n_heads", model.n_heads);
    get_if(j, "n_layers", model.n_layers);
    get_if(j, "max_seq", model.max_seq);
    if (j.contains("coupling")) model.coupling = coupling_from_name(j.at("coupling").get<std::string>());
    get_if(j, "fuse_local_bias", model.fuse_local_bias);

    get_if(j, "lr", train.lr);
    get_if(j, "batch_size", train.batch_size);
    get_if(j, "epochs", train.epochs);
    get_if(j, "dropout", train.dropout);
    get_if(j, "lambda_s", train.lambda_s);
    get_if(j, "lambda_r", train.lambda_r);
    get_if(j, "k_folds", train.k_folds);
    get_if(j, "seed", train.seed);
    get_if(j, "multitask", train.flags.multitask);
    get_if(j, "kl_s", train.flags.kl_s);
    get_if(j, "kl_r", train.flags.kl_r);
    get_if(j, "beta1", train.beta1);
    get_if(j, "beta2", train.beta2);
    get_if(j, "adam_eps", train.adam_eps);
    get_if(j, "weight_decay", train.weight_decay);
    get_if(j, "grad_clip", train.grad_clip);
    get_if(j, "clip_norm", train.clip_norm);
    get_if(j, "alpha_repeat", train.scene_prior_params.alpha_repeat);
    get_if(j, "p_respond_addressed", train.response_prior_params.p_respond_addressed);
    get_if(j, "p_none_addressed", train.response_prior_params.p_none_addressed);
    get_if(j, "p_none_unaddressed", train.response_prior_params.p_none_unaddressed);
    get_if(j, "beta_self_turn", train.response_prior_params.beta_self_turn);
}

std::string train_config_to_json(const ModelConfig& model, const TrainConfig& train) {
    json j;
    j["d_model"] = model.d_model;
    j["n_heads"] = model.n_heads;
    j["n_layers"] = model.n_layers;
    j["max_seq"] = model.max_seq;
    j["coupling"] = coupling_name(model.coupling);
    j["fuse_local_bias"] = model.fuse_local_bias;
    j["lr"] = train.lr;
    j["batch_size"] = train.batch_size;
    j["epochs"] = train.epochs;
    j["dropout"] = train.dropout;
    j["lambda_s"] = train.lambda_s;
    j["lambda_r"] = train.lambda_r;
    j["k_folds"] = train.k_folds;
    j["seed"] = train.seed;
    j["multitask"] = train.flags.multitask;
    j["kl_s"] = train.flags.kl_s;
    j["kl_r"] = train.flags.kl_r;
    j["beta1"] = train.beta1;
    j["beta2"] = train.beta2;
    j["adam_eps"] = train.adam_eps;
    j["weight_decay"] = train.weight_decay;
    j["grad_clip"] = train.grad_clip;
    j["clip_norm"] = train.clip_norm;
    j["alpha_repeat"] = train.scene_prior_params.alpha_repeat;
    j["p_respond_addressed"] = train.response_prior_params.p_respond_addressed;
    j["p_none_addressed"] = train.response_prior_params.p_none_addressed;
    j["p_none_unaddressed"] = train.response_prior_params.p_none_unaddressed;
    j["beta_self_turn"] = train.response_prior_params.beta_self_turn;
    return j.dump(2);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace mhri
