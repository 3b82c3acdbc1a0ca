#include "mhri/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mhri/errors.hpp"

namespace mhri {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "MHRICKPT1\n";
constexpr size_t kMagicLen = 10;

void write_u32(std::ostream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint32_t read_u32(std::istream& in, const char* what) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) {
        throw CheckpointError(std::string("truncated checkpoint while reading ") + what +
                              " at offset " + std::to_string(in.tellg()));
    }
    return v;
}

}  // namespace

std::string model_config_to_json(const ModelConfig& config) {
    json j;
    j["d_model"] = config.d_model;
    j["n_heads"] = config.n_heads;
    j["n_layers"] = config.n_layers;
    j["d_v"] = config.d_v;
    j["d_t"] = config.d_t;
    j["max_seq"] = config.max_seq;
    j["dropout"] = config.dropout;
    j["fuse_local_bias"] = config.fuse_local_bias;
    j["coupling"] = coupling_name(config.coupling);
    j["seed"] = config.seed;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j = json::parse(text);
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.d_v = j.at("d_v").get<int>();
    c.d_t = j.at("d_t").get<int>();
    c.max_seq = j.at("max_seq").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.fuse_local_bias = j.at("fuse_local_bias").get<double>();
    c.coupling = coupling_from_name(j.at("coupling").get<std::string>());
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

bool same_architecture(const ModelConfig& a, const ModelConfig& b) {
    return a.d_model == b.d_model && a.n_heads == b.n_heads && a.n_layers == b.n_layers &&
           a.d_v == b.d_v && a.d_t == b.d_t && a.max_seq == b.max_seq;
}

void save_checkpoint(const MhriModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, kMagicLen);

    const std::string header = model_config_to_json(model.config());
    write_u32(out, static_cast<uint32_t>(header.size()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    const auto& params = model.params().params();
    write_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& [name, tensor] : params) {
        write_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(out, static_cast<uint32_t>(tensor.shape().size()));
        for (int d : tensor.shape()) write_u32(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::streamsize>(sizeof(double) * tensor.numel()));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

MhriModel load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected,
                          bool strict) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
        throw CheckpointError("bad magic string at offset 0 in " + path);
    }

    const uint32_t header_len = read_u32(in, "header length");
    std::string header(header_len, '\0');
    in.read(header.data(), header_len);
    if (!in) {
        throw CheckpointError("truncated checkpoint while reading header at offset " +
                              std::to_string(in.tellg()));
    }
    ModelConfig file_config;
    try {
        file_config = model_config_from_json(header);
    } catch (const std::exception& ex) {
        throw CheckpointError(std::string("unreadable checkpoint header: ") + ex.what());
    }

    ModelConfig build_config = file_config;
    if (expected.has_value()) {
        if (strict && !same_architecture(*expected, file_config)) {
            throw CheckpointError("checkpoint architecture mismatch: file has " +
                                  model_config_to_json(file_config) + ", expected " +
                                  model_config_to_json(*expected));
        }
        build_config = *expected;
    }

    MhriModel model(build_config);
    const uint32_t n_params = read_u32(in, "parameter count");
    if (n_params != model.params().params().size()) {
        throw CheckpointError("checkpoint holds " + std::to_string(n_params) +
                              " parameters, model expects " +
                              std::to_string(model.params().params().size()));
    }
    for (uint32_t i = 0; i < n_params; ++i) {
        const uint32_t name_len = read_u32(in, "parameter name length");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (!in) {
            throw CheckpointError("truncated checkpoint while reading parameter name at offset " +
                                  std::to_string(in.tellg()));
        }
        const uint32_t ndim = read_u32(in, "parameter rank");
        std::vector<int> shape;
        for (uint32_t d = 0; d < ndim; ++d) {
            shape.push_back(static_cast<int>(read_u32(in, "parameter shape")));
        }
        if (!model.params().contains(name)) {
            throw CheckpointError("checkpoint parameter '" + name + "' unknown to this model");
        }
        Tensor& dst = model.params().at(name);
        if (dst.shape() != shape) {
            throw CheckpointError("shape mismatch for parameter '" + name + "': checkpoint has " +
                                  shape_to_string(shape) + ", model has " + dst.shape_str());
        }
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(sizeof(double) * dst.numel()));
        if (!in) {
            throw CheckpointError("truncated checkpoint while reading '" + name + "' at offset " +
                                  std::to_string(in.tellg()));
        }
    }
    return model;
}

}  // namespace mhri
