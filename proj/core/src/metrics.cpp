#include "mhri/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "mhri/errors.hpp"

namespace mhri {

using nlohmann::json;

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& truth,
                              const std::vector<GazeCategory>& categories,
                              const std::vector<uint8_t>& scored) {
    const size_t n = predictions.size();
    if (truth.size() != n || categories.size() != n || scored.size() != n) {
        throw ContractError("compute_metrics: input vectors must have equal lengths");
    }
    MetricsReport m;
    for (size_t i = 0; i < n; ++i) {
        if (!scored[i]) continue;
        const bool correct = predictions[i] == truth[i];
        if (categories[i] == GazeCategory::Consistency) {
            m.n_aligned += 1;
            m.correct_aligned += correct ? 1 : 0;
        } else {
            m.n_misaligned += 1;
            m.correct_misaligned += correct ? 1 : 0;
        }
    }
    if (m.n_aligned > 0) m.acc_aligned = static_cast<double>(m.correct_aligned) / m.n_aligned;
    if (m.n_misaligned > 0) {
        m.acc_misaligned = static_cast<double>(m.correct_misaligned) / m.n_misaligned;
    }
    const int total = m.n_aligned + m.n_misaligned;
    if (total > 0) {
        m.acc_average = static_cast<double>(m.correct_aligned + m.correct_misaligned) / total;
    }
    return m;
}

namespace {

std::optional<double> mean_of_present(const std::vector<MetricsReport>& folds,
                                      std::optional<double> MetricsReport::* field) {
    double acc = 0.0;
    int count = 0;
    for (const MetricsReport& f : folds) {
        if ((f.*field).has_value()) {
            acc += *(f.*field);
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return acc / count;
}

}  // namespace

MetricsReport aggregate_metrics(const std::vector<MetricsReport>& folds) {
    if (folds.empty()) throw ContractError("aggregate_metrics: no fold metrics given");
    MetricsReport agg;
    agg.acc_aligned = mean_of_present(folds, &MetricsReport::acc_aligned);
    agg.acc_misaligned = mean_of_present(folds, &MetricsReport::acc_misaligned);
    agg.acc_average = mean_of_present(folds, &MetricsReport::acc_average);
    agg.per_decision_seconds = mean_of_present(folds, &MetricsReport::per_decision_seconds);
    for (const MetricsReport& f : folds) {
        agg.n_aligned += f.n_aligned;
        agg.n_misaligned += f.n_misaligned;
        agg.correct_aligned += f.correct_aligned;
        agg.correct_misaligned += f.correct_misaligned;
    }
    return agg;
}

namespace {

json opt_to_json(const std::optional<double>& v) {
    if (v.has_value()) return *v;
    return nullptr;
}

std::optional<double> opt_from_json(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<double>();
}

}  // namespace

std::string metrics_to_json(const MetricsReport& m) {
    json j;
    j["acc_aligned"] = opt_to_json(m.acc_aligned);
    j["acc_average"] = opt_to_json(m.acc_average);
    j["acc_misaligned"] = opt_to_json(m.acc_misaligned);
    j["correct_aligned"] = m.correct_aligned;
    j["correct_misaligned"] = m.correct_misaligned;
    j["n_aligned"] = m.n_aligned;
    j["n_misaligned"] = m.n_misaligned;
    j["per_decision_seconds"] = opt_to_json(m.per_decision_seconds);
    j["per_decision_seconds_std"] = opt_to_json(m.per_decision_seconds_std);
    return j.dump();
}

MetricsReport metrics_from_json(const std::string& text) {
    json j = json::parse(text);
    MetricsReport m;
    m.acc_aligned = opt_from_json(j, "acc_aligned");
    m.acc_average = opt_from_json(j, "acc_average");
    m.acc_misaligned = opt_from_json(j, "acc_misaligned");
    m.correct_aligned = j.at("correct_aligned").get<int>();
    m.correct_misaligned = j.at("correct_misaligned").get<int>();
    m.n_aligned = j.at("n_aligned").get<int>();
    m.n_misaligned = j.at("n_misaligned").get<int>();
    m.per_decision_seconds = opt_from_json(j, "per_decision_seconds");
    m.per_decision_seconds_std = opt_from_json(j, "per_decision_seconds_std");
    return m;
}

namespace {

std::string fmt_acc(const std::optional<double>& v) {
    if (!v.has_value()) return "   -";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%4.1f", *v * 100.0);
    return buf;
}

std::string fmt_time(const std::optional<double>& v) {
    if (!v.has_value()) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4fs", *v);
    return buf;
}

}  // namespace

std::string render_results_table(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::ostringstream os;
    os << "Method                     | AC (G != L) | AC (G = L) | AC (Average) | Per-Decision Time\n";
    os << "---------------------------+-------------+------------+--------------+------------------\n";
    for (const auto& [name, m] : rows) {
        char line[256];
        std::snprintf(line, sizeof(line), "%-27s|        %s |       %s |         %s | %s\n",
                      name.c_str(), fmt_acc(m.acc_misaligned).c_str(),
                      fmt_acc(m.acc_aligned).c_str(), fmt_acc(m.acc_average).c_str(),
                      fmt_time(m.per_decision_seconds).c_str());
        os << line;
    }
    return os.str();
}

}  // namespace mhri
