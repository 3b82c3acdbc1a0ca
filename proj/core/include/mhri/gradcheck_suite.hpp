#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mhri {

struct GradCheckCase {
    std::string name;
    int instances = 0;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckCase> cases;
    bool all_passed = false;
};

/**
 * Full gradient-verification harness: every differentiable operation plus
 * the complete joint loss on a small episode, each compared against central
 * finite differences on `instances` random instances. Elementwise ops are
 * held to 1e-5 max relative error, the full joint loss to 1e-4.
 */
GradCheckReport run_gradcheck_suite(uint64_t seed = 20240611, int instances = 20);

std::string render_gradcheck_report(const GradCheckReport& report);

}  // namespace mhri
