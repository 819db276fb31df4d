#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fznet {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    double eps = 1e-5;
    double threshold = 1e-4;
    // Self-test of the harness: compares the tanh component against a
    // deliberately wrong analytic derivative, which must be reported as a
    // failure.
    bool inject_fault = false;
};

struct ComponentResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Finite-difference verification of every primitive, layer, and model kind at
// tiny shapes.
std::vector<ComponentResult> run_gradcheck(const GradcheckOptions& opts = {});

}  // namespace fznet
