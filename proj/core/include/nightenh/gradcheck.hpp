#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nightenh {

struct GradCheckResult {
    std::string name;
    double max_rel_err;
};

struct GradCheckSummary {
    std::vector<GradCheckResult> results;
    double max_rel_err = 0.0;
};

// Central finite differences (step 1e-3) against the taped gradients, at
// `coords` random coordinates per operation kind, plus the full
// decomposition objective over its three parameter fields.
GradCheckSummary run_gradcheck(uint32_t seed = 0, int coords = 5);

} // namespace nightenh
