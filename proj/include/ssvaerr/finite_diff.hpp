#pragma once

#include <functional>
#include <vector>

#include "ssvaerr/array.hpp"
#include "ssvaerr/tape.hpp"

namespace ssvaerr::diff {

// Builds a fresh graph from the given inputs and returns the scalar loss node.
using ScalarGraph = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

struct GradCheckResult {
    bool ok = true;
    double max_rel_err = 0.0;
    int worst_input = -1;
    std::int64_t worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central differences against reverse-mode gradients.
// rel err per element: |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check(const ScalarGraph& graph,
                           const std::vector<Array>& inputs,
                           double h = 1e-5,
                           double tol = 1e-5);

} // namespace ssvaerr::diff
