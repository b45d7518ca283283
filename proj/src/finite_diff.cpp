#include "ssvaerr/finite_diff.hpp"

#include <cmath>

namespace ssvaerr::diff {

namespace {

double eval(const ScalarGraph& graph, const std::vector<Array>& inputs) {
    Tape t;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Array& a : inputs) ids.push_back(t.leaf(a, false));
    NodeId loss = graph(t, ids);
    const Array& v = t.value(loss);
    check(v.size() == 1, "grad_check: graph must produce a scalar");
    return v[0];
}

} // namespace

GradCheckResult grad_check(const ScalarGraph& graph,
                           const std::vector<Array>& inputs,
                           double h,
                           double tol) {
    Tape t;
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Array& a : inputs) ids.push_back(t.leaf(a, true));
    NodeId loss = graph(t, ids);
    t.backward(loss);

    std::vector<Array> analytic;
    analytic.reserve(ids.size());
    for (NodeId id : ids) analytic.push_back(t.grad(id));

    GradCheckResult res;
    std::vector<Array> work = inputs;
    for (std::size_t k = 0; k < work.size(); ++k) {
        for (std::int64_t i = 0; i < work[k].size(); ++i) {
            const double orig = work[k][i];
            work[k][i] = orig + h;
            const double fp = eval(graph, work);
            work[k][i] = orig - h;
            const double fm = eval(graph, work);
            work[k][i] = orig;
            const double num = (fp - fm) / (2.0 * h);
            const double ana = analytic[k][i];
            const double denom = std::max({1.0, std::fabs(ana), std::fabs(num)});
            const double rel = std::fabs(ana - num) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_input = static_cast<int>(k);
                res.worst_index = i;
                res.analytic = ana;
                res.numeric = num;
            }
        }
    }
    res.ok = res.max_rel_err < tol;
    return res;
}

} // namespace ssvaerr::diff
