// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/gradcheck.hpp"

#include "splatseg/rng.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace splatseg::ad {

namespace {

double evaluate(const LossBuilder& build, const std::vector<Tensor>& leaves)
{
    Graph g;
    std::vector<Value> vs;
    vs.reserve(leaves.size());
    for (const Tensor& t : leaves) {
        Tensor copy = t;
        copy.requires_grad = false;
        vs.push_back(g.input(std::move(copy)));
    }
    Value loss = build(g, vs);
    const Tensor& out = g.value(loss);
    if (!out.shape.empty())
        raise(ErrorKind::NonScalarLoss, "grad_check loss must be rank 0");
    return out.data[0];
}

} // namespace

GradCheckReport grad_check(const LossBuilder& build,
    const std::vector<Tensor>& leaves,
    const GradCheckOptions& options)
{
    GradCheckReport report;

    // analytic pass
    std::vector<Tensor> analytic(leaves.size());
    double f0 = 0.0;
    {
        Graph g;
        std::vector<Value> vs;
        vs.reserve(leaves.size());
        for (const Tensor& t : leaves) vs.push_back(g.input(t));
        Value loss = build(g, vs);
        const Tensor& out = g.value(loss);
        if (!out.shape.empty())
            raise(ErrorKind::NonScalarLoss, "grad_check loss must be rank 0");
        f0 = out.data[0];
        g.backward(loss);
        for (size_t i = 0; i < leaves.size(); ++i)
            if (leaves[i].requires_grad) analytic[i] = g.grad(vs[i]);
    }
    if (!std::isfinite(f0)) {
        report.pass = false;
        report.worst = "loss is not finite";
        return report;
    }

    std::vector<Tensor> work = leaves;
    const double h = options.h;

    for (size_t li = 0; li < leaves.size(); ++li) {
        if (!leaves[li].requires_grad) continue;
        const int64_t numel = leaves[li].numel();

        std::vector<int64_t> coords(size_t(numel), 0);
        std::iota(coords.begin(), coords.end(), 0);
        if (options.max_coords_per_tensor > 0 && numel > options.max_coords_per_tensor) {
            Rng rng(derive_seed(options.seed, 0x6772616Dull, li));
            rng.shuffle(coords);
            coords.resize(size_t(options.max_coords_per_tensor));
        }

        for (int64_t ci : coords) {
            const double saved = work[li].data[size_t(ci)];
            work[li].data[size_t(ci)] = saved + h;
            const double fp = evaluate(build, work);
            work[li].data[size_t(ci)] = saved - h;
            const double fm = evaluate(build, work);
            work[li].data[size_t(ci)] = saved;

            const double dplus = (fp - f0) / h;
            const double dminus = (f0 - fm) / h;
            const double disagree = std::abs(dplus - dminus);
            if (disagree > options.kink_rel_tol * std::max({std::abs(dplus), std::abs(dminus), 1e-8})) {
                ++report.skipped_kinks;
                continue;
            }

            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[li].data[size_t(ci)];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            ++report.checked;
            if (!std::isfinite(numeric) || !std::isfinite(a)) {
                report.pass = false;
                report.max_rel_err = std::numeric_limits<double>::infinity();
                report.worst = "non-finite derivative at leaf " + std::to_string(li);
                return report;
            }
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                std::ostringstream os;
                os << "leaf " << li << " coord " << ci << ": analytic=" << a << " numeric=" << numeric
                   << " rel=" << rel;
                report.worst = os.str();
            }
        }
    }

    report.pass = report.max_rel_err <= options.tol;
    return report;
}

} // namespace splatseg::ad
