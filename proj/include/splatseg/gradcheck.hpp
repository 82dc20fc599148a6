// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_GRADCHECK_HPP
#define SPLATSEG_GRADCHECK_HPP

#include "splatseg/autodiff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace splatseg::ad {

struct GradCheckOptions {
    double h = 1e-5;
    double tol = 1e-4;
    /// 0 checks every coordinate; otherwise a seeded subsample of at most
    /// this many coordinates per leaf tensor.
    int max_coords_per_tensor = 0;
    uint64_t seed = 0;
    /// Coordinates where the one-sided difference quotients disagree by
    /// more than this relative factor sit on a non-smooth point (relu
    /// kink, compositing clamp) and are excluded from the comparison.
    double kink_rel_tol = 0.25;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = true;
    int checked = 0;
    int skipped_kinks = 0;
    std::string worst;
};

/// Builder receives a fresh graph plus one leaf Value per entry of the
/// leaves vector (in order) and returns the scalar loss. It must be a
/// pure function of the leaf tensors. Only leaves with requires_grad set
/// are perturbed and compared.
using LossBuilder = std::function<Value(Graph&, const std::vector<Value>&)>;

GradCheckReport grad_check(const LossBuilder& build,
    const std::vector<Tensor>& leaves,
    const GradCheckOptions& options = {});

} // namespace splatseg::ad

#endif // SPLATSEG_GRADCHECK_HPP
