// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_GRADSUITE_HPP
#define SPLATSEG_GRADSUITE_HPP

#include "splatseg/gradcheck.hpp"
#include "splatseg/gsr.hpp"

#include <cstdint>
#include <string>

namespace splatseg {

/// End-to-end finite-difference check of the whole differentiable
/// pipeline (total loss -> decoders -> semantic blend -> adapter ->
/// sparse network -> embed) on a small random scene.
struct GradSuiteConfig {
    int gaussians = 16;
    int width = 32;
    int height = 24;
    int num_classes = 4;
    /// Vocabulary / dense-target embedding width.
    int vocab_dim = 64;
    /// Include a dense cosine target so the psi decoder is exercised.
    bool dense_target = true;
    GsrConfig gsr{0.25, "nearest", "self", 1};
    double temperature = 1.0;
    double h = 1e-5;
    double tol = 1e-4;
    /// Coordinates sampled per parameter tensor.
    int coords_per_tensor = 6;
    int seeds = 5;
    uint64_t seed = 1;
};

struct GradSuiteReport {
    double max_rel_err = 0.0;
    bool pass = true;
    int64_t checked = 0;
    int64_t skipped_kinks = 0;
    /// Where the largest error sat, e.g. "seed 2: conv2.w".
    std::string worst;
};

GradSuiteReport run_grad_suite(const GradSuiteConfig& config);

} // namespace splatseg

#endif // SPLATSEG_GRADSUITE_HPP
