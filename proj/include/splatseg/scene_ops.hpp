// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_SCENE_OPS_HPP
#define SPLATSEG_SCENE_OPS_HPP

#include "splatseg/scene.hpp"

#include <cstdint>

namespace splatseg {

/// Training-time scene augmentation: global scale, a rotation about one
/// world axis through the room's vertical center line, and independent
/// axis mirrors.
struct AugmentConfig {
    bool enabled = true;
    double scale_min = 0.9;
    double scale_max = 1.1;
    /// World axis for the random rotation (0=x, 1=y, 2=z); -1 disables.
    int rotation_axis = 2;
    /// Probability of mirroring across x and (independently) y.
    double flip_probability = 0.5;
};

/// Applies one random draw of the augmentation to a copy of the scene.
/// Draw order is fixed (scale, angle, flip x, flip y), so a seed fully
/// determines the transform.
GaussianScene augment(const GaussianScene& scene, const AugmentConfig& config, uint64_t seed);

/// Assigns each Gaussian the label and instance of its nearest cloud
/// point (squared Euclidean distance, ties broken by the lowest point
/// index). Sets has_labels.
void transfer_labels(GaussianScene& scene, const LabeledPointCloud& cloud);

} // namespace splatseg

#endif // SPLATSEG_SCENE_OPS_HPP
