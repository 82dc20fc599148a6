// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_SYNTH_HPP
#define SPLATSEG_SYNTH_HPP

#include "splatseg/scene.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace splatseg {

/// Recipe for a synthetic room scene. The room occupies
/// x,y in [-extent/2, extent/2] and z in [0, extent_z]; class 0 is the
/// room shell (floor and walls, instance 0), every further class gets
/// its own object clusters.
struct SynthSpec {
    std::array<double, 3> extent{6.0, 6.0, 3.0};
    /// Class names; at least 2 (shell + one object class).
    std::vector<std::string> classes;
    /// Exact number of Gaussians per class.
    int gaussians_per_class = 160;
    /// Point cloud sampling density relative to the Gaussian count.
    double cloud_density = 4.0;
    /// Object cluster radius in meters.
    double object_scale = 0.35;
    /// Per-Gaussian color jitter amplitude.
    double color_noise = 0.05;
    uint64_t seed = 1;
};

struct SynthResult {
    GaussianScene scene;
    LabeledPointCloud cloud;
};

/// Builds the scene (labeled, without semantics) plus a denser labeled
/// point cloud sampled from the same surfaces.
SynthResult synth_scene(const SynthSpec& spec);

/// count look-at cameras orbiting the room center at fixed elevation.
std::vector<Camera> orbit_cameras(const SynthSpec& spec, int count, int width, int height,
    double fovDeg = 60.0);

/// A camera looking from eye toward target with +z forward and +y down.
Camera look_at_camera(const std::array<double, 3>& eye, const std::array<double, 3>& target,
    int width, int height, double fovDeg);

/// An orthonormal embedding table (num_classes x dim) for the given
/// class names: deterministic random rotations of the first
/// num_classes basis vectors.
LabelVocabulary orthonormal_vocabulary(const std::vector<std::string>& classes, int dim,
    uint64_t seed);

} // namespace splatseg

#endif // SPLATSEG_SYNTH_HPP
