// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_SCENE_HPP
#define SPLATSEG_SCENE_HPP

#include "splatseg/error.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace splatseg {

/// Width of the per-Gaussian semantic feature vector.
inline constexpr int kSemanticDim = 16;

/// Label value meaning "unlabeled / ignore".
inline constexpr uint16_t kIgnoreLabel = 0xFFFF;

/// One anisotropic 3D Gaussian primitive. Geometry and appearance are
/// stored in float; the semantic vector is the only field the training
/// pipeline updates.
struct Gaussian {
    std::array<float, 3> position{0.f, 0.f, 0.f};
    /// Unit quaternion (w, x, y, z).
    std::array<float, 4> rotation{1.f, 0.f, 0.f, 0.f};
    /// Per-axis standard deviations in meters, strictly positive.
    std::array<float, 3> scale{1.f, 1.f, 1.f};
    /// Base opacity in [0, 1].
    float opacity = 0.5f;
    /// Linear RGB in [0, 1].
    std::array<float, 3> color{0.f, 0.f, 0.f};
    std::array<float, 16> semantic{};
    uint16_t label = kIgnoreLabel;
    uint32_t instance = 0;
};

struct GaussianScene {
    std::vector<Gaussian> gaussians;
    /// True when the semantic vectors carry meaningful values.
    bool has_semantics = false;
    /// True when labels carry ground-truth annotation.
    bool has_labels = false;

    size_t size() const { return gaussians.size(); }
    bool empty() const { return gaussians.empty(); }
};

/// Validates per-Gaussian invariants. Rotations whose norm is within
/// 1e-6 of unit are accepted untouched; deviations up to 1e-3 are
/// renormalized in place; anything worse raises InvariantViolation, as
/// do non-finite fields, non-positive scales and out-of-range
/// opacity/color.
void validate(GaussianScene& scene);

/// Pinhole camera with a world-to-camera rigid transform. Camera space
/// looks down +z with +y pointing down the image.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    /// Row-major 4x4; upper-left 3x3 must be a rotation.
    std::array<double, 16> world_to_camera{
        1, 0, 0, 0,
        0, 1, 0, 0,
        0, 0, 1, 0,
        0, 0, 0, 1};

    /// Transforms a world point to camera space.
    std::array<double, 3> to_camera(const std::array<float, 3>& p) const
    {
        const auto& m = world_to_camera;
        const double x = p[0], y = p[1], z = p[2];
        return {
            m[0] * x + m[1] * y + m[2] * z + m[3],
            m[4] * x + m[5] * y + m[6] * z + m[7],
            m[8] * x + m[9] * y + m[10] * z + m[11]};
    }
};

/// Checks intrinsics and that the rotation block is orthonormal within
/// 1e-6 with an affine last row.
void validate(const Camera& camera);

/// Open-vocabulary class table: names plus one embedding row per class.
/// Rows are kept L2-normalized. unseen[i] marks classes excluded from
/// the training softmax.
struct LabelVocabulary {
    std::vector<std::string> names;
    int dim = 0;
    /// num_classes x dim, row-major.
    std::vector<double> embeddings;
    std::vector<uint8_t> unseen;

    int num_classes() const { return int(names.size()); }
    const double* row(int c) const { return embeddings.data() + size_t(c) * size_t(dim); }
    double* row(int c) { return embeddings.data() + size_t(c) * size_t(dim); }

    bool is_unseen(int c) const { return !unseen.empty() && unseen[size_t(c)] != 0; }
    std::vector<int> seen_classes() const;
    std::vector<int> unseen_classes() const;

    /// Marks the named classes unseen; unknown names raise
    /// IndexOutOfRange.
    void set_unseen(const std::vector<std::string>& unseenNames);
    int index_of(const std::string& name) const; // -1 when absent
};

/// Validates names (non-empty, unique, no whitespace) and normalizes
/// embedding rows; zero rows raise InvariantViolation.
void validate(LabelVocabulary& vocab);

/// Labeled surface samples used as the label-transfer source.
struct LabeledPointCloud {
    std::vector<std::array<float, 3>> points;
    std::vector<uint16_t> labels;
    std::vector<uint32_t> instances;

    size_t size() const { return points.size(); }
};

void validate(const LabeledPointCloud& cloud);

/// Dense per-pixel supervision map (H x W x dim, row-major, pixel-major
/// with channels last).
struct DenseTargetMap {
    int height = 0;
    int width = 0;
    int dim = 0;
    std::vector<float> data;

    const float* at(int y, int x) const
    {
        return data.data() + (size_t(y) * size_t(width) + size_t(x)) * size_t(dim);
    }
    float* at(int y, int x)
    {
        return data.data() + (size_t(y) * size_t(width) + size_t(x)) * size_t(dim);
    }
};

} // namespace splatseg

#endif // SPLATSEG_SCENE_HPP
