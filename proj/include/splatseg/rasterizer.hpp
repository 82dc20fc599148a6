// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_RASTERIZER_HPP
#define SPLATSEG_RASTERIZER_HPP

#include "splatseg/autodiff.hpp"
#include "splatseg/scene.hpp"

#include <memory>

namespace splatseg {

struct RenderConfig {
    /// Isotropic screen-space covariance dilation in px^2, applied to
    /// the diagonal of every projected covariance.
    double cov_dilation = 0.3;
    /// Per-splat alpha ceiling.
    double alpha_clamp = 0.999;
    /// Splat contributions below this alpha are skipped.
    double contrib_floor = 1.0 / 255.0;
    /// Compositing stops once transmittance falls below this.
    double transmittance_stop = 1e-4;
    /// Near plane in meters; splats at or before it are culled.
    double near_clip = 0.01;
    /// Additive compatibility mode: weights are plain alphas with no
    /// transmittance factor and no early termination.
    bool no_transmittance = false;
    int tile_size = 16;
};

/// Screen-space footprint of one Gaussian.
struct Projection {
    std::array<double, 2> mean2d{0.0, 0.0};
    /// Projected covariance (xx, xy, yy), dilation included.
    std::array<double, 3> cov2d{0.0, 0.0, 0.0};
    double depth = 0.0;
    /// 3-sigma radius in pixels.
    double radius = 0.0;
    bool visible = false;
};

Projection project_gaussian(const Gaussian& g, const Camera& camera,
    const RenderConfig& config = {});

enum Channel : unsigned {
    kChannelColor = 1u,
    kChannelSemantic = 2u,
    kChannelDepth = 4u,
    kChannelAlpha = 8u,
    kChannelLabel = 16u,
};

struct PixelContrib {
    int32_t gaussian;
    double weight;
};

struct RenderOutput {
    int height = 0;
    int width = 0;
    int num_gaussians = 0;
    /// h*w*3, only when the color channel was requested.
    std::vector<double> color;
    /// h*w*16, only when the semantic channel was requested.
    std::vector<double> semantic;
    /// h*w, only when the depth channel was requested.
    std::vector<double> depth;
    /// h*w accumulated weight; always filled.
    std::vector<double> alpha;
    /// h*w final transmittance; always filled.
    std::vector<double> transmittance;
    /// h*w, only when the label channel was requested; 65535 where
    /// accumulated alpha is below 0.5.
    std::vector<uint16_t> label;
    /// Per-pixel contributor lists in compositing order (CSR over
    /// pixel-major order), kept only when requested.
    bool contrib_retained = false;
    std::vector<int64_t> contrib_offsets;
    std::vector<PixelContrib> contrib;
};

/// Depth-sorted front-to-back compositing of the scene into the
/// requested channels. Geometry is treated as fixed; gradients flow only
/// through the semantic blend (see render_backward).
RenderOutput render(const GaussianScene& scene, const Camera& camera, unsigned channels,
    const RenderConfig& config = {}, bool retainContrib = false);

/// Adjoint of the semantic blend: maps a (h*w, 16) map gradient onto a
/// (num_gaussians, 16) per-Gaussian semantic gradient using the retained
/// contributor weights. Accumulation runs in pixel-major order.
ad::Tensor render_backward(const RenderOutput& out, const ad::Tensor& gradMap);

/// Per-pixel ground-truth labels: the label of the highest-weight
/// contributor, or 65535 where accumulated alpha is below 0.5.
std::vector<uint16_t> rasterize_labels(const GaussianScene& scene, const Camera& camera,
    const RenderConfig& config = {});

/// Differentiable semantic blend M = sum_i w_i s_i as a graph op. The
/// op keeps the render output (with contributor lists) it was built
/// from; its input is the (num_gaussians, 16) semantic matrix and its
/// output the (h*w, 16) map.
class SemanticBlendOp : public ad::CustomOp {
public:
    explicit SemanticBlendOp(std::shared_ptr<const RenderOutput> out);
    const char* name() const override { return "semantic_blend"; }
    ad::Tensor forward(const std::vector<const ad::Tensor*>& inputs) override;
    void backward(const ad::Tensor& gradOut,
        const std::vector<const ad::Tensor*>& inputs,
        const ad::Tensor& output,
        const std::vector<ad::Tensor*>& inputGrads) override;

private:
    std::shared_ptr<const RenderOutput> mOut;
};

} // namespace splatseg

#endif // SPLATSEG_RASTERIZER_HPP
