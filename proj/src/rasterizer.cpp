// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/rasterizer.hpp"

#include "splatseg/parallel.hpp"
#include "splatseg/quat.hpp"

#include <algorithm>
#include <cmath>

namespace splatseg {

Projection project_gaussian(const Gaussian& g, const Camera& camera, const RenderConfig& config)
{
    Projection proj;
    const auto t = camera.to_camera(g.position);
    proj.depth = t[2];
    if (!(t[2] > config.near_clip)) return proj;

    const double invZ = 1.0 / t[2];
    proj.mean2d[0] = camera.fx * t[0] * invZ + camera.cx;
    proj.mean2d[1] = camera.fy * t[1] * invZ + camera.cy;

    // world covariance rotated into camera space
    double cov[9];
    gaussian_covariance(g.rotation, g.scale, cov);
    const auto& m = camera.world_to_camera;
    const double rot[9] = {m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]};
    double rc[9];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += rot[i * 3 + k] * cov[k * 3 + j];
            rc[i * 3 + j] = acc;
        }
    double camCov[9];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += rc[i * 3 + k] * rot[j * 3 + k];
            camCov[i * 3 + j] = acc;
        }

    // perspective Jacobian at the camera-space mean
    const double j00 = camera.fx * invZ;
    const double j02 = -camera.fx * t[0] * invZ * invZ;
    const double j11 = camera.fy * invZ;
    const double j12 = -camera.fy * t[1] * invZ * invZ;

    // cov2d = J * camCov * J^T
    const double a0 = j00 * camCov[0] + j02 * camCov[6];
    const double a1 = j00 * camCov[1] + j02 * camCov[7];
    const double a2 = j00 * camCov[2] + j02 * camCov[8];
    const double b0 = j11 * camCov[3] + j12 * camCov[6];
    const double b1 = j11 * camCov[4] + j12 * camCov[7];
    const double b2 = j11 * camCov[5] + j12 * camCov[8];
    double xx = a0 * j00 + a2 * j02;
    double xy = a1 * j11 + a2 * j12;
    double yy = b1 * j11 + b2 * j12;

    xx += config.cov_dilation;
    yy += config.cov_dilation;
    proj.cov2d = {xx, xy, yy};

    if (!std::isfinite(xx) || !std::isfinite(xy) || !std::isfinite(yy)
        || !std::isfinite(proj.mean2d[0]) || !std::isfinite(proj.mean2d[1]))
        return proj;
    const double det = xx * yy - xy * xy;
    if (!(det > 1e-12)) return proj;

    const double mid = 0.5 * (xx + yy);
    const double disc = std::sqrt(std::max(0.0, mid * mid - det));
    proj.radius = 3.0 * std::sqrt(mid + disc);

    // viewport overlap against pixel centers
    const double r = proj.radius;
    if (proj.mean2d[0] + r < 0.5 || proj.mean2d[0] - r > camera.width - 0.5
        || proj.mean2d[1] + r < 0.5 || proj.mean2d[1] - r > camera.height - 0.5)
        return proj;

    proj.visible = true;
    return proj;
}

namespace {

struct Splat {
    int index;
    double depth;
    double mx, my;
    double ixx, ixy, iyy; // inverse 2d covariance
    double opacity;
    int x0, x1, y0, y1; // inclusive pixel bounds
};

std::vector<Splat> prepareSplats(const GaussianScene& scene, const Camera& camera,
    const RenderConfig& config)
{
    std::vector<Splat> splats;
    splats.reserve(scene.size());
    for (size_t i = 0; i < scene.size(); ++i) {
        const Gaussian& g = scene.gaussians[i];
        const Projection p = project_gaussian(g, camera, config);
        if (!p.visible) continue;
        Splat s;
        s.index = int(i);
        s.depth = p.depth;
        s.mx = p.mean2d[0];
        s.my = p.mean2d[1];
        const double det = p.cov2d[0] * p.cov2d[2] - p.cov2d[1] * p.cov2d[1];
        const double invDet = 1.0 / det;
        s.ixx = p.cov2d[2] * invDet;
        s.ixy = -p.cov2d[1] * invDet;
        s.iyy = p.cov2d[0] * invDet;
        s.opacity = g.opacity;
        const double r = p.radius;
        s.x0 = std::max(0, int(std::ceil(p.mean2d[0] - r - 0.5)));
        s.x1 = std::min(camera.width - 1, int(std::floor(p.mean2d[0] + r - 0.5)));
        s.y0 = std::max(0, int(std::ceil(p.mean2d[1] - r - 0.5)));
        s.y1 = std::min(camera.height - 1, int(std::floor(p.mean2d[1] + r - 0.5)));
        if (s.x0 > s.x1 || s.y0 > s.y1) continue;
        splats.push_back(s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.index < b.index;
    });
    return splats;
}

} // namespace

RenderOutput render(const GaussianScene& scene, const Camera& camera, unsigned channels,
    const RenderConfig& config, bool retainContrib)
{
    validate(camera);
    if ((channels & kChannelSemantic) && !scene.has_semantics)
        raise(ErrorKind::MissingSemantics, "semantic channel requested but the scene has no semantics");
    if ((channels & kChannelLabel) && !scene.has_labels)
        raise(ErrorKind::MissingLabels, "label channel requested but the scene has no labels");

    const int w = camera.width, h = camera.height;
    const size_t np = size_t(w) * size_t(h);
    RenderOutput out;
    out.height = h;
    out.width = w;
    out.num_gaussians = int(scene.size());
    out.alpha.assign(np, 0.0);
    out.transmittance.assign(np, 1.0);
    if (channels & kChannelColor) out.color.assign(np * 3, 0.0);
    if (channels & kChannelSemantic) out.semantic.assign(np * 16, 0.0);
    if (channels & kChannelDepth) out.depth.assign(np, 0.0);
    if (channels & kChannelLabel) out.label.assign(np, kIgnoreLabel);

    const auto splats = prepareSplats(scene, camera, config);

    // tile binning in sorted order
    const int ts = std::max(1, config.tile_size);
    const int tilesX = (w + ts - 1) / ts;
    const int tilesY = (h + ts - 1) / ts;
    std::vector<std::vector<int>> tiles(size_t(tilesX) * size_t(tilesY));
    for (size_t si = 0; si < splats.size(); ++si) {
        const Splat& s = splats[si];
        for (int ty = s.y0 / ts; ty <= s.y1 / ts; ++ty)
            for (int tx = s.x0 / ts; tx <= s.x1 / ts; ++tx)
                tiles[size_t(ty) * size_t(tilesX) + size_t(tx)].push_back(int(si));
    }

    std::vector<std::vector<PixelContrib>> pixelContrib;
    const bool wantContrib = retainContrib || (channels & kChannelLabel);
    if (wantContrib) pixelContrib.resize(np);

    // each pixel is owned by exactly one row chunk
    parallel_for(h, [&](int64_t y0, int64_t y1) {
        for (int64_t y = y0; y < y1; ++y) {
            const int ty = int(y) / ts;
            for (int x = 0; x < w; ++x) {
                const int tx = x / ts;
                const auto& list = tiles[size_t(ty) * size_t(tilesX) + size_t(tx)];
                const size_t px = size_t(y) * size_t(w) + size_t(x);
                const double cxp = x + 0.5, cyp = y + 0.5;
                double T = 1.0;
                double alphaSum = 0.0;
                double depthSum = 0.0;
                for (int si : list) {
                    const Splat& s = splats[size_t(si)];
                    if (x < s.x0 || x > s.x1 || int(y) < s.y0 || int(y) > s.y1) continue;
                    const double dx = cxp - s.mx;
                    const double dy = cyp - s.my;
                    double power = -0.5 * (s.ixx * dx * dx + 2.0 * s.ixy * dx * dy + s.iyy * dy * dy);
                    if (power > 0.0) power = 0.0;
                    double alpha = s.opacity * std::exp(power);
                    if (alpha > config.alpha_clamp) alpha = config.alpha_clamp;
                    if (alpha < config.contrib_floor) continue;
                    const double weight = config.no_transmittance ? alpha : alpha * T;
                    alphaSum += weight;
                    T *= 1.0 - alpha;
                    const Gaussian& g = scene.gaussians[size_t(s.index)];
                    if (!out.color.empty()) {
                        out.color[px * 3 + 0] += weight * g.color[0];
                        out.color[px * 3 + 1] += weight * g.color[1];
                        out.color[px * 3 + 2] += weight * g.color[2];
                    }
                    if (!out.semantic.empty())
                        for (int c = 0; c < 16; ++c)
                            out.semantic[px * 16 + size_t(c)] += weight * g.semantic[size_t(c)];
                    if (!out.depth.empty()) depthSum += weight * s.depth;
                    if (wantContrib) pixelContrib[px].push_back({s.index, weight});
                    if (!config.no_transmittance && T < config.transmittance_stop) break;
                }
                out.alpha[px] = alphaSum;
                out.transmittance[px] = T;
                if (!out.depth.empty())
                    out.depth[px] = alphaSum > 1e-12 ? depthSum / alphaSum : 0.0;
                if (!out.label.empty()) {
                    if (alphaSum >= 0.5) {
                        double best = -1.0;
                        int bestIdx = -1;
                        for (const PixelContrib& pc : pixelContrib[px])
                            if (pc.weight > best) {
                                best = pc.weight;
                                bestIdx = pc.gaussian;
                            }
                        if (bestIdx >= 0)
                            out.label[px] = scene.gaussians[size_t(bestIdx)].label;
                    }
                }
            }
        }
    });

    if (retainContrib) {
        out.contrib_retained = true;
        out.contrib_offsets.resize(np + 1);
        out.contrib_offsets[0] = 0;
        for (size_t p = 0; p < np; ++p)
            out.contrib_offsets[p + 1] = out.contrib_offsets[p] + int64_t(pixelContrib[p].size());
        out.contrib.resize(size_t(out.contrib_offsets[np]));
        for (size_t p = 0; p < np; ++p)
            std::copy(pixelContrib[p].begin(), pixelContrib[p].end(),
                out.contrib.begin() + out.contrib_offsets[p]);
    }
    return out;
}

ad::Tensor render_backward(const RenderOutput& out, const ad::Tensor& gradMap)
{
    if (!out.contrib_retained)
        raise(ErrorKind::ContribNotRetained, "render_backward needs contributor lists; render with retainContrib");
    const int64_t np = int64_t(out.height) * int64_t(out.width);
    if (gradMap.rank() != 2 || int64_t(gradMap.rows()) != np || gradMap.cols() != kSemanticDim)
        raise(ErrorKind::ShapeMismatch, "map gradient must be (pixels, 16), got " + shape_str(gradMap));

    ad::Tensor grad({out.num_gaussians, kSemanticDim});
    for (int64_t p = 0; p < np; ++p) {
        const double* gp = gradMap.data.data() + size_t(p) * 16;
        for (int64_t e = out.contrib_offsets[size_t(p)]; e < out.contrib_offsets[size_t(p) + 1]; ++e) {
            const PixelContrib& pc = out.contrib[size_t(e)];
            double* dst = grad.data.data() + size_t(pc.gaussian) * 16;
            for (int c = 0; c < 16; ++c) dst[c] += pc.weight * gp[c];
        }
    }
    return grad;
}

std::vector<uint16_t> rasterize_labels(const GaussianScene& scene, const Camera& camera,
    const RenderConfig& config)
{
    return render(scene, camera, kChannelLabel, config).label;
}

SemanticBlendOp::SemanticBlendOp(std::shared_ptr<const RenderOutput> out)
    : mOut(std::move(out))
{
    if (!mOut || !mOut->contrib_retained)
        raise(ErrorKind::ContribNotRetained, "semantic blend needs a render output with contributor lists");
}

ad::Tensor SemanticBlendOp::forward(const std::vector<const ad::Tensor*>& inputs)
{
    if (inputs.size() != 1)
        raise(ErrorKind::ShapeMismatch, "semantic blend takes one input");
    const ad::Tensor& s = *inputs[0];
    if (s.rank() != 2 || s.rows() != mOut->num_gaussians || s.cols() != kSemanticDim)
        raise(ErrorKind::ShapeMismatch,
            "semantic blend input must be (num_gaussians, 16), got " + shape_str(s));
    const int64_t np = int64_t(mOut->height) * int64_t(mOut->width);
    ad::Tensor map({int(np), kSemanticDim});
    for (int64_t p = 0; p < np; ++p) {
        double* dst = map.data.data() + size_t(p) * 16;
        for (int64_t e = mOut->contrib_offsets[size_t(p)]; e < mOut->contrib_offsets[size_t(p) + 1]; ++e) {
            const PixelContrib& pc = mOut->contrib[size_t(e)];
            const double* src = s.data.data() + size_t(pc.gaussian) * 16;
            for (int c = 0; c < 16; ++c) dst[c] += pc.weight * src[c];
        }
    }
    return map;
}

void SemanticBlendOp::backward(const ad::Tensor& gradOut,
    const std::vector<const ad::Tensor*>&,
    const ad::Tensor&,
    const std::vector<ad::Tensor*>& inputGrads)
{
    if (!inputGrads[0]) return;
    ad::Tensor g = render_backward(*mOut, gradOut);
    for (size_t i = 0; i < g.data.size(); ++i) inputGrads[0]->data[i] += g.data[i];
}

} // namespace splatseg
