// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/synth.hpp"

#include "splatseg/quat.hpp"
#include "splatseg/rng.hpp"

#include <cmath>
#include <functional>

namespace splatseg {

namespace {

std::array<float, 3> hsvColor(double h, double s, double v)
{
    const double hh = (h - std::floor(h)) * 6.0;
    const int i = int(hh);
    const double f = hh - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r, g, b;
    switch (i % 6) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    return {float(r), float(g), float(b)};
}

/// Quaternion rotating +z onto the unit normal n.
std::array<float, 4> quatFromZ(const std::array<double, 3>& n)
{
    const double d = n[2];
    if (d > 1.0 - 1e-9) return {1.f, 0.f, 0.f, 0.f};
    if (d < -1.0 + 1e-9) return {0.f, 1.f, 0.f, 0.f};
    double ax = -n[1], ay = n[0];
    const double len = std::sqrt(ax * ax + ay * ay);
    ax /= len;
    ay /= len;
    const double half = 0.5 * std::acos(d);
    const double s = std::sin(half);
    return {float(std::cos(half)), float(ax * s), float(ay * s), 0.f};
}

std::array<double, 3> unitSphere(Rng& rng)
{
    while (true) {
        const double x = rng.normal(), y = rng.normal(), z = rng.normal();
        const double n = std::sqrt(x * x + y * y + z * z);
        if (n > 1e-9) return {x / n, y / n, z / n};
    }
}

struct SampledPoint {
    std::array<float, 3> position;
    std::array<float, 4> rotation;
};

/// One labeled surface patch with a position/orientation sampler.
struct Patch {
    double area = 0.0;
    uint16_t label = 0;
    uint32_t instance = 0;
    std::array<float, 3> color{};
    double diskRadius = 0.1;
    std::function<SampledPoint(Rng&)> sample;
};

/// Splits total into parts proportional to weights with an exact sum.
std::vector<int> proportionalCounts(const std::vector<double>& weights, int total)
{
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    std::vector<int> counts(weights.size(), 0);
    int assigned = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
        counts[i] = int(std::floor(double(total) * weights[i] / wsum));
        assigned += counts[i];
    }
    // hand leftovers out by largest fractional part, ties by index
    std::vector<std::pair<double, size_t>> rema;
    for (size_t i = 0; i < weights.size(); ++i)
        rema.emplace_back(double(total) * weights[i] / wsum - counts[i], i);
    std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int r = 0; r < total - assigned; ++r) ++counts[rema[size_t(r)].second];
    return counts;
}

} // namespace

Camera look_at_camera(const std::array<double, 3>& eye, const std::array<double, 3>& target,
    int width, int height, double fovDeg)
{
    double f[3] = {target[0] - eye[0], target[1] - eye[1], target[2] - eye[2]};
    const double fn = std::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
    if (fn < 1e-12)
        raise(ErrorKind::InvariantViolation, "camera eye and target coincide");
    for (double& v : f) v /= fn;

    // x = f x up, y = f x x gives +y pointing down the image
    const double up[3] = {0.0, 0.0, 1.0};
    double x[3] = {
        f[1] * up[2] - f[2] * up[1],
        f[2] * up[0] - f[0] * up[2],
        f[0] * up[1] - f[1] * up[0]};
    const double xn = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
    if (xn < 1e-9)
        raise(ErrorKind::InvariantViolation, "camera looks straight along the vertical");
    for (double& v : x) v /= xn;
    const double y[3] = {
        f[1] * x[2] - f[2] * x[1],
        f[2] * x[0] - f[0] * x[2],
        f[0] * x[1] - f[1] * x[0]};

    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = 0.5 * double(width) / std::tan(0.5 * fovDeg * M_PI / 180.0);
    cam.fy = cam.fx;
    cam.cx = 0.5 * double(width);
    cam.cy = 0.5 * double(height);
    const double* axes[3] = {x, y, f};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.world_to_camera[size_t(r) * 4 + size_t(c)] = axes[r][c];
        cam.world_to_camera[size_t(r) * 4 + 3] =
            -(axes[r][0] * eye[0] + axes[r][1] * eye[1] + axes[r][2] * eye[2]);
    }
    cam.world_to_camera[12] = cam.world_to_camera[13] = cam.world_to_camera[14] = 0.0;
    cam.world_to_camera[15] = 1.0;
    validate(cam);
    return cam;
}

std::vector<Camera> orbit_cameras(const SynthSpec& spec, int count, int width, int height,
    double fovDeg)
{
    if (count < 1)
        raise(ErrorKind::InvariantViolation, "camera count must be positive");
    const double radius = 0.38 * std::min(spec.extent[0], spec.extent[1]);
    const double eyeZ = 0.72 * spec.extent[2];
    const std::array<double, 3> target{0.0, 0.0, 0.30 * spec.extent[2]};
    std::vector<Camera> cams;
    cams.reserve(size_t(count));
    for (int k = 0; k < count; ++k) {
        const double theta = 2.0 * M_PI * double(k) / double(count);
        cams.push_back(look_at_camera(
            {radius * std::cos(theta), radius * std::sin(theta), eyeZ}, target, width, height, fovDeg));
    }
    return cams;
}

SynthResult synth_scene(const SynthSpec& spec)
{
    if (spec.classes.empty())
        raise(ErrorKind::EmptySpec, "synthesis spec has no classes");
    if (spec.classes.size() < 2)
        raise(ErrorKind::InvariantViolation, "synthesis needs the shell class plus at least one object class");
    if (spec.gaussians_per_class < 1)
        raise(ErrorKind::InvariantViolation, "gaussians_per_class must be positive");
    for (double e : spec.extent)
        if (!(e > 0.0)) raise(ErrorKind::InvariantViolation, "room extent must be positive");
    if (!(spec.cloud_density > 0.0))
        raise(ErrorKind::InvariantViolation, "cloud density must be positive");

    Rng rng(derive_seed(spec.seed, 0x73796E74ull));
    const int numClasses = int(spec.classes.size());
    const double ex = spec.extent[0], ey = spec.extent[1], ez = spec.extent[2];
    const double hx = 0.5 * ex, hy = 0.5 * ey;

    std::vector<Patch> patches;
    std::vector<int> patchCounts;

    // class colors on a hue wheel; jitter keeps appearance informative
    // without making classes trivially equal-colored
    std::vector<std::array<float, 3>> classColor(size_t(numClasses), {0.f, 0.f, 0.f});
    for (int c = 0; c < numClasses; ++c)
        classColor[size_t(c)] = hsvColor(double(c) / double(numClasses), 0.7, 0.85);

    // shell: floor plus four walls, one patch each
    {
        struct Rect {
            int fixedAxis;
            double fixedValue;
            double normalSign;
        };
        const Rect rects[5] = {
            {2, 0.0, 1.0},   // floor
            {0, -hx, 1.0},   // x = -hx wall, normal +x
            {0, hx, -1.0},   // x = +hx wall, normal -x
            {1, -hy, 1.0},
            {1, hy, -1.0},
        };
        std::vector<double> areas;
        for (const Rect& r : rects)
            areas.push_back(r.fixedAxis == 2 ? ex * ey : (r.fixedAxis == 0 ? ey * ez : ex * ez));
        const std::vector<int> counts = proportionalCounts(areas, spec.gaussians_per_class);
        for (int p = 0; p < 5; ++p) {
            const Rect r = rects[p];
            Patch patch;
            patch.area = areas[size_t(p)];
            patch.label = 0;
            patch.instance = 0;
            patch.color = classColor[0];
            std::array<double, 3> normal{0, 0, 0};
            normal[size_t(r.fixedAxis)] = r.normalSign;
            const std::array<float, 4> rot = quatFromZ(normal);
            patch.sample = [r, rot, hx, hy, ez](Rng& rr) {
                SampledPoint sp;
                double p3[3];
                p3[0] = rr.uniform(-hx, hx);
                p3[1] = rr.uniform(-hy, hy);
                p3[2] = rr.uniform(0.0, ez);
                p3[r.fixedAxis] = r.fixedValue;
                sp.position = {float(p3[0]), float(p3[1]), float(p3[2])};
                sp.rotation = rot;
                return sp;
            };
            patches.push_back(std::move(patch));
            patchCounts.push_back(counts[size_t(p)]);
        }
    }

    // object classes: one or two clusters each, boxes and ellipsoids
    uint32_t nextInstance = 1;
    for (int c = 1; c < numClasses; ++c) {
        const int clusters = spec.gaussians_per_class >= 8 ? 2 : 1;
        const std::vector<int> counts =
            proportionalCounts(std::vector<double>(size_t(clusters), 1.0), spec.gaussians_per_class);
        for (int j = 0; j < clusters; ++j) {
            const double margin = spec.object_scale + 0.3;
            const std::array<double, 3> center{
                rng.uniform(-hx + margin, hx - margin),
                rng.uniform(-hy + margin, hy - margin),
                rng.uniform(spec.object_scale + 0.1, 0.6 * ez)};
            std::array<double, 3> half;
            for (double& h : half) h = spec.object_scale * rng.uniform(0.8, 1.2);
            const std::array<float, 4> yaw = quat_axis_angle(2, rng.uniform(0.0, 2.0 * M_PI));
            const bool box = ((c + j) % 2) == 0;

            Patch patch;
            patch.label = uint16_t(c);
            patch.instance = nextInstance++;
            patch.color = classColor[size_t(c)];
            if (box) {
                patch.area = 8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2]);
                patch.sample = [center, half, yaw](Rng& rr) {
                    // face picked by area, then uniform on it
                    const double areas[3] = {half[1] * half[2], half[0] * half[2], half[0] * half[1]};
                    const double total = areas[0] + areas[1] + areas[2];
                    double pick = rr.uniform(0.0, total);
                    int axis = 0;
                    while (axis < 2 && pick > areas[axis]) {
                        pick -= areas[axis];
                        ++axis;
                    }
                    const double sign = rr.uniform() < 0.5 ? -1.0 : 1.0;
                    double local[3];
                    for (int a = 0; a < 3; ++a) local[a] = rr.uniform(-half[size_t(a)], half[size_t(a)]);
                    local[axis] = sign * half[size_t(axis)];
                    std::array<double, 3> normal{0, 0, 0};
                    normal[size_t(axis)] = sign;
                    // rotate local frame by the cluster yaw
                    double rot[9];
                    quat_to_rot(yaw, rot);
                    SampledPoint sp;
                    for (int a = 0; a < 3; ++a)
                        sp.position[size_t(a)] = float(center[size_t(a)] + rot[a * 3] * local[0]
                            + rot[a * 3 + 1] * local[1] + rot[a * 3 + 2] * local[2]);
                    sp.rotation = quat_mul(yaw, quatFromZ(normal));
                    return sp;
                };
            } else {
                const double p = 1.6075; // Thomsen's ellipsoid area approximation
                const double ap = std::pow(half[0], p), bp = std::pow(half[1], p), cp = std::pow(half[2], p);
                patch.area = 4.0 * M_PI * std::pow((ap * bp + ap * cp + bp * cp) / 3.0, 1.0 / p);
                patch.sample = [center, half, yaw](Rng& rr) {
                    const std::array<double, 3> d = unitSphere(rr);
                    double local[3] = {d[0] * half[0], d[1] * half[1], d[2] * half[2]};
                    double rot[9];
                    quat_to_rot(yaw, rot);
                    SampledPoint sp;
                    for (int a = 0; a < 3; ++a)
                        sp.position[size_t(a)] = float(center[size_t(a)] + rot[a * 3] * local[0]
                            + rot[a * 3 + 1] * local[1] + rot[a * 3 + 2] * local[2]);
                    sp.rotation = quat_mul(yaw, quatFromZ(d));
                    return sp;
                };
            }
            patches.push_back(std::move(patch));
            patchCounts.push_back(counts[size_t(j)]);
        }
    }

    // disk radius per patch from its share of surface area
    for (size_t p = 0; p < patches.size(); ++p) {
        const int n = std::max(1, patchCounts[p]);
        const double r = std::sqrt(patches[p].area / double(n) / M_PI);
        patches[p].diskRadius = std::min(0.8, std::max(0.03, r * 1.45));
    }

    SynthResult result;
    result.scene.has_labels = true;
    result.scene.has_semantics = false;
    for (size_t p = 0; p < patches.size(); ++p) {
        const Patch& patch = patches[p];
        for (int i = 0; i < patchCounts[p]; ++i) {
            const SampledPoint sp = patch.sample(rng);
            Gaussian g;
            g.position = sp.position;
            g.rotation = sp.rotation;
            const double r = patch.diskRadius;
            g.scale = {float(r * 0.6), float(r * 0.6), 0.02f};
            g.opacity = float(rng.uniform(0.85, 0.98));
            for (int a = 0; a < 3; ++a) {
                double col = double(patch.color[size_t(a)]) + rng.uniform(-spec.color_noise, spec.color_noise);
                g.color[size_t(a)] = float(std::min(1.0, std::max(0.0, col)));
            }
            g.label = patch.label;
            g.instance = patch.instance;
            result.scene.gaussians.push_back(g);
        }
    }

    // denser cloud from the same surfaces
    for (size_t p = 0; p < patches.size(); ++p) {
        const Patch& patch = patches[p];
        const int n = int(std::lround(spec.cloud_density * double(patchCounts[p])));
        for (int i = 0; i < n; ++i) {
            const SampledPoint sp = patch.sample(rng);
            result.cloud.points.push_back(sp.position);
            result.cloud.labels.push_back(patch.label);
            result.cloud.instances.push_back(patch.instance);
        }
    }

    validate(result.scene);
    validate(result.cloud);
    return result;
}

LabelVocabulary orthonormal_vocabulary(const std::vector<std::string>& classes, int dim,
    uint64_t seed)
{
    const int m = int(classes.size());
    if (m < 2)
        raise(ErrorKind::InvariantViolation, "vocabulary needs at least 2 classes");
    if (dim < m)
        raise(ErrorKind::DimensionMismatch,
            "cannot fit " + std::to_string(m) + " orthonormal rows in dimension " + std::to_string(dim));

    Rng rng(derive_seed(seed, 0x766F6361ull));
    LabelVocabulary vocab;
    vocab.names = classes;
    vocab.dim = dim;
    vocab.embeddings.assign(size_t(m) * size_t(dim), 0.0);

    // Gram-Schmidt over random Gaussian rows
    for (int c = 0; c < m; ++c) {
        double* row = vocab.row(c);
        while (true) {
            for (int d = 0; d < dim; ++d) row[d] = rng.normal();
            for (int o = 0; o < c; ++o) {
                const double* prev = vocab.row(o);
                double dot = 0.0;
                for (int d = 0; d < dim; ++d) dot += row[d] * prev[d];
                for (int d = 0; d < dim; ++d) row[d] -= dot * prev[d];
            }
            double sq = 0.0;
            for (int d = 0; d < dim; ++d) sq += row[d] * row[d];
            if (sq > 1e-12) {
                const double inv = 1.0 / std::sqrt(sq);
                for (int d = 0; d < dim; ++d) row[d] *= inv;
                break;
            }
        }
    }
    validate(vocab);
    return vocab;
}

} // namespace splatseg
