// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/scene_ops.hpp"

#include "splatseg/quat.hpp"
#include "splatseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace splatseg {

GaussianScene augment(const GaussianScene& scene, const AugmentConfig& config, uint64_t seed)
{
    GaussianScene out = scene;
    if (!config.enabled) return out;

    Rng rng(derive_seed(seed, 0x61756721ull));
    // all four draws always happen so toggling one part never reshuffles
    // the others
    const double s = rng.uniform(config.scale_min, config.scale_max);
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    const bool flipX = rng.uniform() < config.flip_probability;
    const bool flipY = rng.uniform() < config.flip_probability;

    const bool rotate = config.rotation_axis >= 0 && config.rotation_axis <= 2;
    std::array<float, 4> qrot{1.f, 0.f, 0.f, 0.f};
    double rot[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    if (rotate) {
        qrot = quat_axis_angle(config.rotation_axis, angle);
        quat_to_rot(qrot, rot);
    }

    for (Gaussian& g : out.gaussians) {
        // order: scale, rotate, mirror
        double p[3] = {double(g.position[0]) * s, double(g.position[1]) * s, double(g.position[2]) * s};
        if (rotate) {
            const double q[3] = {
                rot[0] * p[0] + rot[1] * p[1] + rot[2] * p[2],
                rot[3] * p[0] + rot[4] * p[1] + rot[5] * p[2],
                rot[6] * p[0] + rot[7] * p[1] + rot[8] * p[2]};
            p[0] = q[0];
            p[1] = q[1];
            p[2] = q[2];
            g.rotation = quat_mul(qrot, g.rotation);
        }
        if (flipX) {
            p[0] = -p[0];
            g.rotation = {g.rotation[0], g.rotation[1], -g.rotation[2], -g.rotation[3]};
        }
        if (flipY) {
            p[1] = -p[1];
            g.rotation = {g.rotation[0], -g.rotation[1], g.rotation[2], -g.rotation[3]};
        }
        g.position = {float(p[0]), float(p[1]), float(p[2])};
        for (float& sc : g.scale) sc = float(double(sc) * s);
    }
    return out;
}

namespace {

struct CellKey {
    int32_t x, y, z;
    bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
    size_t operator()(const CellKey& k) const
    {
        uint64_t h = uint64_t(uint32_t(k.x)) * 0x9E3779B185EBCA87ull;
        h ^= uint64_t(uint32_t(k.y)) * 0xC2B2AE3D27D4EB4Full + (h << 6);
        h ^= uint64_t(uint32_t(k.z)) * 0x165667B19E3779F9ull + (h >> 3);
        return size_t(h);
    }
};

inline double dist2(const std::array<float, 3>& a, const std::array<float, 3>& b)
{
    const double dx = double(a[0]) - double(b[0]);
    const double dy = double(a[1]) - double(b[1]);
    const double dz = double(a[2]) - double(b[2]);
    return dx * dx + dy * dy + dz * dz;
}

} // namespace

void transfer_labels(GaussianScene& scene, const LabeledPointCloud& cloud)
{
    if (cloud.size() == 0)
        raise(ErrorKind::EmptyCloud, "cannot transfer labels from an empty cloud");
    if (scene.empty())
        raise(ErrorKind::EmptyScene, "cannot transfer labels onto an empty scene");
    validate(cloud);

    const size_t n = cloud.size();

    // cell size: twice the median nearest-neighbor spacing, estimated
    // from a fixed-stride subsample checked against the full cloud
    const size_t stride = std::max<size_t>(1, n / 512);
    std::vector<double> spacing;
    for (size_t i = 0; i < n; i += stride) {
        double best = std::numeric_limits<double>::infinity();
        for (size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            best = std::min(best, dist2(cloud.points[i], cloud.points[j]));
        }
        if (std::isfinite(best)) spacing.push_back(std::sqrt(best));
    }
    std::sort(spacing.begin(), spacing.end());
    double cell = spacing.empty() ? 0.0 : 2.0 * spacing[spacing.size() / 2];
    if (!(cell > 0.0)) {
        // duplicate-heavy cloud; fall back to a bounding-box heuristic
        std::array<float, 3> lo = cloud.points[0], hi = cloud.points[0];
        for (const auto& p : cloud.points)
            for (int a = 0; a < 3; ++a) {
                lo[size_t(a)] = std::min(lo[size_t(a)], p[size_t(a)]);
                hi[size_t(a)] = std::max(hi[size_t(a)], p[size_t(a)]);
            }
        const double diag = std::sqrt(dist2(lo, hi));
        cell = std::max(1e-6, diag / std::cbrt(double(n)));
    }

    auto cellOf = [cell](const std::array<float, 3>& p) {
        return CellKey{
            int32_t(std::floor(double(p[0]) / cell)),
            int32_t(std::floor(double(p[1]) / cell)),
            int32_t(std::floor(double(p[2]) / cell))};
    };

    std::unordered_map<CellKey, std::vector<int32_t>, CellHash> grid;
    CellKey lo = cellOf(cloud.points[0]), hi = lo;
    for (size_t i = 0; i < n; ++i) {
        const CellKey c = cellOf(cloud.points[i]);
        grid[c].push_back(int32_t(i)); // ascending indices per cell
        lo.x = std::min(lo.x, c.x);
        lo.y = std::min(lo.y, c.y);
        lo.z = std::min(lo.z, c.z);
        hi.x = std::max(hi.x, c.x);
        hi.y = std::max(hi.y, c.y);
        hi.z = std::max(hi.z, c.z);
    }

    for (Gaussian& g : scene.gaussians) {
        const CellKey qc = cellOf(g.position);
        const int hardCap = std::max({std::abs(qc.x - lo.x), std::abs(qc.x - hi.x),
                                std::abs(qc.y - lo.y), std::abs(qc.y - hi.y),
                                std::abs(qc.z - lo.z), std::abs(qc.z - hi.z)})
            + 1;
        double bestD2 = std::numeric_limits<double>::infinity();
        int32_t bestIdx = -1;

        auto scanCell = [&](int32_t cx, int32_t cy, int32_t cz) {
            const auto it = grid.find(CellKey{cx, cy, cz});
            if (it == grid.end()) return;
            for (int32_t idx : it->second) {
                const double d2 = dist2(g.position, cloud.points[size_t(idx)]);
                if (d2 < bestD2 || (d2 == bestD2 && idx < bestIdx)) {
                    bestD2 = d2;
                    bestIdx = idx;
                }
            }
        };

        for (int r = 0; r <= hardCap; ++r) {
            // Chebyshev shell r around the query cell
            if (r == 0) {
                scanCell(qc.x, qc.y, qc.z);
            } else {
                for (int dz = -r; dz <= r; ++dz)
                    for (int dy = -r; dy <= r; ++dy)
                        for (int dx = -r; dx <= r; ++dx) {
                            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                            scanCell(qc.x + dx, qc.y + dy, qc.z + dz);
                        }
            }
            // points in farther shells are at least (shell-1)*cell away;
            // once that bound exceeds the best hit we are done
            if (bestIdx >= 0 && double(r) * cell > std::sqrt(bestD2)) break;
        }

        g.label = cloud.labels[size_t(bestIdx)];
        g.instance = cloud.instances[size_t(bestIdx)];
    }
    scene.has_labels = true;
}

} // namespace splatseg
