// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/gsr.hpp"

#include "splatseg/parallel.hpp"
#include "splatseg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace splatseg {

namespace {

/// Total order on Gaussians by content, independent of array position.
bool contentLess(const Gaussian& a, const Gaussian& b)
{
    auto cmp = [](float x, float y) { return x < y ? -1 : (x > y ? 1 : 0); };
    for (int i = 0; i < 3; ++i)
        if (int c = cmp(a.position[size_t(i)], b.position[size_t(i)])) return c < 0;
    for (int i = 0; i < 4; ++i)
        if (int c = cmp(a.rotation[size_t(i)], b.rotation[size_t(i)])) return c < 0;
    for (int i = 0; i < 3; ++i)
        if (int c = cmp(a.scale[size_t(i)], b.scale[size_t(i)])) return c < 0;
    if (int c = cmp(a.opacity, b.opacity)) return c < 0;
    for (int i = 0; i < 3; ++i)
        if (int c = cmp(a.color[size_t(i)], b.color[size_t(i)])) return c < 0;
    for (int i = 0; i < 16; ++i)
        if (int c = cmp(a.semantic[size_t(i)], b.semantic[size_t(i)])) return c < 0;
    if (a.label != b.label) return a.label < b.label;
    return a.instance < b.instance;
}

} // namespace

VoxelGrid voxelize(const GaussianScene& scene, double voxelSize)
{
    if (!(voxelSize > 0.0))
        raise(ErrorKind::NonPositiveVoxelSize, "voxel size must be positive, got " + std::to_string(voxelSize));
    if (scene.empty())
        raise(ErrorKind::EmptyScene, "cannot voxelize an empty scene");

    VoxelGrid grid;
    grid.voxel_size = voxelSize;

    std::map<std::array<int32_t, 3>, std::vector<int32_t>> cells;
    for (size_t i = 0; i < scene.size(); ++i) {
        const auto& p = scene.gaussians[i].position;
        const std::array<int32_t, 3> c = {
            int32_t(std::floor(double(p[0]) / voxelSize)),
            int32_t(std::floor(double(p[1]) / voxelSize)),
            int32_t(std::floor(double(p[2]) / voxelSize))};
        cells[c].push_back(int32_t(i));
    }

    const int nv = int(cells.size());
    grid.coords.reserve(size_t(nv));
    grid.members.reserve(size_t(nv));
    grid.assign.assign(scene.size(), -1);
    grid.features = ad::Tensor({nv, 8});

    int v = 0;
    for (auto& [coord, list] : cells) {
        std::sort(list.begin(), list.end(), [&](int32_t a, int32_t b) {
            return contentLess(scene.gaussians[size_t(a)], scene.gaussians[size_t(b)]);
        });
        double color[3] = {0, 0, 0}, scale[3] = {0, 0, 0}, opacity = 0;
        for (int32_t gi : list) {
            const Gaussian& g = scene.gaussians[size_t(gi)];
            grid.assign[size_t(gi)] = int32_t(v);
            for (int a = 0; a < 3; ++a) color[a] += g.color[size_t(a)];
            for (int a = 0; a < 3; ++a) scale[a] += g.scale[size_t(a)];
            opacity += g.opacity;
        }
        const double inv = 1.0 / double(list.size());
        double* f = grid.features.data.data() + size_t(v) * 8;
        f[0] = color[0] * inv;
        f[1] = color[1] * inv;
        f[2] = color[2] * inv;
        f[3] = opacity * inv;
        f[4] = std::log(1.0 + double(list.size()));
        f[5] = scale[0] * inv;
        f[6] = scale[1] * inv;
        f[7] = scale[2] * inv;
        grid.coords.push_back(coord);
        grid.members.push_back(std::move(list));
        ++v;
    }

    // submanifold neighbor table over the occupied set
    grid.neighbors.assign(size_t(nv) * 27, -1);
    auto find = [&](const std::array<int32_t, 3>& c) -> int32_t {
        const auto it = std::lower_bound(grid.coords.begin(), grid.coords.end(), c);
        if (it != grid.coords.end() && *it == c) return int32_t(it - grid.coords.begin());
        return -1;
    };
    for (int vi = 0; vi < nv; ++vi)
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int t = (dz + 1) * 9 + (dy + 1) * 3 + (dx + 1);
                    const std::array<int32_t, 3> c = {
                        grid.coords[size_t(vi)][0] + dx,
                        grid.coords[size_t(vi)][1] + dy,
                        grid.coords[size_t(vi)][2] + dz};
                    grid.neighbors[size_t(vi) * 27 + size_t(t)] = find(c);
                }
    return grid;
}

// ---------------------------------------------------------------------------
// custom ops

namespace {

/// Submanifold 3x3x3 convolution over the occupied voxel set: outputs
/// exist only at occupied voxels and taps skip unoccupied neighbors.
class SparseConvOp : public ad::CustomOp {
public:
    explicit SparseConvOp(std::vector<int32_t> neighbors)
        : mNeighbors(std::move(neighbors))
    {
    }

    const char* name() const override { return "sparse_conv3"; }

    ad::Tensor forward(const std::vector<const ad::Tensor*>& inputs) override
    {
        const ad::Tensor& feats = *inputs[0];
        const ad::Tensor& w = *inputs[1];
        const ad::Tensor& b = *inputs[2];
        if (feats.rank() != 2 || w.rank() != 3 || w.shape[0] != 27 || b.rank() != 1)
            raise(ErrorKind::ShapeMismatch, "sparse_conv3 expects feats (v,cin), weights (27,cin,cout), bias (cout)");
        const int nv = feats.rows(), cin = feats.cols();
        const int cout = w.shape[2];
        if (w.shape[1] != cin || b.shape[0] != cout)
            raise(ErrorKind::ShapeMismatch, "sparse_conv3 channel mismatch: feats " + shape_str(feats)
                + " weights " + shape_str(w) + " bias " + shape_str(b));
        if (mNeighbors.size() != size_t(nv) * 27)
            raise(ErrorKind::LengthMismatch, "sparse_conv3 neighbor table does not match the voxel count");

        ad::Tensor out({nv, cout});
        parallel_for(nv, [&](int64_t v0, int64_t v1) {
            for (int64_t v = v0; v < v1; ++v) {
                double* orow = out.data.data() + v * cout;
                for (int co = 0; co < cout; ++co) orow[co] = b.data[size_t(co)];
                for (int t = 0; t < 27; ++t) {
                    const int32_t n = mNeighbors[size_t(v) * 27 + size_t(t)];
                    if (n < 0) continue;
                    const double* frow = feats.data.data() + size_t(n) * size_t(cin);
                    const double* wt = w.data.data() + size_t(t) * size_t(cin) * size_t(cout);
                    for (int ci = 0; ci < cin; ++ci) {
                        const double a = frow[ci];
                        const double* wrow = wt + size_t(ci) * size_t(cout);
                        for (int co = 0; co < cout; ++co) orow[co] += a * wrow[co];
                    }
                }
            }
        });
        return out;
    }

    void backward(const ad::Tensor& gradOut,
        const std::vector<const ad::Tensor*>& inputs,
        const ad::Tensor&,
        const std::vector<ad::Tensor*>& inputGrads) override
    {
        const ad::Tensor& feats = *inputs[0];
        const ad::Tensor& w = *inputs[1];
        const int nv = feats.rows(), cin = feats.cols();
        const int cout = w.shape[2];
        ad::Tensor* dFeat = inputGrads[0];
        ad::Tensor* dW = inputGrads[1];
        ad::Tensor* dB = inputGrads[2];
        // serial, fixed order: voxel-major then tap-major
        for (int v = 0; v < nv; ++v) {
            const double* grow = gradOut.data.data() + size_t(v) * size_t(cout);
            if (dB)
                for (int co = 0; co < cout; ++co) dB->data[size_t(co)] += grow[co];
            for (int t = 0; t < 27; ++t) {
                const int32_t n = mNeighbors[size_t(v) * 27 + size_t(t)];
                if (n < 0) continue;
                const double* frow = feats.data.data() + size_t(n) * size_t(cin);
                const double* wt = w.data.data() + size_t(t) * size_t(cin) * size_t(cout);
                for (int ci = 0; ci < cin; ++ci) {
                    const double a = frow[ci];
                    const double* wrow = wt + size_t(ci) * size_t(cout);
                    double acc = 0.0;
                    for (int co = 0; co < cout; ++co) acc += wrow[co] * grow[co];
                    if (dFeat) dFeat->data[size_t(n) * size_t(cin) + size_t(ci)] += acc;
                    if (dW) {
                        double* dwrow = dW->data.data() + (size_t(t) * size_t(cin) + size_t(ci)) * size_t(cout);
                        for (int co = 0; co < cout; ++co) dwrow[co] += a * grow[co];
                    }
                }
            }
        }
    }

private:
    std::vector<int32_t> mNeighbors;
};

/// Trilinear pull of voxel features onto points. The (voxel index,
/// weight) stencil per point is fixed geometry, captured at build time.
class TrilinearOp : public ad::CustomOp {
public:
    TrilinearOp(const VoxelGrid& grid, const GaussianScene& scene)
    {
        const double vs = grid.voxel_size;
        auto find = [&](const std::array<int32_t, 3>& c) -> int32_t {
            const auto it = std::lower_bound(grid.coords.begin(), grid.coords.end(), c);
            if (it != grid.coords.end() && *it == c) return int32_t(it - grid.coords.begin());
            return -1;
        };
        mOffsets.reserve(scene.size() + 1);
        mOffsets.push_back(0);
        for (size_t i = 0; i < scene.size(); ++i) {
            const auto& p = scene.gaussians[i].position;
            double u[3], f[3];
            int32_t c0[3];
            for (int a = 0; a < 3; ++a) {
                u[a] = double(p[size_t(a)]) / vs - 0.5;
                c0[a] = int32_t(std::floor(u[a]));
                f[a] = u[a] - double(c0[a]);
            }
            std::vector<std::pair<int32_t, double>> taps;
            double wsum = 0.0;
            for (int dz = 0; dz <= 1; ++dz)
                for (int dy = 0; dy <= 1; ++dy)
                    for (int dx = 0; dx <= 1; ++dx) {
                        const int32_t vi = find({c0[0] + dx, c0[1] + dy, c0[2] + dz});
                        if (vi < 0) continue;
                        const double wt = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1])
                            * (dz ? f[2] : 1.0 - f[2]);
                        if (wt <= 0.0) continue;
                        taps.emplace_back(vi, wt);
                        wsum += wt;
                    }
            if (taps.empty() || wsum <= 1e-12) {
                // every Gaussian's own voxel is occupied by construction
                taps.assign(1, {grid.assign[i], 1.0});
                wsum = 1.0;
            }
            for (auto& [vi, wt] : taps) {
                mIndex.push_back(vi);
                mWeight.push_back(wt / wsum);
            }
            mOffsets.push_back(int64_t(mIndex.size()));
        }
    }

    const char* name() const override { return "trilinear_to_points"; }

    ad::Tensor forward(const std::vector<const ad::Tensor*>& inputs) override
    {
        const ad::Tensor& vf = *inputs[0];
        if (vf.rank() != 2)
            raise(ErrorKind::ShapeMismatch, "trilinear_to_points expects (v, c) voxel features");
        const int n = int(mOffsets.size()) - 1;
        const int c = vf.cols();
        ad::Tensor out({n, c});
        parallel_for(n, [&](int64_t i0, int64_t i1) {
            for (int64_t i = i0; i < i1; ++i) {
                double* orow = out.data.data() + i * c;
                for (int64_t e = mOffsets[size_t(i)]; e < mOffsets[size_t(i) + 1]; ++e) {
                    const double wt = mWeight[size_t(e)];
                    const double* vrow = vf.data.data() + size_t(mIndex[size_t(e)]) * size_t(c);
                    for (int j = 0; j < c; ++j) orow[j] += wt * vrow[j];
                }
            }
        });
        return out;
    }

    void backward(const ad::Tensor& gradOut,
        const std::vector<const ad::Tensor*>& inputs,
        const ad::Tensor&,
        const std::vector<ad::Tensor*>& inputGrads) override
    {
        if (!inputGrads[0]) return;
        const int c = inputs[0]->cols();
        const int n = int(mOffsets.size()) - 1;
        for (int i = 0; i < n; ++i) {
            const double* grow = gradOut.data.data() + size_t(i) * size_t(c);
            for (int64_t e = mOffsets[size_t(i)]; e < mOffsets[size_t(i) + 1]; ++e) {
                const double wt = mWeight[size_t(e)];
                double* drow = inputGrads[0]->data.data() + size_t(mIndex[size_t(e)]) * size_t(c);
                for (int j = 0; j < c; ++j) drow[j] += wt * grow[j];
            }
        }
    }

private:
    std::vector<int64_t> mOffsets;
    std::vector<int32_t> mIndex;
    std::vector<double> mWeight;
};

/// Scaled dot-product attention where each output row attends over its
/// own fixed token group. Token order inside a group is canonical, so
/// the softmax reduction order never depends on input ordering.
class GroupedAttentionOp : public ad::CustomOp {
public:
    GroupedAttentionOp(std::vector<std::vector<int32_t>> groups, int heads)
        : mGroups(std::move(groups))
        , mHeads(heads)
    {
    }

    const char* name() const override { return "grouped_attention"; }

    ad::Tensor forward(const std::vector<const ad::Tensor*>& inputs) override
    {
        const ad::Tensor& q = *inputs[0];
        const ad::Tensor& k = *inputs[1];
        const ad::Tensor& v = *inputs[2];
        if (q.rank() != 2 || !same_shape(k, v) || k.rank() != 2 || q.cols() != k.cols())
            raise(ErrorKind::ShapeMismatch, "grouped_attention expects matching (n, d) q/k/v");
        const int n = q.rows(), d = q.cols();
        if (mHeads < 1 || d % mHeads != 0)
            raise(ErrorKind::InvariantViolation,
                "attention heads (" + std::to_string(mHeads) + ") must divide the key width " + std::to_string(d));
        if (int(mGroups.size()) != n)
            raise(ErrorKind::LengthMismatch, "grouped_attention group table does not match the row count");
        const int dh = d / mHeads;
        const double scale = 1.0 / std::sqrt(double(dh));

        ad::Tensor out({n, d});
        parallel_for(n, [&](int64_t i0, int64_t i1) {
            std::vector<double> scores;
            for (int64_t i = i0; i < i1; ++i) {
                const auto& grp = mGroups[size_t(i)];
                scores.resize(grp.size());
                for (int h = 0; h < mHeads; ++h) {
                    const int off = h * dh;
                    const double* qrow = q.data.data() + size_t(i) * size_t(d) + size_t(off);
                    double mx = -1e300;
                    for (size_t j = 0; j < grp.size(); ++j) {
                        const double* krow = k.data.data() + size_t(grp[j]) * size_t(d) + size_t(off);
                        double s = 0.0;
                        for (int a = 0; a < dh; ++a) s += qrow[a] * krow[a];
                        s *= scale;
                        scores[j] = s;
                        mx = std::max(mx, s);
                    }
                    double denom = 0.0;
                    for (size_t j = 0; j < grp.size(); ++j) {
                        scores[j] = std::exp(scores[j] - mx);
                        denom += scores[j];
                    }
                    const double inv = 1.0 / denom;
                    double* orow = out.data.data() + size_t(i) * size_t(d) + size_t(off);
                    for (size_t j = 0; j < grp.size(); ++j) {
                        const double alpha = scores[j] * inv;
                        const double* vrow = v.data.data() + size_t(grp[j]) * size_t(d) + size_t(off);
                        for (int a = 0; a < dh; ++a) orow[a] += alpha * vrow[a];
                    }
                }
            }
        });
        return out;
    }

    void backward(const ad::Tensor& gradOut,
        const std::vector<const ad::Tensor*>& inputs,
        const ad::Tensor&,
        const std::vector<ad::Tensor*>& inputGrads) override
    {
        const ad::Tensor& q = *inputs[0];
        const ad::Tensor& k = *inputs[1];
        const ad::Tensor& v = *inputs[2];
        const int n = q.rows(), d = q.cols();
        const int dh = d / mHeads;
        const double scale = 1.0 / std::sqrt(double(dh));
        ad::Tensor* dQ = inputGrads[0];
        ad::Tensor* dK = inputGrads[1];
        ad::Tensor* dV = inputGrads[2];

        std::vector<double> scores, alphas, dAlpha;
        for (int i = 0; i < n; ++i) {
            const auto& grp = mGroups[size_t(i)];
            scores.resize(grp.size());
            alphas.resize(grp.size());
            dAlpha.resize(grp.size());
            for (int h = 0; h < mHeads; ++h) {
                const int off = h * dh;
                const double* qrow = q.data.data() + size_t(i) * size_t(d) + size_t(off);
                const double* grow = gradOut.data.data() + size_t(i) * size_t(d) + size_t(off);
                double mx = -1e300;
                for (size_t j = 0; j < grp.size(); ++j) {
                    const double* krow = k.data.data() + size_t(grp[j]) * size_t(d) + size_t(off);
                    double s = 0.0;
                    for (int a = 0; a < dh; ++a) s += qrow[a] * krow[a];
                    s *= scale;
                    scores[j] = s;
                    mx = std::max(mx, s);
                }
                double denom = 0.0;
                for (size_t j = 0; j < grp.size(); ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    denom += scores[j];
                }
                const double inv = 1.0 / denom;
                double dot = 0.0;
                for (size_t j = 0; j < grp.size(); ++j) {
                    alphas[j] = scores[j] * inv;
                    const double* vrow = v.data.data() + size_t(grp[j]) * size_t(d) + size_t(off);
                    double da = 0.0;
                    for (int a = 0; a < dh; ++a) da += vrow[a] * grow[a];
                    dAlpha[j] = da;
                    dot += alphas[j] * da;
                }
                for (size_t j = 0; j < grp.size(); ++j) {
                    const int32_t tok = grp[j];
                    if (dV) {
                        double* dvrow = dV->data.data() + size_t(tok) * size_t(d) + size_t(off);
                        for (int a = 0; a < dh; ++a) dvrow[a] += alphas[j] * grow[a];
                    }
                    const double ds = alphas[j] * (dAlpha[j] - dot) * scale;
                    if (dQ) {
                        const double* krow = k.data.data() + size_t(tok) * size_t(d) + size_t(off);
                        double* dqrow = dQ->data.data() + size_t(i) * size_t(d) + size_t(off);
                        for (int a = 0; a < dh; ++a) dqrow[a] += ds * krow[a];
                    }
                    if (dK) {
                        double* dkrow = dK->data.data() + size_t(tok) * size_t(d) + size_t(off);
                        for (int a = 0; a < dh; ++a) dkrow[a] += ds * qrow[a];
                    }
                }
            }
        }
    }

private:
    std::vector<std::vector<int32_t>> mGroups;
    int mHeads;
};

void glorot(ad::Tensor& t, int fanIn, int fanOut, Rng& rng)
{
    const double limit = std::sqrt(6.0 / double(fanIn + fanOut));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
}

} // namespace

// ---------------------------------------------------------------------------
// parameters

std::map<std::string, std::vector<int>> gsr_param_shapes()
{
    return {
        {"embed.w", {8, 16}},
        {"embed.b", {16}},
        {"conv1.w", {27, 16, 32}},
        {"conv1.b", {32}},
        {"conv2.w", {27, 32, 32}},
        {"conv2.b", {32}},
        {"conv3.w", {27, 32, 16}},
        {"conv3.b", {16}},
        {"adapter.wq", {16, 11}},
        {"adapter.wk", {11, 11}},
        {"adapter.wv", {11, 11}},
        {"adapter.mlp0.w", {27, 96}},
        {"adapter.mlp0.b", {96}},
        {"adapter.mlp1.w", {96, 96}},
        {"adapter.mlp1.b", {96}},
        {"adapter.mlp2.w", {96, 16}},
        {"adapter.mlp2.b", {16}},
    };
}

ParamStore init_gsr_params(uint64_t seed)
{
    Rng rng(derive_seed(seed, 0x67737221ull));
    ParamStore store;
    // fixed draw order, biases zero
    auto linear = [&](const std::string& name, int n, int m) {
        ad::Tensor w({n, m});
        glorot(w, n, m, rng);
        store[name + ".w"] = std::move(w);
        store[name + ".b"] = ad::Tensor({m});
    };
    auto conv = [&](const std::string& name, int cin, int cout) {
        ad::Tensor w({27, cin, cout});
        glorot(w, 27 * cin, 27 * cout, rng);
        store[name + ".w"] = std::move(w);
        store[name + ".b"] = ad::Tensor({cout});
    };
    linear("embed", 8, 16);
    conv("conv1", 16, 32);
    conv("conv2", 32, 32);
    conv("conv3", 32, 16);
    for (const char* nm : {"adapter.wq", "adapter.wk", "adapter.wv"}) {
        const int rows = std::string(nm) == "adapter.wq" ? 16 : 11;
        ad::Tensor w({rows, 11});
        glorot(w, rows, 11, rng);
        store[nm] = std::move(w);
    }
    linear("adapter.mlp0", 27, 96);
    linear("adapter.mlp1", 96, 96);
    linear("adapter.mlp2", 96, 16);
    return store;
}

ad::Value ParamBank::at(const std::string& name) const
{
    const auto it = values.find(name);
    if (it == values.end())
        raise(ErrorKind::InvariantViolation, "missing parameter '" + name + "'");
    return it->second;
}

ParamBank bind_params(ad::Graph& g, const ParamStore& store, bool trainable)
{
    ParamBank bank;
    for (const auto& [name, t] : store) {
        ad::Tensor copy = t;
        copy.requires_grad = trainable;
        bank.values[name] = g.input(std::move(copy));
    }
    return bank;
}

// ---------------------------------------------------------------------------
// forward passes

ad::Tensor gaussian_attributes(const GaussianScene& scene)
{
    ad::Tensor attrs({int(scene.size()), 11});
    for (size_t i = 0; i < scene.size(); ++i) {
        const Gaussian& g = scene.gaussians[i];
        double* row = attrs.data.data() + i * 11;
        for (int a = 0; a < 4; ++a) row[a] = g.rotation[size_t(a)];
        for (int a = 0; a < 3; ++a) row[4 + a] = g.color[size_t(a)];
        for (int a = 0; a < 3; ++a) row[7 + a] = g.scale[size_t(a)];
        row[10] = g.opacity;
    }
    return attrs;
}

ad::Value sparse_forward(ad::Graph& g, const VoxelGrid& grid, const ParamBank& params)
{
    const ad::Value feats = g.constant(grid.features);
    const ad::Value e = g.add_rowvec(g.matmul(feats, params.at("embed.w")), params.at("embed.b"));
    auto conv = [&](ad::Value x, const char* name) {
        return g.custom(std::make_shared<SparseConvOp>(grid.neighbors),
            {x, params.at(std::string(name) + ".w"), params.at(std::string(name) + ".b")});
    };
    const ad::Value x1 = g.relu(conv(e, "conv1"));
    const ad::Value x2 = g.add(g.relu(conv(x1, "conv2")), x1);
    return g.relu(conv(x2, "conv3"));
}

ad::Value map_to_points(ad::Graph& g, const VoxelGrid& grid, ad::Value voxelFeats,
    const GaussianScene& scene, const std::string& mode)
{
    if (mode == "nearest") {
        std::vector<int> idx(grid.assign.begin(), grid.assign.end());
        return g.gather_rows(voxelFeats, std::move(idx));
    }
    if (mode == "trilinear")
        return g.custom(std::make_shared<TrilinearOp>(grid, scene), {voxelFeats});
    raise(ErrorKind::UnknownMode, "unknown point mapping mode '" + mode + "'");
}

ad::Value adapter_forward(ad::Graph& g, const VoxelGrid& grid, ad::Value pointFeats,
    const GaussianScene& scene, const ParamBank& params, const GsrConfig& config)
{
    const ad::Value attrs = g.constant(gaussian_attributes(scene));
    ad::Value m;
    if (config.attention_mode == "self") {
        // queries and keys collapse: attending to a single token always
        // yields that token's value row
        m = g.matmul(attrs, params.at("adapter.wv"));
    } else if (config.attention_mode == "voxel-set") {
        const ad::Value q = g.matmul(pointFeats, params.at("adapter.wq"));
        const ad::Value k = g.matmul(attrs, params.at("adapter.wk"));
        const ad::Value v = g.matmul(attrs, params.at("adapter.wv"));
        std::vector<std::vector<int32_t>> groups(scene.size());
        for (size_t i = 0; i < scene.size(); ++i)
            groups[i] = grid.members[size_t(grid.assign[i])];
        m = g.custom(std::make_shared<GroupedAttentionOp>(std::move(groups), config.attention_heads),
            {q, k, v});
    } else {
        raise(ErrorKind::UnknownMode, "unknown attention mode '" + config.attention_mode + "'");
    }

    ad::Value h = g.concat(m, pointFeats, 1);
    h = g.relu(g.add_rowvec(g.matmul(h, params.at("adapter.mlp0.w")), params.at("adapter.mlp0.b")));
    h = g.relu(g.add_rowvec(g.matmul(h, params.at("adapter.mlp1.w")), params.at("adapter.mlp1.b")));
    h = g.add_rowvec(g.matmul(h, params.at("adapter.mlp2.w")), params.at("adapter.mlp2.b"));
    return g.add(h, pointFeats);
}

ad::Value gsr_forward(ad::Graph& g, const GaussianScene& scene, const VoxelGrid& grid,
    const ParamBank& params, const GsrConfig& config)
{
    const ad::Value voxelFeats = sparse_forward(g, grid, params);
    const ad::Value pointFeats = map_to_points(g, grid, voxelFeats, scene, config.tp_mode);
    return adapter_forward(g, grid, pointFeats, scene, params, config);
}

GaussianScene predict_semantics(const GaussianScene& scene, const ParamStore& params,
    const GsrConfig& config)
{
    const VoxelGrid grid = voxelize(scene, config.voxel_size);
    ad::Graph g;
    const ParamBank bank = bind_params(g, params, false);
    const ad::Value s = gsr_forward(g, scene, grid, bank, config);
    const ad::Tensor& sv = g.value(s);

    GaussianScene out = scene;
    for (size_t i = 0; i < out.size(); ++i)
        for (int c = 0; c < kSemanticDim; ++c)
            out.gaussians[i].semantic[size_t(c)] = float(sv.at(int(i), c));
    out.has_semantics = true;
    return out;
}

} // namespace splatseg
