// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

// Deliberately naive reference implementations the library results are
// compared against. Everything here trades speed for obviousness.

#ifndef SPLATSEG_TESTS_ORACLES_HPP
#define SPLATSEG_TESTS_ORACLES_HPP

#include "splatseg/rng.hpp"
#include "splatseg/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracles {

inline splatseg::ad::Tensor random_tensor(std::vector<int> shape, splatseg::Rng& rng,
    bool requiresGrad = true, double lo = -1.0, double hi = 1.0)
{
    splatseg::ad::Tensor t(std::move(shape), 0.0, requiresGrad);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Triple-loop matmul, (n,k) x (k,m).
inline std::vector<double> naive_matmul(const std::vector<double>& a,
    const std::vector<double>& b, int n, int k, int m)
{
    std::vector<double> c(size_t(n) * size_t(m), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int l = 0; l < k; ++l)
                acc += a[size_t(i) * size_t(k) + size_t(l)] * b[size_t(l) * size_t(m) + size_t(j)];
            c[size_t(i) * size_t(m) + size_t(j)] = acc;
        }
    return c;
}

/// Cross-entropy of one row of logits via direct exp/log.
inline double scalar_cross_entropy(const std::vector<double>& logits, int target)
{
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double denom = 0.0;
    for (double v : logits) denom += std::exp(v - mx);
    return -(logits[size_t(target)] - mx - std::log(denom));
}

inline double scalar_cosine(const std::vector<double>& a, const std::vector<double>& b)
{
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double den = std::sqrt(na) * std::sqrt(nb);
    return den <= 1e-12 ? 0.0 : dot / den;
}

/// Per-class IoU mean from an explicit confusion matrix. gt ignore
/// entries (65535) are skipped; classes enter the mean when they have
/// ground truth or false positives.
inline double confusion_miou(const std::vector<uint16_t>& pred, const std::vector<uint16_t>& gt,
    int numClasses, const std::vector<int>* restrictTo = nullptr)
{
    std::vector<int64_t> tp(size_t(numClasses), 0), fp(size_t(numClasses), 0),
        fn(size_t(numClasses), 0);
    for (size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == 0xFFFF) continue;
        if (pred[i] == gt[i]) {
            ++tp[gt[i]];
        } else {
            ++fn[gt[i]];
            if (pred[i] != 0xFFFF) ++fp[pred[i]];
        }
    }
    std::vector<bool> allowed(size_t(numClasses), restrictTo == nullptr);
    if (restrictTo)
        for (int c : *restrictTo) allowed[size_t(c)] = true;
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < numClasses; ++c) {
        if (!allowed[size_t(c)]) continue;
        const int64_t support = tp[size_t(c)] + fp[size_t(c)] + fn[size_t(c)];
        if (support == 0) continue;
        sum += double(tp[size_t(c)]) / double(support);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / double(counted);
}

/// Exhaustive nearest neighbor; ties resolved toward the lower index.
inline int brute_nearest(const std::array<float, 3>& q,
    const std::vector<std::array<float, 3>>& points)
{
    double best = std::numeric_limits<double>::infinity();
    int bestIdx = -1;
    for (size_t i = 0; i < points.size(); ++i) {
        const double dx = double(q[0]) - double(points[i][0]);
        const double dy = double(q[1]) - double(points[i][1]);
        const double dz = double(q[2]) - double(points[i][2]);
        const double d2 = dx * dx + dy * dy + dz * dz;
        if (d2 < best) {
            best = d2;
            bestIdx = int(i);
        }
    }
    return bestIdx;
}

/// Front-to-back compositing weights for one pixel given per-splat
/// alphas in depth order.
inline std::vector<double> compositing_weights(const std::vector<double>& alphas)
{
    std::vector<double> w(alphas.size(), 0.0);
    double t = 1.0;
    for (size_t i = 0; i < alphas.size(); ++i) {
        w[i] = alphas[i] * t;
        t *= 1.0 - alphas[i];
    }
    return w;
}

} // namespace oracles

#endif // SPLATSEG_TESTS_ORACLES_HPP
