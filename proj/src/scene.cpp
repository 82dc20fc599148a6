// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace splatseg {

namespace {

bool allFinite(const float* v, size_t n)
{
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

[[noreturn]] void badGaussian(size_t index, const std::string& what)
{
    raise(ErrorKind::InvariantViolation, "gaussian " + std::to_string(index) + ": " + what);
}

} // namespace

void validate(GaussianScene& scene)
{
    for (size_t i = 0; i < scene.gaussians.size(); ++i) {
        Gaussian& g = scene.gaussians[i];
        if (!allFinite(g.position.data(), 3) || !allFinite(g.rotation.data(), 4)
            || !allFinite(g.scale.data(), 3) || !std::isfinite(g.opacity)
            || !allFinite(g.color.data(), 3) || !allFinite(g.semantic.data(), 16))
            badGaussian(i, "non-finite field");

        const double n = std::sqrt(double(g.rotation[0]) * g.rotation[0]
            + double(g.rotation[1]) * g.rotation[1]
            + double(g.rotation[2]) * g.rotation[2]
            + double(g.rotation[3]) * g.rotation[3]);
        const double dev = std::abs(n - 1.0);
        if (dev > 1e-3) {
            badGaussian(i, "rotation norm " + std::to_string(n) + " deviates beyond 1e-3");
        } else if (dev > 1e-6) {
            // near-unit rotations are repaired so downstream math can
            // assume unit quaternions; exact ones stay bit-identical
            for (float& c : g.rotation) c = float(c / n);
        }

        for (float s : g.scale)
            if (!(s > 0.f)) badGaussian(i, "non-positive scale");
        if (g.opacity < 0.f || g.opacity > 1.f) badGaussian(i, "opacity outside [0,1]");
        for (float c : g.color)
            if (c < 0.f || c > 1.f) badGaussian(i, "color outside [0,1]");
    }
}

void validate(const Camera& camera)
{
    if (!(camera.fx > 0.0) || !(camera.fy > 0.0))
        raise(ErrorKind::InvariantViolation, "camera focal lengths must be positive");
    if (camera.width < 1 || camera.height < 1)
        raise(ErrorKind::InvariantViolation, "camera resolution must be at least 1x1");
    for (double v : camera.world_to_camera)
        if (!std::isfinite(v)) raise(ErrorKind::InvariantViolation, "non-finite camera transform");

    const auto& m = camera.world_to_camera;
    // R^T R == I within 1e-6
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += m[size_t(k) * 4 + size_t(i)] * m[size_t(k) * 4 + size_t(j)];
            const double expect = i == j ? 1.0 : 0.0;
            if (std::abs(acc - expect) > 1e-6)
                raise(ErrorKind::InvariantViolation, "camera rotation is not orthonormal");
        }
    if (std::abs(m[12]) > 1e-9 || std::abs(m[13]) > 1e-9 || std::abs(m[14]) > 1e-9
        || std::abs(m[15] - 1.0) > 1e-9)
        raise(ErrorKind::InvariantViolation, "camera transform last row must be (0,0,0,1)");
}

std::vector<int> LabelVocabulary::seen_classes() const
{
    std::vector<int> out;
    for (int c = 0; c < num_classes(); ++c)
        if (!is_unseen(c)) out.push_back(c);
    return out;
}

std::vector<int> LabelVocabulary::unseen_classes() const
{
    std::vector<int> out;
    for (int c = 0; c < num_classes(); ++c)
        if (is_unseen(c)) out.push_back(c);
    return out;
}

int LabelVocabulary::index_of(const std::string& name) const
{
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return int(i);
    return -1;
}

void LabelVocabulary::set_unseen(const std::vector<std::string>& unseenNames)
{
    unseen.assign(names.size(), 0);
    for (const std::string& n : unseenNames) {
        const int idx = index_of(n);
        if (idx < 0)
            raise(ErrorKind::IndexOutOfRange, "unseen class '" + n + "' is not in the vocabulary");
        unseen[size_t(idx)] = 1;
    }
}

void validate(LabelVocabulary& vocab)
{
    if (vocab.num_classes() < 2)
        raise(ErrorKind::InvariantViolation, "vocabulary needs at least 2 classes");
    if (vocab.dim < 1)
        raise(ErrorKind::InvariantViolation, "vocabulary embedding dim must be positive");
    if (vocab.embeddings.size() != size_t(vocab.num_classes()) * size_t(vocab.dim))
        raise(ErrorKind::LengthMismatch, "vocabulary embedding table size mismatch");
    if (!vocab.unseen.empty() && vocab.unseen.size() != vocab.names.size())
        raise(ErrorKind::LengthMismatch, "vocabulary unseen mask size mismatch");

    std::set<std::string> seen;
    for (const std::string& n : vocab.names) {
        if (n.empty()) raise(ErrorKind::InvariantViolation, "empty class name");
        for (char ch : n)
            if (std::isspace(static_cast<unsigned char>(ch)))
                raise(ErrorKind::InvariantViolation, "class name '" + n + "' contains whitespace");
        if (!seen.insert(n).second)
            raise(ErrorKind::InvariantViolation, "duplicate class name '" + n + "'");
    }

    for (int c = 0; c < vocab.num_classes(); ++c) {
        double* r = vocab.row(c);
        double sq = 0.0;
        for (int d = 0; d < vocab.dim; ++d) {
            if (!std::isfinite(r[d]))
                raise(ErrorKind::InvariantViolation, "non-finite embedding for class '" + vocab.names[size_t(c)] + "'");
            sq += r[d] * r[d];
        }
        const double n = std::sqrt(sq);
        if (n <= 1e-6)
            raise(ErrorKind::InvariantViolation, "zero embedding for class '" + vocab.names[size_t(c)] + "'");
        if (std::abs(n - 1.0) > 1e-6)
            for (int d = 0; d < vocab.dim; ++d) r[d] /= n;
    }
}

void validate(const LabeledPointCloud& cloud)
{
    if (cloud.labels.size() != cloud.points.size() || cloud.instances.size() != cloud.points.size())
        raise(ErrorKind::LengthMismatch, "point cloud attribute arrays disagree in length");
    for (size_t i = 0; i < cloud.points.size(); ++i)
        if (!allFinite(cloud.points[i].data(), 3))
            raise(ErrorKind::InvariantViolation, "point " + std::to_string(i) + ": non-finite position");
}

} // namespace splatseg
