// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/losses.hpp"

#include "splatseg/rng.hpp"

#include <cmath>

namespace splatseg {

namespace {

void glorot(ad::Tensor& t, int fanIn, int fanOut, Rng& rng)
{
    const double limit = std::sqrt(6.0 / double(fanIn + fanOut));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
}

constexpr int kDecoderHidden = 128;

/// Embedding rows for the chosen classes as a (dim, classes) matrix so a
/// single matmul gives per-class scores.
ad::Tensor embeddingColumns(const LabelVocabulary& vocab, const std::vector<int>& classes)
{
    ad::Tensor e({vocab.dim, int(classes.size())});
    for (size_t c = 0; c < classes.size(); ++c) {
        const double* row = vocab.row(classes[c]);
        for (int d = 0; d < vocab.dim; ++d) e.at(d, int(c)) = row[d];
    }
    return e;
}

/// Same rows kept as (classes, dim).
ad::Tensor embeddingRows(const LabelVocabulary& vocab, const std::vector<int>& classes)
{
    ad::Tensor e({int(classes.size()), vocab.dim});
    for (size_t c = 0; c < classes.size(); ++c) {
        const double* row = vocab.row(classes[c]);
        for (int d = 0; d < vocab.dim; ++d) e.at(int(c), d) = row[d];
    }
    return e;
}

ad::Value classCrossEntropy(ad::Graph& g, ad::Value feats, const std::vector<int>& targets,
    const LabelVocabulary& vocab, const ParamBank& params, const LossConfig& config,
    const std::vector<int>& classes)
{
    const ad::Value logits = text_logits(g, feats, params, "phi", vocab, classes, config.temperature);
    return g.softmax_cross_entropy(logits, targets, config.reduction);
}

} // namespace

ParamStore init_decoder_params(const std::string& prefix, int outDim, uint64_t seed)
{
    if (outDim < 1)
        raise(ErrorKind::DimensionMismatch, "decoder output width must be positive");
    Rng rng(derive_seed(seed, 0x64656321ull, std::hash<std::string>{}(prefix)));
    ParamStore store;
    ad::Tensor w1({kSemanticDim, kDecoderHidden});
    glorot(w1, kSemanticDim, kDecoderHidden, rng);
    store[prefix + ".w1"] = std::move(w1);
    store[prefix + ".b1"] = ad::Tensor({kDecoderHidden});
    ad::Tensor w2({kDecoderHidden, outDim});
    glorot(w2, kDecoderHidden, outDim, rng);
    store[prefix + ".w2"] = std::move(w2);
    store[prefix + ".b2"] = ad::Tensor({outDim});
    return store;
}

std::map<std::string, std::vector<int>> decoder_param_shapes(const std::string& prefix, int outDim)
{
    return {
        {prefix + ".w1", {kSemanticDim, kDecoderHidden}},
        {prefix + ".b1", {kDecoderHidden}},
        {prefix + ".w2", {kDecoderHidden, outDim}},
        {prefix + ".b2", {outDim}},
    };
}

ad::Value decode(ad::Graph& g, ad::Value feats, const ParamBank& params, const std::string& prefix)
{
    const ad::Value h = g.relu(
        g.add_rowvec(g.matmul(feats, params.at(prefix + ".w1")), params.at(prefix + ".b1")));
    return g.add_rowvec(g.matmul(h, params.at(prefix + ".w2")), params.at(prefix + ".b2"));
}

ad::Value text_logits(ad::Graph& g, ad::Value feats, const ParamBank& params,
    const std::string& prefix, const LabelVocabulary& vocab, const std::vector<int>& classes,
    double temperature)
{
    if (classes.empty())
        raise(ErrorKind::ShapeMismatch, "text_logits needs at least one class");
    const ad::Value w2 = params.at(prefix + ".w2");
    const ad::Tensor& w2t = g.value(w2);
    if (w2t.cols() != vocab.dim)
        raise(ErrorKind::DimensionMismatch, "decoder '" + prefix + "' emits width "
            + std::to_string(w2t.cols()) + " but the vocabulary embeds in " + std::to_string(vocab.dim));
    if (!(temperature > 0.0))
        raise(ErrorKind::InvariantViolation, "temperature must be positive");

    // fold the embedding into the decoder: (h*W2 + b2)*E^T == h*(W2*E^T) + b2*E^T,
    // so the wide decoded matrix is never materialized
    const ad::Value h = g.relu(
        g.add_rowvec(g.matmul(feats, params.at(prefix + ".w1")), params.at(prefix + ".b1")));
    const ad::Value a = g.matmul(w2, g.constant(embeddingColumns(vocab, classes)));
    const ad::Value bias = g.matvec(g.constant(embeddingRows(vocab, classes)), params.at(prefix + ".b2"));
    const ad::Value scores = g.add_rowvec(g.matmul(h, a), bias);
    return g.mul_scalar(scores, 1.0 / temperature);
}

ad::Value loss_3d_to_text(ad::Graph& g, ad::Value semantics, const std::vector<uint16_t>& labels,
    const LabelVocabulary& vocab, const ParamBank& params, const LossConfig& config,
    LossBreakdown& breakdown)
{
    const ad::Tensor& s = g.value(semantics);
    if (s.rank() != 2 || s.cols() != kSemanticDim)
        raise(ErrorKind::ShapeMismatch, "semantics must be (n, 16), got " + shape_str(s));
    if (labels.size() != size_t(s.rows()))
        raise(ErrorKind::LengthMismatch, "labels do not match the semantic row count");

    const std::vector<int> seen = vocab.seen_classes();
    std::vector<int> seenPos(size_t(vocab.num_classes()), -1);
    for (size_t i = 0; i < seen.size(); ++i) seenPos[size_t(seen[i])] = int(i);

    std::vector<int> rows, targets;
    for (size_t i = 0; i < labels.size(); ++i) {
        const uint16_t l = labels[i];
        if (l == kIgnoreLabel) continue;
        if (l >= uint16_t(vocab.num_classes()))
            raise(ErrorKind::IndexOutOfRange,
                "label " + std::to_string(l) + " outside the vocabulary of " + std::to_string(vocab.num_classes()));
        if (seenPos[l] < 0) continue; // unseen classes never reach the softmax
        rows.push_back(int(i));
        targets.push_back(seenPos[l]);
    }
    breakdown.gaussians_3d = int64_t(rows.size());
    breakdown.classes_in_softmax = int(seen.size());
    if (rows.empty())
        raise(ErrorKind::NoValidTargets, "every Gaussian label is ignored or unseen");

    const ad::Value valid = g.gather_rows(semantics, std::move(rows));
    return classCrossEntropy(g, valid, targets, vocab, params, config, seen);
}

ad::Value loss_2d_to_text(ad::Graph& g, ad::Value semanticMap, const std::vector<uint16_t>& pixelLabels,
    const LabelVocabulary& vocab, const ParamBank& params, const LossConfig& config,
    LossBreakdown& breakdown)
{
    const ad::Tensor& s = g.value(semanticMap);
    if (s.rank() != 2 || s.cols() != kSemanticDim)
        raise(ErrorKind::ShapeMismatch, "semantic map must be (pixels, 16), got " + shape_str(s));
    if (pixelLabels.size() != size_t(s.rows()))
        raise(ErrorKind::LengthMismatch, "pixel labels do not match the semantic map row count");

    const std::vector<int> seen = vocab.seen_classes();
    std::vector<int> seenPos(size_t(vocab.num_classes()), -1);
    for (size_t i = 0; i < seen.size(); ++i) seenPos[size_t(seen[i])] = int(i);

    std::vector<int> rows, targets;
    for (size_t i = 0; i < pixelLabels.size(); ++i) {
        const uint16_t l = pixelLabels[i];
        if (l == kIgnoreLabel) continue;
        if (l >= uint16_t(vocab.num_classes()))
            raise(ErrorKind::IndexOutOfRange,
                "pixel label " + std::to_string(l) + " outside the vocabulary of " + std::to_string(vocab.num_classes()));
        if (seenPos[l] < 0) continue;
        rows.push_back(int(i));
        targets.push_back(seenPos[l]);
    }
    breakdown.pixels_2d = int64_t(rows.size());
    breakdown.classes_in_softmax = int(seen.size());
    if (rows.empty())
        raise(ErrorKind::NoValidTargets, "every pixel label is ignored or unseen");

    const ad::Value valid = g.gather_rows(semanticMap, std::move(rows));
    return classCrossEntropy(g, valid, targets, vocab, params, config, seen);
}

ad::Value loss_cosine(ad::Graph& g, ad::Value semanticMap, const DenseTargetMap* target,
    const ParamBank& params, const LossConfig& config, LossBreakdown& breakdown)
{
    if (!target) return g.scalar(0.0);
    const ad::Tensor& s = g.value(semanticMap);
    if (s.rank() != 2 || s.cols() != kSemanticDim)
        raise(ErrorKind::ShapeMismatch, "semantic map must be (pixels, 16), got " + shape_str(s));
    const int64_t np = int64_t(target->height) * int64_t(target->width);
    if (np != s.rows())
        raise(ErrorKind::ShapeMismatch, "dense target resolution does not match the rendered map");
    const ad::Tensor& w2 = g.value(params.at("psi.w2"));
    if (w2.cols() != target->dim)
        raise(ErrorKind::DimensionMismatch, "psi decoder emits width " + std::to_string(w2.cols())
            + " but the target embeds in " + std::to_string(target->dim));

    // pixels enter only when both the target row and the decoded row have
    // norm above 1e-8
    std::vector<int> rows;
    for (int64_t p = 0; p < np; ++p) {
        const float* t = target->data.data() + size_t(p) * size_t(target->dim);
        double sq = 0.0;
        for (int d = 0; d < target->dim; ++d) sq += double(t[d]) * double(t[d]);
        if (sq > 1e-16) rows.push_back(int(p));
    }
    if (rows.empty()) {
        breakdown.pixels_cosine = 0;
        return g.scalar(0.0);
    }

    const ad::Value valid = g.gather_rows(semanticMap, std::vector<int>(rows));
    const ad::Value decoded = decode(g, valid, params, "psi");
    const ad::Tensor& dec = g.value(decoded);
    std::vector<int> keep;
    for (int i = 0; i < dec.rows(); ++i) {
        double sq = 0.0;
        for (int d = 0; d < dec.cols(); ++d) sq += dec.at(i, d) * dec.at(i, d);
        if (sq > 1e-16) keep.push_back(i);
    }
    breakdown.pixels_cosine = int64_t(keep.size());
    if (keep.empty()) return g.scalar(0.0);

    ad::Tensor tgt({int(keep.size()), target->dim});
    for (size_t i = 0; i < keep.size(); ++i) {
        const float* t = target->data.data() + size_t(rows[size_t(keep[i])]) * size_t(target->dim);
        for (int d = 0; d < target->dim; ++d) tgt.at(int(i), d) = double(t[d]);
    }

    const ad::Value kept = g.gather_rows(decoded, std::move(keep));
    const ad::Value cos = g.cosine_rows(kept, g.constant(std::move(tgt)));
    return g.mul_scalar(g.mean(cos), -1.0);
}

double eval_loss_3d_to_text(const ad::Tensor& semantics, const std::vector<uint16_t>& labels,
    const LabelVocabulary& vocab, const ParamStore& params, const LossConfig& config)
{
    ad::Graph g;
    const ParamBank bank = bind_params(g, params, false);
    LossBreakdown bd;
    const ad::Value loss = loss_3d_to_text(g, g.constant(semantics), labels, vocab, bank, config, bd);
    return g.value(loss).value();
}

double eval_loss_cosine(const ad::Tensor& semanticMap, const DenseTargetMap& target,
    const ParamStore& params, const LossConfig& config)
{
    ad::Graph g;
    const ParamBank bank = bind_params(g, params, false);
    LossBreakdown bd;
    const ad::Value loss = loss_cosine(g, g.constant(semanticMap), &target, bank, config, bd);
    return g.value(loss).value();
}

} // namespace splatseg
