// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/metrics.hpp"

#include "splatseg/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace splatseg {

Protocol parse_protocol(const std::string& name)
{
    if (name == "csa3d") return Protocol::Csa3d;
    if (name == "csa2d") return Protocol::Csa2d;
    if (name == "ova3d") return Protocol::Ova3d;
    if (name == "ova2d") return Protocol::Ova2d;
    if (name == "nva") return Protocol::Nva;
    if (name == "cda3d") return Protocol::Cda3d;
    if (name == "cda2d") return Protocol::Cda2d;
    raise(ErrorKind::UnknownMode, "unknown protocol '" + name + "'");
}

const char* to_string(Protocol protocol)
{
    switch (protocol) {
        case Protocol::Csa3d: return "csa3d";
        case Protocol::Csa2d: return "csa2d";
        case Protocol::Ova3d: return "ova3d";
        case Protocol::Ova2d: return "ova2d";
        case Protocol::Nva: return "nva";
        case Protocol::Cda3d: return "cda3d";
        case Protocol::Cda2d: return "cda2d";
    }
    return "unknown";
}

namespace {

/// Eager full-vocabulary logits; rows = items, cols = classes.
ad::Tensor classLogits(const ad::Tensor& feats, const LabelVocabulary& vocab,
    const ParamStore& params, double temperature)
{
    ad::Graph g;
    const ParamBank bank = bind_params(g, params, false);
    std::vector<int> all(size_t(vocab.num_classes()), 0);
    for (int c = 0; c < vocab.num_classes(); ++c) all[size_t(c)] = c;
    const ad::Value logits = text_logits(g, g.constant(feats), bank, "phi", vocab, all, temperature);
    return g.value(logits);
}

std::vector<uint16_t> argmaxRows(const ad::Tensor& logits)
{
    const int n = logits.rows(), m = logits.cols();
    std::vector<uint16_t> out(size_t(n), 0);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double bv = logits.at(i, 0);
        for (int j = 1; j < m; ++j)
            if (logits.at(i, j) > bv) {
                bv = logits.at(i, j);
                best = j;
            }
        out[size_t(i)] = uint16_t(best);
    }
    return out;
}

} // namespace

std::vector<uint16_t> classify_gaussians(const GaussianScene& scene, const LabelVocabulary& vocab,
    const ParamStore& params, double temperature)
{
    if (!scene.has_semantics)
        raise(ErrorKind::MissingSemantics, "classification needs predicted semantics");
    if (scene.empty()) return {};
    ad::Tensor feats({int(scene.size()), kSemanticDim});
    for (size_t i = 0; i < scene.size(); ++i)
        for (int c = 0; c < kSemanticDim; ++c)
            feats.at(int(i), c) = scene.gaussians[i].semantic[size_t(c)];
    return argmaxRows(classLogits(feats, vocab, params, temperature));
}

std::vector<uint16_t> classify_pixels(const std::vector<double>& semanticMap,
    const std::vector<double>& alpha, const LabelVocabulary& vocab, const ParamStore& params,
    double temperature)
{
    if (semanticMap.size() != alpha.size() * size_t(kSemanticDim))
        raise(ErrorKind::LengthMismatch, "semantic map and alpha map disagree in pixel count");
    const int np = int(alpha.size());
    if (np == 0) return {};
    ad::Tensor feats({np, kSemanticDim});
    std::copy(semanticMap.begin(), semanticMap.end(), feats.data.begin());
    std::vector<uint16_t> out = argmaxRows(classLogits(feats, vocab, params, temperature));
    for (int p = 0; p < np; ++p)
        if (alpha[size_t(p)] < 0.5) out[size_t(p)] = kIgnoreLabel;
    return out;
}

MetricReport miou(const std::vector<uint16_t>& pred, const std::vector<uint16_t>& gt,
    const LabelVocabulary& vocab, const std::vector<int>* restrictTo)
{
    if (pred.size() != gt.size())
        raise(ErrorKind::LengthMismatch, "prediction and ground truth disagree in length");
    const int m = vocab.num_classes();

    std::vector<int64_t> tp(size_t(m), 0), fp(size_t(m), 0), fn(size_t(m), 0);
    int64_t evaluated = 0;
    for (size_t i = 0; i < gt.size(); ++i) {
        const uint16_t g = gt[i];
        if (g == kIgnoreLabel) continue;
        if (g >= uint16_t(m))
            raise(ErrorKind::IndexOutOfRange, "ground-truth label " + std::to_string(g) + " outside the vocabulary");
        ++evaluated;
        const uint16_t p = pred[i];
        if (p == kIgnoreLabel) {
            ++fn[g]; // a dropped prediction still misses its class
            continue;
        }
        if (p >= uint16_t(m))
            raise(ErrorKind::IndexOutOfRange, "predicted label " + std::to_string(p) + " outside the vocabulary");
        if (p == g) {
            ++tp[g];
        } else {
            ++fn[g];
            ++fp[p];
        }
    }

    std::vector<uint8_t> allowed(size_t(m), 1);
    if (restrictTo) {
        allowed.assign(size_t(m), 0);
        for (int c : *restrictTo) allowed[size_t(c)] = 1;
    }

    MetricReport report;
    report.evaluated = evaluated;
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < m; ++c) {
        ClassStat st;
        st.id = c;
        st.name = vocab.names[size_t(c)];
        st.tp = tp[size_t(c)];
        st.fp = fp[size_t(c)];
        st.fn = fn[size_t(c)];
        const int64_t denom = st.tp + st.fp + st.fn;
        st.counted = allowed[size_t(c)] && denom > 0;
        st.iou = denom > 0 ? double(st.tp) / double(denom) : 0.0;
        if (st.counted) {
            sum += st.iou;
            ++counted;
        }
        report.per_class.push_back(std::move(st));
    }
    report.miou = counted > 0 ? sum / double(counted) : 0.0;
    return report;
}

namespace {

std::vector<const ManifestEntry*> entriesOf(const Manifest& manifest, const std::string& split)
{
    std::vector<const ManifestEntry*> out;
    for (const ManifestEntry& e : manifest)
        if (e.split == split) out.push_back(&e);
    if (out.empty())
        raise(ErrorKind::EmptySplit, "no manifest entries with split '" + split + "'");
    return out;
}

} // namespace

MetricReport evaluate(const ParamStore& params, const Manifest& manifest,
    const LabelVocabulary& vocab, Protocol protocol, const EvalConfig& config)
{
    if (manifest.empty())
        raise(ErrorKind::EmptyManifest, "manifest has no entries");

    std::string split = "val";
    bool pixelwise = false;
    switch (protocol) {
        case Protocol::Csa3d: break;
        case Protocol::Ova3d: break;
        case Protocol::Csa2d:
        case Protocol::Ova2d: pixelwise = true; break;
        case Protocol::Nva:
            split = "novel_view";
            pixelwise = true;
            break;
        case Protocol::Cda3d: split = "cross_domain"; break;
        case Protocol::Cda2d:
            split = "cross_domain";
            pixelwise = true;
            break;
    }

    // cross-domain scores only transfer over classes seen in training
    std::vector<int> restrict;
    const std::vector<int>* restrictPtr = nullptr;
    if (protocol == Protocol::Cda3d || protocol == Protocol::Cda2d) {
        std::set<int> trainClasses;
        for (const ManifestEntry& e : manifest)
            if (e.split == "train") {
                const GaussianScene scene = load_scene(e.scene);
                if (!scene.has_labels)
                    raise(ErrorKind::MissingLabels, e.scene.string() + " has no labels");
                for (const Gaussian& g : scene.gaussians)
                    if (g.label != kIgnoreLabel) trainClasses.insert(int(g.label));
            }
        restrict.assign(trainClasses.begin(), trainClasses.end());
        restrictPtr = &restrict;
    } else if (protocol == Protocol::Ova3d || protocol == Protocol::Ova2d) {
        restrict = vocab.unseen_classes();
        if (restrict.empty())
            raise(ErrorKind::InvariantViolation, "open-vocabulary protocols need unseen classes");
        restrictPtr = &restrict;
    }

    std::vector<uint16_t> predAll, gtAll;
    for (const ManifestEntry* e : entriesOf(manifest, split)) {
        GaussianScene scene = load_scene(e->scene);
        if (!scene.has_labels)
            raise(ErrorKind::MissingLabels, e->scene.string() + " has no labels");
        const GaussianScene predicted = predict_semantics(scene, params, config.gsr);

        if (!pixelwise) {
            const std::vector<uint16_t> pred =
                classify_gaussians(predicted, vocab, params, config.temperature);
            for (size_t i = 0; i < scene.size(); ++i) {
                predAll.push_back(pred[i]);
                gtAll.push_back(scene.gaussians[i].label);
            }
        } else {
            for (const auto& camFile : e->cameras) {
                const Camera cam = load_camera(camFile);
                const RenderOutput out =
                    render(predicted, cam, kChannelSemantic | kChannelAlpha, config.render);
                const std::vector<uint16_t> pred =
                    classify_pixels(out.semantic, out.alpha, vocab, params, config.temperature);
                const std::vector<uint16_t> gt = rasterize_labels(scene, cam, config.render);
                predAll.insert(predAll.end(), pred.begin(), pred.end());
                gtAll.insert(gtAll.end(), gt.begin(), gt.end());
            }
        }
    }

    MetricReport report = miou(predAll, gtAll, vocab, restrictPtr);
    report.protocol = protocol;
    return report;
}

std::string report_table(const MetricReport& report)
{
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "protocol %s  miou %.6f  evaluated %lld\n",
        to_string(report.protocol), report.miou, static_cast<long long>(report.evaluated));
    out += line;
    for (const ClassStat& st : report.per_class) {
        std::snprintf(line, sizeof(line), "  %-24s iou %.6f  tp %lld fp %lld fn %lld%s\n",
            st.name.c_str(), st.iou, static_cast<long long>(st.tp), static_cast<long long>(st.fp),
            static_cast<long long>(st.fn), st.counted ? "" : "  (not counted)");
        out += line;
    }
    return out;
}

} // namespace splatseg
