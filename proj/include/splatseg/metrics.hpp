// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_METRICS_HPP
#define SPLATSEG_METRICS_HPP

#include "splatseg/gsr.hpp"
#include "splatseg/losses.hpp"
#include "splatseg/rasterizer.hpp"
#include "splatseg/scene.hpp"
#include "splatseg/trainer_types.hpp"

#include <string>
#include <vector>

namespace splatseg {

/// Evaluation protocols:
///   csa3d / csa2d  closed-set accuracy on the val split (per Gaussian /
///                  per pixel)
///   ova3d / ova2d  open-vocabulary accuracy: mIoU over the unseen
///                  classes only, full-vocabulary predictions
///   nva            novel-view accuracy: pixel protocol on the
///                  novel_view split
///   cda3d / cda2d  cross-domain accuracy on the cross_domain split,
///                  restricted to classes that occur in the train split
enum class Protocol {
    Csa3d,
    Csa2d,
    Ova3d,
    Ova2d,
    Nva,
    Cda3d,
    Cda2d,
};

Protocol parse_protocol(const std::string& name);
const char* to_string(Protocol protocol);

struct ClassStat {
    int id = 0;
    std::string name;
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;
    double iou = 0.0;
    /// Whether the class enters the mean (it has ground truth, or was
    /// falsely predicted).
    bool counted = false;
};

struct MetricReport {
    Protocol protocol = Protocol::Csa3d;
    double miou = 0.0;
    int64_t evaluated = 0; // gaussians or pixels that had valid ground truth
    std::vector<ClassStat> per_class;
};

/// Full-vocabulary argmax classification of per-Gaussian semantics via
/// the phi decoder.
std::vector<uint16_t> classify_gaussians(const GaussianScene& scene, const LabelVocabulary& vocab,
    const ParamStore& params, double temperature = 1.0);

/// Same for a blended pixel map; pixels with accumulated alpha < 0.5 get
/// the ignore label.
std::vector<uint16_t> classify_pixels(const std::vector<double>& semanticMap,
    const std::vector<double>& alpha, const LabelVocabulary& vocab, const ParamStore& params,
    double temperature = 1.0);

/// Confusion-based mean IoU. Ground-truth ignore entries are excluded;
/// an ignore prediction against valid ground truth counts as a false
/// negative. Classes with no ground truth and no false positives are
/// left out of the mean. restrictTo (optional) limits the mean to the
/// given classes.
MetricReport miou(const std::vector<uint16_t>& pred, const std::vector<uint16_t>& gt,
    const LabelVocabulary& vocab, const std::vector<int>* restrictTo = nullptr);

struct EvalConfig {
    GsrConfig gsr;
    RenderConfig render;
    double temperature = 1.0;
};

/// Runs a full protocol over the manifest with the given parameters,
/// aggregating the confusion across scenes (and cameras for pixel
/// protocols).
MetricReport evaluate(const ParamStore& params, const Manifest& manifest,
    const LabelVocabulary& vocab, Protocol protocol, const EvalConfig& config);

std::string report_table(const MetricReport& report);

} // namespace splatseg

#endif // SPLATSEG_METRICS_HPP
