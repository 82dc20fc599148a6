// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_LOSSES_HPP
#define SPLATSEG_LOSSES_HPP

#include "splatseg/autodiff.hpp"
#include "splatseg/gsr.hpp"
#include "splatseg/scene.hpp"

#include <optional>

namespace splatseg {

struct LossConfig {
    /// Divides every text logit before the softmax.
    double temperature = 1.0;
    ad::Reduction reduction = ad::Reduction::Mean;
};

/// Per-term values and bookkeeping for one loss evaluation.
struct LossBreakdown {
    double loss_3d = 0.0;
    double loss_2d = 0.0;
    double loss_cosine = 0.0;
    double total = 0.0;
    /// Gaussians / pixels that entered each term.
    int64_t gaussians_3d = 0;
    int64_t pixels_2d = 0;
    int64_t pixels_cosine = 0;
    /// Number of classes the cross-entropy softmax ran over.
    int classes_in_softmax = 0;
};

/// Fresh Glorot-initialized decoder (16 -> 128 -> outDim MLP, ReLU after
/// the hidden layer). prefix names the four tensors prefix.w1/b1/w2/b2.
ParamStore init_decoder_params(const std::string& prefix, int outDim, uint64_t seed);

std::map<std::string, std::vector<int>> decoder_param_shapes(const std::string& prefix, int outDim);

/// Applies the named decoder to (n, 16) features, giving (n, outDim).
ad::Value decode(ad::Graph& g, ad::Value feats, const ParamBank& params, const std::string& prefix);

/// Class logits for the given classes: dot(decoder(feats), embedding) /
/// temperature, with the embedding product folded so the decoder's wide
/// output row is never materialized.
ad::Value text_logits(ad::Graph& g, ad::Value feats, const ParamBank& params,
    const std::string& prefix, const LabelVocabulary& vocab, const std::vector<int>& classes,
    double temperature);

/// Cross-entropy of per-Gaussian semantics against their labels through
/// the phi decoder. Unlabeled and unseen-class Gaussians are excluded;
/// the softmax runs over seen classes only. Returns a scalar Value (a
/// zero constant when nothing is valid) and fills the breakdown term.
ad::Value loss_3d_to_text(ad::Graph& g, ad::Value semantics, const std::vector<uint16_t>& labels,
    const LabelVocabulary& vocab, const ParamBank& params, const LossConfig& config,
    LossBreakdown& breakdown);

/// Same loss over blended pixel semantics against rasterized labels.
ad::Value loss_2d_to_text(ad::Graph& g, ad::Value semanticMap, const std::vector<uint16_t>& pixelLabels,
    const LabelVocabulary& vocab, const ParamBank& params, const LossConfig& config,
    LossBreakdown& breakdown);

/// Mean (1 - cosine) between psi-decoded pixel semantics and a dense
/// target map; pixels whose target row has (near-)zero norm are
/// skipped. target may be null (term is 0).
ad::Value loss_cosine(ad::Graph& g, ad::Value semanticMap, const DenseTargetMap* target,
    const ParamBank& params, const LossConfig& config, LossBreakdown& breakdown);

/// Eager convenience wrappers (no gradients); mainly for tests and
/// one-off evaluation.
double eval_loss_3d_to_text(const ad::Tensor& semantics, const std::vector<uint16_t>& labels,
    const LabelVocabulary& vocab, const ParamStore& params, const LossConfig& config = {});
double eval_loss_cosine(const ad::Tensor& semanticMap, const DenseTargetMap& target,
    const ParamStore& params, const LossConfig& config = {});

} // namespace splatseg

#endif // SPLATSEG_LOSSES_HPP
