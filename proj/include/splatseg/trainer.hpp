// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_TRAINER_HPP
#define SPLATSEG_TRAINER_HPP

#include "splatseg/gsr.hpp"
#include "splatseg/losses.hpp"
#include "splatseg/rasterizer.hpp"
#include "splatseg/scene_ops.hpp"
#include "splatseg/trainer_types.hpp"

#include <filesystem>
#include <iosfwd>

namespace splatseg {

struct TrainConfig {
    double learning_rate = 0.02;
    int batch_size = 3;
    int epochs = 300;
    /// Hard cap on total optimizer steps; 0 means no cap.
    int64_t max_steps = 0;
    /// SGD momentum; 0 disables the velocity buffer entirely.
    double momentum = 0.0;
    double temperature = 1.0;
    /// Sum instead of mean reduction inside the cross-entropy terms.
    bool sum_reduction = false;
    GsrConfig gsr;
    AugmentConfig augment;
    RenderConfig render;
    uint64_t seed = 1;
    /// Checkpoints and the loss log land here; empty disables writing.
    std::filesystem::path out_dir;
    /// Periodic checkpoint cadence in steps; 0 writes only the final one.
    int64_t checkpoint_every = 0;
    /// Echo every nth loss-log line to the given stream; 0 is silent.
    int64_t echo_every = 0;
    std::ostream* echo = nullptr;
};

/// One (scene, view) training pair. Pointers borrow from the caller.
struct Sample {
    const GaussianScene* scene = nullptr;
    const Camera* camera = nullptr;
    /// Optional dense supervision; samples carrying one are never
    /// augmented (the map is aligned to the unaugmented view).
    const DenseTargetMap* target = nullptr;
    bool augment = false;
    uint64_t augment_seed = 0;
};

/// One SGD step over a batch: per sample the scene is (optionally)
/// augmented, run through the network, rendered at the sample camera and
/// scored; gradients are averaged over the batch in batch-index order and
/// applied in place. A non-finite loss raises NonFinite before any update.
LossBreakdown train_step(const std::vector<Sample>& batch, ParamStore& params,
    ParamStore* velocity, const LabelVocabulary& vocab, const TrainConfig& config);

struct TrainResult {
    ParamStore params;
    int64_t steps = 0;
    int epochs_completed = 0;
    LossBreakdown final_loss;
    std::filesystem::path final_checkpoint;
};

/// Full training loop over the manifest's train split. The epoch
/// schedule (scene order and per-occurrence camera picks) is a pure
/// function of the seed, so a run resumed from a checkpoint replays the
/// exact trajectory of an uninterrupted one.
TrainResult train(const Manifest& manifest, const LabelVocabulary& vocab,
    const TrainConfig& config, const std::filesystem::path& resume = {});

/// Names and shapes of every tensor a training checkpoint must hold
/// (network, decoders and trainer counters).
std::map<std::string, std::vector<int>> training_param_shapes(int phiDim, int psiDim,
    double momentum);

} // namespace splatseg

#endif // SPLATSEG_TRAINER_HPP
