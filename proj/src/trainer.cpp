// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/trainer.hpp"

#include "splatseg/io.hpp"
#include "splatseg/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>

namespace splatseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kSplits = {"train", "val", "novel_view", "cross_domain"};

} // namespace

Manifest load_manifest(const fs::path& file)
{
    std::ifstream in(file);
    if (!in)
        raise(ErrorKind::IoFailure, "cannot open manifest " + file.string());
    json doc;
    try {
        in >> doc;
    } catch (const std::exception& e) {
        raise(ErrorKind::MalformedHeader, std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_array())
        raise(ErrorKind::MalformedHeader, "manifest must be a JSON list of entries");

    const fs::path base = file.parent_path();
    auto resolve = [&base](const std::string& p) {
        const fs::path q(p);
        return q.is_absolute() ? q : base / q;
    };

    Manifest manifest;
    for (const json& e : doc) {
        if (!e.is_object())
            raise(ErrorKind::MalformedHeader, "manifest entries must be objects");
        for (const auto& item : e.items())
            if (item.key() != "scene" && item.key() != "cameras" && item.key() != "targets"
                && item.key() != "split")
                raise(ErrorKind::MalformedHeader, "unknown manifest key '" + item.key() + "'");
        if (!e.contains("scene") || !e["scene"].is_string())
            raise(ErrorKind::MalformedHeader, "manifest entry needs a 'scene' path");
        if (!e.contains("cameras") || !e["cameras"].is_array())
            raise(ErrorKind::MalformedHeader, "manifest entry needs a 'cameras' list");
        if (!e.contains("split") || !e["split"].is_string())
            raise(ErrorKind::MalformedHeader, "manifest entry needs a 'split' tag");

        ManifestEntry entry;
        entry.scene = resolve(e["scene"].get<std::string>());
        entry.split = e["split"].get<std::string>();
        if (!kSplits.count(entry.split))
            raise(ErrorKind::MalformedHeader, "unknown split '" + entry.split
                + "' (expected train|val|novel_view|cross_domain)");
        for (const json& c : e["cameras"]) {
            if (!c.is_string())
                raise(ErrorKind::MalformedHeader, "camera paths must be strings");
            entry.cameras.push_back(resolve(c.get<std::string>()));
        }
        if (e.contains("targets")) {
            if (!e["targets"].is_array() || e["targets"].size() != e["cameras"].size())
                raise(ErrorKind::MalformedHeader, "'targets' must parallel 'cameras'");
            for (const json& t : e["targets"]) {
                if (t.is_null())
                    entry.targets.emplace_back(std::nullopt);
                else if (t.is_string())
                    entry.targets.emplace_back(resolve(t.get<std::string>()));
                else
                    raise(ErrorKind::MalformedHeader, "targets must be paths or null");
            }
        } else {
            entry.targets.assign(entry.cameras.size(), std::nullopt);
        }
        manifest.push_back(std::move(entry));
    }
    return manifest;
}

void save_manifest(const Manifest& manifest, const fs::path& file)
{
    json doc = json::array();
    for (const ManifestEntry& e : manifest) {
        json entry;
        entry["scene"] = e.scene.generic_string();
        entry["cameras"] = json::array();
        for (const fs::path& c : e.cameras) entry["cameras"].push_back(c.generic_string());
        bool anyTarget = false;
        for (const auto& t : e.targets) anyTarget = anyTarget || t.has_value();
        if (anyTarget) {
            entry["targets"] = json::array();
            for (const auto& t : e.targets)
                entry["targets"].push_back(t ? json(t->generic_string()) : json(nullptr));
        }
        entry["split"] = e.split;
        doc.push_back(std::move(entry));
    }
    std::ofstream out(file);
    if (!out)
        raise(ErrorKind::IoFailure, "cannot write manifest " + file.string());
    out << doc.dump(2) << "\n";
}

LossBreakdown train_step(const std::vector<Sample>& batch, ParamStore& params,
    ParamStore* velocity, const LabelVocabulary& vocab, const TrainConfig& config)
{
    if (batch.empty())
        raise(ErrorKind::UsageError, "train_step needs a non-empty batch");
    if (!(config.learning_rate >= 0.0))
        raise(ErrorKind::InvariantViolation, "learning rate must be non-negative");

    LossConfig lossCfg;
    lossCfg.temperature = config.temperature;
    lossCfg.reduction = config.sum_reduction ? ad::Reduction::Sum : ad::Reduction::Mean;

    std::map<std::string, ad::Tensor> gradSum;
    LossBreakdown batchBd;

    for (size_t slot = 0; slot < batch.size(); ++slot) {
        const Sample& sample = batch[slot];
        if (!sample.scene || !sample.camera)
            raise(ErrorKind::UsageError, "sample is missing its scene or camera");
        if (!sample.scene->has_labels)
            raise(ErrorKind::MissingLabels, "training scenes need labels");
        if (sample.target
            && (sample.target->height != sample.camera->height
                || sample.target->width != sample.camera->width))
            raise(ErrorKind::ShapeMismatch, "dense target resolution does not match the camera");

        // dense targets are view-aligned, so those samples skip augmentation
        GaussianScene augmented;
        const GaussianScene* scene = sample.scene;
        if (sample.augment && config.augment.enabled && !sample.target) {
            augmented = augment(*sample.scene, config.augment, sample.augment_seed);
            scene = &augmented;
        }

        const VoxelGrid grid = voxelize(*scene, config.gsr.voxel_size);

        ad::Graph g;
        const ParamBank bank = bind_params(g, params, true);
        const ad::Value sem = gsr_forward(g, *scene, grid, bank, config.gsr);

        std::vector<uint16_t> labels(scene->size());
        for (size_t i = 0; i < labels.size(); ++i) labels[i] = scene->gaussians[i].label;

        LossBreakdown bd;
        const ad::Value l3d = loss_3d_to_text(g, sem, labels, vocab, bank, lossCfg, bd);

        auto out = std::make_shared<RenderOutput>(
            render(*scene, *sample.camera, kChannelLabel, config.render, true));
        const ad::Value semMap = g.custom(std::make_shared<SemanticBlendOp>(out), {sem});
        const ad::Value l2d = loss_2d_to_text(g, semMap, out->label, vocab, bank, lossCfg, bd);
        const ad::Value lcos = loss_cosine(g, semMap, sample.target, bank, lossCfg, bd);

        const ad::Value total = g.add(g.add(l3d, l2d), lcos);
        bd.loss_3d = g.value(l3d).value();
        bd.loss_2d = g.value(l2d).value();
        bd.loss_cosine = g.value(lcos).value();
        bd.total = g.value(total).value();
        if (!std::isfinite(bd.total)) {
            char msg[160];
            std::snprintf(msg, sizeof msg,
                "non-finite loss in batch slot %zu (l3d=%g l2d=%g lcos=%g); no update applied",
                slot, bd.loss_3d, bd.loss_2d, bd.loss_cosine);
            raise(ErrorKind::NonFinite, msg);
        }

        g.backward(total);

        // fixed batch-index accumulation order
        for (const auto& [name, value] : bank.values) {
            const ad::Tensor& grad = g.grad(value);
            auto it = gradSum.find(name);
            if (it == gradSum.end()) {
                gradSum.emplace(name, grad);
            } else {
                for (size_t i = 0; i < grad.data.size(); ++i) it->second.data[i] += grad.data[i];
            }
        }

        batchBd.loss_3d += bd.loss_3d;
        batchBd.loss_2d += bd.loss_2d;
        batchBd.loss_cosine += bd.loss_cosine;
        batchBd.gaussians_3d += bd.gaussians_3d;
        batchBd.pixels_2d += bd.pixels_2d;
        batchBd.pixels_cosine += bd.pixels_cosine;
        batchBd.classes_in_softmax = bd.classes_in_softmax;
    }

    const double invB = 1.0 / double(batch.size());
    for (const auto& [name, grad] : gradSum)
        for (double v : grad.data)
            if (!std::isfinite(v))
                raise(ErrorKind::NonFinite, "non-finite gradient for " + name + "; no update applied");

    for (auto& [name, tensor] : params) {
        const auto it = gradSum.find(name);
        if (it == gradSum.end()) continue;
        const std::vector<double>& grad = it->second.data;
        if (config.momentum > 0.0 && velocity) {
            ad::Tensor& vel = (*velocity)[name];
            if (vel.data.size() != tensor.data.size()) vel = ad::Tensor(tensor.shape);
            for (size_t i = 0; i < tensor.data.size(); ++i) {
                vel.data[i] = config.momentum * vel.data[i] + grad[i] * invB;
                tensor.data[i] -= config.learning_rate * vel.data[i];
            }
        } else {
            for (size_t i = 0; i < tensor.data.size(); ++i)
                tensor.data[i] -= config.learning_rate * invB * grad[i];
        }
    }

    batchBd.loss_3d *= invB;
    batchBd.loss_2d *= invB;
    batchBd.loss_cosine *= invB;
    batchBd.total = batchBd.loss_3d + batchBd.loss_2d + batchBd.loss_cosine;
    return batchBd;
}

std::map<std::string, std::vector<int>> training_param_shapes(int phiDim, int psiDim,
    double momentum)
{
    std::map<std::string, std::vector<int>> shapes = gsr_param_shapes();
    for (const auto& [name, shape] : decoder_param_shapes("phi", phiDim)) shapes[name] = shape;
    for (const auto& [name, shape] : decoder_param_shapes("psi", psiDim)) shapes[name] = shape;
    if (momentum > 0.0) {
        std::map<std::string, std::vector<int>> withVel = shapes;
        for (const auto& [name, shape] : shapes) withVel["trainer.v." + name] = shape;
        shapes = std::move(withVel);
    }
    shapes["trainer.step"] = {};
    shapes["trainer.epoch"] = {};
    return shapes;
}

namespace {

struct LoadedEntry {
    GaussianScene scene;
    std::vector<Camera> cameras;
    std::vector<std::optional<DenseTargetMap>> targets;
};

/// Scene visit order and per-occurrence camera picks for one epoch, a
/// pure function of (seed, epoch) so resumed runs replay it exactly.
std::vector<std::pair<size_t, int>> epoch_schedule(const std::vector<size_t>& usable,
    const std::vector<LoadedEntry>& entries, uint64_t seed, int64_t epoch)
{
    std::vector<size_t> order = usable;
    Rng rng(derive_seed(seed, 0xA1ull, uint64_t(epoch)));
    rng.shuffle(order);
    std::vector<std::pair<size_t, int>> plan;
    plan.reserve(order.size());
    for (size_t idx : order)
        plan.emplace_back(idx, int(rng.uniformInt(int64_t(entries[idx].cameras.size()))));
    return plan;
}

void write_training_checkpoint(const fs::path& file, const ParamStore& params,
    const ParamStore& velocity, double momentum, int64_t step, int64_t epoch)
{
    ParamStore all = params;
    all["trainer.step"] = ad::Tensor::scalar(double(step));
    all["trainer.epoch"] = ad::Tensor::scalar(double(epoch));
    if (momentum > 0.0)
        for (const auto& [name, tensor] : velocity) all["trainer.v." + name] = tensor;
    save_checkpoint(all, file);
}

} // namespace

TrainResult train(const Manifest& manifest, const LabelVocabulary& vocab,
    const TrainConfig& config, const fs::path& resume)
{
    if (!(config.learning_rate > 0.0))
        raise(ErrorKind::InvariantViolation, "learning rate must be positive");
    if (config.batch_size < 1)
        raise(ErrorKind::InvariantViolation, "batch size must be at least 1");
    if (config.epochs < 0)
        raise(ErrorKind::InvariantViolation, "epoch count must be non-negative");

    std::vector<LoadedEntry> entries;
    for (const ManifestEntry& e : manifest) {
        if (e.split != "train") continue;
        LoadedEntry le;
        le.scene = load_scene(e.scene);
        if (!le.scene.has_labels)
            raise(ErrorKind::MissingLabels, "train scene " + e.scene.string() + " has no labels");
        for (const fs::path& c : e.cameras) le.cameras.push_back(load_camera(c));
        for (size_t i = 0; i < e.targets.size(); ++i) {
            if (e.targets[i]) {
                DenseTargetMap map = load_dense_map(*e.targets[i]);
                if (map.height != le.cameras[i].height || map.width != le.cameras[i].width)
                    raise(ErrorKind::ShapeMismatch,
                        "dense target " + e.targets[i]->string() + " does not match its camera");
                le.targets.emplace_back(std::move(map));
            } else {
                le.targets.emplace_back(std::nullopt);
            }
        }
        entries.push_back(std::move(le));
    }
    if (entries.empty())
        raise(ErrorKind::EmptyManifest, "manifest has no train entries");

    std::vector<size_t> usable;
    for (size_t i = 0; i < entries.size(); ++i)
        if (!entries[i].cameras.empty()) usable.push_back(i);
    if (usable.empty())
        raise(ErrorKind::EmptyManifest, "no train entry has a camera");

    const int phiDim = vocab.dim;
    // psi decodes into the dense-target space when targets exist,
    // otherwise it mirrors phi
    int psiDim = vocab.dim;
    bool psiFound = false;
    for (const LoadedEntry& le : entries)
        for (const auto& t : le.targets)
            if (t && !psiFound) {
                psiDim = t->dim;
                psiFound = true;
            }

    ParamStore params;
    ParamStore velocity;
    int64_t startStep = 0;
    if (!resume.empty()) {
        ParamStore loaded = load_checkpoint(resume);
        const auto expected = training_param_shapes(phiDim, psiDim, config.momentum);
        for (const auto& [name, shape] : expected) {
            const auto it = loaded.find(name);
            if (it == loaded.end())
                raise(ErrorKind::InvariantViolation, "checkpoint is missing tensor " + name);
            if (it->second.shape != shape)
                raise(ErrorKind::ShapeMismatch, "checkpoint tensor " + name + " has the wrong shape");
        }
        for (const auto& [name, tensor] : loaded)
            if (!expected.count(name))
                raise(ErrorKind::MalformedHeader, "checkpoint has unexpected tensor " + name);
        startStep = int64_t(std::llround(loaded.at("trainer.step").value()));
        for (auto& [name, tensor] : loaded) {
            if (name == "trainer.step" || name == "trainer.epoch") continue;
            if (name.rfind("trainer.v.", 0) == 0)
                velocity[name.substr(10)] = std::move(tensor);
            else
                params[name] = std::move(tensor);
        }
    } else {
        params = init_gsr_params(config.seed);
        for (auto& [name, tensor] : init_decoder_params("phi", phiDim, config.seed))
            params[name] = std::move(tensor);
        for (auto& [name, tensor] : init_decoder_params("psi", psiDim, config.seed))
            params[name] = std::move(tensor);
    }

    std::ofstream log;
    if (!config.out_dir.empty()) {
        fs::create_directories(config.out_dir);
        log.open(config.out_dir / "loss_log.txt",
            resume.empty() ? std::ios::trunc : std::ios::app);
        if (!log)
            raise(ErrorKind::IoFailure, "cannot write the loss log");
    }

    TrainResult result;
    int64_t step = 0;
    bool capped = false;
    for (int epoch = 0; epoch < config.epochs && !capped; ++epoch) {
        const auto plan = epoch_schedule(usable, entries, config.seed, epoch);
        const int64_t numBatches
            = (int64_t(plan.size()) + config.batch_size - 1) / config.batch_size;
        for (int64_t b = 0; b < numBatches; ++b) {
            if (config.max_steps > 0 && step >= config.max_steps) {
                capped = true;
                break;
            }
            ++step;
            if (step <= startStep) continue; // replayed by the resumed prefix

            std::vector<Sample> batch;
            const size_t lo = size_t(b) * size_t(config.batch_size);
            const size_t hi = std::min(plan.size(), lo + size_t(config.batch_size));
            for (size_t slot = lo; slot < hi; ++slot) {
                const auto [sceneIdx, camIdx] = plan[slot];
                const LoadedEntry& le = entries[sceneIdx];
                Sample s;
                s.scene = &le.scene;
                s.camera = &le.cameras[size_t(camIdx)];
                if (le.targets[size_t(camIdx)]) s.target = &*le.targets[size_t(camIdx)];
                s.augment = config.augment.enabled && !s.target;
                s.augment_seed
                    = derive_seed(config.seed, 0xB2ull, uint64_t(step), uint64_t(slot - lo));
                batch.push_back(s);
            }

            result.final_loss = train_step(batch, params,
                config.momentum > 0.0 ? &velocity : nullptr, vocab, config);

            char line[200];
            std::snprintf(line, sizeof line, "%lld %d %.17g %.17g %.17g %.17g\n",
                (long long)step, epoch + 1, result.final_loss.loss_3d, result.final_loss.loss_2d,
                result.final_loss.loss_cosine, result.final_loss.total);
            if (log) log << line;
            if (config.echo && config.echo_every > 0 && step % config.echo_every == 0)
                (*config.echo) << line << std::flush;

            if (!config.out_dir.empty() && config.checkpoint_every > 0
                && step % config.checkpoint_every == 0) {
                char name[64];
                std::snprintf(name, sizeof name, "checkpoint_%06lld.sck1", (long long)step);
                write_training_checkpoint(config.out_dir / name, params, velocity,
                    config.momentum, step, epoch + 1);
            }
        }
        if (!capped) ++result.epochs_completed;
    }

    result.steps = step;
    if (log) log.flush();
    if (!config.out_dir.empty()) {
        result.final_checkpoint = config.out_dir / "checkpoint_final.sck1";
        write_training_checkpoint(result.final_checkpoint, params, velocity, config.momentum,
            step, result.epochs_completed);
    }
    result.params = std::move(params);
    return result;
}

} // namespace splatseg
