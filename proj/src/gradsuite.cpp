// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/gradsuite.hpp"

#include "splatseg/losses.hpp"
#include "splatseg/rasterizer.hpp"
#include "splatseg/rng.hpp"
#include "splatseg/synth.hpp"

#include <cmath>
#include <memory>

namespace splatseg {

namespace {

GaussianScene random_scene(int n, int numClasses, Rng& rng)
{
    GaussianScene scene;
    scene.has_labels = true;
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        for (int a = 0; a < 3; ++a) g.position[size_t(a)] = float(rng.uniform(-0.4, 0.4));
        double q[4], norm = 0.0;
        for (double& v : q) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (int a = 0; a < 4; ++a) g.rotation[size_t(a)] = float(q[a] / norm);
        for (int a = 0; a < 3; ++a) g.scale[size_t(a)] = float(rng.uniform(0.06, 0.18));
        g.opacity = float(rng.uniform(0.35, 0.9));
        for (int a = 0; a < 3; ++a) g.color[size_t(a)] = float(rng.uniform(0.1, 0.9));
        g.label = uint16_t(rng.uniformInt(numClasses));
        if (i == 1) g.label = kIgnoreLabel; // exercise the exclusion path
        scene.gaussians.push_back(g);
    }
    return scene;
}

DenseTargetMap random_target(int height, int width, int dim, Rng& rng)
{
    DenseTargetMap map;
    map.height = height;
    map.width = width;
    map.dim = dim;
    map.data.resize(size_t(height) * size_t(width) * size_t(dim));
    for (int p = 0; p < height * width; ++p) {
        float* row = map.data.data() + size_t(p) * size_t(dim);
        if (p % 7 == 3) { // leave some rows empty to exercise the filter
            for (int d = 0; d < dim; ++d) row[d] = 0.f;
            continue;
        }
        double sq = 0.0;
        std::vector<double> v(size_t(dim), 0.0);
        for (double& x : v) {
            x = rng.normal();
            sq += x * x;
        }
        const double inv = 1.0 / std::sqrt(sq);
        for (int d = 0; d < dim; ++d) row[d] = float(v[size_t(d)] * inv);
    }
    return map;
}

} // namespace

GradSuiteReport run_grad_suite(const GradSuiteConfig& config)
{
    GradSuiteReport report;

    for (int s = 0; s < config.seeds; ++s) {
        const uint64_t base = derive_seed(config.seed, 0x67736631ull, uint64_t(s));
        Rng rng(base);

        GaussianScene scene = random_scene(config.gaussians, config.num_classes, rng);
        validate(scene);

        std::vector<std::string> names;
        for (int c = 0; c < config.num_classes; ++c) names.push_back("class" + std::to_string(c));
        LabelVocabulary vocab
            = orthonormal_vocabulary(names, config.vocab_dim, derive_seed(base, 2));
        if (config.num_classes > 2) vocab.set_unseen({names.back()});

        const Camera camera
            = look_at_camera({1.5, 1.1, 0.8}, {0.0, 0.0, 0.0}, config.width, config.height, 55.0);

        DenseTargetMap target;
        if (config.dense_target)
            target = random_target(config.height, config.width, config.vocab_dim, rng);

        ParamStore params = init_gsr_params(base);
        for (auto& [name, tensor] : init_decoder_params("phi", config.vocab_dim, base))
            params[name] = std::move(tensor);
        for (auto& [name, tensor] : init_decoder_params("psi", config.vocab_dim, base))
            params[name] = std::move(tensor);

        const VoxelGrid grid = voxelize(scene, config.gsr.voxel_size);
        const RenderConfig renderCfg;
        auto out = std::make_shared<RenderOutput>(
            render(scene, camera, kChannelLabel, renderCfg, true));

        std::vector<uint16_t> labels(scene.size());
        for (size_t i = 0; i < labels.size(); ++i) labels[i] = scene.gaussians[i].label;

        std::vector<std::string> leafNames;
        std::vector<ad::Tensor> leaves;
        for (auto& [name, tensor] : params) {
            leafNames.push_back(name);
            tensor.requires_grad = true;
            leaves.push_back(tensor);
        }

        LossConfig lossCfg;
        lossCfg.temperature = config.temperature;

        const auto build = [&](ad::Graph& g, const std::vector<ad::Value>& values) {
            ParamBank bank;
            for (size_t i = 0; i < leafNames.size(); ++i) bank.values[leafNames[i]] = values[i];
            const ad::Value sem = gsr_forward(g, scene, grid, bank, config.gsr);
            LossBreakdown bd;
            const ad::Value l3d = loss_3d_to_text(g, sem, labels, vocab, bank, lossCfg, bd);
            const ad::Value semMap = g.custom(std::make_shared<SemanticBlendOp>(out), {sem});
            const ad::Value l2d = loss_2d_to_text(g, semMap, out->label, vocab, bank, lossCfg, bd);
            const ad::Value lcos = loss_cosine(g, semMap,
                config.dense_target ? &target : nullptr, bank, lossCfg, bd);
            return g.add(g.add(l3d, l2d), lcos);
        };

        ad::GradCheckOptions options;
        options.h = config.h;
        options.tol = config.tol;
        options.max_coords_per_tensor = config.coords_per_tensor;
        options.seed = derive_seed(base, 5);

        const ad::GradCheckReport rep = ad::grad_check(build, leaves, options);
        report.checked += rep.checked;
        report.skipped_kinks += rep.skipped_kinks;
        if (rep.max_rel_err > report.max_rel_err) {
            report.max_rel_err = rep.max_rel_err;
            report.worst = "seed " + std::to_string(s) + ": " + rep.worst;
        }
        report.pass = report.pass && rep.pass;
    }
    return report;
}

} // namespace splatseg
