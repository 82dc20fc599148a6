// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/gradsuite.hpp"
#include "splatseg/io.hpp"
#include "splatseg/metrics.hpp"
#include "splatseg/parallel.hpp"
#include "splatseg/rng.hpp"
#include "splatseg/scene_ops.hpp"
#include "splatseg/synth.hpp"
#include "splatseg/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatseg;

namespace {

/// Registry tying every CLI option to a dotted config-file key so the
/// precedence chain is defaults < config file < flags, with unknown
/// config keys rejected.
class Settings {
public:
    explicit Settings(CLI::App& app)
        : mApp(app)
    {
    }

    template <class T>
    CLI::Option* bind(CLI::App* cmd, const std::string& flag, T& var, const std::string& key,
        const std::string& help)
    {
        CLI::Option* opt = cmd->add_option(flag, var, help);
        mEntries.push_back({key, cmd, opt,
            [&var](const json& v) { var = v.get<T>(); },
            [&var]() { return json(var).dump(); }});
        return opt;
    }

    CLI::Option* bindFlag(CLI::App* cmd, const std::string& flag, bool& var,
        const std::string& key, const std::string& help)
    {
        CLI::Option* opt = cmd->add_flag(flag, var, help);
        mEntries.push_back({key, cmd, opt,
            [&var](const json& v) { var = v.get<bool>(); },
            [&var]() { return json(var).dump(); }});
        return opt;
    }

    void applyConfig(const json& cfg)
    {
        for (const auto& item : cfg.items()) {
            bool known = false;
            for (const Entry& e : mEntries) known = known || e.key == item.key();
            if (!known)
                raise(ErrorKind::UsageError, "unknown config key '" + item.key() + "'");
        }
        for (Entry& e : mEntries) {
            if (e.opt->count() > 0 || !cfg.contains(e.key)) continue; // flags win
            try {
                e.apply(cfg.at(e.key));
            } catch (const std::exception& ex) {
                raise(ErrorKind::UsageError, "config key '" + e.key + "': " + ex.what());
            }
        }
    }

    /// Prints the effective settings of the globals plus the active
    /// subcommand, in registration order.
    void echo(const CLI::App* active, std::ostream& os) const
    {
        for (const Entry& e : mEntries)
            if (e.owner == &mApp || e.owner == active)
                os << "# " << e.key << " = " << e.print() << "\n";
    }

private:
    struct Entry {
        std::string key;
        const CLI::App* owner;
        CLI::Option* opt;
        std::function<void(const json&)> apply;
        std::function<std::string()> print;
    };

    CLI::App& mApp;
    std::vector<Entry> mEntries;
};

std::vector<std::string> split_csv(const std::string& s)
{
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

unsigned parse_channels(const std::string& csv)
{
    unsigned mask = 0;
    for (const std::string& name : split_csv(csv)) {
        if (name == "color")
            mask |= kChannelColor;
        else if (name == "semantic")
            mask |= kChannelSemantic;
        else if (name == "depth")
            mask |= kChannelDepth;
        else if (name == "alpha")
            mask |= kChannelAlpha;
        else if (name == "label")
            mask |= kChannelLabel;
        else
            raise(ErrorKind::UsageError, "unknown channel '" + name + "'");
    }
    if (mask == 0)
        raise(ErrorKind::UsageError, "--channels needs at least one channel");
    return mask;
}

void require_path(const std::string& value, const std::string& flag)
{
    if (value.empty())
        raise(ErrorKind::UsageError, "missing required " + flag);
}

json report_json(const MetricReport& report)
{
    json per = json::array();
    for (const ClassStat& c : report.per_class) {
        if (!c.counted) continue;
        per.push_back({{"id", c.id}, {"name", c.name}, {"iou", c.iou}, {"tp", c.tp},
            {"fp", c.fp}, {"fn", c.fn}});
    }
    return json{{"protocol", to_string(report.protocol)}, {"miou", report.miou},
        {"per_class", per}};
}

} // namespace

int run(int argc, char** argv)
{
    CLI::App app{"desk-scale open-vocabulary semantic segmentation over 3D Gaussian scenes"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string configPath;
    app.add_option("--config", configPath, "JSON config file with flat dotted keys");

    Settings settings(app);

    uint64_t seed = 1;
    int threads = int(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
    std::string outDir = ".";
    settings.bind(&app, "--seed", seed, "seed", "master random seed");
    settings.bind(&app, "--threads", threads, "threads", "worker thread count");
    settings.bind(&app, "--out-dir", outDir, "out_dir", "directory for produced files");

    // synth
    CLI::App* synth = app.add_subcommand("synth", "generate synthetic labeled room scenes");
    std::string classesCsv = "shell,crate,lamp,plant,screen";
    int scenes = 1, gaussiansPer = 160, views = 8, width = 64, height = 48, vocabDim = 512;
    double extentX = 6.0, extentY = 6.0, extentZ = 3.0;
    double density = 4.0, objectScale = 0.35, colorNoise = 0.05, fov = 60.0;
    std::string split = "train", manifestOut = "manifest.json", vocabOut = "vocab.txt";
    settings.bind(synth, "--classes", classesCsv, "synth.classes",
        "comma-separated class names; the first is the room shell");
    settings.bind(synth, "--scenes", scenes, "synth.scenes", "number of scenes");
    settings.bind(synth, "--gaussians-per-class", gaussiansPer, "synth.gaussians_per_class",
        "gaussians per class per scene");
    settings.bind(synth, "--views", views, "synth.views", "orbit cameras per scene");
    settings.bind(synth, "--width", width, "synth.width", "camera width in px");
    settings.bind(synth, "--height", height, "synth.height", "camera height in px");
    settings.bind(synth, "--extent-x", extentX, "synth.extent_x", "room extent x (m)");
    settings.bind(synth, "--extent-y", extentY, "synth.extent_y", "room extent y (m)");
    settings.bind(synth, "--extent-z", extentZ, "synth.extent_z", "room extent z (m)");
    settings.bind(synth, "--cloud-density", density, "synth.cloud_density",
        "point cloud density relative to the gaussian count");
    settings.bind(synth, "--object-scale", objectScale, "synth.object_scale",
        "object cluster radius (m)");
    settings.bind(synth, "--color-noise", colorNoise, "synth.color_noise",
        "per-gaussian color jitter");
    settings.bind(synth, "--fov", fov, "synth.fov", "camera field of view (deg)");
    settings.bind(synth, "--vocab-dim", vocabDim, "synth.vocab_dim", "embedding width");
    settings.bind(synth, "--split", split, "synth.split", "split tag for the manifest entries");
    settings.bind(synth, "--manifest-out", manifestOut, "synth.manifest_out",
        "manifest filename (within --out-dir)");
    settings.bind(synth, "--vocab-out", vocabOut, "synth.vocab_out",
        "vocabulary filename (within --out-dir)");

    // label-transfer
    CLI::App* transfer = app.add_subcommand("label-transfer",
        "assign nearest-neighbor cloud labels to a scene");
    std::string tScene, tCloud, tOut;
    bool inPlace = false;
    settings.bind(transfer, "--scene", tScene, "transfer.scene", "scene file (SGS1)");
    settings.bind(transfer, "--cloud", tCloud, "transfer.cloud", "labeled point cloud (SPC1)");
    settings.bind(transfer, "--out", tOut, "transfer.out", "output scene file");
    settings.bindFlag(transfer, "--in-place", inPlace, "transfer.in_place",
        "rewrite the input scene file");

    // render
    CLI::App* renderCmd = app.add_subcommand("render", "rasterize a scene from a camera");
    std::string rScene, rCamera, rCheckpoint, channelsCsv = "color,alpha";
    RenderConfig renderCfg;
    GsrConfig gsrCfg;
    settings.bind(renderCmd, "--scene", rScene, "render.scene", "scene file (SGS1)");
    settings.bind(renderCmd, "--camera", rCamera, "render.camera", "camera file (JSON)");
    settings.bind(renderCmd, "--channels", channelsCsv, "render.channels",
        "comma list of color,semantic,depth,alpha,label");
    settings.bind(renderCmd, "--checkpoint", rCheckpoint, "render.checkpoint",
        "predict semantics with this checkpoint before rendering");
    settings.bind(renderCmd, "--cov-dilation", renderCfg.cov_dilation, "render.cov_dilation",
        "screen-space covariance dilation (px^2)");
    settings.bind(renderCmd, "--alpha-clamp", renderCfg.alpha_clamp, "render.alpha_clamp",
        "per-splat alpha ceiling");
    settings.bind(renderCmd, "--contrib-floor", renderCfg.contrib_floor, "render.contrib_floor",
        "minimum composited alpha");
    settings.bind(renderCmd, "--transmittance-stop", renderCfg.transmittance_stop,
        "render.transmittance_stop", "early-termination threshold");
    settings.bind(renderCmd, "--near-clip", renderCfg.near_clip, "render.near_clip",
        "near plane (m)");
    settings.bindFlag(renderCmd, "--no-transmittance", renderCfg.no_transmittance,
        "render.no_transmittance", "additive compatibility blending");
    settings.bind(renderCmd, "--tile-size", renderCfg.tile_size, "render.tile_size",
        "binning tile size (px)");
    settings.bind(renderCmd, "--voxel-size", gsrCfg.voxel_size, "render.voxel_size",
        "voxel edge length for --checkpoint prediction");
    settings.bind(renderCmd, "--tp-mode", gsrCfg.tp_mode, "render.tp_mode",
        "voxel-to-point mapping for --checkpoint prediction");
    settings.bind(renderCmd, "--attention-mode", gsrCfg.attention_mode,
        "render.attention_mode", "adapter attention for --checkpoint prediction");
    settings.bind(renderCmd, "--heads", gsrCfg.attention_heads, "render.heads",
        "adapter attention heads for --checkpoint prediction");

    // train
    CLI::App* trainCmd = app.add_subcommand("train", "optimize the network over a manifest");
    std::string mPath, vocabPath, unseenCsv, resumePath;
    TrainConfig trainCfg;
    settings.bind(trainCmd, "--manifest", mPath, "train.manifest", "dataset manifest (JSON)");
    settings.bind(trainCmd, "--vocab", vocabPath, "vocab", "vocabulary file");
    settings.bind(trainCmd, "--unseen", unseenCsv, "unseen",
        "comma list of class names masked during training");
    settings.bind(trainCmd, "--lr", trainCfg.learning_rate, "train.lr", "SGD learning rate");
    settings.bind(trainCmd, "--batch", trainCfg.batch_size, "train.batch", "batch size");
    settings.bind(trainCmd, "--epochs", trainCfg.epochs, "train.epochs", "epoch count");
    settings.bind(trainCmd, "--max-steps", trainCfg.max_steps, "train.max_steps",
        "hard step cap (0 = none)");
    settings.bind(trainCmd, "--momentum", trainCfg.momentum, "train.momentum", "SGD momentum");
    settings.bind(trainCmd, "--temperature", trainCfg.temperature, "train.temperature",
        "softmax temperature");
    settings.bindFlag(trainCmd, "--sum-reduction", trainCfg.sum_reduction,
        "train.sum_reduction", "sum instead of mean in the CE terms");
    settings.bind(trainCmd, "--voxel-size", trainCfg.gsr.voxel_size, "gsr.voxel_size",
        "voxel edge length (m)");
    settings.bind(trainCmd, "--tp-mode", trainCfg.gsr.tp_mode, "gsr.tp_mode",
        "voxel-to-point mapping: nearest | trilinear");
    settings.bind(trainCmd, "--attention-mode", trainCfg.gsr.attention_mode,
        "gsr.attention_mode", "adapter attention: self | voxel-set");
    settings.bind(trainCmd, "--heads", trainCfg.gsr.attention_heads, "gsr.attention_heads",
        "adapter attention heads");
    bool augmentOn = trainCfg.augment.enabled;
    settings.bind(trainCmd, "--augment", augmentOn, "augment.enabled",
        "apply scale/rotation/mirror augmentation");
    settings.bind(trainCmd, "--augment-scale-min", trainCfg.augment.scale_min,
        "augment.scale_min", "lower global scale bound");
    settings.bind(trainCmd, "--augment-scale-max", trainCfg.augment.scale_max,
        "augment.scale_max", "upper global scale bound");
    settings.bind(trainCmd, "--augment-rotation-axis", trainCfg.augment.rotation_axis,
        "augment.rotation_axis", "world rotation axis (0|1|2, -1 disables)");
    settings.bind(trainCmd, "--augment-flip-probability", trainCfg.augment.flip_probability,
        "augment.flip_probability", "mirror probability per axis");
    settings.bind(trainCmd, "--checkpoint-every", trainCfg.checkpoint_every,
        "train.checkpoint_every", "periodic checkpoint cadence in steps (0 = final only)");
    settings.bind(trainCmd, "--log-every", trainCfg.echo_every, "train.log_every",
        "echo every nth loss line (0 = silent)");
    settings.bind(trainCmd, "--resume", resumePath, "train.resume",
        "checkpoint to resume from");

    // eval
    CLI::App* evalCmd = app.add_subcommand("eval", "run an evaluation protocol");
    std::string eManifest, eVocab, eCheckpoint, eUnseen, protocolName = "csa3d";
    std::string reportName = "report.json";
    EvalConfig evalCfg;
    settings.bind(evalCmd, "--manifest", eManifest, "eval.manifest", "dataset manifest (JSON)");
    settings.bind(evalCmd, "--vocab", eVocab, "eval.vocab", "vocabulary file");
    settings.bind(evalCmd, "--checkpoint", eCheckpoint, "eval.checkpoint", "trained checkpoint");
    settings.bind(evalCmd, "--protocol", protocolName, "eval.protocol",
        "csa3d|csa2d|ova3d|ova2d|nva|cda3d|cda2d|all");
    settings.bind(evalCmd, "--unseen", eUnseen, "eval.unseen",
        "comma list of unseen class names (for ova)");
    settings.bind(evalCmd, "--temperature", evalCfg.temperature, "eval.temperature",
        "softmax temperature");
    settings.bind(evalCmd, "--voxel-size", evalCfg.gsr.voxel_size, "eval.voxel_size",
        "voxel edge length (m); must match training");
    settings.bind(evalCmd, "--tp-mode", evalCfg.gsr.tp_mode, "eval.tp_mode",
        "voxel-to-point mapping; must match training");
    settings.bind(evalCmd, "--attention-mode", evalCfg.gsr.attention_mode,
        "eval.attention_mode", "adapter attention; must match training");
    settings.bind(evalCmd, "--heads", evalCfg.gsr.attention_heads, "eval.attention_heads",
        "adapter attention heads; must match training");
    settings.bind(evalCmd, "--report", reportName, "eval.report",
        "report filename (within --out-dir)");

    // gradcheck
    CLI::App* gradCmd = app.add_subcommand("gradcheck",
        "finite-difference check of the full differentiable pipeline");
    GradSuiteConfig suiteCfg;
    settings.bind(gradCmd, "--tol", suiteCfg.tol, "gradcheck.tol", "relative error tolerance");
    settings.bind(gradCmd, "--step", suiteCfg.h, "gradcheck.h", "finite-difference step");
    settings.bind(gradCmd, "--gaussians", suiteCfg.gaussians, "gradcheck.gaussians",
        "scene size");
    settings.bind(gradCmd, "--width", suiteCfg.width, "gradcheck.width", "render width");
    settings.bind(gradCmd, "--height", suiteCfg.height, "gradcheck.height", "render height");
    settings.bind(gradCmd, "--classes", suiteCfg.num_classes, "gradcheck.classes",
        "vocabulary size");
    settings.bind(gradCmd, "--vocab-dim", suiteCfg.vocab_dim, "gradcheck.vocab_dim",
        "embedding width");
    settings.bind(gradCmd, "--coords", suiteCfg.coords_per_tensor, "gradcheck.coords",
        "coordinates sampled per tensor");
    settings.bind(gradCmd, "--seeds", suiteCfg.seeds, "gradcheck.seeds", "number of seeds");
    settings.bind(gradCmd, "--temperature", suiteCfg.temperature, "gradcheck.temperature",
        "softmax temperature");
    settings.bind(gradCmd, "--voxel-size", suiteCfg.gsr.voxel_size, "gradcheck.voxel_size",
        "voxel edge length (m)");
    settings.bind(gradCmd, "--tp-mode", suiteCfg.gsr.tp_mode, "gradcheck.tp_mode",
        "voxel-to-point mapping");
    settings.bind(gradCmd, "--attention-mode", suiteCfg.gsr.attention_mode,
        "gradcheck.attention_mode", "adapter attention mode");
    settings.bind(gradCmd, "--heads", suiteCfg.gsr.attention_heads, "gradcheck.heads",
        "adapter attention heads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (!configPath.empty()) {
        std::ifstream in(configPath);
        if (!in)
            raise(ErrorKind::IoFailure, "cannot open config " + configPath);
        json cfg;
        try {
            in >> cfg;
        } catch (const std::exception& e) {
            raise(ErrorKind::MalformedHeader, std::string("config is not valid JSON: ") + e.what());
        }
        if (!cfg.is_object())
            raise(ErrorKind::UsageError, "config must be a JSON object of dotted keys");
        settings.applyConfig(cfg);
    }

    set_thread_count(threads);
    const CLI::App* active = app.get_subcommands().front();
    settings.echo(active, std::cout);

    const fs::path out(outDir);

    if (synth->parsed()) {
        SynthSpec spec;
        spec.classes = split_csv(classesCsv);
        spec.extent = {extentX, extentY, extentZ};
        spec.gaussians_per_class = gaussiansPer;
        spec.cloud_density = density;
        spec.object_scale = objectScale;
        spec.color_noise = colorNoise;
        fs::create_directories(out);

        Manifest manifest;
        for (int i = 0; i < scenes; ++i) {
            spec.seed = derive_seed(seed, 0x73796E31ull, uint64_t(i));
            const SynthResult result = synth_scene(spec);
            char name[64];
            std::snprintf(name, sizeof name, "scene_%03d.sgs1", i);
            save_scene(result.scene, out / name);
            ManifestEntry entry;
            entry.scene = name;
            std::snprintf(name, sizeof name, "cloud_%03d.spc1", i);
            save_point_cloud(result.cloud, out / name);
            const std::vector<Camera> cams = orbit_cameras(spec, views, width, height, fov);
            for (size_t c = 0; c < cams.size(); ++c) {
                std::snprintf(name, sizeof name, "cam_%03d_%02zu.json", i, c);
                save_camera(cams[c], out / name);
                entry.cameras.emplace_back(name);
                entry.targets.emplace_back(std::nullopt);
            }
            entry.split = split;
            manifest.push_back(std::move(entry));
            std::cout << "scene " << i << ": " << result.scene.size() << " gaussians, "
                      << result.cloud.size() << " cloud points\n";
        }
        save_manifest(manifest, out / manifestOut);
        const LabelVocabulary vocab
            = orthonormal_vocabulary(spec.classes, vocabDim, derive_seed(seed, 0x766F6331ull));
        save_vocabulary(vocab, out / vocabOut);
        std::cout << "wrote " << (out / manifestOut).string() << " and "
                  << (out / vocabOut).string() << "\n";
        return 0;
    }

    if (transfer->parsed()) {
        require_path(tScene, "--scene");
        require_path(tCloud, "--cloud");
        if (!inPlace && tOut.empty())
            raise(ErrorKind::UsageError, "need --out or --in-place");
        GaussianScene scene = load_scene(tScene);
        const LabeledPointCloud cloud = load_point_cloud(tCloud);
        transfer_labels(scene, cloud);
        const fs::path dest = inPlace ? fs::path(tScene) : fs::path(tOut);
        save_scene(scene, dest);
        std::cout << "labeled " << scene.size() << " gaussians -> " << dest.string() << "\n";
        return 0;
    }

    if (renderCmd->parsed()) {
        require_path(rScene, "--scene");
        require_path(rCamera, "--camera");
        GaussianScene scene = load_scene(rScene);
        const Camera camera = load_camera(rCamera);
        const unsigned channels = parse_channels(channelsCsv);
        if (!rCheckpoint.empty()) {
            ParamStore params = load_checkpoint(rCheckpoint);
            for (auto it = params.begin(); it != params.end();)
                it = it->first.rfind("trainer.", 0) == 0 ? params.erase(it) : std::next(it);
            scene = predict_semantics(scene, params, gsrCfg);
        }
        const RenderOutput rendered = render(scene, camera, channels, renderCfg);
        fs::create_directories(out);
        if (channels & kChannelColor) {
            write_ppm(rendered.color, rendered.height, rendered.width, out / "render_color.ppm");
            std::cout << "wrote " << (out / "render_color.ppm").string() << "\n";
        }
        if (channels & kChannelAlpha) {
            std::vector<uint8_t> bytes(rendered.alpha.size());
            for (size_t i = 0; i < bytes.size(); ++i)
                bytes[i] = uint8_t(std::lround(std::min(1.0, std::max(0.0, rendered.alpha[i])) * 255.0));
            write_pgm(bytes, rendered.height, rendered.width, out / "render_alpha.pgm");
            std::cout << "wrote " << (out / "render_alpha.pgm").string() << "\n";
        }
        if (channels & kChannelDepth) {
            double dmax = 0.0;
            for (double d : rendered.depth) dmax = std::max(dmax, d);
            std::vector<uint8_t> bytes(rendered.depth.size(), 0);
            if (dmax > 0.0)
                for (size_t i = 0; i < bytes.size(); ++i)
                    bytes[i] = uint8_t(std::lround(rendered.depth[i] / dmax * 255.0));
            write_pgm(bytes, rendered.height, rendered.width, out / "render_depth.pgm");
            std::cout << "wrote " << (out / "render_depth.pgm").string() << "\n";
        }
        if (channels & kChannelSemantic) {
            DenseTargetMap map;
            map.height = rendered.height;
            map.width = rendered.width;
            map.dim = kSemanticDim;
            map.data.assign(rendered.semantic.begin(), rendered.semantic.end());
            save_dense_map(map, out / "render_semantic.sdm1");
            std::cout << "wrote " << (out / "render_semantic.sdm1").string() << "\n";
        }
        if (channels & kChannelLabel) {
            save_label_map(rendered.label, rendered.height, rendered.width,
                out / "render_label.slm1");
            std::cout << "wrote " << (out / "render_label.slm1").string() << "\n";
        }
        return 0;
    }

    if (trainCmd->parsed()) {
        require_path(mPath, "--manifest");
        require_path(vocabPath, "--vocab");
        const Manifest manifest = load_manifest(mPath);
        LabelVocabulary vocab = load_vocabulary(vocabPath);
        if (!unseenCsv.empty()) vocab.set_unseen(split_csv(unseenCsv));
        trainCfg.augment.enabled = augmentOn;
        trainCfg.seed = seed;
        trainCfg.out_dir = out;
        if (trainCfg.echo_every > 0) trainCfg.echo = &std::cout;
        const TrainResult result = train(manifest, vocab, trainCfg,
            resumePath.empty() ? fs::path() : fs::path(resumePath));
        std::cout << "trained " << result.steps << " steps over " << result.epochs_completed
                  << " epochs; final loss " << result.final_loss.total << "\n";
        if (!result.final_checkpoint.empty())
            std::cout << "wrote " << result.final_checkpoint.string() << "\n";
        return 0;
    }

    if (evalCmd->parsed()) {
        require_path(eManifest, "--manifest");
        require_path(eVocab, "--vocab");
        require_path(eCheckpoint, "--checkpoint");
        const Manifest manifest = load_manifest(eManifest);
        LabelVocabulary vocab = load_vocabulary(eVocab);
        if (!eUnseen.empty()) vocab.set_unseen(split_csv(eUnseen));
        ParamStore params = load_checkpoint(eCheckpoint);
        for (auto it = params.begin(); it != params.end();)
            it = it->first.rfind("trainer.", 0) == 0 ? params.erase(it) : std::next(it);

        std::vector<Protocol> protocols;
        if (protocolName == "all")
            protocols = {Protocol::Csa3d, Protocol::Csa2d, Protocol::Ova3d, Protocol::Ova2d,
                Protocol::Nva, Protocol::Cda3d, Protocol::Cda2d};
        else
            protocols = {parse_protocol(protocolName)};

        json reports = json::array();
        for (Protocol p : protocols) {
            try {
                const MetricReport report = evaluate(params, manifest, vocab, p, evalCfg);
                std::cout << report_table(report);
                reports.push_back(report_json(report));
            } catch (const Error& e) {
                if (protocols.size() == 1 || e.kind() != ErrorKind::EmptySplit) throw;
                std::cerr << "skipping " << to_string(p) << ": " << e.what() << "\n";
            }
        }
        fs::create_directories(out);
        std::ofstream rf(out / reportName);
        if (!rf)
            raise(ErrorKind::IoFailure, "cannot write the report");
        rf << (reports.size() == 1 ? reports.front().dump(2) : reports.dump(2)) << "\n";
        std::cout << "wrote " << (out / reportName).string() << "\n";
        return 0;
    }

    if (gradCmd->parsed()) {
        suiteCfg.seed = seed;
        const GradSuiteReport report = run_grad_suite(suiteCfg);
        std::printf("max_rel_err = %.6g over %lld coordinates (%lld kinks skipped)\n",
            report.max_rel_err, (long long)report.checked, (long long)report.skipped_kinks);
        if (!report.worst.empty()) std::printf("worst: %s\n", report.worst.c_str());
        if (!report.pass) {
            std::printf("FAIL (tol %.3g)\n", suiteCfg.tol);
            return 3;
        }
        std::printf("PASS (tol %.3g)\n", suiteCfg.tol);
        return 0;
    }

    return 0;
}

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::UsageError:
            return 1;
        case ErrorKind::NonFinite:
            return 3;
        default:
            return 2;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
