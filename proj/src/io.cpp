// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#include "splatseg/io.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
    "serialization assumes a little-endian host");

namespace splatseg {

namespace {

std::vector<uint8_t> readFile(const std::filesystem::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in) raise(ErrorKind::IoFailure, "cannot open " + file.string());
    std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) raise(ErrorKind::IoFailure, "read failed for " + file.string());
    return data;
}

void writeFile(const std::string& data, const std::filesystem::path& file)
{
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) raise(ErrorKind::IoFailure, "cannot open " + file.string() + " for writing");
    out.write(data.data(), std::streamsize(data.size()));
    out.flush();
    if (!out) raise(ErrorKind::IoFailure, "write failed for " + file.string());
}

class Reader {
public:
    Reader(const std::vector<uint8_t>& data, std::string context)
        : mData(data)
        , mContext(std::move(context))
    {
    }

    /// Bytes still available.
    size_t remaining() const { return mData.size() - mOff; }

    void needHeader(size_t n)
    {
        if (remaining() < n)
            raise(ErrorKind::MalformedHeader, mContext + ": truncated header");
    }
    void needBody(size_t n)
    {
        if (remaining() < n)
            raise(ErrorKind::CountMismatch, mContext + ": file shorter than the declared record count");
    }
    void finish()
    {
        if (mOff != mData.size())
            raise(ErrorKind::CountMismatch, mContext + ": " + std::to_string(remaining()) + " trailing bytes");
    }

    void magic(const char (&tag)[5])
    {
        needHeader(4);
        if (std::memcmp(mData.data() + mOff, tag, 4) != 0)
            raise(ErrorKind::MalformedHeader, mContext + ": bad magic");
        mOff += 4;
    }

    template <typename T>
    T get()
    {
        T v;
        std::memcpy(&v, mData.data() + mOff, sizeof(T));
        mOff += sizeof(T);
        return v;
    }

    std::string str(size_t n)
    {
        std::string s(reinterpret_cast<const char*>(mData.data() + mOff), n);
        mOff += n;
        return s;
    }

private:
    const std::vector<uint8_t>& mData;
    std::string mContext;
    size_t mOff = 0;
};

class Writer {
public:
    template <typename T>
    void put(T v)
    {
        const size_t n = mOut.size();
        mOut.resize(n + sizeof(T));
        std::memcpy(mOut.data() + n, &v, sizeof(T));
    }
    void magic(const char (&tag)[5]) { mOut.append(tag, 4); }
    void str(const std::string& s) { mOut.append(s); }
    const std::string& buffer() const { return mOut; }
    std::string& buffer() { return mOut; }

private:
    std::string mOut;
};

constexpr size_t kSceneRecordBytes = 126;
constexpr size_t kCloudRecordBytes = 18;

std::string fmtDouble(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

// ---------------------------------------------------------------------------
// scenes

GaussianScene load_scene(const std::filesystem::path& file)
{
    const auto data = readFile(file);
    Reader r(data, file.string());
    r.magic("SGS1");
    r.needHeader(20);
    const uint32_t version = r.get<uint32_t>();
    if (version != 1)
        raise(ErrorKind::MalformedHeader, file.string() + ": unsupported scene version " + std::to_string(version));
    const uint64_t count = r.get<uint64_t>();
    const uint64_t flags = r.get<uint64_t>();

    GaussianScene scene;
    scene.has_semantics = (flags & 1u) != 0;
    scene.has_labels = (flags & 2u) != 0;
    r.needBody(count * kSceneRecordBytes);
    scene.gaussians.resize(size_t(count));
    for (Gaussian& g : scene.gaussians) {
        for (float& v : g.position) v = r.get<float>();
        for (float& v : g.rotation) v = r.get<float>();
        for (float& v : g.scale) v = r.get<float>();
        g.opacity = r.get<float>();
        for (float& v : g.color) v = r.get<float>();
        for (float& v : g.semantic) v = r.get<float>();
        g.label = r.get<uint16_t>();
        g.instance = r.get<uint32_t>();
    }
    r.finish();
    validate(scene);
    return scene;
}

void save_scene(const GaussianScene& scene, const std::filesystem::path& file)
{
    Writer w;
    w.magic("SGS1");
    w.put<uint32_t>(1);
    w.put<uint64_t>(scene.gaussians.size());
    const uint64_t flags = (scene.has_semantics ? 1u : 0u) | (scene.has_labels ? 2u : 0u);
    w.put<uint64_t>(flags);
    for (const Gaussian& g : scene.gaussians) {
        for (float v : g.position) w.put(v);
        for (float v : g.rotation) w.put(v);
        for (float v : g.scale) w.put(v);
        w.put(g.opacity);
        for (float v : g.color) w.put(v);
        for (float v : g.semantic) w.put(v);
        w.put(g.label);
        w.put(g.instance);
    }
    writeFile(w.buffer(), file);
}

// ---------------------------------------------------------------------------
// point clouds

LabeledPointCloud load_point_cloud(const std::filesystem::path& file)
{
    const auto data = readFile(file);
    Reader r(data, file.string());
    r.magic("SPC1");
    r.needHeader(12);
    const uint32_t version = r.get<uint32_t>();
    if (version != 1)
        raise(ErrorKind::MalformedHeader, file.string() + ": unsupported cloud version " + std::to_string(version));
    const uint64_t count = r.get<uint64_t>();
    r.needBody(count * kCloudRecordBytes);

    LabeledPointCloud cloud;
    cloud.points.resize(size_t(count));
    cloud.labels.resize(size_t(count));
    cloud.instances.resize(size_t(count));
    for (size_t i = 0; i < count; ++i) {
        for (float& v : cloud.points[i]) v = r.get<float>();
        cloud.labels[i] = r.get<uint16_t>();
        cloud.instances[i] = r.get<uint32_t>();
    }
    r.finish();
    validate(cloud);
    return cloud;
}

void save_point_cloud(const LabeledPointCloud& cloud, const std::filesystem::path& file)
{
    validate(cloud);
    Writer w;
    w.magic("SPC1");
    w.put<uint32_t>(1);
    w.put<uint64_t>(cloud.points.size());
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        for (float v : cloud.points[i]) w.put(v);
        w.put(cloud.labels[i]);
        w.put(cloud.instances[i]);
    }
    writeFile(w.buffer(), file);
}

// ---------------------------------------------------------------------------
// dense maps

DenseTargetMap load_dense_map(const std::filesystem::path& file)
{
    const auto data = readFile(file);
    Reader r(data, file.string());
    r.magic("SDM1");
    r.needHeader(12);
    DenseTargetMap map;
    map.height = int(r.get<uint32_t>());
    map.width = int(r.get<uint32_t>());
    map.dim = int(r.get<uint32_t>());
    const size_t n = size_t(map.height) * size_t(map.width) * size_t(map.dim);
    r.needBody(n * 4);
    map.data.resize(n);
    for (float& v : map.data) v = r.get<float>();
    r.finish();
    return map;
}

void save_dense_map(const DenseTargetMap& map, const std::filesystem::path& file)
{
    if (map.data.size() != size_t(map.height) * size_t(map.width) * size_t(map.dim))
        raise(ErrorKind::LengthMismatch, "dense map data does not match its dimensions");
    Writer w;
    w.magic("SDM1");
    w.put<uint32_t>(uint32_t(map.height));
    w.put<uint32_t>(uint32_t(map.width));
    w.put<uint32_t>(uint32_t(map.dim));
    for (float v : map.data) w.put(v);
    writeFile(w.buffer(), file);
}

// ---------------------------------------------------------------------------
// label maps

std::vector<uint16_t> load_label_map(const std::filesystem::path& file, int& height, int& width)
{
    const auto data = readFile(file);
    Reader r(data, file.string());
    r.magic("SLM1");
    r.needHeader(8);
    height = int(r.get<uint32_t>());
    width = int(r.get<uint32_t>());
    const size_t n = size_t(height) * size_t(width);
    r.needBody(n * 2);
    std::vector<uint16_t> labels(n);
    for (uint16_t& v : labels) v = r.get<uint16_t>();
    r.finish();
    return labels;
}

void save_label_map(const std::vector<uint16_t>& labels, int height, int width,
    const std::filesystem::path& file)
{
    if (labels.size() != size_t(height) * size_t(width))
        raise(ErrorKind::LengthMismatch, "label map data does not match its dimensions");
    Writer w;
    w.magic("SLM1");
    w.put<uint32_t>(uint32_t(height));
    w.put<uint32_t>(uint32_t(width));
    for (uint16_t v : labels) w.put(v);
    writeFile(w.buffer(), file);
}

// ---------------------------------------------------------------------------
// cameras

Camera load_camera(const std::filesystem::path& file)
{
    const auto data = readFile(file);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(data.begin(), data.end());
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::MalformedHeader, file.string() + ": " + e.what());
    }

    auto num = [&](const char* key) -> double {
        if (!j.contains(key) || !j[key].is_number())
            raise(ErrorKind::MalformedHeader, file.string() + ": missing numeric field '" + key + "'");
        return j[key].get<double>();
    };
    auto integer = [&](const char* key) -> int {
        const double v = num(key);
        if (v != std::floor(v))
            raise(ErrorKind::MalformedHeader, file.string() + ": field '" + key + "' must be an integer");
        return int(v);
    };

    Camera cam;
    cam.fx = num("fx");
    cam.fy = num("fy");
    cam.cx = num("cx");
    cam.cy = num("cy");
    cam.width = integer("width");
    cam.height = integer("height");
    if (!j.contains("world_to_camera") || !j["world_to_camera"].is_array()
        || j["world_to_camera"].size() != 16)
        raise(ErrorKind::MalformedHeader, file.string() + ": world_to_camera must be 16 numbers");
    for (size_t i = 0; i < 16; ++i) {
        const auto& v = j["world_to_camera"][i];
        if (!v.is_number())
            raise(ErrorKind::MalformedHeader, file.string() + ": world_to_camera must be 16 numbers");
        cam.world_to_camera[i] = v.get<double>();
    }
    validate(cam);
    return cam;
}

void save_camera(const Camera& camera, const std::filesystem::path& file)
{
    validate(camera);
    nlohmann::json j;
    j["fx"] = camera.fx;
    j["fy"] = camera.fy;
    j["cx"] = camera.cx;
    j["cy"] = camera.cy;
    j["width"] = camera.width;
    j["height"] = camera.height;
    j["world_to_camera"] = camera.world_to_camera;
    writeFile(j.dump(2) + "\n", file);
}

// ---------------------------------------------------------------------------
// vocabularies

LabelVocabulary load_vocabulary(const std::filesystem::path& file)
{
    const auto data = readFile(file);
    std::istringstream in(std::string(data.begin(), data.end()));

    LabelVocabulary vocab;
    int classes = 0;
    if (!(in >> classes >> vocab.dim))
        raise(ErrorKind::MalformedHeader, file.string() + ": first line must be 'num_classes dim'");
    if (classes < 2 || vocab.dim < 1)
        raise(ErrorKind::MalformedHeader, file.string() + ": invalid vocabulary dimensions");

    vocab.names.reserve(size_t(classes));
    vocab.embeddings.reserve(size_t(classes) * size_t(vocab.dim));
    for (int c = 0; c < classes; ++c) {
        std::string name;
        if (!(in >> name))
            raise(ErrorKind::CountMismatch, file.string() + ": expected " + std::to_string(classes) + " classes");
        vocab.names.push_back(name);
        for (int d = 0; d < vocab.dim; ++d) {
            double v = 0.0;
            if (!(in >> v))
                raise(ErrorKind::CountMismatch,
                    file.string() + ": class '" + name + "' needs " + std::to_string(vocab.dim) + " values");
            vocab.embeddings.push_back(v);
        }
    }
    std::string extra;
    if (in >> extra)
        raise(ErrorKind::CountMismatch, file.string() + ": trailing tokens after the class table");

    validate(vocab);
    return vocab;
}

void save_vocabulary(const LabelVocabulary& vocab, const std::filesystem::path& file)
{
    LabelVocabulary copy = vocab;
    validate(copy);
    std::string out = std::to_string(copy.num_classes()) + " " + std::to_string(copy.dim) + "\n";
    for (int c = 0; c < copy.num_classes(); ++c) {
        out += copy.names[size_t(c)];
        for (int d = 0; d < copy.dim; ++d) {
            out += " ";
            out += fmtDouble(copy.row(c)[d]);
        }
        out += "\n";
    }
    writeFile(out, file);
}

// ---------------------------------------------------------------------------
// checkpoints

ParamStore load_checkpoint(const std::filesystem::path& file)
{
    const auto data = readFile(file);
    Reader r(data, file.string());
    r.magic("SCK1");
    r.needHeader(8);
    const uint32_t version = r.get<uint32_t>();
    if (version != 1)
        raise(ErrorKind::CheckpointVersionMismatch,
            file.string() + ": checkpoint version " + std::to_string(version) + ", expected 1");
    const uint32_t entries = r.get<uint32_t>();

    ParamStore store;
    for (uint32_t e = 0; e < entries; ++e) {
        r.needBody(2);
        const uint16_t nameLen = r.get<uint16_t>();
        r.needBody(nameLen + 1u);
        const std::string name = r.str(nameLen);
        if (name.empty())
            raise(ErrorKind::MalformedHeader, file.string() + ": empty tensor name");
        const uint8_t rank = r.get<uint8_t>();
        r.needBody(size_t(rank) * 4);
        std::vector<int> shape(rank);
        size_t numel = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            shape[d] = int(r.get<uint32_t>());
            numel *= size_t(shape[d]);
        }
        r.needBody(numel * 8);
        ad::Tensor t(shape);
        for (double& v : t.data) v = r.get<double>();
        if (!store.emplace(name, std::move(t)).second)
            raise(ErrorKind::MalformedHeader, file.string() + ": duplicate tensor '" + name + "'");
    }
    r.finish();
    return store;
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& file)
{
    Writer w;
    w.magic("SCK1");
    w.put<uint32_t>(1);
    w.put<uint32_t>(uint32_t(params.size()));
    for (const auto& [name, t] : params) {
        if (name.empty() || name.size() > 0xFFFF)
            raise(ErrorKind::InvariantViolation, "bad tensor name length for checkpoint");
        if (t.rank() > 255)
            raise(ErrorKind::InvariantViolation, "tensor rank too large for checkpoint");
        w.put<uint16_t>(uint16_t(name.size()));
        w.str(name);
        w.put<uint8_t>(uint8_t(t.rank()));
        for (int d : t.shape) w.put<uint32_t>(uint32_t(d));
        for (double v : t.data) w.put(v);
    }
    writeFile(w.buffer(), file);
}

// ---------------------------------------------------------------------------
// images

void write_ppm(const std::vector<double>& rgb, int height, int width,
    const std::filesystem::path& file)
{
    if (rgb.size() != size_t(height) * size_t(width) * 3)
        raise(ErrorKind::LengthMismatch, "rgb buffer does not match image dimensions");
    std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.reserve(out.size() + rgb.size());
    for (double v : rgb) {
        const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.push_back(char(uint8_t(std::lround(c * 255.0))));
    }
    writeFile(out, file);
}

void write_pgm(const std::vector<uint8_t>& gray, int height, int width,
    const std::filesystem::path& file)
{
    if (gray.size() != size_t(height) * size_t(width))
        raise(ErrorKind::LengthMismatch, "gray buffer does not match image dimensions");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(gray.data()), gray.size());
    writeFile(out, file);
}

} // namespace splatseg
