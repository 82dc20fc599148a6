// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_IO_HPP
#define SPLATSEG_IO_HPP

#include "splatseg/scene.hpp"
#include "splatseg/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace splatseg {

/// Named parameter tensors. std::map keeps iteration (and therefore
/// serialization and update order) sorted by name.
using ParamStore = std::map<std::string, ad::Tensor>;

// All binary formats are little-endian.
//
// scene  "SGS1" : magic | version u32 | count u64 | flags u64 | records
//                 record = pos 3f32, rot 4f32 (w,x,y,z), scale 3f32,
//                 opacity f32, color 3f32, semantic 16f32, label u16,
//                 instance u32 (126 bytes)
//                 flags bit0 = semantics present, bit1 = labels present
// cloud  "SPC1" : magic | version u32 | count u64 | records
//                 record = pos 3f32, label u16, instance u32 (18 bytes)
// map    "SDM1" : magic | height u32 | width u32 | dim u32 | h*w*dim f32
// labels "SLM1" : magic | height u32 | width u32 | h*w u16
// ckpt   "SCK1" : magic | version u32 | entries u32 | entry*
//                 entry = name_len u16, name, rank u8, extents u32[rank],
//                 data f64[prod(extents)]
//
// Cameras are JSON objects (fx, fy, cx, cy, width, height,
// world_to_camera as 16 row-major numbers). Vocabularies are text:
// first line "num_classes dim", then one "name v1 .. vdim" line per
// class.

GaussianScene load_scene(const std::filesystem::path& file);
void save_scene(const GaussianScene& scene, const std::filesystem::path& file);

LabeledPointCloud load_point_cloud(const std::filesystem::path& file);
void save_point_cloud(const LabeledPointCloud& cloud, const std::filesystem::path& file);

DenseTargetMap load_dense_map(const std::filesystem::path& file);
void save_dense_map(const DenseTargetMap& map, const std::filesystem::path& file);

std::vector<uint16_t> load_label_map(const std::filesystem::path& file, int& height, int& width);
void save_label_map(const std::vector<uint16_t>& labels, int height, int width,
    const std::filesystem::path& file);

Camera load_camera(const std::filesystem::path& file);
void save_camera(const Camera& camera, const std::filesystem::path& file);

LabelVocabulary load_vocabulary(const std::filesystem::path& file);
void save_vocabulary(const LabelVocabulary& vocab, const std::filesystem::path& file);

ParamStore load_checkpoint(const std::filesystem::path& file);
void save_checkpoint(const ParamStore& params, const std::filesystem::path& file);

/// Binary PPM (P6). rgb holds height*width*3 values in [0,1]; values are
/// clamped and rounded to bytes.
void write_ppm(const std::vector<double>& rgb, int height, int width,
    const std::filesystem::path& file);

/// Binary PGM (P5) from bytes.
void write_pgm(const std::vector<uint8_t>& gray, int height, int width,
    const std::filesystem::path& file);

} // namespace splatseg

#endif // SPLATSEG_IO_HPP
