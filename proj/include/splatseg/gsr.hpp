// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_GSR_HPP
#define SPLATSEG_GSR_HPP

#include "splatseg/autodiff.hpp"
#include "splatseg/io.hpp"
#include "splatseg/scene.hpp"

#include <array>
#include <string>
#include <vector>

namespace splatseg {

/// Sparse voxelization of a scene. Voxel order is canonical (coords
/// sorted lexicographically) and member lists are sorted by Gaussian
/// content, so every derived quantity is invariant to the input order of
/// the Gaussians, bit for bit.
struct VoxelGrid {
    double voxel_size = 0.1;
    /// Occupied voxel coords, lexicographically sorted.
    std::vector<std::array<int32_t, 3>> coords;
    /// num_voxels x 8 aggregate features: mean color (3), mean opacity,
    /// ln(1 + count), mean scale (3).
    ad::Tensor features;
    /// Gaussian index -> voxel index.
    std::vector<int32_t> assign;
    /// Voxel index -> member Gaussians in canonical (content) order.
    std::vector<std::vector<int32_t>> members;
    /// num_voxels x 27 submanifold neighbor table; tap index
    /// t = (dz+1)*9 + (dy+1)*3 + (dx+1), -1 where the neighbor voxel is
    /// unoccupied.
    std::vector<int32_t> neighbors;

    int num_voxels() const { return int(coords.size()); }
};

VoxelGrid voxelize(const GaussianScene& scene, double voxelSize);

struct GsrConfig {
    double voxel_size = 0.1;
    /// Point-feature interpolation: "nearest" or "trilinear".
    std::string tp_mode = "nearest";
    /// "self" attends each Gaussian to itself; "voxel-set" attends to
    /// all Gaussians sharing its voxel.
    std::string attention_mode = "self";
    /// Must divide the 11-wide attribute embedding.
    int attention_heads = 1;
};

/// Fresh Glorot-initialized parameters for the voxel network and the
/// attention adapter (biases zero).
ParamStore init_gsr_params(uint64_t seed);

/// Shapes every gsr parameter must have; used to validate checkpoints.
std::map<std::string, std::vector<int>> gsr_param_shapes();

/// Graph-bound parameter set.
struct ParamBank {
    std::map<std::string, ad::Value> values;
    ad::Value at(const std::string& name) const;
};

/// Copies every tensor in the store into the graph as a leaf; trainable
/// leaves track gradients.
ParamBank bind_params(ad::Graph& g, const ParamStore& store, bool trainable);

/// Per-Gaussian raw attribute matrix (n, 11): rotation, color, scale,
/// opacity.
ad::Tensor gaussian_attributes(const GaussianScene& scene);

/// Voxel feature network: embed 8->16, three submanifold convolutions
/// 16->32->32->16 with a residual skip around the middle layer. Returns
/// the (num_voxels, 16) voxel features.
ad::Value sparse_forward(ad::Graph& g, const VoxelGrid& grid, const ParamBank& params);

/// Interpolates voxel features back to Gaussians ("nearest" or
/// "trilinear" over the 2x2x2 cell corners, renormalized over occupied
/// ones). Returns (n, 16).
ad::Value map_to_points(ad::Graph& g, const VoxelGrid& grid, ad::Value voxelFeats,
    const GaussianScene& scene, const std::string& mode);

/// Attention adapter + prediction head. pointFeats (n, 16) drives the
/// queries; keys/values come from the raw attributes. Returns the
/// (n, 16) semantic vectors (head output plus a skip from pointFeats).
ad::Value adapter_forward(ad::Graph& g, const VoxelGrid& grid, ad::Value pointFeats,
    const GaussianScene& scene, const ParamBank& params, const GsrConfig& config);

/// Full forward pass; returns the (n, 16) semantic matrix.
ad::Value gsr_forward(ad::Graph& g, const GaussianScene& scene, const VoxelGrid& grid,
    const ParamBank& params, const GsrConfig& config);

/// Convenience: runs the network without gradients and returns a copy of
/// the scene with predicted semantics filled in.
GaussianScene predict_semantics(const GaussianScene& scene, const ParamStore& params,
    const GsrConfig& config);

} // namespace splatseg

#endif // SPLATSEG_GSR_HPP
