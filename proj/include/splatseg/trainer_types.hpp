// Copyright Contributors to the splatseg Project
// SPDX-License-Identifier: Apache-2.0

#ifndef SPLATSEG_TRAINER_TYPES_HPP
#define SPLATSEG_TRAINER_TYPES_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace splatseg {

/// One scene with its camera files, optional per-camera dense targets
/// and a split tag (train | val | novel_view | cross_domain).
struct ManifestEntry {
    std::filesystem::path scene;
    std::vector<std::filesystem::path> cameras;
    /// Parallel to cameras; empty optional = no dense target.
    std::vector<std::optional<std::filesystem::path>> targets;
    std::string split;
};

using Manifest = std::vector<ManifestEntry>;

/// Parses a manifest JSON file (a list of entries). Relative paths are
/// resolved against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& file);

void save_manifest(const Manifest& manifest, const std::filesystem::path& file);

} // namespace splatseg

#endif // SPLATSEG_TRAINER_TYPES_HPP
