#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deg/octree.hpp"
#include "deg/trainer.hpp"
#include "deg/types.hpp"

namespace deg {

/// Newline-delimited scene text: one primitive per line with 14 fields
/// (center x3, log_scale x3, quaternion wxyz, opacity logit, rgb x3).
/// '#' starts a comment; "#background r g b" sets the background color.
void save_scene_text(const std::string& path, const Scene& scene);
Scene load_scene_text(const std::string& path);

/// ASCII PLY with per-anchor log-probability.
void write_anchor_ply(const std::string& path, const AnchorSet& anchors);

struct PlyPoints {
    std::vector<Vec3> points;
    std::vector<double> log_prob;  // empty when the file has no such property
};
PlyPoints read_ply_points(const std::string& path);

/// Model container: a "DEGD" density section followed by a "DEGA" decoder
/// section, all little-endian.
void save_model(const std::string& path, const FittedModel& model);
FittedModel load_model(const std::string& path);

void write_fit_log_csv(const std::string& path, const std::vector<IterationLog>& rows);

/// FNV-1a over a file's bytes; recorded in run manifests.
std::uint64_t fnv1a_file(const std::string& path);

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace deg
