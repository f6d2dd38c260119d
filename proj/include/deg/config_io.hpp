#pragma once

#include <map>
#include <string>
#include <vector>

#include "deg/fm_toy.hpp"
#include "deg/trainer.hpp"

namespace deg {

/// Sectioned key=value text. Unknown sections or keys are rejected by the
/// typed loaders below, naming the offending key.
using RawConfig = std::map<std::string, std::map<std::string, std::string>>;

RawConfig parse_config_text(const std::string& text);
RawConfig parse_config_file(const std::string& path);

/// Applies [model], [train] and [render] sections onto the defaults.
FitConfig fit_config_from(const RawConfig& raw);

/// Serializes the resolved configuration back to config text (manifests,
/// reproduction).
std::string fit_config_to_text(const FitConfig& cfg);

struct RunManifest {
    std::string command;
    std::string version;
    std::uint64_t seed = 0;
    std::string config_text;                          // resolved configuration
    std::map<std::string, std::string> input_hashes;  // path -> fnv1a64 hex
    std::vector<std::string> outputs;
};

/// JSON manifest written into the output directory before any heavy work.
void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace deg
