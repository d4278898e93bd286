#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlif/core.hpp"
#include "dlif/model.hpp"
#include "dlif/nn.hpp"
#include "dlif/sim.hpp"
#include "dlif/trainer.hpp"

namespace dlif {

/// shortest round-trip decimal text, locale-independent
std::string format_double(double v);
double parse_double(const std::string& text, const char* what);

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_str(const std::string& s);
std::uint64_t fnv1a64_file(const std::string& path);

// --- .dpt volumes -----------------------------------------------------------
// Line 1: UTF-8 JSON header {"magic":"DPTv1","dims":[T,H,W,L],"voxel_mm":f,
// "frame_starts":[...],"frame_ends":[...],"units":"SUV","seed":u64|null}\n
// then raw little-endian 32-bit floats, t-major then z,y,x.

void write_dpt(const std::string& path, const DynamicVolume& vol);
DynamicVolume read_dpt(const std::string& path);

// --- curve CSV ---------------------------------------------------------------
// header "t_start_min,t_end_min,value", one row per frame, LF endings

void write_curve_csv(const std::string& path, const SampledCurve& curve);
SampledCurve read_curve_csv(const std::string& path);

// --- attention export --------------------------------------------------------
// "block,head,query,key,weight" rows

void write_attention_csv(const std::string& path, const AttentionMaps& maps);

// --- checkpoints --------------------------------------------------------------
// Line 1: JSON header with the model config, manifest and sizes; then raw
// little-endian 32-bit floats.

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// --- configuration ------------------------------------------------------------

nlohmann::ordered_json grid_to_json(const TimeGrid& g);
TimeGrid grid_from_json(const nlohmann::json& j);

nlohmann::ordered_json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json sim_config_to_json(const SimConfig& cfg);
SimConfig sim_config_from_json(const nlohmann::json& j);

/// The single-file run configuration: model + training + simulator + paths.
/// Unknown keys are rejected at every level.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    SimConfig sim;
    std::string out_dir;    // optional defaults, overridable from the CLI
    std::string cohort;

    std::string to_json_text() const;
    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
};

// --- run manifests -------------------------------------------------------------

inline constexpr const char* kToolVersion = "0.1.0";

/// Every command drops one of these into its output directory: the inputs
/// (with content hashes), the effective config hash, and the seed make the
/// run reproducible bit for bit.
struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    nlohmann::ordered_json inputs;   // name -> {path, fnv1a64}
    std::string config_hash;         // over the effective config text
    std::uint64_t seed = 0;
    std::vector<std::string> outputs;

    void add_input(const std::string& name, const std::string& path);
    void write(const std::string& dir) const;  // <dir>/manifest.json
};

void ensure_dir(const std::string& dir);
std::string path_join(const std::string& a, const std::string& b);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace dlif
