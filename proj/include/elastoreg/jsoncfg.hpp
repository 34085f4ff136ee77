#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

#include "elastoreg/elasticity.hpp"
#include "elastoreg/engine.hpp"
#include "elastoreg/network.hpp"
#include "elastoreg/synthdata.hpp"

namespace elastoreg::jsoncfg {

using json = nlohmann::json;

json to_json(const net::ArchConfig& arch);
net::ArchConfig arch_from_json(const json& j);

json to_json(const elast::MaterialConfig& m);
elast::MaterialConfig material_from_json(const json& j);

json to_json(const engine::TrainConfig& cfg);  // supervised_truth omitted (runtime data)
engine::TrainConfig train_config_from_json(const json& j);

json to_json(const synth::Scenario& s);
synth::Scenario scenario_from_json(const json& j);

json parse_file(const std::filesystem::path& path);

// FNV-1a over the canonical (key-sorted) dump; stable under key reordering.
std::string config_hash(const json& j);

}  // namespace elastoreg::jsoncfg
