#pragma once

// JSON mappings for configuration documents. Unknown keys are rejected so that
// a misspelled field never silently falls back to a default.

#include <filesystem>

#include "json.hpp"
#include "hwvit/arch.hpp"
#include "hwvit/hw_model.hpp"

namespace hwvit {

using Json = nlohmann::json;

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& j);
/// Stable text form: sorted keys, two-space indent, trailing newline.
std::string dump_json(const Json& j);

void to_json(Json& j, const SearchSpace& s);
void from_json(const Json& j, SearchSpace& s);
void to_json(Json& j, const LayerGenes& g);
void from_json(const Json& j, LayerGenes& g);
void to_json(Json& j, const SubnetConfig& c);
void from_json(const Json& j, SubnetConfig& c);
void to_json(Json& j, const ModelMeta& m);
void from_json(const Json& j, ModelMeta& m);
void to_json(Json& j, const ModelStats& s);

namespace hw {
void to_json(Json& j, const HardwareProfile& p);
void from_json(const Json& j, HardwareProfile& p);
void to_json(Json& j, const CostTable& c);
/// Missing entries keep their defaults.
void from_json(const Json& j, CostTable& c);
void to_json(Json& j, const ComputePlan& p);
void to_json(Json& j, const ResourceUsage& r);
void to_json(Json& j, const LayerShape& s);
void from_json(const Json& j, LayerShape& s);
void to_json(Json& j, const TileConfig& t);
void from_json(const Json& j, TileConfig& t);
void to_json(Json& j, const FpsEstimate& e);
}  // namespace hw

/// Throws std::invalid_argument naming the first key of `j` not in `allowed`.
void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* context);

}  // namespace hwvit
