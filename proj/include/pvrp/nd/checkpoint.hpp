#pragma once

#include <span>
#include <string>

#include "json.hpp"
#include "pvrp/nd/tensor.hpp"

namespace pvrp {
namespace nd {

// Versioned JSON checkpoint of named parameters. Values are stored as
// decimal strings with 17 significant digits, so save/load round-trips are
// bit exact. `meta` carries arbitrary caller metadata (model config etc.).
void save_params(const std::string& path, std::span<Parameter* const> params,
                 const nlohmann::ordered_json& meta);

// Loads into existing parameters, matched by name. Throws LoadError on a
// missing name, shape mismatch, or unknown format version.
nlohmann::json load_params(const std::string& path, std::span<Parameter* const> params);

// Reads only the metadata block.
nlohmann::json load_meta(const std::string& path);

}  // namespace nd
}  // namespace pvrp
