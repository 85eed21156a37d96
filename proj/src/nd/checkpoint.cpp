#include "pvrp/nd/checkpoint.hpp"

#include <cstdlib>
#include <fstream>

#include "pvrp/errors.hpp"
#include "pvrp/instance.hpp"

namespace pvrp {
namespace nd {

namespace {
constexpr const char* kFormat = "pvrp-params";
constexpr int kVersion = 1;
}  // namespace

void save_params(const std::string& path, std::span<Parameter* const> params,
                 const nlohmann::ordered_json& meta) {
    nlohmann::ordered_json j;
    j["format"] = kFormat;
    j["version"] = kVersion;
    j["meta"] = meta;
    auto arr = nlohmann::ordered_json::array();
    for (const Parameter* p : params) {
        nlohmann::ordered_json e;
        e["name"] = p->name;
        e["shape"] = p->value.shape;
        auto vals = nlohmann::ordered_json::array();
        for (real x : p->value.v) vals.push_back(format_real(static_cast<double>(x)));
        e["values"] = std::move(vals);
        arr.push_back(std::move(e));
    }
    j["params"] = std::move(arr);
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os << j.dump() << '\n';
}

namespace {

nlohmann::json parse_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw LoadError("cannot open checkpoint '" + path + "'");
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("checkpoint '" + path + "': " + e.what());
    }
    if (j.value("format", "") != kFormat || j.value("version", -1) != kVersion)
        throw LoadError("checkpoint '" + path + "': unknown format/version");
    return j;
}

}  // namespace

nlohmann::json load_params(const std::string& path, std::span<Parameter* const> params) {
    const nlohmann::json j = parse_checkpoint(path);
    for (Parameter* p : params) {
        const nlohmann::json* found = nullptr;
        for (const auto& e : j.at("params")) {
            if (e.at("name").get<std::string>() == p->name) {
                found = &e;
                break;
            }
        }
        if (!found) throw LoadError("checkpoint missing parameter '" + p->name + "'");
        const auto shape = found->at("shape").get<std::vector<int>>();
        if (shape != p->value.shape)
            throw LoadError("parameter '" + p->name + "': shape mismatch");
        const auto& vals = found->at("values");
        if (vals.size() != p->value.v.size())
            throw LoadError("parameter '" + p->name + "': value count mismatch");
        for (std::size_t i = 0; i < p->value.v.size(); ++i) {
            const auto& v = vals[i];
            if (v.is_string())
                p->value.v[i] = static_cast<real>(std::strtod(v.get<std::string>().c_str(), nullptr));
            else
                p->value.v[i] = static_cast<real>(v.get<double>());
        }
    }
    return j.value("meta", nlohmann::json::object());
}

nlohmann::json load_meta(const std::string& path) {
    return parse_checkpoint(path).value("meta", nlohmann::json::object());
}

}  // namespace nd
}  // namespace pvrp
