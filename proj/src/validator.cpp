#include "pvrp/validator.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "pvrp/errors.hpp"

namespace pvrp {

const char* to_string(ConstraintId id) {
    switch (id) {
        case ConstraintId::VisitOnce: return "visit-once";
        case ConstraintId::Capacity: return "capacity";
        case ConstraintId::Flow: return "flow";
        case ConstraintId::Zone: return "zone";
        case ConstraintId::RouteShape: return "route-shape";
    }
    return "route-shape";
}

ValidationReport validate(const Instance& inst, const Solution& sol) {
    if (static_cast<int>(sol.routes.size()) != inst.m)
        throw ValidationError("solution has " + std::to_string(sol.routes.size()) +
                              " routes for " + std::to_string(inst.m) + " vehicles");
    for (const auto& route : sol.routes)
        for (int node : route)
            if (node < 0 || node > inst.n)
                throw ValidationError("node index " + std::to_string(node) + " out of range");

    ValidationReport report;
    auto violate = [&](ConstraintId id, std::string detail) {
        report.feasible = false;
        report.violations.push_back({id, std::move(detail)});
    };

    std::vector<int> visits(inst.n + 1, 0);
    for (int k = 0; k < inst.m; ++k) {
        const auto& route = sol.routes[k];
        if (route.empty()) continue;
        if (route.front() != 0 || route.back() != 0)
            violate(ConstraintId::RouteShape,
                    "vehicle " + std::to_string(k) + ": route must start and end at the depot");
        double load = 0.0;
        int trip = 0;
        for (std::size_t i = 0; i < route.size(); ++i) {
            const int node = route[i];
            if (i > 0 && node == route[i - 1] && node != 0)
                violate(ConstraintId::RouteShape,
                        "vehicle " + std::to_string(k) + ": self-loop at client " + std::to_string(node));
            if (node == 0) {
                load = 0.0;  // reload, next trip
                if (i > 0) ++trip;
                continue;
            }
            ++visits[node];
            load += inst.demands[node - 1];
            if (load > inst.capacities[k] + 1e-9)
                violate(ConstraintId::Capacity,
                        "vehicle " + std::to_string(k) + " trip " + std::to_string(trip) +
                            ": load exceeds capacity");
            if (inst.variant == Variant::ZoneConstraints && inst.profile(k, node - 1) != 1.0)
                violate(ConstraintId::Zone, "vehicle " + std::to_string(k) +
                                                " not allowed at client " + std::to_string(node));
        }
    }
    for (int i = 1; i <= inst.n; ++i) {
        if (visits[i] != 1)
            violate(ConstraintId::VisitOnce, "client " + std::to_string(i) + " visited " +
                                                 std::to_string(visits[i]) + " times");
    }
    // Flow conservation and trip ordering hold by construction of the route
    // representation; nothing to check.
    return report;
}

double route_duration(const Instance& inst, int k, const std::vector<int>& route) {
    double length = 0.0;
    for (std::size_t i = 0; i + 1 < route.size(); ++i)
        length += inst.distance(route[i], route[i + 1]);
    return length / inst.speeds[k];
}

ObjectiveBreakdown objective_breakdown(const Instance& inst, const Solution& sol) {
    ObjectiveBreakdown b;
    for (int k = 0; k < inst.m; ++k) {
        const auto& route = sol.routes[k];
        for (std::size_t i = 0; i + 1 < route.size(); ++i) {
            b.duration_total += inst.distance(route[i], route[i + 1]) / inst.speeds[k];
            if (route[i] != 0) b.preference_total += inst.profile(k, route[i] - 1);
        }
    }
    return b;
}

double objective(const Instance& inst, const Solution& sol) {
    const ValidationReport report = validate(inst, sol);
    if (!report.feasible) {
        std::string msg = "objective of infeasible solution:";
        for (const auto& v : report.violations) msg += " [" + std::string(to_string(v.id)) + "]";
        throw ValidationError(msg);
    }
    double value = 0.0;
    for (int k = 0; k < inst.m; ++k) {
        const auto& route = sol.routes[k];
        for (std::size_t i = 0; i + 1 < route.size(); ++i) {
            const double cost = inst.distance(route[i], route[i + 1]) / inst.speeds[k];
            if (inst.variant == Variant::Preferences) {
                const double pref = route[i] == 0 ? 0.0 : inst.profile(k, route[i] - 1);
                value += inst.alpha * pref - cost;
            } else {
                value -= cost;
            }
        }
    }
    return value;
}

std::string solution_to_json(const Solution& sol) {
    nlohmann::ordered_json j;
    j["routes"] = sol.routes;
    return j.dump();
}

Solution solution_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(e.what());
    }
    Solution sol;
    if (!j.contains("routes") || !j["routes"].is_array()) throw ParseError("missing 'routes' array");
    for (const auto& r : j["routes"]) sol.routes.push_back(r.get<std::vector<int>>());
    return sol;
}

void write_solutions(const std::string& path, const std::vector<Solution>& sols) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    for (const auto& s : sols) os << solution_to_json(s) << '\n';
}

std::vector<Solution> read_solutions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    std::vector<Solution> out;
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(solution_from_json(line));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

}  // namespace pvrp
