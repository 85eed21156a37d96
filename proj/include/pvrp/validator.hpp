#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "pvrp/instance.hpp"

namespace pvrp {

// Per-vehicle node sequences. Nonempty routes begin and end at depot 0;
// interior depot visits delimit trips. Consecutive depot entries are legal
// zero-cost idle steps and contribute nothing to the objective.
struct Solution {
    std::vector<std::vector<int>> routes;
    bool operator==(const Solution&) const = default;
};

enum class ConstraintId { VisitOnce, Capacity, Flow, Zone, RouteShape };

const char* to_string(ConstraintId id);

struct Violation {
    ConstraintId id;
    std::string detail;
};

struct ValidationReport {
    bool feasible = true;
    std::vector<Violation> violations;
};

// Route-level feasibility check: every client visited exactly once, per-trip
// load within capacity, depot-delimited routes, no client self-loops, and
// zone permissions under the zone-constraints variant. Out-of-range node
// indices are a structural error (ValidationError), not an infeasibility.
ValidationReport validate(const Instance& inst, const Solution& sol);

// Sum of Euclidean arc lengths of `route` divided by vehicle k's speed.
double route_duration(const Instance& inst, int k, const std::vector<int>& route);

// Exact objective of a feasible solution: under preferences,
// sum over arcs (i,j) of alpha*p_ik - c_ij/s_k with the depot contributing
// no preference; under zone constraints, the negated total duration.
// Throws ValidationError when the solution is infeasible.
double objective(const Instance& inst, const Solution& sol);

// Total preference and total duration, the two terms the objective trades.
struct ObjectiveBreakdown {
    double preference_total = 0.0;
    double duration_total = 0.0;
    double reward(const Instance& inst) const {
        return inst.variant == Variant::Preferences
                   ? inst.alpha * preference_total - duration_total
                   : -duration_total;
    }
};
ObjectiveBreakdown objective_breakdown(const Instance& inst, const Solution& sol);

// Solution JSON: {"routes": [[0,3,1,0],[0,2,0]]}
std::string solution_to_json(const Solution& sol);
Solution solution_from_json(const std::string& text);
void write_solutions(const std::string& path, const std::vector<Solution>& sols);
std::vector<Solution> read_solutions(const std::string& path);

}  // namespace pvrp
