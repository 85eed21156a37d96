#include "pvrp/env.hpp"

#include <algorithm>
#include <ostream>

#include "json.hpp"
#include "pvrp/errors.hpp"

namespace pvrp {
namespace env {

namespace {

bool all_served(const State& state) {
    for (std::size_t i = 1; i < state.demand.size(); ++i)
        if (state.demand[i] > 0.0) return false;
    return true;
}

bool all_home(const State& state) {
    return std::all_of(state.current.begin(), state.current.end(), [](int c) { return c == 0; });
}

}  // namespace

State reset(const Instance& inst) {
    State s;
    s.remaining = inst.capacities;
    s.elapsed.assign(inst.m, 0.0);
    s.current.assign(inst.m, 0);
    s.routes.assign(inst.m, {0});
    s.demand.assign(inst.n + 1, 0.0);
    for (int i = 0; i < inst.n; ++i) s.demand[i + 1] = inst.demands[i];
    s.t = 0;
    s.done = all_served(s);
    return s;
}

Mask feasible_mask(const Instance& inst, const State& state) {
    if (state.done) throw ContractError("feasible_mask called on a finished episode");
    Mask mask;
    mask.m = inst.m;
    mask.cols = inst.n + 1;
    mask.feasible.assign(static_cast<std::size_t>(inst.m) * (inst.n + 1), 0);
    for (int k = 0; k < inst.m; ++k) {
        auto* row = mask.row(k);
        bool any_client = false;
        for (int j = 1; j <= inst.n; ++j) {
            const bool open = state.demand[j] > 0.0 && state.demand[j] <= state.remaining[k] &&
                              (inst.variant != Variant::ZoneConstraints || inst.profile(k, j - 1) == 1.0);
            row[j] = open ? 1 : 0;
            any_client = any_client || open;
        }
        const bool idle_at_full_depot =
            state.current[k] == 0 && state.remaining[k] == inst.capacities[k] && any_client;
        row[0] = idle_at_full_depot ? 0 : 1;
    }
    return mask;
}

JointAction resolve_conflicts(const State& state, const JointAction& proposed,
                              const std::vector<double>& probs) {
    JointAction out = proposed;
    const int m = static_cast<int>(proposed.size());
    for (int j = 1; j < static_cast<int>(state.demand.size()); ++j) {
        int winner = -1;
        for (int k = 0; k < m; ++k) {
            if (proposed[k] != j) continue;
            if (winner < 0 || probs[k] > probs[winner]) winner = k;
        }
        if (winner < 0) continue;
        for (int k = 0; k < m; ++k)
            if (proposed[k] == j && k != winner) out[k] = state.current[k];
    }
    return out;
}

int step_budget(const Instance& inst) { return 2 * (inst.n + 2 * inst.m) + 4; }

void step(const Instance& inst, State& state, const JointAction& action) {
    if (state.done) throw ContractError("step called on a finished episode");
    for (int k = 0; k < inst.m; ++k) {
        const int target = action[k];
        const int cur = state.current[k];
        if (target == cur) continue;  // idle, no route append
        const double duration = inst.distance(cur, target) / inst.speeds[k];
        state.elapsed[k] += duration;
        if (target == 0) {
            state.remaining[k] = inst.capacities[k];  // reload for the next trip
        } else {
            if (state.demand[target] <= 0.0 || state.demand[target] > state.remaining[k] ||
                (inst.variant == Variant::ZoneConstraints && inst.profile(k, target - 1) != 1.0))
                throw ContractError("vehicle " + std::to_string(k) + " stepped to infeasible node " +
                                    std::to_string(target));
            state.remaining[k] -= state.demand[target];
            state.demand[target] = 0.0;
        }
        state.routes[k].push_back(target);
        state.current[k] = target;
    }
    ++state.t;
    state.done = all_served(state) && all_home(state);
    if (!state.done && state.t > step_budget(inst))
        throw RunawayError("episode exceeded step budget of " + std::to_string(step_budget(inst)));
}

Solution solution_from(const State& state) {
    if (!state.done) throw ContractError("solution_from called before the episode finished");
    Solution sol;
    sol.routes = state.routes;
    for (auto& route : sol.routes) {
        if (!route.empty() && route.back() != 0) route.push_back(0);
    }
    return sol;
}

double terminal_reward(const Instance& inst, const State& state) {
    if (!state.done) throw ContractError("terminal_reward called before the episode finished");
    return objective(inst, solution_from(state));
}

void write_trace_record(std::ostream& os, const State& state, const Mask& mask,
                        const JointAction& action) {
    nlohmann::ordered_json j;
    j["t"] = state.t;
    j["current"] = state.current;
    auto reals = [](const std::vector<double>& xs) {
        auto a = nlohmann::ordered_json::array();
        for (double x : xs) a.push_back(format_real(x));
        return a;
    };
    j["remaining"] = reals(state.remaining);
    j["demand"] = reals(state.demand);
    auto rows = nlohmann::ordered_json::array();
    for (int k = 0; k < mask.m; ++k) {
        std::vector<int> row(mask.cols);
        for (int c = 0; c < mask.cols; ++c) row[c] = mask.at(k, c) ? 1 : 0;
        rows.push_back(row);
    }
    j["mask"] = std::move(rows);
    j["action"] = action;
    os << j.dump() << '\n';
}

}  // namespace env
}  // namespace pvrp
