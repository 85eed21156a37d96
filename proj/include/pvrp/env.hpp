#pragma once

#include <iosfwd>
#include <vector>

#include "pvrp/instance.hpp"
#include "pvrp/validator.hpp"

namespace pvrp {
namespace env {

// MDP state for parallel multi-vehicle construction. One State is owned by
// one episode; episodes on different threads share nothing.
struct State {
    std::vector<double> remaining;       // o_k, per vehicle
    std::vector<double> elapsed;         // T_k, per vehicle
    std::vector<int> current;            // current node per vehicle
    std::vector<std::vector<int>> routes;
    std::vector<double> demand;          // remaining demand per node, index 0..n
    int t = 0;
    bool done = false;
};

// target node per vehicle; entry k in {0..n}
using JointAction = std::vector<int>;

// m x (n+1) row-major, true = feasible
struct Mask {
    int m = 0;
    int cols = 0;
    std::vector<std::uint8_t> feasible;
    bool at(int k, int node) const { return feasible[static_cast<std::size_t>(k) * cols + node] != 0; }
    std::uint8_t* row(int k) { return feasible.data() + static_cast<std::size_t>(k) * cols; }
    const std::uint8_t* row(int k) const {
        return feasible.data() + static_cast<std::size_t>(k) * cols;
    }
};

State reset(const Instance& inst);

// Client j is open to vehicle k iff it still has demand, the demand fits the
// remaining capacity, and (zone variant) p_jk = 1. The depot is always open,
// except that a fully loaded vehicle sitting at the depot with at least one
// open client may not idle there (guarantees progress).
Mask feasible_mask(const Instance& inst, const State& state);

// Every client claimed by two or more vehicles goes to the claimant with the
// highest selection probability (ties to the lowest vehicle index); the other
// claimants stay where they are. Depot claims are never conflicts.
JointAction resolve_conflicts(const State& state, const JointAction& proposed,
                              const std::vector<double>& probs);

int step_budget(const Instance& inst);

// Applies a conflict-free joint action. Moving to a client serves it in
// full; reaching the depot reloads to Q_k; an action equal to the current
// node leaves the vehicle untouched (no route append).
void step(const Instance& inst, State& state, const JointAction& action);

// Defined only at done; exactly objective(inst, solution_from(state)).
double terminal_reward(const Instance& inst, const State& state);

Solution solution_from(const State& state);

// Debug trajectory record (JSONL): state digest + mask + action per step.
void write_trace_record(std::ostream& os, const State& state, const Mask& mask,
                        const JointAction& action);

}  // namespace env
}  // namespace pvrp
