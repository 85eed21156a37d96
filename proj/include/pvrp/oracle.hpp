#pragma once

#include <cstdint>
#include <iosfwd>

#include "pvrp/env.hpp"
#include "pvrp/instance.hpp"
#include "pvrp/rng.hpp"

namespace pvrp {
namespace oracle {

struct OracleResult {
    Solution solution;
    double value = 0.0;
    std::uint64_t nodes_explored = 0;
};

// Exhaustive search over all multi-trip route sets, vehicle by vehicle, with
// memoization on (served set, vehicle, position, remaining capacity).
// Optimal under the validator's objective. Guarded to n <= 8, m <= 3.
OracleResult exact_solve(const Instance& inst);

// Myopic constructor: always executes the single move with the best marginal
// value alpha*p_jk - c(cur,j)/s_k across vehicles; reloads at the depot when
// nothing fits. Deterministic; always feasible.
OracleResult greedy_solve(const Instance& inst);

// Environment rollout choosing uniformly among feasible actions per vehicle.
// Optional sink receives one JSONL trace record per step.
OracleResult random_rollout(const Instance& inst, Rng& rng, std::ostream* trace = nullptr);

}  // namespace oracle
}  // namespace pvrp
