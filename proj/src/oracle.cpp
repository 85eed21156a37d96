#include "pvrp/oracle.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "pvrp/errors.hpp"
#include "pvrp/validator.hpp"

namespace pvrp {
namespace oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Marginal objective contribution of vehicle k traveling from `from` to
// client j and serving it.
double serve_marginal(const Instance& inst, int k, int from, int j) {
    const double cost = inst.distance(from, j) / inst.speeds[k];
    if (inst.variant == Variant::Preferences)
        return inst.alpha * inst.profile(k, j - 1) - cost;
    return -cost;
}

bool zone_allows(const Instance& inst, int k, int j) {
    return inst.variant != Variant::ZoneConstraints || inst.profile(k, j - 1) == 1.0;
}

struct SearchKey {
    int vehicle;
    int pos;
    unsigned served;
    std::uint64_t capacity_bits;
    bool operator==(const SearchKey&) const = default;
};

struct SearchKeyHash {
    std::size_t operator()(const SearchKey& k) const {
        std::uint64_t h = k.capacity_bits;
        h = mix_seed(h ^ (static_cast<std::uint64_t>(k.served) << 8 | k.pos));
        h = mix_seed(h ^ static_cast<std::uint64_t>(k.vehicle));
        return static_cast<std::size_t>(h);
    }
};

struct SearchEntry {
    double value = kNegInf;
    int best_move = -2;  // -1 = finish vehicle, 0 = return to depot, j >= 1 = serve j
};

class ExactSearch {
  public:
    explicit ExactSearch(const Instance& inst) : inst_(inst), full_((1u << inst.n) - 1) {}

    double value_to_go(int vehicle, int pos, double capacity, unsigned served) {
        if (vehicle == inst_.m) return served == full_ ? 0.0 : kNegInf;
        const SearchKey key{vehicle, pos, served, std::bit_cast<std::uint64_t>(capacity)};
        if (auto it = memo_.find(key); it != memo_.end()) return it->second.value;
        ++explored_;

        SearchEntry entry;
        for (int j = 1; j <= inst_.n; ++j) {
            const unsigned bit = 1u << (j - 1);
            if (served & bit) continue;
            if (inst_.demands[j - 1] > capacity || !zone_allows(inst_, vehicle, j)) continue;
            const double v = serve_marginal(inst_, vehicle, pos, j) +
                             value_to_go(vehicle, j, capacity - inst_.demands[j - 1], served | bit);
            if (v > entry.value) entry = {v, j};
        }
        if (pos == 0) {
            // finish this vehicle, hand over to the next one
            const double v = value_to_go(vehicle + 1, 0,
                                         vehicle + 1 < inst_.m ? inst_.capacities[vehicle + 1] : 0.0,
                                         served);
            if (v > entry.value) entry = {v, -1};
        } else {
            const double v = -inst_.distance(pos, 0) / inst_.speeds[vehicle] +
                             value_to_go(vehicle, 0, inst_.capacities[vehicle], served);
            if (v > entry.value) entry = {v, 0};
        }
        memo_.emplace(key, entry);
        return entry.value;
    }

    Solution reconstruct() {
        Solution sol;
        sol.routes.assign(inst_.m, {0});
        int vehicle = 0;
        int pos = 0;
        double capacity = inst_.capacities.empty() ? 0.0 : inst_.capacities[0];
        unsigned served = 0;
        while (vehicle < inst_.m) {
            const SearchKey key{vehicle, pos, served, std::bit_cast<std::uint64_t>(capacity)};
            const auto it = memo_.find(key);
            if (it == memo_.end()) throw Error("exact search: missing memo entry");
            const int move = it->second.best_move;
            if (move == -1) {
                ++vehicle;
                pos = 0;
                capacity = vehicle < inst_.m ? inst_.capacities[vehicle] : 0.0;
            } else if (move == 0) {
                sol.routes[vehicle].push_back(0);
                pos = 0;
                capacity = inst_.capacities[vehicle];
            } else {
                sol.routes[vehicle].push_back(move);
                capacity -= inst_.demands[move - 1];
                served |= 1u << (move - 1);
                pos = move;
            }
        }
        return sol;
    }

    std::uint64_t explored() const { return explored_; }

  private:
    const Instance& inst_;
    unsigned full_;
    std::uint64_t explored_ = 0;
    std::unordered_map<SearchKey, SearchEntry, SearchKeyHash> memo_;
};

}  // namespace

OracleResult exact_solve(const Instance& inst) {
    if (inst.n > 8 || inst.m > 3)
        throw SolveRefusedError("exact_solve is limited to n <= 8 and m <= 3 (got n=" +
                                std::to_string(inst.n) + ", m=" + std::to_string(inst.m) + ")");
    ExactSearch search(inst);
    const double value =
        search.value_to_go(0, 0, inst.capacities.empty() ? 0.0 : inst.capacities[0], 0);
    if (value == kNegInf) throw Error("exact_solve: no feasible solution exists");
    OracleResult result;
    result.solution = search.reconstruct();
    result.nodes_explored = search.explored();
    result.value = objective(inst, result.solution);
    return result;
}

OracleResult greedy_solve(const Instance& inst) {
    std::vector<int> current(inst.m, 0);
    std::vector<double> remaining = inst.capacities;
    std::vector<std::uint8_t> served(inst.n + 1, 0);
    int unserved = inst.n;
    Solution sol;
    sol.routes.assign(inst.m, {0});
    std::uint64_t moves = 0;

    while (unserved > 0) {
        int best_k = -1, best_j = -1;
        double best = kNegInf;
        for (int k = 0; k < inst.m; ++k) {
            for (int j = 1; j <= inst.n; ++j) {
                if (served[j] || inst.demands[j - 1] > remaining[k] || !zone_allows(inst, k, j))
                    continue;
                const double v = serve_marginal(inst, k, current[k], j);
                if (v > best) {
                    best = v;
                    best_k = k;
                    best_j = j;
                }
            }
        }
        if (best_k >= 0) {
            sol.routes[best_k].push_back(best_j);
            remaining[best_k] -= inst.demands[best_j - 1];
            served[best_j] = 1;
            current[best_k] = best_j;
            --unserved;
        } else {
            // Nothing fits anywhere: reload the vehicle whose next full-capacity
            // move (net of the trip home) looks best.
            int reload_k = -1;
            double reload_best = kNegInf;
            for (int k = 0; k < inst.m; ++k) {
                if (current[k] == 0) continue;  // already at the depot, already full
                const double home_cost = inst.distance(current[k], 0) / inst.speeds[k];
                for (int j = 1; j <= inst.n; ++j) {
                    if (served[j] || inst.demands[j - 1] > inst.capacities[k] ||
                        !zone_allows(inst, k, j))
                        continue;
                    const double v = serve_marginal(inst, k, 0, j) - home_cost;
                    if (v > reload_best) {
                        reload_best = v;
                        reload_k = k;
                    }
                }
            }
            if (reload_k < 0) throw Error("greedy_solve: remaining clients fit no vehicle");
            sol.routes[reload_k].push_back(0);
            remaining[reload_k] = inst.capacities[reload_k];
            current[reload_k] = 0;
        }
        ++moves;
    }
    for (int k = 0; k < inst.m; ++k) {
        if (current[k] != 0) {
            sol.routes[k].push_back(0);
            ++moves;
        }
    }

    OracleResult result;
    result.solution = std::move(sol);
    result.nodes_explored = moves;
    result.value = objective(inst, result.solution);
    return result;
}

OracleResult random_rollout(const Instance& inst, Rng& rng, std::ostream* trace) {
    env::State state = env::reset(inst);
    std::uint64_t steps = 0;
    while (!state.done) {
        const env::Mask mask = env::feasible_mask(inst, state);
        env::JointAction proposed(inst.m);
        std::vector<double> probs(inst.m);
        for (int k = 0; k < inst.m; ++k) {
            int count = 0;
            for (int node = 0; node <= inst.n; ++node) count += mask.at(k, node) ? 1 : 0;
            int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(count)));
            int chosen = -1;
            for (int node = 0; node <= inst.n; ++node) {
                if (!mask.at(k, node)) continue;
                if (pick-- == 0) {
                    chosen = node;
                    break;
                }
            }
            proposed[k] = chosen;
            probs[k] = 1.0 / count;
        }
        const env::JointAction action = env::resolve_conflicts(state, proposed, probs);
        if (trace) env::write_trace_record(*trace, state, mask, action);
        env::step(inst, state, action);
        ++steps;
    }
    OracleResult result;
    result.solution = env::solution_from(state);
    result.value = env::terminal_reward(inst, state);
    result.nodes_explored = steps;
    return result;
}

}  // namespace oracle
}  // namespace pvrp
