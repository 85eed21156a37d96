#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "pvrp/instance.hpp"
#include "pvrp/validator.hpp"

namespace pvrp {
namespace testing {

// Hand-built tiny instance: depot + explicit clients, unit speeds unless
// overridden. Profiles default to zero (preferences).
inline Instance make_instance(Point depot, std::vector<Point> clients, std::vector<double> demands,
                              std::vector<double> capacities, std::vector<double> speeds,
                              Variant variant = Variant::Preferences, double alpha = 0.0) {
    Instance inst;
    inst.id = "test";
    inst.depot = depot;
    inst.clients = std::move(clients);
    inst.n = static_cast<int>(inst.clients.size());
    inst.demands = std::move(demands);
    inst.capacities = std::move(capacities);
    inst.speeds = std::move(speeds);
    inst.m = static_cast<int>(inst.capacities.size());
    inst.variant = variant;
    inst.alpha = alpha;
    inst.profiles.assign(static_cast<std::size_t>(inst.m) * inst.n,
                         variant == Variant::ZoneConstraints ? 1.0 : 0.0);
    return inst;
}

// Independent brute-force oracle: enumerates every assignment of clients to
// vehicles, every ordering of each vehicle's subset, and every way to insert
// depot reloads between consecutive clients. Shares no code with the DFS
// solver; the arc value is recomputed from scratch here.
inline double brute_force_value(const Instance& inst) {
    const int n = inst.n;
    const int m = inst.m;

    auto arc_value = [&](int k, int from, int to) {
        const double cost = inst.distance(from, to) / inst.speeds[k];
        double pref = 0.0;
        if (inst.variant == Variant::Preferences && from != 0)
            pref = inst.alpha * inst.profile(k, from - 1);
        return pref - cost;
    };

    // best value of vehicle k serving exactly `subset` (any order, any trips)
    auto best_route_value = [&](int k, const std::vector<int>& subset) {
        if (subset.empty()) return 0.0;
        std::vector<int> perm = subset;
        std::sort(perm.begin(), perm.end());
        double best = -std::numeric_limits<double>::infinity();
        do {
            const int splits = 1 << (perm.size() - 1);
            for (int s = 0; s < splits; ++s) {
                double value = arc_value(k, 0, perm[0]);
                double load = inst.demands[perm[0] - 1];
                bool feasible = load <= inst.capacities[k];
                for (std::size_t i = 1; i < perm.size() && feasible; ++i) {
                    if (s & (1 << (i - 1))) {
                        value += arc_value(k, perm[i - 1], 0) + arc_value(k, 0, perm[i]);
                        load = 0.0;
                    } else {
                        value += arc_value(k, perm[i - 1], perm[i]);
                    }
                    load += inst.demands[perm[i] - 1];
                    feasible = load <= inst.capacities[k];
                }
                if (!feasible) continue;
                value += arc_value(k, perm.back(), 0);
                best = std::max(best, value);
            }
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best;
    };

    double best = -std::numeric_limits<double>::infinity();
    std::vector<int> assign(n, 0);
    long total = 1;
    for (int i = 0; i < n; ++i) total *= m;
    for (long code = 0; code < total; ++code) {
        long c = code;
        bool allowed = true;
        for (int i = 0; i < n; ++i) {
            assign[i] = static_cast<int>(c % m);
            c /= m;
            if (inst.variant == Variant::ZoneConstraints && inst.profile(assign[i], i) != 1.0)
                allowed = false;
        }
        if (!allowed) continue;
        double value = 0.0;
        for (int k = 0; k < m && std::isfinite(value); ++k) {
            std::vector<int> subset;
            for (int i = 0; i < n; ++i)
                if (assign[i] == k) subset.push_back(i + 1);
            value += best_route_value(k, subset);
        }
        best = std::max(best, value);
    }
    return best;
}

}  // namespace testing
}  // namespace pvrp
