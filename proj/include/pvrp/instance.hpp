#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pvrp/rng.hpp"

namespace pvrp {

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

inline double euclid(const Point& a, const Point& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

enum class Variant { Preferences, ZoneConstraints };
enum class DistKind { Random, Angle, Cluster, Zone };

const char* to_string(Variant v);
const char* to_string(DistKind d);
Variant variant_from_string(const std::string& s);
DistKind dist_from_string(const std::string& s);

// One PVRP instance. Node 0 is the depot; clients are nodes 1..n.
// `profiles` is row-major m x n: profile(k, i) scores vehicle k serving
// client i (preference in [0,1], or a 0/1 permission under zone constraints).
struct Instance {
    std::string id;
    int n = 0;  // clients
    int m = 0;  // vehicles
    Point depot;
    std::vector<Point> clients;       // size n
    std::vector<double> demands;      // size n, d_i > 0
    std::vector<double> capacities;   // size m, Q_k > 0
    std::vector<double> speeds;       // size m, s_k > 0
    std::vector<double> profiles;     // size m*n, row-major
    Variant variant = Variant::Preferences;
    double alpha = 0.0;
    DistKind dist_kind = DistKind::Random;
    std::uint64_t seed = 0;

    double profile(int k, int i) const { return profiles[static_cast<std::size_t>(k) * n + i]; }
    double& profile(int k, int i) { return profiles[static_cast<std::size_t>(k) * n + i]; }

    // Profile of an arbitrary node, applying the depot convention:
    // 0 under preferences (the depot never contributes preference reward),
    // 1 under zone constraints (the depot is always reachable).
    double node_profile(int k, int node) const {
        if (node == 0) return variant == Variant::ZoneConstraints ? 1.0 : 0.0;
        return profile(k, node - 1);
    }

    Point node_pos(int node) const { return node == 0 ? depot : clients[node - 1]; }

    double distance(int a, int b) const { return euclid(node_pos(a), node_pos(b)); }

    double max_capacity() const;

    bool operator==(const Instance&) const = default;
};

// Throws ValidationError if any type invariant fails.
void check_instance(const Instance& inst);

struct IntRange {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
};

struct RealRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct GenConfig {
    int n = 5;
    int m = 2;
    DistKind dist_kind = DistKind::Random;
    Variant variant = Variant::Preferences;
    double alpha = 0.1;
    IntRange demand_range{1, 9};
    IntRange capacity_range{20, 40};
    RealRange speed_range{0.5, 1.0};
    std::uint64_t seed = 0;
};

// Deterministic function of the config (same config, same instance).
Instance generate(const GenConfig& config);

// Profile generators. Each has a deterministic core taking the sampled
// geometry explicitly, plus an Rng wrapper used by generate().

// Equal angular sectors around the depot, rotated by `offset` radians;
// vehicle k owns sector sector_of_vehicle[k]; membership is half-open [lo, hi).
std::vector<double> profile_angle_core(const Point& depot, const std::vector<Point>& clients,
                                       int m, double offset,
                                       const std::vector<int>& sector_of_vehicle);
std::vector<double> profile_angle(const Point& depot, const std::vector<Point>& clients, int m,
                                  Rng& rng);

// p = max(0, 1 - dist(client, center_k)/sqrt(2)); one center per vehicle.
std::vector<double> profile_cluster_core(const std::vector<Point>& clients,
                                         const std::vector<Point>& centers);
std::vector<double> profile_cluster(const std::vector<Point>& clients, int m, Rng& rng);

// Nearest-center zones with Bernoulli(1/2) availability per (vehicle, zone);
// zones left without any vehicle are redrawn within the retry budget.
std::vector<double> profile_zone_core(const std::vector<Point>& clients, int m,
                                      const std::vector<Point>& zone_centers, Rng& rng);
std::vector<double> profile_zone(const std::vector<Point>& clients, int m, Rng& rng);

int draw_zone_count(int m, Rng& rng);  // uniform in {m, ..., 3m}

// JSONL serialization, one instance per line. Reals are written as decimal
// strings with 17 significant digits so round-trips are bit exact.
void write_instances(std::ostream& os, const std::vector<Instance>& instances);
void write_instances(const std::string& path, const std::vector<Instance>& instances);
std::vector<Instance> read_instances(std::istream& is);
std::vector<Instance> read_instances(const std::string& path);

// "%.17g" formatting used across all serialized artifacts.
std::string format_real(double v);

}  // namespace pvrp
