#include "pvrp/instance.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "pvrp/errors.hpp"

namespace pvrp {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kSqrt2 = std::numbers::sqrt2;
constexpr int kZoneRepairRetries = 1000;
}  // namespace

const char* to_string(Variant v) {
    return v == Variant::Preferences ? "preferences" : "zone-constraints";
}

const char* to_string(DistKind d) {
    switch (d) {
        case DistKind::Random: return "random";
        case DistKind::Angle: return "angle";
        case DistKind::Cluster: return "cluster";
        case DistKind::Zone: return "zone";
    }
    return "random";
}

Variant variant_from_string(const std::string& s) {
    if (s == "preferences") return Variant::Preferences;
    if (s == "zone-constraints") return Variant::ZoneConstraints;
    throw ParseError("unknown variant '" + s + "'");
}

DistKind dist_from_string(const std::string& s) {
    if (s == "random") return DistKind::Random;
    if (s == "angle") return DistKind::Angle;
    if (s == "cluster") return DistKind::Cluster;
    if (s == "zone") return DistKind::Zone;
    throw ParseError("unknown distribution '" + s + "'");
}

double Instance::max_capacity() const {
    double q = 0.0;
    for (double c : capacities) q = std::max(q, c);
    return q;
}

void check_instance(const Instance& inst) {
    auto fail = [&](const std::string& msg) { throw ValidationError("instance '" + inst.id + "': " + msg); };
    if (inst.n < 0 || inst.m < 1) fail("need m >= 1 and n >= 0");
    if (static_cast<int>(inst.clients.size()) != inst.n) fail("clients size != n");
    if (static_cast<int>(inst.demands.size()) != inst.n) fail("demands size != n");
    if (static_cast<int>(inst.capacities.size()) != inst.m) fail("capacities size != m");
    if (static_cast<int>(inst.speeds.size()) != inst.m) fail("speeds size != m");
    if (inst.profiles.size() != static_cast<std::size_t>(inst.m) * inst.n) fail("profiles size != m*n");
    if (inst.alpha < 0.0) fail("alpha must be nonnegative");

    auto in_unit = [](const Point& p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; };
    if (!in_unit(inst.depot)) fail("depot outside [0,1]^2");
    for (const Point& c : inst.clients)
        if (!in_unit(c)) fail("client outside [0,1]^2");

    for (double q : inst.capacities)
        if (!(q > 0.0)) fail("capacity must be positive");
    for (double s : inst.speeds)
        if (!(s > 0.0)) fail("speed must be positive");

    const double qmax = inst.max_capacity();
    for (double d : inst.demands) {
        if (!(d > 0.0)) fail("demand must be positive");
        if (d > qmax) fail("demand exceeds every vehicle capacity");
    }

    for (int k = 0; k < inst.m; ++k) {
        for (int i = 0; i < inst.n; ++i) {
            const double p = inst.profile(k, i);
            if (inst.variant == Variant::Preferences) {
                if (!(p >= 0.0 && p <= 1.0)) fail("preference profile outside [0,1]");
            } else {
                if (p != 0.0 && p != 1.0) fail("zone profile must be 0 or 1");
            }
        }
    }
    if (inst.variant == Variant::ZoneConstraints) {
        for (int i = 0; i < inst.n; ++i) {
            bool covered = false;
            for (int k = 0; k < inst.m; ++k) covered = covered || inst.profile(k, i) == 1.0;
            if (!covered) fail("client " + std::to_string(i + 1) + " served by no vehicle");
        }
    }
}

std::vector<double> profile_angle_core(const Point& depot, const std::vector<Point>& clients,
                                       int m, double offset,
                                       const std::vector<int>& sector_of_vehicle) {
    const int n = static_cast<int>(clients.size());
    const double width = 2.0 * kPi / m;
    std::vector<double> p(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        double angle = std::atan2(clients[i].y - depot.y, clients[i].x - depot.x);
        double rel = std::fmod(angle - offset, 2.0 * kPi);
        if (rel < 0.0) rel += 2.0 * kPi;
        int sector = std::min(static_cast<int>(rel / width), m - 1);
        for (int k = 0; k < m; ++k) {
            if (sector_of_vehicle[k] == sector) p[static_cast<std::size_t>(k) * n + i] = 1.0;
        }
    }
    return p;
}

std::vector<double> profile_angle(const Point& depot, const std::vector<Point>& clients, int m,
                                  Rng& rng) {
    const double offset = rng.uniform(0.0, 2.0 * kPi);
    std::vector<int> sectors(m);
    for (int k = 0; k < m; ++k) sectors[k] = k;
    rng.shuffle(sectors);
    return profile_angle_core(depot, clients, m, offset, sectors);
}

std::vector<double> profile_cluster_core(const std::vector<Point>& clients,
                                         const std::vector<Point>& centers) {
    const int n = static_cast<int>(clients.size());
    const int m = static_cast<int>(centers.size());
    std::vector<double> p(static_cast<std::size_t>(m) * n, 0.0);
    for (int k = 0; k < m; ++k) {
        for (int i = 0; i < n; ++i) {
            const double d = euclid(clients[i], centers[k]);
            p[static_cast<std::size_t>(k) * n + i] = std::max(0.0, 1.0 - d / kSqrt2);
        }
    }
    return p;
}

std::vector<double> profile_cluster(const std::vector<Point>& clients, int m, Rng& rng) {
    std::vector<Point> centers(m);
    for (Point& c : centers) c = {rng.uniform(), rng.uniform()};
    return profile_cluster_core(clients, centers);
}

int draw_zone_count(int m, Rng& rng) {
    return static_cast<int>(rng.uniform_int(m, 3 * static_cast<std::int64_t>(m)));
}

std::vector<double> profile_zone_core(const std::vector<Point>& clients, int m,
                                      const std::vector<Point>& zone_centers, Rng& rng) {
    const int n = static_cast<int>(clients.size());
    const int zones = static_cast<int>(zone_centers.size());

    std::vector<int> zone_of_client(n, 0);
    for (int i = 0; i < n; ++i) {
        double best = euclid(clients[i], zone_centers[0]);
        for (int z = 1; z < zones; ++z) {
            const double d = euclid(clients[i], zone_centers[z]);
            if (d < best) {
                best = d;
                zone_of_client[i] = z;
            }
        }
    }

    // available[k][z], Bernoulli(1/2); zones holding clients must end up
    // with at least one available vehicle.
    std::vector<std::uint8_t> available(static_cast<std::size_t>(m) * zones);
    for (auto& a : available) a = rng.bernoulli() ? 1 : 0;

    std::vector<std::uint8_t> zone_used(zones, 0);
    for (int i = 0; i < n; ++i) zone_used[zone_of_client[i]] = 1;

    int budget = kZoneRepairRetries;
    for (int z = 0; z < zones; ++z) {
        if (!zone_used[z]) continue;
        auto covered = [&] {
            for (int k = 0; k < m; ++k)
                if (available[static_cast<std::size_t>(k) * zones + z]) return true;
            return false;
        };
        while (!covered()) {
            if (--budget < 0) throw GenerationError("zone feasibility repair budget exhausted");
            for (int k = 0; k < m; ++k)
                available[static_cast<std::size_t>(k) * zones + z] = rng.bernoulli() ? 1 : 0;
        }
    }

    std::vector<double> p(static_cast<std::size_t>(m) * n, 0.0);
    for (int k = 0; k < m; ++k)
        for (int i = 0; i < n; ++i)
            p[static_cast<std::size_t>(k) * n + i] =
                available[static_cast<std::size_t>(k) * zones + zone_of_client[i]] ? 1.0 : 0.0;
    return p;
}

std::vector<double> profile_zone(const std::vector<Point>& clients, int m, Rng& rng) {
    const int zones = draw_zone_count(m, rng);
    std::vector<Point> centers(zones);
    for (Point& c : centers) c = {rng.uniform(), rng.uniform()};
    return profile_zone_core(clients, m, centers, rng);
}

Instance generate(const GenConfig& config) {
    if (config.n < 1 || config.m < 1) throw ValidationError("GenConfig: need n >= 1 and m >= 1");
    if (config.demand_range.lo > config.demand_range.hi || config.demand_range.lo < 1)
        throw ValidationError("GenConfig: bad demand range");
    if (config.capacity_range.lo > config.capacity_range.hi)
        throw ValidationError("GenConfig: bad capacity range");
    if (config.speed_range.lo > config.speed_range.hi || config.speed_range.lo <= 0.0)
        throw ValidationError("GenConfig: bad speed range");
    if ((config.dist_kind == DistKind::Zone) != (config.variant == Variant::ZoneConstraints))
        throw ValidationError("GenConfig: zone distribution pairs with zone-constraints variant");

    Rng rng(config.seed);
    Instance inst;
    inst.n = config.n;
    inst.m = config.m;
    inst.variant = config.variant;
    inst.dist_kind = config.dist_kind;
    inst.alpha = config.alpha;
    inst.seed = config.seed;

    inst.depot = {rng.uniform(), rng.uniform()};
    inst.clients.resize(config.n);
    for (Point& c : inst.clients) c = {rng.uniform(), rng.uniform()};

    inst.demands.resize(config.n);
    for (double& d : inst.demands)
        d = static_cast<double>(rng.uniform_int(config.demand_range.lo, config.demand_range.hi));

    inst.capacities.resize(config.m);
    for (double& q : inst.capacities)
        q = static_cast<double>(rng.uniform_int(config.capacity_range.lo, config.capacity_range.hi));

    inst.speeds.resize(config.m);
    for (double& s : inst.speeds) s = rng.uniform(config.speed_range.lo, config.speed_range.hi);

    switch (config.dist_kind) {
        case DistKind::Random:
            inst.profiles.resize(static_cast<std::size_t>(config.m) * config.n);
            for (double& p : inst.profiles) p = rng.uniform();
            break;
        case DistKind::Angle:
            inst.profiles = profile_angle(inst.depot, inst.clients, config.m, rng);
            break;
        case DistKind::Cluster:
            inst.profiles = profile_cluster(inst.clients, config.m, rng);
            break;
        case DistKind::Zone:
            inst.profiles = profile_zone(inst.clients, config.m, rng);
            break;
    }

    std::ostringstream id;
    id << to_string(config.dist_kind) << "-n" << config.n << "-m" << config.m << "-s" << config.seed;
    inst.id = id.str();

    check_instance(inst);
    return inst;
}

std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

double parse_real(const nlohmann::json& j, long line) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const std::string s = j.get<std::string>();
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end == s.c_str() || *end != '\0') throw ParseError("bad real '" + s + "'", line);
        return v;
    }
    throw ParseError("expected real", line);
}

nlohmann::ordered_json point_json(const Point& p) {
    return nlohmann::ordered_json::array({format_real(p.x), format_real(p.y)});
}

Point parse_point(const nlohmann::json& j, long line) {
    if (!j.is_array() || j.size() != 2) throw ParseError("point must be [x, y]", line);
    return {parse_real(j[0], line), parse_real(j[1], line)};
}

std::vector<double> parse_reals(const nlohmann::json& j, long line) {
    if (!j.is_array()) throw ParseError("expected array of reals", line);
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& e : j) out.push_back(parse_real(e, line));
    return out;
}

}  // namespace

void write_instances(std::ostream& os, const std::vector<Instance>& instances) {
    for (const Instance& inst : instances) {
        nlohmann::ordered_json j;
        j["id"] = inst.id;
        j["n"] = inst.n;
        j["m"] = inst.m;
        j["variant"] = to_string(inst.variant);
        j["dist"] = to_string(inst.dist_kind);
        j["alpha"] = format_real(inst.alpha);
        j["seed"] = inst.seed;
        j["depot"] = point_json(inst.depot);
        auto clients = nlohmann::ordered_json::array();
        for (const Point& c : inst.clients) clients.push_back(point_json(c));
        j["clients"] = std::move(clients);
        auto reals = [](const std::vector<double>& xs) {
            auto a = nlohmann::ordered_json::array();
            for (double x : xs) a.push_back(format_real(x));
            return a;
        };
        j["demands"] = reals(inst.demands);
        j["capacities"] = reals(inst.capacities);
        j["speeds"] = reals(inst.speeds);
        auto profiles = nlohmann::ordered_json::array();
        for (int k = 0; k < inst.m; ++k) {
            auto row = nlohmann::ordered_json::array();
            for (int i = 0; i < inst.n; ++i) row.push_back(format_real(inst.profile(k, i)));
            profiles.push_back(std::move(row));
        }
        j["profiles"] = std::move(profiles);
        os << j.dump() << '\n';
    }
}

void write_instances(const std::string& path, const std::vector<Instance>& instances) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_instances(os, instances);
}

std::vector<Instance> read_instances(std::istream& is) {
    std::vector<Instance> out;
    std::string line;
    long line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
        try {
            Instance inst;
            inst.id = j.at("id").get<std::string>();
            inst.n = j.at("n").get<int>();
            inst.m = j.at("m").get<int>();
            inst.variant = variant_from_string(j.at("variant").get<std::string>());
            inst.dist_kind = dist_from_string(j.at("dist").get<std::string>());
            inst.alpha = parse_real(j.at("alpha"), line_no);
            inst.seed = j.at("seed").get<std::uint64_t>();
            inst.depot = parse_point(j.at("depot"), line_no);
            for (const auto& c : j.at("clients")) inst.clients.push_back(parse_point(c, line_no));
            inst.demands = parse_reals(j.at("demands"), line_no);
            inst.capacities = parse_reals(j.at("capacities"), line_no);
            inst.speeds = parse_reals(j.at("speeds"), line_no);
            const auto& rows = j.at("profiles");
            if (!rows.is_array()) throw ParseError("profiles must be an array", line_no);
            for (const auto& row : rows) {
                const auto vals = parse_reals(row, line_no);
                inst.profiles.insert(inst.profiles.end(), vals.begin(), vals.end());
            }
            check_instance(inst);
            out.push_back(std::move(inst));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

std::vector<Instance> read_instances(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_instances(is);
}

}  // namespace pvrp
