#include "pvrp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <span>
#include <sstream>
#include <thread>

#include "pvrp/errors.hpp"
#include "pvrp/parallel.hpp"

namespace pvrp {
namespace trainer {

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["samples_per_epoch"] = samples_per_epoch;
    j["batch_size"] = batch_size;
    j["augmentations"] = augmentations;
    j["lr0"] = lr0;
    j["decay_epochs"] = decay_epochs;
    j["decay_factor"] = decay_factor;
    j["beta"] = beta;
    j["variant"] = to_string(variant);
    auto dist_arr = nlohmann::ordered_json::array();
    for (DistKind d : dists) dist_arr.push_back(to_string(d));
    j["dists"] = std::move(dist_arr);
    j["alpha_policy"] = alpha_policy == AlphaPolicy::Uniform ? "uniform" : "fixed";
    j["alpha_min"] = alpha_min;
    j["alpha_max"] = alpha_max;
    j["alpha_fixed"] = alpha_fixed;
    j["n_min"] = n_min;
    j["n_max"] = n_max;
    j["m"] = m;
    j["reward_balance"] = reward_balance;
    j["seed"] = seed;
    j["threads"] = threads;
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.augmentations = j.value("augmentations", c.augmentations);
    c.lr0 = j.value("lr0", c.lr0);
    c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
    c.decay_factor = j.value("decay_factor", c.decay_factor);
    c.beta = j.value("beta", c.beta);
    if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
    if (j.contains("dists")) {
        c.dists.clear();
        for (const auto& d : j["dists"]) c.dists.push_back(dist_from_string(d.get<std::string>()));
    }
    if (j.contains("alpha_policy")) {
        const std::string p = j["alpha_policy"].get<std::string>();
        if (p == "uniform")
            c.alpha_policy = AlphaPolicy::Uniform;
        else if (p == "fixed")
            c.alpha_policy = AlphaPolicy::Fixed;
        else
            throw ParseError("unknown alpha policy '" + p + "'");
    }
    c.alpha_min = j.value("alpha_min", c.alpha_min);
    c.alpha_max = j.value("alpha_max", c.alpha_max);
    c.alpha_fixed = j.value("alpha_fixed", c.alpha_fixed);
    c.n_min = j.value("n_min", c.n_min);
    c.n_max = j.value("n_max", c.n_max);
    c.m = j.value("m", c.m);
    c.reward_balance = j.value("reward_balance", c.reward_balance);
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    return c;
}

void check_train_config(const TrainConfig& c) {
    if (c.epochs < 1 || c.samples_per_epoch < 1) throw ValidationError("train config: empty run");
    if (c.augmentations < 1 || c.augmentations > 8)
        throw ValidationError("train config: augmentations must be in 1..8");
    if (c.batch_size < 1 || c.batch_size % c.augmentations != 0)
        throw ValidationError("train config: augment groups must tile the batch");
    if (!(c.beta > 0.0 && c.beta < 1.0)) throw ValidationError("train config: beta must be in (0,1)");
    if (c.dists.empty()) throw ValidationError("train config: no distributions enabled");
    for (DistKind d : c.dists)
        if ((d == DistKind::Zone) != (c.variant == Variant::ZoneConstraints))
            throw ValidationError("train config: zone distribution pairs with zone-constraints");
    if (c.n_min < 1 || c.n_max < c.n_min || c.m < 1) throw ValidationError("train config: bad sizes");
    if (c.alpha_min < 0.0 || c.alpha_max < c.alpha_min)
        throw ValidationError("train config: bad alpha range");
}

namespace {

Point dihedral_apply(const Point& p, int g) {
    Point q = p;
    if (g & 4) q.x = 1.0 - q.x;                 // mirror across the vertical axis
    for (int r = 0; r < (g & 3); ++r) q = {1.0 - q.y, q.x};  // 90-degree rotations
    return q;
}

}  // namespace

Instance symmetric_augment(const Instance& inst, int g) {
    if (g < 0 || g > 7) throw ContractError("symmetric_augment: g must be in 0..7");
    if (g == 0) return inst;
    Instance out = inst;
    out.depot = dihedral_apply(inst.depot, g);
    for (std::size_t i = 0; i < inst.clients.size(); ++i)
        out.clients[i] = dihedral_apply(inst.clients[i], g);
    return out;
}

BaselineOut shared_baseline(const std::vector<double>& group_rewards) {
    if (group_rewards.size() < 2)
        throw ContractError("shared_baseline: need at least two rewards per group");
    BaselineOut out;
    for (double r : group_rewards) out.baseline += r;
    out.baseline /= static_cast<double>(group_rewards.size());
    out.advantages.reserve(group_rewards.size());
    for (double r : group_rewards) out.advantages.push_back(r - out.baseline);
    return out;
}

std::vector<double> reward_normalize(SmoothingState& state, DistKind k, double beta,
                                     double batch_mean, const std::vector<double>& rewards) {
    SmoothingState::Entry& e = state.entry(k);
    if (!e.initialized) {
        e.smoothed = batch_mean;
        e.initialized = true;
    } else {
        e.smoothed = (1.0 - beta) * e.smoothed + beta * batch_mean;
    }
    ++e.t;
    std::vector<double> out = rewards;
    const double denom = std::abs(e.smoothed);
    if (denom >= 1e-8)
        for (double& r : out) r /= denom;
    return out;
}

double reinforce_loss(const std::vector<double>& logprobs, const std::vector<double>& advantages,
                      int groups, int augmentations) {
    if (logprobs.size() != advantages.size())
        throw DimensionError("reinforce_loss: length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < logprobs.size(); ++i) loss += advantages[i] * logprobs[i];
    return -loss / (static_cast<double>(groups) * augmentations);
}

double lr_at(int epoch, const TrainConfig& config) {
    std::vector<int> points = config.decay_epochs;
    if (points.empty()) {
        points = {static_cast<int>(std::llround(0.80 * config.epochs)),
                  static_cast<int>(std::llround(0.95 * config.epochs))};
    }
    double lr = config.lr0;
    for (int p : points)
        if (epoch >= p) lr *= config.decay_factor;
    return lr;
}

namespace {

struct Episode {
    Instance instance;
    DistKind dist;
    int group = 0;
    std::uint64_t seed = 0;
    std::unique_ptr<nd::Tape> tape;
    nd::Tape::Var log_prob_var = -1;
    double log_prob = 0.0;
    double reward = 0.0;
};

}  // namespace

void train_epoch(camp::CampParams& params, nd::AdamState& adam, SmoothingState& smoothing,
                 int epoch, const TrainConfig& tcfg, const camp::CampConfig& mcfg,
                 const TrainCallbacks& callbacks) {
    check_train_config(tcfg);
    const int batches = std::max(1, tcfg.samples_per_epoch / tcfg.batch_size);
    const int groups = tcfg.batch_size / tcfg.augmentations;
    const int L = tcfg.augmentations;
    const int threads = effective_threads(tcfg.threads);
    const auto param_ptrs = params.all();
    const std::span<nd::Parameter* const> pspan(param_ptrs.data(), param_ptrs.size());

    for (int batch = 0; batch < batches; ++batch) {
        const auto batch_start = std::chrono::steady_clock::now();
        const std::uint64_t batch_tag =
            static_cast<std::uint64_t>(epoch) * batches + static_cast<std::uint64_t>(batch);

        std::vector<Episode> episodes(static_cast<std::size_t>(groups) * L);
        for (int g = 0; g < groups; ++g) {
            Rng meta(derive_seed(tcfg.seed, 0xA1, batch_tag, g));
            GenConfig gc;
            gc.n = static_cast<int>(meta.uniform_int(tcfg.n_min, tcfg.n_max));
            gc.m = tcfg.m;
            gc.variant = tcfg.variant;
            gc.dist_kind = tcfg.dists[(batch_tag * groups + g) % tcfg.dists.size()];
            if (tcfg.variant == Variant::Preferences) {
                gc.alpha = tcfg.alpha_policy == AlphaPolicy::Uniform
                               ? meta.uniform(tcfg.alpha_min, tcfg.alpha_max)
                               : tcfg.alpha_fixed;
            } else {
                gc.alpha = 0.0;
            }
            gc.seed = derive_seed(tcfg.seed, 0xB2, batch_tag, g);
            const Instance base = generate(gc);
            for (int j = 0; j < L; ++j) {
                Episode& ep = episodes[static_cast<std::size_t>(g) * L + j];
                ep.instance = symmetric_augment(base, j);
                ep.dist = gc.dist_kind;
                ep.group = g;
                ep.seed = derive_seed(tcfg.seed, 0xC3, batch_tag,
                                      static_cast<std::uint64_t>(g) * L + j);
            }
        }

        // phase 1: sampled rollouts, one tape per episode
        parallel_for(static_cast<int>(episodes.size()), threads, [&](int i) {
            Episode& ep = episodes[i];
            ep.tape = std::make_unique<nd::Tape>();
            Rng rng(ep.seed);
            const camp::RolloutResult rr = camp::rollout(*ep.tape, ep.instance, params, mcfg,
                                                         camp::DecodeMode::Sample, &rng);
            ep.log_prob_var = rr.log_prob_var;
            ep.log_prob = rr.sum_log_prob;
            ep.reward = rr.reward;
        });

        // per-distribution reward balancing
        std::vector<double> used_rewards(episodes.size());
        std::array<double, 4> raw_mean{};
        std::array<double, 4> norm_mean{};
        std::array<int, 4> dist_count{};
        for (const DistKind dist :
             {DistKind::Random, DistKind::Angle, DistKind::Cluster, DistKind::Zone}) {
            std::vector<int> members;
            std::vector<double> rewards;
            for (std::size_t i = 0; i < episodes.size(); ++i) {
                if (episodes[i].dist != dist) continue;
                members.push_back(static_cast<int>(i));
                rewards.push_back(episodes[i].reward);
            }
            if (members.empty()) continue;
            double mean = 0.0;
            for (double r : rewards) mean += r;
            mean /= static_cast<double>(rewards.size());
            const int di = static_cast<int>(dist);
            raw_mean[di] = mean;
            dist_count[di] = static_cast<int>(members.size());
            std::vector<double> balanced =
                tcfg.reward_balance ? reward_normalize(smoothing, dist, tcfg.beta, mean, rewards)
                                    : rewards;
            double bmean = 0.0;
            for (double r : balanced) bmean += r;
            norm_mean[di] = bmean / static_cast<double>(balanced.size());
            for (std::size_t j = 0; j < members.size(); ++j)
                used_rewards[members[j]] = balanced[j];
        }

        // symmetric shared baseline within each augmentation group
        std::vector<double> advantages(episodes.size());
        for (int g = 0; g < groups; ++g) {
            std::vector<double> group_rewards(L);
            for (int j = 0; j < L; ++j)
                group_rewards[j] = used_rewards[static_cast<std::size_t>(g) * L + j];
            const BaselineOut bl = shared_baseline(group_rewards);
            for (int j = 0; j < L; ++j)
                advantages[static_cast<std::size_t>(g) * L + j] = bl.advantages[j];
        }

        std::vector<double> logprobs(episodes.size());
        for (std::size_t i = 0; i < episodes.size(); ++i) logprobs[i] = episodes[i].log_prob;
        const double loss = reinforce_loss(logprobs, advantages, groups, L);
        if (!std::isfinite(loss)) {
            std::ostringstream diag;
            diag << "NaN/Inf loss at epoch " << epoch << " batch " << batch << "; rewards:";
            for (const Episode& ep : episodes) diag << ' ' << ep.reward;
            throw Error(diag.str());
        }

        // phase 2: seeded backward per episode (parallel), ordered flush (serial)
        const double scale = 1.0 / (static_cast<double>(groups) * L);
        parallel_for(static_cast<int>(episodes.size()), threads, [&](int i) {
            Episode& ep = episodes[i];
            ep.tape->backward(ep.log_prob_var, static_cast<nd::real>(-advantages[i] * scale));
        });
        for (Episode& ep : episodes) {
            ep.tape->flush_leaf_grads();
            ep.tape.reset();
        }

        const double gnorm = nd::grad_norm(pspan);
        const double lr = lr_at(epoch, tcfg);
        nd::adam_step(pspan, adam, lr);
        nd::zero_grads(pspan);

        const auto batch_end = std::chrono::steady_clock::now();
        const long wall =
            std::chrono::duration_cast<std::chrono::milliseconds>(batch_end - batch_start).count();
        if (callbacks.on_batch) {
            for (const DistKind dist :
                 {DistKind::Random, DistKind::Angle, DistKind::Cluster, DistKind::Zone}) {
                const int di = static_cast<int>(dist);
                if (dist_count[di] == 0) continue;
                BatchMetrics row;
                row.epoch = epoch;
                row.batch = batch;
                row.dist = dist;
                row.mean_reward = raw_mean[di];
                row.normalized_mean = norm_mean[di];
                row.loss = loss;
                row.grad_norm = gnorm;
                row.lr = lr;
                row.wallclock_ms = wall;
                callbacks.on_batch(row);
            }
        }
    }
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(epoch);
}

std::string metrics_csv_header(bool timing) {
    std::string h = "epoch,batch,dist_kind,mean_reward,normalized_mean,loss,lr";
    if (timing) h += ",wallclock_ms";
    return h;
}

std::string metrics_csv_row(const BatchMetrics& row, bool timing) {
    std::ostringstream os;
    os << row.epoch << ',' << row.batch << ',' << to_string(row.dist) << ','
       << format_real(row.mean_reward) << ',' << format_real(row.normalized_mean) << ','
       << format_real(row.loss) << ',' << format_real(row.lr);
    if (timing) os << ',' << row.wallclock_ms;
    return os.str();
}

}  // namespace trainer
}  // namespace pvrp
