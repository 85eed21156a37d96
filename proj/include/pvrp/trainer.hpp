#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pvrp/camp/model.hpp"
#include "pvrp/instance.hpp"
#include "pvrp/nd/adam.hpp"

namespace pvrp {
namespace trainer {

enum class AlphaPolicy { Uniform, Fixed };

struct TrainConfig {
    int epochs = 10;
    int samples_per_epoch = 6400;  // rollouts per epoch; batches = samples/batch_size
    int batch_size = 64;           // total rollouts per batch (augment groups tile it)
    int augmentations = 4;         // L symmetric augments per sampled instance
    double lr0 = 1e-4;
    std::vector<int> decay_epochs; // empty = 80% and 95% of the run
    double decay_factor = 0.1;
    double beta = 0.1;             // reward-balancing smoothing factor
    Variant variant = Variant::Preferences;
    std::vector<DistKind> dists = {DistKind::Random};
    AlphaPolicy alpha_policy = AlphaPolicy::Uniform;
    double alpha_min = 0.0;
    double alpha_max = 0.2;
    double alpha_fixed = 0.1;
    int n_min = 5;
    int n_max = 5;
    int m = 2;
    bool reward_balance = true;
    std::uint64_t seed = 0;
    int threads = 0;  // 0 = hardware concurrency

    nlohmann::ordered_json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

void check_train_config(const TrainConfig& c);

// Element g of the dihedral group of the unit square applied to every
// coordinate; g = rotation (low two bits) + 4 * mirror. g = 0 is identity.
// Demands, capacities, speeds and profiles are untouched.
Instance symmetric_augment(const Instance& inst, int g);

// Baseline = mean of the group's rewards; advantages sum to zero.
struct BaselineOut {
    double baseline = 0.0;
    std::vector<double> advantages;
};
BaselineOut shared_baseline(const std::vector<double>& group_rewards);

// Exponentially smoothed per-distribution reward means for reward balancing.
struct SmoothingState {
    struct Entry {
        double smoothed = 0.0;
        bool initialized = false;
        long t = 0;
    };
    std::array<Entry, 4> by_dist;  // indexed by DistKind

    Entry& entry(DistKind k) { return by_dist[static_cast<int>(k)]; }
};

// First call pins the smoothed mean to the batch mean; later calls apply
// smoothed' = (1-beta)*smoothed + beta*batch_mean. Returns rewards divided by
// |smoothed|; a near-zero smoothed mean passes rewards through unscaled.
std::vector<double> reward_normalize(SmoothingState& state, DistKind k, double beta,
                                     double batch_mean, const std::vector<double>& rewards);

// loss = -(1/(groups*L)) * sum(advantage * logprob); advantages are constants.
double reinforce_loss(const std::vector<double>& logprobs, const std::vector<double>& advantages,
                      int groups, int augmentations);

double lr_at(int epoch, const TrainConfig& config);

struct BatchMetrics {
    int epoch = 0;
    int batch = 0;
    DistKind dist = DistKind::Random;
    double mean_reward = 0.0;
    double normalized_mean = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double lr = 0.0;
    long wallclock_ms = 0;
};

struct TrainCallbacks {
    std::function<void(const BatchMetrics&)> on_batch;     // may be empty
    std::function<void(int epoch)> on_epoch_end;           // may be empty
};

// One epoch of REINFORCE with the symmetric shared baseline. Deterministic
// given (params, configs, smoothing, epoch) regardless of thread count.
void train_epoch(camp::CampParams& params, nd::AdamState& adam, SmoothingState& smoothing,
                 int epoch, const TrainConfig& tcfg, const camp::CampConfig& mcfg,
                 const TrainCallbacks& callbacks = {});

// Metrics CSV row order: epoch,batch,dist_kind,mean_reward,normalized_mean,
// loss,lr[,wallclock_ms]. Timing is opt-in so default output is bit
// reproducible.
std::string metrics_csv_header(bool timing);
std::string metrics_csv_row(const BatchMetrics& row, bool timing);

}  // namespace trainer
}  // namespace pvrp
