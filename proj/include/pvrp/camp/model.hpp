#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "pvrp/env.hpp"
#include "pvrp/instance.hpp"
#include "pvrp/nd/tape.hpp"
#include "pvrp/rng.hpp"

namespace pvrp {
namespace camp {

struct CampConfig {
    int d_h = 128;
    int heads = 8;
    int ffn_width = 512;
    int layers = 3;
    double logit_scale = 10.0;  // C, bounds the pointer logits
    bool encoder_comm = true;       // bipartite vehicle<->client message passing
    bool profile_embeddings = true; // per-vehicle profile sets (off = one shared set)

    static CampConfig desk_scale() {
        CampConfig c;
        c.d_h = 32;
        c.heads = 4;
        c.ffn_width = 128;
        c.layers = 2;
        return c;
    }

    nlohmann::ordered_json to_json() const;
    static CampConfig from_json(const nlohmann::json& j);
};

void check_config(const CampConfig& c);

// Two-layer perceptron weights for the bipartite message nets.
struct MlpParams {
    nd::Parameter w1, w2;
};

struct MhaParams {
    nd::Parameter wq, wk, wv, wo;
};

struct EncoderLayerParams {
    MhaParams self_attn;     // per-profile attention over [edge rows; vehicle rows]
    nd::Parameter attn_norm_gain, attn_norm_bias;
    nd::Parameter ffn_w1, ffn_w2;
    nd::Parameter ffn_norm_gain, ffn_norm_bias;
    MlpParams phi_vc;        // vehicle -> client messages
    MlpParams phi_cv;        // client -> vehicle messages
    nd::Parameter w_edge;    // edge refresh projection, 2*d_h -> d_h
};

// Every learnable tensor of the encoder-decoder, in a fixed registration
// order (the order all() returns, used by Adam and checkpoints).
struct CampParams {
    nd::Parameter w_init_vehicle;  // 4 -> d_h   [depot_xy, Q_k/Q_max, s_k]
    nd::Parameter w_init_client;   // 3 -> d_h   [xy, d/Q_max]
    nd::Parameter w_init_profile;  // 1 -> d_h
    nd::Parameter w_combine;       // 3*d_h -> d_h
    std::vector<EncoderLayerParams> layers;

    nd::Parameter w_context;  // 3 -> d_h   [o_k/Q_k, T_k/T_norm, unserved fraction]
    nd::Parameter w_proj;     // 3*d_h -> d_h
    MhaParams comm;           // decoder communication block
    nd::Parameter comm_norm1_gain, comm_norm1_bias;
    nd::Parameter comm_norm2_gain, comm_norm2_bias;
    nd::Parameter comm_ffn_w1, comm_ffn_w2;
    MhaParams cross;          // query -> own-profile node embeddings
    nd::Parameter w_pointer;  // d_h -> d_h, the L projection

    std::vector<nd::Parameter*> all();
    std::size_t count() const;
};

// Deterministic initialization: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
// for linear maps, gain 1 / bias 0 for the normalization layers.
CampParams init_params(const CampConfig& config, std::uint64_t seed);

void save_checkpoint(const std::string& path, CampParams& params, const CampConfig& config,
                     const nlohmann::ordered_json& extra_meta = nlohmann::ordered_json::object());
// Reads the config from checkpoint metadata, rebuilds shapes, loads values.
CampParams load_checkpoint(const std::string& path, CampConfig& config_out);

// Per-profile embeddings produced by the encoder, as tape vars:
// nodes[k] is (n+1) x d_h (depot + clients seen through profile k),
// vehicles[k] is m x d_h (vehicle rows seen through profile k).
struct ProfileEmbeddings {
    int m = 0;
    int n = 0;
    std::vector<nd::Tape::Var> nodes;
    std::vector<nd::Tape::Var> vehicles;
};

// Parameters bound to a tape once per episode.
struct BoundParams;

struct Encoded {
    ProfileEmbeddings h;
    // per-episode caches: cross-attention keys/values and pointer projections
    std::vector<nd::Tape::Var> cross_keys;
    std::vector<nd::Tape::Var> cross_values;
    std::vector<nd::Tape::Var> pointer_proj;
    std::shared_ptr<BoundParams> bound;
};

Encoded encode(nd::Tape& tape, const Instance& inst, CampParams& params,
               const CampConfig& config);

struct DecodeOut {
    nd::Tape::Var logits;  // m x (n+1), |Z| <= C
    nd::Tape::Var probs;   // m x (n+1), rows sum to 1, masked entries exactly 0
};

DecodeOut decode_step(nd::Tape& tape, const Encoded& enc, const Instance& inst,
                      const env::State& state, const env::Mask& mask, const CampConfig& config);

enum class DecodeMode { Greedy, Sample };

struct StepActions {
    std::vector<int> proposed;  // per-vehicle pre-conflict choice
    std::vector<int> executed;  // post-conflict action given to the env
};

struct RolloutResult {
    Solution solution;
    double reward = 0.0;
    double sum_log_prob = 0.0;
    nd::Tape::Var log_prob_var = -1;  // 1x1 on the rollout's tape
    std::vector<StepActions> actions;
    int steps = 0;
};

// Full episode: encode once, then decode/act until done. Sampled action
// probabilities drive conflict resolution; the summed log-probability covers
// the proposed (pre-conflict) actions, which is what the policy gradient
// needs. When `replay` is given, its recorded actions are reused instead of
// fresh selections (all selection randomness is skipped).
RolloutResult rollout(nd::Tape& tape, const Instance& inst, CampParams& params,
                      const CampConfig& config, DecodeMode mode, Rng* rng,
                      const std::vector<StepActions>* replay = nullptr);

}  // namespace camp
}  // namespace pvrp
