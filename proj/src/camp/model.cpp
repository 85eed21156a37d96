#include "pvrp/camp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pvrp/errors.hpp"
#include "pvrp/nd/checkpoint.hpp"

namespace pvrp {
namespace camp {

using nd::Parameter;
using nd::Tape;
using nd::Tensor;
using Var = nd::Tape::Var;

nlohmann::ordered_json CampConfig::to_json() const {
    nlohmann::ordered_json j;
    j["d_h"] = d_h;
    j["heads"] = heads;
    j["ffn_width"] = ffn_width;
    j["layers"] = layers;
    j["logit_scale"] = logit_scale;
    j["encoder_comm"] = encoder_comm;
    j["profile_embeddings"] = profile_embeddings;
    return j;
}

CampConfig CampConfig::from_json(const nlohmann::json& j) {
    CampConfig c;
    c.d_h = j.value("d_h", c.d_h);
    c.heads = j.value("heads", c.heads);
    c.ffn_width = j.value("ffn_width", c.ffn_width);
    c.layers = j.value("layers", c.layers);
    c.logit_scale = j.value("logit_scale", c.logit_scale);
    c.encoder_comm = j.value("encoder_comm", c.encoder_comm);
    c.profile_embeddings = j.value("profile_embeddings", c.profile_embeddings);
    return c;
}

void check_config(const CampConfig& c) {
    if (c.d_h < 1 || c.heads < 1 || c.d_h % c.heads != 0)
        throw DimensionError("config: heads must divide d_h");
    if (c.layers < 1) throw DimensionError("config: need at least one encoder layer");
    if (!(c.logit_scale > 0.0)) throw DimensionError("config: logit scale must be positive");
    if (c.ffn_width < 1) throw DimensionError("config: ffn width must be positive");
}

std::vector<Parameter*> CampParams::all() {
    std::vector<Parameter*> out = {&w_init_vehicle, &w_init_client, &w_init_profile, &w_combine};
    for (EncoderLayerParams& l : layers) {
        out.insert(out.end(),
                   {&l.self_attn.wq, &l.self_attn.wk, &l.self_attn.wv, &l.self_attn.wo,
                    &l.attn_norm_gain, &l.attn_norm_bias, &l.ffn_w1, &l.ffn_w2, &l.ffn_norm_gain,
                    &l.ffn_norm_bias, &l.phi_vc.w1, &l.phi_vc.w2, &l.phi_cv.w1, &l.phi_cv.w2,
                    &l.w_edge});
    }
    out.insert(out.end(),
               {&w_context, &w_proj, &comm.wq, &comm.wk, &comm.wv, &comm.wo, &comm_norm1_gain,
                &comm_norm1_bias, &comm_norm2_gain, &comm_norm2_bias, &comm_ffn_w1, &comm_ffn_w2,
                &cross.wq, &cross.wk, &cross.wv, &cross.wo, &w_pointer});
    return out;
}

std::size_t CampParams::count() const {
    std::size_t total = 0;
    auto add = [&](const Parameter& p) { total += p.value.size(); };
    add(w_init_vehicle);
    add(w_init_client);
    add(w_init_profile);
    add(w_combine);
    for (const EncoderLayerParams& l : layers) {
        for (const Parameter* p :
             {&l.self_attn.wq, &l.self_attn.wk, &l.self_attn.wv, &l.self_attn.wo,
              &l.attn_norm_gain, &l.attn_norm_bias, &l.ffn_w1, &l.ffn_w2, &l.ffn_norm_gain,
              &l.ffn_norm_bias, &l.phi_vc.w1, &l.phi_vc.w2, &l.phi_cv.w1, &l.phi_cv.w2, &l.w_edge})
            add(*p);
    }
    for (const Parameter* p : {&w_context, &w_proj, &comm.wq, &comm.wk, &comm.wv, &comm.wo,
                               &comm_norm1_gain, &comm_norm1_bias, &comm_norm2_gain,
                               &comm_norm2_bias, &comm_ffn_w1, &comm_ffn_w2, &cross.wq, &cross.wk,
                               &cross.wv, &cross.wo, &w_pointer})
        add(*p);
    return total;
}

namespace {

Parameter make_linear(const std::string& name, int in, int out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    return Parameter(name, Tensor::uniform(in, out, rng, static_cast<nd::real>(-bound),
                                           static_cast<nd::real>(bound)));
}

Parameter make_gain(const std::string& name, int d) {
    Tensor t(1, d);
    std::fill(t.v.begin(), t.v.end(), nd::real(1));
    return Parameter(name, std::move(t));
}

Parameter make_bias(const std::string& name, int d) { return Parameter(name, Tensor(1, d)); }

}  // namespace

CampParams init_params(const CampConfig& config, std::uint64_t seed) {
    check_config(config);
    const int d = config.d_h;
    Rng rng(seed);
    CampParams p;
    p.w_init_vehicle = make_linear("enc.init_vehicle", 4, d, rng);
    p.w_init_client = make_linear("enc.init_client", 3, d, rng);
    p.w_init_profile = make_linear("enc.init_profile", 1, d, rng);
    p.w_combine = make_linear("enc.combine", 3 * d, d, rng);
    p.layers.resize(config.layers);
    for (int l = 0; l < config.layers; ++l) {
        const std::string prefix = "enc.layer" + std::to_string(l) + ".";
        EncoderLayerParams& el = p.layers[l];
        el.self_attn.wq = make_linear(prefix + "attn.wq", d, d, rng);
        el.self_attn.wk = make_linear(prefix + "attn.wk", d, d, rng);
        el.self_attn.wv = make_linear(prefix + "attn.wv", d, d, rng);
        el.self_attn.wo = make_linear(prefix + "attn.wo", d, d, rng);
        el.attn_norm_gain = make_gain(prefix + "attn_norm.gain", d);
        el.attn_norm_bias = make_bias(prefix + "attn_norm.bias", d);
        el.ffn_w1 = make_linear(prefix + "ffn.w1", d, config.ffn_width, rng);
        el.ffn_w2 = make_linear(prefix + "ffn.w2", config.ffn_width, d, rng);
        el.ffn_norm_gain = make_gain(prefix + "ffn_norm.gain", d);
        el.ffn_norm_bias = make_bias(prefix + "ffn_norm.bias", d);
        el.phi_vc.w1 = make_linear(prefix + "phi_vc.w1", 3 * d, d, rng);
        el.phi_vc.w2 = make_linear(prefix + "phi_vc.w2", d, d, rng);
        el.phi_cv.w1 = make_linear(prefix + "phi_cv.w1", 3 * d, d, rng);
        el.phi_cv.w2 = make_linear(prefix + "phi_cv.w2", d, d, rng);
        el.w_edge = make_linear(prefix + "edge", 2 * d, d, rng);
    }
    p.w_context = make_linear("dec.context", 3, d, rng);
    p.w_proj = make_linear("dec.proj", 3 * d, d, rng);
    p.comm.wq = make_linear("dec.comm.wq", d, d, rng);
    p.comm.wk = make_linear("dec.comm.wk", d, d, rng);
    p.comm.wv = make_linear("dec.comm.wv", d, d, rng);
    p.comm.wo = make_linear("dec.comm.wo", d, d, rng);
    p.comm_norm1_gain = make_gain("dec.comm.norm1.gain", d);
    p.comm_norm1_bias = make_bias("dec.comm.norm1.bias", d);
    p.comm_norm2_gain = make_gain("dec.comm.norm2.gain", d);
    p.comm_norm2_bias = make_bias("dec.comm.norm2.bias", d);
    p.comm_ffn_w1 = make_linear("dec.ffn.w1", d, config.ffn_width, rng);
    p.comm_ffn_w2 = make_linear("dec.ffn.w2", config.ffn_width, d, rng);
    p.cross.wq = make_linear("dec.cross.wq", d, d, rng);
    p.cross.wk = make_linear("dec.cross.wk", d, d, rng);
    p.cross.wv = make_linear("dec.cross.wv", d, d, rng);
    p.cross.wo = make_linear("dec.cross.wo", d, d, rng);
    p.w_pointer = make_linear("dec.pointer", d, d, rng);
    return p;
}

void save_checkpoint(const std::string& path, CampParams& params, const CampConfig& config,
                     const nlohmann::ordered_json& extra_meta) {
    nlohmann::ordered_json meta;
    meta["model"] = config.to_json();
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
    const auto ps = params.all();
    nd::save_params(path, std::span<Parameter* const>(ps.data(), ps.size()), meta);
}

CampParams load_checkpoint(const std::string& path, CampConfig& config_out) {
    const nlohmann::json meta = nd::load_meta(path);
    if (!meta.contains("model")) throw LoadError("checkpoint lacks model config metadata");
    config_out = CampConfig::from_json(meta["model"]);
    check_config(config_out);
    CampParams params = init_params(config_out, 0);
    const auto ps = params.all();
    nd::load_params(path, std::span<Parameter* const>(ps.data(), ps.size()));
    return params;
}

// --- forward graphs ---

struct BoundMha {
    Var wq, wk, wv, wo;
    nd::MhaVars vars() const { return {wq, wk, wv, wo}; }
};

struct BoundEncoderLayer {
    BoundMha self_attn;
    Var attn_norm_gain, attn_norm_bias, ffn_w1, ffn_w2, ffn_norm_gain, ffn_norm_bias;
    Var phi_vc_w1, phi_vc_w2, phi_cv_w1, phi_cv_w2, w_edge;
};

struct BoundParams {
    Var w_init_vehicle, w_init_client, w_init_profile, w_combine;
    std::vector<BoundEncoderLayer> layers;
    Var w_context, w_proj;
    BoundMha comm;
    Var comm_norm1_gain, comm_norm1_bias, comm_norm2_gain, comm_norm2_bias;
    Var comm_ffn_w1, comm_ffn_w2;
    BoundMha cross;
    Var w_pointer;
};

namespace {

BoundMha bind_mha(Tape& t, MhaParams& p) {
    return {t.leaf(p.wq), t.leaf(p.wk), t.leaf(p.wv), t.leaf(p.wo)};
}

std::shared_ptr<BoundParams> bind(Tape& t, CampParams& p) {
    auto b = std::make_shared<BoundParams>();
    b->w_init_vehicle = t.leaf(p.w_init_vehicle);
    b->w_init_client = t.leaf(p.w_init_client);
    b->w_init_profile = t.leaf(p.w_init_profile);
    b->w_combine = t.leaf(p.w_combine);
    for (EncoderLayerParams& l : p.layers) {
        BoundEncoderLayer bl;
        bl.self_attn = bind_mha(t, l.self_attn);
        bl.attn_norm_gain = t.leaf(l.attn_norm_gain);
        bl.attn_norm_bias = t.leaf(l.attn_norm_bias);
        bl.ffn_w1 = t.leaf(l.ffn_w1);
        bl.ffn_w2 = t.leaf(l.ffn_w2);
        bl.ffn_norm_gain = t.leaf(l.ffn_norm_gain);
        bl.ffn_norm_bias = t.leaf(l.ffn_norm_bias);
        bl.phi_vc_w1 = t.leaf(l.phi_vc.w1);
        bl.phi_vc_w2 = t.leaf(l.phi_vc.w2);
        bl.phi_cv_w1 = t.leaf(l.phi_cv.w1);
        bl.phi_cv_w2 = t.leaf(l.phi_cv.w2);
        bl.w_edge = t.leaf(l.w_edge);
        b->layers.push_back(bl);
    }
    b->w_context = t.leaf(p.w_context);
    b->w_proj = t.leaf(p.w_proj);
    b->comm = bind_mha(t, p.comm);
    b->comm_norm1_gain = t.leaf(p.comm_norm1_gain);
    b->comm_norm1_bias = t.leaf(p.comm_norm1_bias);
    b->comm_norm2_gain = t.leaf(p.comm_norm2_gain);
    b->comm_norm2_bias = t.leaf(p.comm_norm2_bias);
    b->comm_ffn_w1 = t.leaf(p.comm_ffn_w1);
    b->comm_ffn_w2 = t.leaf(p.comm_ffn_w2);
    b->cross = bind_mha(t, p.cross);
    b->w_pointer = t.leaf(p.w_pointer);
    return b;
}

// Two-layer perceptron on concat(columns...), the Phi message net.
Var phi(Tape& t, std::span<const Var> parts, Var w1, Var w2) {
    return t.matmul(t.relu(t.matmul(t.concat_cols(parts), w1)), w2);
}

std::vector<int> iota_rows(int lo, int hi) {
    std::vector<int> r;
    r.reserve(hi - lo);
    for (int i = lo; i < hi; ++i) r.push_back(i);
    return r;
}

}  // namespace

Encoded encode(Tape& tape, const Instance& inst, CampParams& params, const CampConfig& config) {
    check_config(config);
    const int m = inst.m;
    const int n = inst.n;
    const int d = config.d_h;
    auto bound = bind(tape, params);
    const double q_max = inst.max_capacity();

    // raw features
    Tensor xv(m, 4);
    for (int k = 0; k < m; ++k) {
        xv.at(k, 0) = static_cast<nd::real>(inst.depot.x);
        xv.at(k, 1) = static_cast<nd::real>(inst.depot.y);
        xv.at(k, 2) = static_cast<nd::real>(inst.capacities[k] / q_max);
        xv.at(k, 3) = static_cast<nd::real>(inst.speeds[k]);
    }
    Tensor xc(n + 1, 3);
    for (int j = 0; j <= n; ++j) {
        const Point pos = inst.node_pos(j);
        xc.at(j, 0) = static_cast<nd::real>(pos.x);
        xc.at(j, 1) = static_cast<nd::real>(pos.y);
        xc.at(j, 2) = static_cast<nd::real>(j == 0 ? 0.0 : inst.demands[j - 1] / q_max);
    }

    Var V = tape.matmul(tape.constant(std::move(xv)), bound->w_init_vehicle);  // m x d
    Var C = tape.matmul(tape.constant(std::move(xc)), bound->w_init_client);   // (n+1) x d

    // combined per-profile edge embeddings
    const int sets = config.profile_embeddings ? m : 1;
    std::vector<Var> E(sets);
    for (int s = 0; s < sets; ++s) {
        Var veh_row = config.profile_embeddings ? tape.gather_rows(V, {s}) : tape.mean_rows(V);
        Var prof;
        if (config.profile_embeddings) {
            Tensor pcol(n + 1, 1);
            for (int j = 0; j <= n; ++j)
                pcol.at(j, 0) = static_cast<nd::real>(inst.node_profile(s, j));
            prof = tape.matmul(tape.constant(std::move(pcol)), bound->w_init_profile);
        } else {
            prof = tape.constant(Tensor(n + 1, d));  // shared set carries no profile signal
        }
        const Var parts[] = {tape.repeat_row(veh_row, n + 1), C, prof};
        E[s] = tape.matmul(tape.concat_cols(parts), bound->w_combine);
    }

    std::vector<Var> U(sets, -1);  // per-profile vehicle rows from the last attention pass
    for (int l = 0; l < config.layers; ++l) {
        const BoundEncoderLayer& bl = bound->layers[l];
        // per-profile self-attention over [edge rows; vehicle rows]
        for (int s = 0; s < sets; ++s) {
            const Var tokens_in[] = {E[s], V};
            Var tokens = tape.concat_rows(tokens_in);
            Var attended = tape.layer_norm(
                tape.add(nd::mha(tape, tokens, tokens, tokens, bl.self_attn.vars(), config.heads),
                         tokens),
                bl.attn_norm_gain, bl.attn_norm_bias);
            Var block = tape.layer_norm(
                tape.add(nd::ffn(tape, attended, bl.ffn_w1, bl.ffn_w2), attended),
                bl.ffn_norm_gain, bl.ffn_norm_bias);
            E[s] = tape.gather_rows(block, iota_rows(0, n + 1));
            U[s] = tape.gather_rows(block, iota_rows(n + 1, n + 1 + m));
        }
        if (!config.encoder_comm) continue;

        // bipartite messages, mean-aggregated over the sender side
        Var client_acc = -1;
        std::vector<Var> veh_means;
        veh_means.reserve(m);
        for (int k = 0; k < m; ++k) {
            const int s = config.profile_embeddings ? k : 0;
            Var vk = tape.repeat_row(tape.gather_rows(V, {k}), n + 1);
            const Var vc_parts[] = {vk, C, E[s]};
            Var msg_vc = phi(tape, vc_parts, bl.phi_vc_w1, bl.phi_vc_w2);
            client_acc = client_acc < 0 ? msg_vc : tape.add(client_acc, msg_vc);
            const Var cv_parts[] = {C, vk, E[s]};
            veh_means.push_back(tape.mean_rows(phi(tape, cv_parts, bl.phi_cv_w1, bl.phi_cv_w2)));
        }
        C = tape.add(C, tape.scale(client_acc, nd::real(1) / m));
        V = tape.add(V, tape.concat_rows(veh_means));

        // edge refresh from the updated node embeddings
        Var vbar = config.profile_embeddings ? -1 : tape.mean_rows(V);
        for (int s = 0; s < sets; ++s) {
            Var vrow = config.profile_embeddings ? tape.gather_rows(V, {s}) : vbar;
            const Var edge_parts[] = {tape.repeat_row(vrow, n + 1), C};
            E[s] = tape.add(tape.matmul(tape.concat_cols(edge_parts), bl.w_edge), E[s]);
        }
    }

    Encoded enc;
    enc.bound = bound;
    enc.h.m = m;
    enc.h.n = n;
    enc.h.nodes.resize(m);
    enc.h.vehicles.resize(m);
    enc.cross_keys.resize(m);
    enc.cross_values.resize(m);
    enc.pointer_proj.resize(m);
    for (int k = 0; k < m; ++k) {
        const int s = config.profile_embeddings ? k : 0;
        enc.h.nodes[k] = E[s];
        enc.h.vehicles[k] = U[s];
        enc.cross_keys[k] = tape.matmul(E[s], bound->cross.wk);
        enc.cross_values[k] = tape.matmul(E[s], bound->cross.wv);
        enc.pointer_proj[k] = tape.matmul(E[s], bound->w_pointer);
    }
    return enc;
}

DecodeOut decode_step(Tape& tape, const Encoded& enc, const Instance& inst,
                      const env::State& state, const env::Mask& mask, const CampConfig& config) {
    if (state.done) throw ContractError("decode_step called on a finished episode");
    const int m = inst.m;
    const int n = inst.n;
    const int d = config.d_h;
    const BoundParams& bp = *enc.bound;

    double total_demand = 0.0, open_demand = 0.0;
    for (int j = 1; j <= n; ++j) {
        total_demand += inst.demands[j - 1];
        open_demand += state.demand[j];
    }
    const double t_norm = std::max(1.0, n * std::numbers::sqrt2);

    Tensor xt(m, 3);
    for (int k = 0; k < m; ++k) {
        xt.at(k, 0) = static_cast<nd::real>(state.remaining[k] / inst.capacities[k]);
        xt.at(k, 1) = static_cast<nd::real>(state.elapsed[k] / t_norm);
        xt.at(k, 2) = static_cast<nd::real>(total_demand > 0.0 ? open_demand / total_demand : 0.0);
    }
    Var ctx = tape.matmul(tape.constant(std::move(xt)), bp.w_context);

    std::vector<Var> self_rows, cur_rows;
    self_rows.reserve(m);
    cur_rows.reserve(m);
    for (int k = 0; k < m; ++k) {
        self_rows.push_back(tape.gather_rows(enc.h.vehicles[k], {k}));
        cur_rows.push_back(tape.gather_rows(enc.h.nodes[k], {state.current[k]}));
    }
    const Var q_parts[] = {tape.concat_rows(self_rows), tape.concat_rows(cur_rows), ctx};
    Var Q = tape.matmul(tape.concat_cols(q_parts), bp.w_proj);  // m x d

    // communication transformer block between the vehicle queries
    Var H = tape.layer_norm(tape.add(nd::mha(tape, Q, Q, Q, bp.comm.vars(), config.heads), Q),
                            bp.comm_norm1_gain, bp.comm_norm1_bias);
    Var Qp = tape.layer_norm(tape.add(nd::ffn(tape, H, bp.comm_ffn_w1, bp.comm_ffn_w2), H),
                             bp.comm_norm2_gain, bp.comm_norm2_bias);

    // cross-attention of each query against its own profile's node embeddings
    const int heads = config.heads;
    const int dk = d / heads;
    const nd::real inv_scale = nd::real(1) / std::sqrt(static_cast<nd::real>(dk));
    std::vector<Var> u_rows;
    u_rows.reserve(m);
    for (int k = 0; k < m; ++k) {
        Var qk = tape.matmul(tape.gather_rows(Qp, {k}), bp.cross.wq);  // 1 x d
        std::vector<Var> head_outs;
        head_outs.reserve(heads);
        for (int h = 0; h < heads; ++h) {
            Var qh = tape.slice_cols(qk, h * dk, (h + 1) * dk);
            Var kh = tape.slice_cols(enc.cross_keys[k], h * dk, (h + 1) * dk);
            Var vh = tape.slice_cols(enc.cross_values[k], h * dk, (h + 1) * dk);
            Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_scale));
            head_outs.push_back(tape.matmul(attn, vh));
        }
        u_rows.push_back(tape.matmul(tape.concat_cols(head_outs), bp.cross.wo));
    }

    // multiple pointer mechanism: Z = C * tanh(U L^T / sqrt(d_h))
    const nd::real inv_sqrt_d = nd::real(1) / std::sqrt(static_cast<nd::real>(d));
    std::vector<Var> z_rows;
    z_rows.reserve(m);
    for (int k = 0; k < m; ++k)
        z_rows.push_back(tape.matmul_nt(u_rows[k], enc.pointer_proj[k]));  // 1 x (n+1)
    Var Z = tape.scale(tape.tanh(tape.scale(tape.concat_rows(z_rows), inv_sqrt_d)),
                       static_cast<nd::real>(config.logit_scale));

    DecodeOut out;
    out.logits = Z;
    out.probs = tape.softmax_rows(Z, &mask.feasible);
    return out;
}

RolloutResult rollout(Tape& tape, const Instance& inst, CampParams& params,
                      const CampConfig& config, DecodeMode mode, Rng* rng,
                      const std::vector<StepActions>* replay) {
    if (mode == DecodeMode::Sample && rng == nullptr && replay == nullptr)
        throw ContractError("sampled rollout needs an rng");

    env::State state = env::reset(inst);
    Encoded enc = encode(tape, inst, params, config);

    RolloutResult result;
    std::vector<Var> log_terms;
    while (!state.done) {
        const env::Mask mask = env::feasible_mask(inst, state);
        const DecodeOut out = decode_step(tape, enc, inst, state, mask, config);
        const Tensor& P = tape.val(out.probs);

        StepActions acts;
        if (replay) {
            acts = (*replay)[result.actions.size()];
        } else {
            acts.proposed.resize(inst.m);
            std::vector<double> probs(inst.m);
            for (int k = 0; k < inst.m; ++k) {
                const nd::real* row = P.row(k);
                int choice = -1;
                if (mode == DecodeMode::Greedy) {
                    nd::real best = nd::real(-1);
                    for (int j = 0; j <= inst.n; ++j) {
                        if (row[j] > best) {
                            best = row[j];
                            choice = j;
                        }
                    }
                } else {
                    std::vector<double> w(row, row + inst.n + 1);
                    choice = rng->categorical(w);
                }
                acts.proposed[k] = choice;
                probs[k] = static_cast<double>(row[choice]);
            }
            acts.executed = env::resolve_conflicts(state, acts.proposed, probs);
        }

        for (int k = 0; k < inst.m; ++k) {
            Var lp = tape.log(tape.pick(out.probs, k, acts.proposed[k]));
            log_terms.push_back(lp);
            result.sum_log_prob += static_cast<double>(tape.val(lp).v[0]);
        }
        env::step(inst, state, acts.executed);
        result.actions.push_back(std::move(acts));
        ++result.steps;
    }

    const std::vector<nd::real> ones(log_terms.size(), nd::real(1));
    result.log_prob_var = tape.weighted_sum(log_terms, ones);
    result.solution = env::solution_from(state);
    result.reward = env::terminal_reward(inst, state);
    return result;
}

}  // namespace camp
}  // namespace pvrp
