#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "pvrp/camp/model.hpp"
#include "pvrp/errors.hpp"
#include "pvrp/instance.hpp"
#include "pvrp/oracle.hpp"
#include "pvrp/parallel.hpp"
#include "pvrp/trainer.hpp"
#include "pvrp/validator.hpp"

namespace pvrp {
namespace cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;

int report(const std::exception& e, int code) {
    std::cerr << "error: " << e.what() << '\n';
    return code;
}

}  // namespace

int cmd_generate(const GenerateArgs& args) {
    GenConfig cfg;
    try {
        cfg.n = args.n;
        cfg.m = args.m;
        cfg.dist_kind = dist_from_string(args.dist);
        cfg.variant = variant_from_string(args.variant);
        cfg.alpha = cfg.variant == Variant::Preferences ? args.alpha : 0.0;
        if (args.count < 1) throw ValidationError("count must be positive");
        if (args.out.empty()) throw ValidationError("--out is required");
        cfg.seed = derive_seed(args.seed, 0, 0x6E);
        generate(cfg);  // config validation happens on the first draw
    } catch (const Error& e) {
        return report(e, kExitUsage);
    }

    try {
        std::vector<Instance> instances;
        instances.reserve(args.count);
        for (int i = 0; i < args.count; ++i) {
            GenConfig c = cfg;
            c.seed = derive_seed(args.seed, static_cast<std::uint64_t>(i), 0x6E);
            instances.push_back(generate(c));
        }
        write_instances(args.out, instances);
        std::cout << "generated " << args.count << " instances (dist=" << args.dist
                  << ", variant=" << args.variant << ", n=" << args.n << ", m=" << args.m
                  << ", alpha=" << args.alpha << ", seed=" << args.seed << ") -> " << args.out
                  << '\n';
        return kExitOk;
    } catch (const Error& e) {
        return report(e, kExitFailed);
    }
}

int cmd_train(const TrainArgs& args) {
    trainer::TrainConfig tcfg;
    camp::CampConfig mcfg = camp::CampConfig::desk_scale();
    try {
        std::ifstream is(args.config_path);
        if (!is) throw ValidationError("cannot open config '" + args.config_path + "'");
        nlohmann::json j;
        is >> j;
        if (j.contains("train")) tcfg = trainer::TrainConfig::from_json(j["train"]);
        if (j.contains("model")) mcfg = camp::CampConfig::from_json(j["model"]);
        if (args.seed) tcfg.seed = *args.seed;
        if (args.threads) tcfg.threads = *args.threads;
        if (args.no_encoder_comm) mcfg.encoder_comm = false;
        if (args.no_reward_balance) tcfg.reward_balance = false;
        if (args.shared_profile) mcfg.profile_embeddings = false;
        trainer::check_train_config(tcfg);
        camp::check_config(mcfg);
    } catch (const std::exception& e) {
        return report(e, kExitUsage);
    }

    try {
        std::filesystem::create_directories(args.out_dir);
        const std::string metrics_path = args.out_dir + "/metrics.csv";
        std::ofstream metrics(metrics_path);
        if (!metrics) throw Error("cannot open '" + metrics_path + "'");

        nlohmann::ordered_json effective;
        effective["train"] = tcfg.to_json();
        effective["model"] = mcfg.to_json();
        metrics << "# pvrp train\n# config " << effective.dump() << '\n'
                << trainer::metrics_csv_header(args.timing) << '\n';

        camp::CampParams params = camp::init_params(mcfg, tcfg.seed);
        const auto ptrs = params.all();
        nd::AdamState adam(std::span<nd::Parameter* const>(ptrs.data(), ptrs.size()));
        trainer::SmoothingState smoothing;

        trainer::TrainCallbacks callbacks;
        callbacks.on_batch = [&](const trainer::BatchMetrics& row) {
            metrics << trainer::metrics_csv_row(row, args.timing) << '\n';
            if (!args.quiet && row.batch % 25 == 0) {
                std::cout << "epoch " << row.epoch << " batch " << row.batch << " dist "
                          << to_string(row.dist) << " mean_reward " << row.mean_reward << " loss "
                          << row.loss << " grad_norm " << row.grad_norm << " lr " << row.lr
                          << '\n';
            }
        };

        nlohmann::ordered_json train_meta;
        train_meta["train"] = tcfg.to_json();
        for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
            trainer::train_epoch(params, adam, smoothing, epoch, tcfg, mcfg, callbacks);
            train_meta["epoch"] = epoch;
            camp::save_checkpoint(
                args.out_dir + "/checkpoint_epoch_" + std::to_string(epoch) + ".json", params,
                mcfg, train_meta);
        }
        camp::save_checkpoint(args.out_dir + "/checkpoint.json", params, mcfg, train_meta);
        if (!args.quiet)
            std::cout << "wrote " << args.out_dir << "/checkpoint.json and " << metrics_path
                      << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        return report(e, kExitFailed);
    }
}

namespace {

struct EvalRow {
    std::string instance_id;
    int n = 0;
    int m = 0;
    DistKind dist = DistKind::Random;
    Variant variant = Variant::Preferences;
    double alpha = 0.0;
    std::string method;
    int samples = 1;
    double cost = 0.0;
    double pref = 0.0;
    double reward = 0.0;
    std::optional<double> gap_vs_exact;
    long time_ms = 0;
};

constexpr const char* kKnownMethods[] = {"camp-greedy", "camp-sample", "greedy", "random", "exact"};

}  // namespace

int cmd_eval(const EvalArgs& args) {
    std::vector<Instance> instances;
    camp::CampConfig mcfg;
    std::unique_ptr<camp::CampParams> params;
    bool needs_model = false;
    try {
        for (const std::string& m : args.methods) {
            if (std::find(std::begin(kKnownMethods), std::end(kKnownMethods), m) ==
                std::end(kKnownMethods))
                throw ValidationError("unknown method '" + m + "'");
            needs_model = needs_model || m.rfind("camp", 0) == 0;
        }
        if (args.out.empty()) throw ValidationError("--out is required");
        if (args.samples < 1) throw ValidationError("--samples must be positive");
        if (args.alphas.empty()) throw ValidationError("--alphas must not be empty");
        if (needs_model && args.checkpoint.empty())
            throw ValidationError("--checkpoint is required for camp methods");
    } catch (const Error& e) {
        return report(e, kExitUsage);
    }

    try {
        instances = read_instances(args.instances);
        if (needs_model)
            params = std::make_unique<camp::CampParams>(camp::load_checkpoint(args.checkpoint, mcfg));
    } catch (const std::exception& e) {
        return report(e, kExitFailed);
    }

    try {
        std::vector<std::vector<EvalRow>> per_instance(instances.size());
        parallel_for(
            static_cast<int>(instances.size()), effective_threads(args.threads), [&](int idx) {
                const Instance& base = instances[idx];
                const std::vector<double> alphas = base.variant == Variant::Preferences
                                                       ? args.alphas
                                                       : std::vector<double>{0.0};
                for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
                    Instance inst = base;
                    inst.alpha = alphas[ai];
                    std::optional<double> exact_reward;
                    std::vector<EvalRow> rows;
                    for (const std::string& method : args.methods) {
                        EvalRow row;
                        row.instance_id = inst.id;
                        row.n = inst.n;
                        row.m = inst.m;
                        row.dist = inst.dist_kind;
                        row.variant = inst.variant;
                        row.alpha = inst.alpha;
                        row.method = method;
                        const auto t0 = std::chrono::steady_clock::now();
                        Solution sol;
                        if (method == "camp-greedy") {
                            nd::Tape tape;
                            sol = camp::rollout(tape, inst, *params, mcfg,
                                                camp::DecodeMode::Greedy, nullptr)
                                      .solution;
                        } else if (method == "camp-sample") {
                            // the deterministic greedy rollout counts as one of
                            // the S, so best-of-S never falls below camp-greedy
                            row.samples = args.samples;
                            nd::Tape greedy_tape;
                            const auto gr = camp::rollout(greedy_tape, inst, *params, mcfg,
                                                          camp::DecodeMode::Greedy, nullptr);
                            double best = gr.reward;
                            sol = gr.solution;
                            for (int s = 1; s < args.samples; ++s) {
                                nd::Tape tape;
                                Rng rng(derive_seed(args.seed, idx, ai * 1000 + s, 0xCA));
                                const auto rr = camp::rollout(tape, inst, *params, mcfg,
                                                              camp::DecodeMode::Sample, &rng);
                                if (rr.reward > best) {
                                    best = rr.reward;
                                    sol = rr.solution;
                                }
                            }
                        } else if (method == "greedy") {
                            sol = oracle::greedy_solve(inst).solution;
                        } else if (method == "random") {
                            Rng rng(derive_seed(args.seed, idx, ai, 0x7A));
                            sol = oracle::random_rollout(inst, rng).solution;
                        } else {  // exact
                            if (inst.n > 8 || inst.m > 3) continue;  // guarded out of range
                            sol = oracle::exact_solve(inst).solution;
                        }
                        const auto t1 = std::chrono::steady_clock::now();
                        if (args.timing)
                            row.time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                              t1 - t0)
                                              .count();
                        const ObjectiveBreakdown b = objective_breakdown(inst, sol);
                        row.cost = b.duration_total;
                        row.pref = b.preference_total;
                        row.reward = b.reward(inst);
                        if (method == "exact") exact_reward = row.reward;
                        rows.push_back(std::move(row));
                    }
                    if (exact_reward && std::abs(*exact_reward) > 1e-12) {
                        for (EvalRow& row : rows)
                            row.gap_vs_exact =
                                (*exact_reward - row.reward) / std::abs(*exact_reward) * 100.0;
                    }
                    for (EvalRow& row : rows) per_instance[idx].push_back(std::move(row));
                }
            });

        std::vector<EvalRow> rows;
        for (auto& chunk : per_instance)
            for (auto& row : chunk) rows.push_back(std::move(row));
        std::stable_sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
            if (a.instance_id != b.instance_id) return a.instance_id < b.instance_id;
            if (a.method != b.method) return a.method < b.method;
            return a.alpha < b.alpha;
        });

        std::ofstream os(args.out);
        if (!os) throw Error("cannot open '" + args.out + "'");
        nlohmann::ordered_json effective;
        effective["instances"] = args.instances;
        effective["checkpoint"] = args.checkpoint;
        effective["methods"] = args.methods;
        effective["samples"] = args.samples;
        effective["alphas"] = args.alphas;
        effective["seed"] = args.seed;
        os << "# pvrp eval\n# config " << effective.dump() << '\n';
        os << "instance_id,n,m,dist_kind,variant,alpha,method,samples,cost,pref,reward,"
              "gap_vs_exact,time_ms\n";
        for (const EvalRow& r : rows) {
            os << r.instance_id << ',' << r.n << ',' << r.m << ',' << to_string(r.dist) << ','
               << to_string(r.variant) << ',' << format_real(r.alpha) << ',' << r.method << ','
               << r.samples << ',' << format_real(r.cost) << ',' << format_real(r.pref) << ','
               << format_real(r.reward) << ','
               << (r.gap_vs_exact ? format_real(*r.gap_vs_exact) : std::string()) << ','
               << r.time_ms << '\n';
        }

        if (!args.pareto.empty()) {
            // mean cost / preference per (alpha, method) over preference instances
            std::ofstream ps(args.pareto);
            if (!ps) throw Error("cannot open '" + args.pareto + "'");
            ps << "# pvrp eval pareto\nalpha,method,mean_cost,mean_pref\n";
            for (double alpha : args.alphas) {
                for (const std::string& method : args.methods) {
                    double cost = 0.0, pref = 0.0;
                    int count = 0;
                    for (const EvalRow& r : rows) {
                        if (r.method != method || r.variant != Variant::Preferences) continue;
                        if (r.alpha != alpha) continue;
                        cost += r.cost;
                        pref += r.pref;
                        ++count;
                    }
                    if (count == 0) continue;
                    ps << format_real(alpha) << ',' << method << ',' << format_real(cost / count)
                       << ',' << format_real(pref / count) << '\n';
                }
            }
        }

        std::cout << "wrote " << rows.size() << " rows -> " << args.out << '\n';
        return kExitOk;
    } catch (const std::exception& e) {
        return report(e, kExitFailed);
    }
}

int cmd_validate(const ValidateArgs& args) {
    try {
        const std::vector<Instance> instances = read_instances(args.instances);
        const std::vector<Solution> solutions = read_solutions(args.solutions);
        if (instances.size() != solutions.size())
            throw ValidationError("instance/solution counts differ (" +
                                  std::to_string(instances.size()) + " vs " +
                                  std::to_string(solutions.size()) + ")");
        bool all_feasible = true;
        for (std::size_t i = 0; i < instances.size(); ++i) {
            const ValidationReport report = validate(instances[i], solutions[i]);
            if (report.feasible) {
                std::cout << instances[i].id << ": feasible, objective "
                          << objective(instances[i], solutions[i]) << '\n';
            } else {
                all_feasible = false;
                std::cout << instances[i].id << ": INFEASIBLE";
                for (const Violation& v : report.violations)
                    std::cout << " [" << to_string(v.id) << "] " << v.detail << ';';
                std::cout << '\n';
            }
        }
        return all_feasible ? kExitOk : kExitFailed;
    } catch (const std::exception& e) {
        return report(e, kExitFailed);
    }
}

}  // namespace cli
}  // namespace pvrp
