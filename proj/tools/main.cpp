#include <cstdint>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"PVRP toolkit: instance generation, policy training, evaluation, validation"};
    app.require_subcommand(1);

    pvrp::cli::GenerateArgs gen;
    CLI::App* generate = app.add_subcommand("generate", "Generate PVRP instances (JSONL)");
    generate->add_option("--n", gen.n, "clients per instance");
    generate->add_option("--m", gen.m, "vehicles per instance");
    generate->add_option("--dist", gen.dist, "random | angle | cluster | zone");
    generate->add_option("--variant", gen.variant, "preferences | zone-constraints");
    generate->add_option("--alpha", gen.alpha, "preference weight written to instances");
    generate->add_option("--count", gen.count, "number of instances");
    generate->add_option("--seed", gen.seed, "base seed");
    generate->add_option("--out", gen.out, "output .pvrp.jsonl path")->required();

    pvrp::cli::TrainArgs train;
    std::uint64_t train_seed = 0;
    int train_threads = 0;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the policy (REINFORCE)");
    train_cmd->add_option("--config", train.config_path, "train/model config JSON")->required();
    train_cmd->add_option("--out-dir", train.out_dir, "checkpoint + metrics directory");
    CLI::Option* seed_opt = train_cmd->add_option("--seed", train_seed, "override config seed");
    CLI::Option* thr_opt = train_cmd->add_option("--threads", train_threads, "rollout threads");
    train_cmd->add_flag("--no-encoder-comm", train.no_encoder_comm,
                        "disable bipartite encoder message passing");
    train_cmd->add_flag("--no-reward-balance", train.no_reward_balance,
                        "disable per-distribution reward balancing");
    train_cmd->add_flag("--shared-profile", train.shared_profile,
                        "single shared embedding set for all vehicles");
    train_cmd->add_flag("--timing", train.timing, "append wallclock_ms to metrics rows");
    train_cmd->add_flag("--quiet", train.quiet, "suppress progress output");

    pvrp::cli::EvalArgs eval;
    std::string methods_csv = "camp-greedy,camp-sample,greedy,random";
    std::string alphas_csv = "0.0,0.1,0.2";
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate methods on an instance file");
    eval_cmd->add_option("--checkpoint", eval.checkpoint, "trained checkpoint JSON");
    eval_cmd->add_option("--instances", eval.instances, "instance JSONL")->required();
    eval_cmd->add_option("--out", eval.out, "results CSV")->required();
    eval_cmd->add_option("--pareto", eval.pareto, "optional pareto sweep CSV");
    eval_cmd->add_option("--methods", methods_csv,
                         "comma list of camp-greedy,camp-sample,greedy,random,exact");
    eval_cmd->add_option("--samples", eval.samples, "rollouts per instance for camp-sample");
    eval_cmd->add_option("--alphas", alphas_csv, "comma list of alpha values");
    eval_cmd->add_option("--seed", eval.seed, "sampling seed");
    eval_cmd->add_option("--threads", eval.threads, "instance-level parallelism");
    eval_cmd->add_flag("--timing", eval.timing, "measure per-row time_ms");

    pvrp::cli::ValidateArgs val;
    CLI::App* val_cmd = app.add_subcommand("validate", "Validate solutions against instances");
    val_cmd->add_option("--instances", val.instances, "instance JSONL")->required();
    val_cmd->add_option("--solutions", val.solutions, "solution JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*generate) return pvrp::cli::cmd_generate(gen);
    if (*train_cmd) {
        if (seed_opt->count()) train.seed = train_seed;
        if (thr_opt->count()) train.threads = train_threads;
        return pvrp::cli::cmd_train(train);
    }
    if (*eval_cmd) {
        eval.methods.clear();
        std::stringstream ms(methods_csv);
        std::string tok;
        while (std::getline(ms, tok, ','))
            if (!tok.empty()) eval.methods.push_back(tok);
        eval.alphas.clear();
        std::stringstream as(alphas_csv);
        while (std::getline(as, tok, ','))
            if (!tok.empty()) eval.alphas.push_back(std::stod(tok));
        return pvrp::cli::cmd_eval(eval);
    }
    if (*val_cmd) return pvrp::cli::cmd_validate(val);
    return 2;
}
