#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pvrp {
namespace cli {

struct GenerateArgs {
    int n = 10;
    int m = 3;
    std::string dist = "random";
    std::string variant = "preferences";
    double alpha = 0.1;
    int count = 1280;
    std::uint64_t seed = 0;
    std::string out;
};

struct TrainArgs {
    std::string config_path;
    std::string out_dir = ".";
    bool no_encoder_comm = false;
    bool no_reward_balance = false;
    bool shared_profile = false;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    bool timing = false;
    bool quiet = false;
};

struct EvalArgs {
    std::string checkpoint;
    std::string instances;
    std::string out;
    std::string pareto;
    std::vector<std::string> methods = {"camp-greedy", "camp-sample", "greedy", "random"};
    int samples = 128;
    std::vector<double> alphas = {0.0, 0.1, 0.2};
    std::uint64_t seed = 0;
    int threads = 0;
    bool timing = false;
};

struct ValidateArgs {
    std::string instances;
    std::string solutions;
};

// Exit codes: 0 ok, 1 failed/infeasible, 2 usage.
int cmd_generate(const GenerateArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_validate(const ValidateArgs& args);

}  // namespace cli
}  // namespace pvrp
