// Command-line interface: dataset generation, training, evaluation and
// gradient checking for Grassmann networks.
//
// Exit codes: 0 success, 1 check/eval failure, 2 usage error, 3 data or
// model format error.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "grnet/data.hpp"
#include "grnet/gradcheck.hpp"
#include "grnet/net.hpp"
#include "grnet/optim.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    ~Timer() {
        auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
        std::fprintf(stderr, "elapsed %.3f s\n", elapsed.count());
    }
};

std::string fmt_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

grnet::PoolVariant parse_pool_variant(char c, const std::string& spec) {
    if (c == 'A' || c == 'a') return grnet::PoolVariant::Across;
    if (c == 'W' || c == 'w') return grnet::PoolVariant::Within;
    throw CLI::ValidationError("--blocks", "bad pool variant in '" + spec +
                                               "', expected d_in:d_out:m:[A|W]<n>");
}

// Compact block grammar: d_in:d_out:m:<A|W><n>, e.g. 20:12:4:W4.
grnet::BlockSpec parse_block_spec(const std::string& spec) {
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ':')) parts.push_back(item);
    const std::string grammar = "expected d_in:d_out:m:[A|W]<n>, e.g. 20:12:4:W4";
    if (parts.size() != 4 || parts[3].size() < 2) {
        throw CLI::ValidationError("--blocks", "malformed block '" + spec + "'; " + grammar);
    }
    grnet::BlockSpec block;
    try {
        block.d_in = std::stoi(parts[0]);
        block.d_out = std::stoi(parts[1]);
        block.m = std::stoi(parts[2]);
        block.pool = parse_pool_variant(parts[3][0], spec);
        block.pool_n = std::stoi(parts[3].substr(1));
    } catch (const std::invalid_argument&) {
        throw CLI::ValidationError("--blocks", "malformed block '" + spec + "'; " + grammar);
    } catch (const std::out_of_range&) {
        throw CLI::ValidationError("--blocks", "malformed block '" + spec + "'; " + grammar);
    }
    return block;
}

std::string block_to_string(const grnet::BlockSpec& b) {
    return std::to_string(b.d_in) + ":" + std::to_string(b.d_out) + ":" + std::to_string(b.m) +
           ":" + (b.pool == grnet::PoolVariant::Within ? "W" : "A") + std::to_string(b.pool_n);
}

struct GenDataArgs {
    int classes = 0;
    int per_class = 0;
    int dim = 0;
    int order = 10;
    double noise = 0.1;
    std::uint64_t seed = 1;
    std::string out_train;
    std::string out_test;
};

int run_gen_data(const GenDataArgs& args) {
    std::printf(
        "config: command=gen-data classes=%d per-class=%d dim=%d order=%d noise=%s seed=%llu "
        "out-train=%s out-test=%s\n",
        args.classes, args.per_class, args.dim, args.order, fmt_real(args.noise).c_str(),
        static_cast<unsigned long long>(args.seed), args.out_train.c_str(), args.out_test.c_str());
    Timer timer;

    grnet::SyntheticData data = grnet::gen_synthetic(args.classes, args.per_class, args.dim,
                                                     args.order, args.noise, args.seed);
    grnet::save_dataset(data.train, args.out_train);
    grnet::save_dataset(data.test, args.out_test);

    std::printf("wrote %s: %zu samples on Gr(%d,%d), %d classes\n", args.out_train.c_str(),
                data.train.size(), args.order, args.dim, args.classes);
    std::printf("wrote %s: %zu samples on Gr(%d,%d), %d classes\n", args.out_test.c_str(),
                data.test.size(), args.order, args.dim, args.classes);
    std::printf("separability: nearest-prototype test accuracy %s\n",
                fmt_real(grnet::nearest_prototype_accuracy(data.test, data.prototypes)).c_str());
    return kExitOk;
}

struct TrainArgs {
    std::string train_path;
    std::string test_path;
    std::vector<std::string> blocks;
    int order = 0;    // 0 = take from the dataset
    int classes = 0;  // 0 = take from the dataset
    double lr = 0.01;
    int batch = 30;
    int epochs = 0;
    std::uint64_t seed = 1;
    std::string retraction = "psd";
    int threads = 1;
    std::string out_model;
    std::string log_path;
};

int run_train(const TrainArgs& args) {
    std::string blocks_echo;
    for (const std::string& b : args.blocks) blocks_echo += (blocks_echo.empty() ? "" : ",") + b;
    std::printf(
        "config: command=train train=%s test=%s blocks=%s order=%d classes=%d lr=%s batch=%d "
        "epochs=%d seed=%llu retraction=%s threads=%d out-model=%s log=%s\n",
        args.train_path.c_str(), args.test_path.c_str(),
        blocks_echo.empty() ? "(none)" : blocks_echo.c_str(), args.order, args.classes,
        fmt_real(args.lr).c_str(), args.batch, args.epochs,
        static_cast<unsigned long long>(args.seed), args.retraction.c_str(), args.threads,
        args.out_model.c_str(), args.log_path.c_str());
    Timer timer;

    grnet::SubspaceDataset train_set = grnet::load_dataset(args.train_path);
    grnet::SubspaceDataset test_set = grnet::load_dataset(args.test_path);
    if (test_set.dim != train_set.dim || test_set.order != train_set.order ||
        test_set.classes != train_set.classes) {
        throw grnet::ConfigInvalid("train/test datasets disagree on (D, q, C)");
    }
    if (args.order != 0 && args.order != train_set.order) {
        throw grnet::ConfigInvalid("--order " + std::to_string(args.order) +
                                   " does not match the dataset order " +
                                   std::to_string(train_set.order));
    }
    if (args.classes != 0 && args.classes != train_set.classes) {
        throw grnet::ConfigInvalid("--classes " + std::to_string(args.classes) +
                                   " does not match the dataset class count " +
                                   std::to_string(train_set.classes));
    }

    grnet::NetworkConfig config;
    config.input_dim = train_set.dim;
    config.order = train_set.order;
    config.classes = train_set.classes;
    for (const std::string& spec : args.blocks) config.blocks.push_back(parse_block_spec(spec));
    config.retraction = (args.retraction == "stiefel") ? grnet::RetractionMode::StiefelQr
                                                       : grnet::RetractionMode::PsdIdentity;
    config.learning_rate = args.lr;
    config.batch_size = args.batch;
    config.epochs = args.epochs;
    config.seed = args.seed;

    grnet::Model model = grnet::build(config, args.seed);
    grnet::OptimState state;
    state.learning_rate = args.lr;
    state.mode = config.retraction;
    auto history = grnet::train(model, train_set, &test_set, args.epochs, args.batch, args.seed,
                                state, args.threads);

    grnet::save_model(model, args.out_model);
    std::printf("wrote model %s\n", args.out_model.c_str());
    if (state.jitter_events > 0) {
        std::printf("rank guard jittered %ld time(s)\n", state.jitter_events);
    }

    if (!args.log_path.empty()) {
        std::ofstream log(args.log_path, std::ios::trunc);
        if (!log) throw grnet::Error("cannot write history log " + args.log_path);
        log << "epoch,train_loss,train_acc,test_acc\n";
        for (const grnet::EpochStats& row : history) {
            log << row.epoch << ',' << fmt_real(row.train_loss) << ',' << fmt_real(row.train_acc)
                << ',' << fmt_real(row.test_acc) << '\n';
        }
        std::printf("wrote history %s (%zu epochs)\n", args.log_path.c_str(), history.size());
    }
    if (!history.empty()) {
        const grnet::EpochStats& last = history.back();
        std::printf("final: train_loss=%s train_acc=%s test_acc=%s\n",
                    fmt_real(last.train_loss).c_str(), fmt_real(last.train_acc).c_str(),
                    fmt_real(last.test_acc).c_str());
    }
    return kExitOk;
}

struct EvalArgs {
    std::string model_path;
    std::string data_path;
    int threads = 1;
};

int run_eval(const EvalArgs& args) {
    std::printf("config: command=eval model=%s data=%s threads=%d\n", args.model_path.c_str(),
                args.data_path.c_str(), args.threads);
    Timer timer;

    grnet::Model model = grnet::load_model(args.model_path);
    grnet::SubspaceDataset data = grnet::load_dataset(args.data_path);
    grnet::EvalMetrics metrics = grnet::evaluate(model, data, args.threads);

    std::printf("samples: %zu\n", data.size());
    std::printf("accuracy: %s\n", fmt_real(metrics.accuracy).c_str());
    std::printf("mean_loss: %s\n", fmt_real(metrics.mean_loss).c_str());
    std::printf("confusion (rows = true class, cols = predicted):\n");
    for (std::size_t t = 0; t < metrics.confusion.size(); ++t) {
        std::printf("  class %zu:", t);
        for (long v : metrics.confusion[t]) std::printf(" %6ld", v);
        std::printf("\n");
    }
    return kExitOk;
}

struct GradcheckArgs {
    std::string target = "all";
    std::uint64_t seed = 1;
    double h = 1e-6;
    double tol = 0.0;  // 0 = per-target default
    std::string log_path;
};

int run_gradcheck(const GradcheckArgs& args) {
    std::printf("config: command=gradcheck target=%s seed=%llu h=%s tol=%s\n", args.target.c_str(),
                static_cast<unsigned long long>(args.seed), fmt_real(args.h).c_str(),
                args.tol > 0.0 ? fmt_real(args.tol).c_str() : "(default)");
    Timer timer;

    const auto& layer_targets = grnet::layer_check_targets();
    bool known = args.target == "all" || args.target == "network";
    for (const std::string& t : layer_targets) known = known || args.target == t;
    if (!known) {
        std::string valid = "network, all";
        for (const std::string& t : layer_targets) valid = t + ", " + valid;
        std::fprintf(stderr, "unknown --target '%s' (valid: %s)\n", args.target.c_str(),
                     valid.c_str());
        return kExitUsage;
    }

    double layer_tol = args.tol > 0.0 ? args.tol : 1e-5;
    double net_tol = args.tol > 0.0 ? args.tol : 1e-4;
    const int n_seeds = 5;

    std::vector<grnet::CheckReport> reports;
    auto run_target = [&](const std::string& target) {
        grnet::CheckReport worst;
        for (int s = 0; s < n_seeds; ++s) {
            std::uint64_t seed = args.seed + static_cast<std::uint64_t>(s);
            grnet::CheckReport r =
                (target == "network")
                    ? grnet::check_network(grnet::tiny_network_config(), seed, args.h, net_tol)
                    : grnet::check_layer(target, grnet::LayerDims{}, seed, args.h, layer_tol);
            if (s == 0 || r.max_rel_error > worst.max_rel_error) worst = r;
        }
        reports.push_back(worst);
    };

    if (args.target == "all") {
        for (const std::string& t : layer_targets) run_target(t);
        run_target("network");
    } else {
        run_target(args.target);
    }

    bool all_pass = true;
    for (const grnet::CheckReport& r : reports) {
        std::printf("%s\n", grnet::format_report(r).c_str());
        all_pass = all_pass && r.pass;
    }

    if (!args.log_path.empty()) {
        std::ofstream log(args.log_path, std::ios::trunc);
        if (!log) throw grnet::Error("cannot write check log " + args.log_path);
        for (const grnet::CheckReport& r : reports) {
            nlohmann::json row{{"target", r.target},
                               {"max_rel_error", r.max_rel_error},
                               {"worst_coord", r.worst_coord},
                               {"analytic", r.worst_analytic},
                               {"numeric", r.worst_numeric},
                               {"pass", r.pass},
                               {"h", r.h},
                               {"tol", r.tol}};
            log << row.dump() << '\n';
        }
    }
    return all_pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep learning on Grassmann subspace data"};
    app.require_subcommand(1);
    // --h is a gradcheck option, so the help flag keeps its long form only.
    app.set_help_flag("--help", "Print help and exit");

    GenDataArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic subspace dataset");
    gen->add_option("--classes", gen_args.classes, "Number of classes")
        ->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--per-class", gen_args.per_class, "Train (and test) samples per class")
        ->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--dim", gen_args.dim, "Ambient dimension D")
        ->required()
        ->check(CLI::PositiveNumber);
    gen->add_option("--order", gen_args.order, "Subspace order q")->check(CLI::PositiveNumber);
    gen->add_option("--noise", gen_args.noise, "Perturbation scale sigma")
        ->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", gen_args.seed, "Random seed");
    gen->add_option("--out-train", gen_args.out_train, "Output GRNB file, training split")
        ->required();
    gen->add_option("--out-test", gen_args.out_test, "Output GRNB file, test split")->required();

    TrainArgs train_args;
    CLI::App* tr = app.add_subcommand("train", "Train a Grassmann network");
    tr->add_option("--train", train_args.train_path, "Training GRNB file")->required();
    tr->add_option("--test", train_args.test_path, "Test GRNB file")->required();
    tr->add_option("--blocks", train_args.blocks,
                   "Block spec d_in:d_out:m:[A|W]<n> (repeatable; none = 0-block model)");
    tr->add_option("--order", train_args.order, "Subspace order (0 = from dataset)");
    tr->add_option("--classes", train_args.classes, "Class count (0 = from dataset)");
    tr->add_option("--lr", train_args.lr, "Learning rate")->check(CLI::PositiveNumber);
    tr->add_option("--batch", train_args.batch, "Batch size")->check(CLI::PositiveNumber);
    tr->add_option("--epochs", train_args.epochs, "Training epochs")
        ->required()
        ->check(CLI::NonNegativeNumber);
    tr->add_option("--seed", train_args.seed, "Random seed");
    tr->add_option("--retraction", train_args.retraction, "Retraction mode")
        ->check(CLI::IsMember({"psd", "stiefel"}));
    tr->add_option("--threads", train_args.threads, "Worker threads")->check(CLI::PositiveNumber);
    tr->add_option("--out-model", train_args.out_model, "Output GRNM model file")->required();
    tr->add_option("--log", train_args.log_path, "Per-epoch CSV history file");

    EvalArgs eval_args;
    CLI::App* ev = app.add_subcommand("eval", "Evaluate a model on a dataset");
    ev->add_option("--model", eval_args.model_path, "GRNM model file")->required();
    ev->add_option("--data", eval_args.data_path, "GRNB dataset file")->required();
    ev->add_option("--threads", eval_args.threads, "Worker threads")->check(CLI::PositiveNumber);

    GradcheckArgs check_args;
    CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
    gc->add_option("--target", check_args.target, "Layer name, 'network' or 'all'");
    gc->add_option("--seed", check_args.seed, "Base seed (5 consecutive seeds per target)");
    gc->add_option("--h", check_args.h, "Central-difference step");
    gc->add_option("--tol", check_args.tol, "Tolerance override (0 = per-target default)");
    gc->add_option("--log", check_args.log_path, "Line-delimited JSON report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return run_gen_data(gen_args);
        if (tr->parsed()) return run_train(train_args);
        if (ev->parsed()) return run_eval(eval_args);
        if (gc->parsed()) return run_gradcheck(check_args);
    } catch (const grnet::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return kExitFormat;
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const grnet::ConfigInvalid& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const grnet::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitCheckFailed;
    }
    return kExitUsage;
}
