// End-to-end checks of the command-line tool, driven through the real
// binary. Every run lands in a scratch directory under the build tree.

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "grnet/data.hpp"
#include "grnet/net.hpp"

#ifdef GRNET_CLI_PATH

namespace {

const std::string kCli = GRNET_CLI_PATH;
const std::string kDir = "cli_test_tmp";

int run(const std::string& args, const std::string& out_file = "/dev/null") {
    std::string cmd = kCli + " " + args + " > " + out_file + " 2> /dev/null";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Fixture {
    Fixture() {
        std::system(("mkdir -p " + kDir).c_str());
        if (!made) {
            REQUIRE(run("gen-data --classes 3 --per-class 50 --dim 20 --order 3 --noise 0.1 "
                        "--seed 2 --out-train " + kDir + "/train.grnb --out-test " + kDir +
                        "/test.grnb") == 0);
            made = true;
        }
    }
    static bool made;
};
bool Fixture::made = false;

}  // namespace

TEST_CASE_FIXTURE(Fixture, "gen-data writes loadable splits") {
    grnet::SubspaceDataset train = grnet::load_dataset(kDir + "/train.grnb");
    grnet::SubspaceDataset test = grnet::load_dataset(kDir + "/test.grnb");
    CHECK(train.size() == 150);
    CHECK(test.size() == 150);
    CHECK(train.dim == 20);
    CHECK(train.order == 3);
    CHECK(train.classes == 3);
}

TEST_CASE_FIXTURE(Fixture, "train with zero epochs writes the initialized model and a bare history") {
    REQUIRE(run("train --train " + kDir + "/train.grnb --test " + kDir + "/test.grnb "
                "--blocks 20:12:4:W4 --epochs 0 --seed 17 --out-model " + kDir +
                "/zero.grnm --log " + kDir + "/zero.csv") == 0);

    grnet::Model from_cli = grnet::load_model(kDir + "/zero.grnm");
    grnet::NetworkConfig config = from_cli.config;
    grnet::Model rebuilt = grnet::build(config, 17);
    CHECK(from_cli.fc_weight.data() == rebuilt.fc_weight.data());
    CHECK(from_cli.block_weights[0][3].w().data() == rebuilt.block_weights[0][3].w().data());

    CHECK(read_file(kDir + "/zero.csv") == "epoch,train_loss,train_acc,test_acc\n");
}

TEST_CASE_FIXTURE(Fixture, "an untrained model scores at chance level on balanced data") {
    REQUIRE(run("eval --model " + kDir + "/zero.grnm --data " + kDir + "/test.grnb",
                kDir + "/eval_zero.txt") == 0);
    std::string out = read_file(kDir + "/eval_zero.txt");
    auto pos = out.find("accuracy: ");
    REQUIRE(pos != std::string::npos);
    double acc = std::strtod(out.c_str() + pos + 10, nullptr);

    // Binomial 99% interval around 1/3 for 150 draws.
    double half_width = 2.576 * std::sqrt((1.0 / 3) * (2.0 / 3) / 150.0);
    CHECK(acc > 1.0 / 3 - half_width);
    CHECK(acc < 1.0 / 3 + half_width);
}

TEST_CASE_FIXTURE(Fixture, "eval reproduces the final history row of a training run") {
    REQUIRE(run("train --train " + kDir + "/train.grnb --test " + kDir + "/test.grnb "
                "--blocks 20:12:4:W4 --epochs 5 --seed 3 --out-model " + kDir +
                "/m.grnm --log " + kDir + "/m.csv") == 0);

    std::string csv = read_file(kDir + "/m.csv");
    auto last_line_start = csv.rfind('\n', csv.size() - 2);
    std::string last = csv.substr(last_line_start + 1);
    // epoch,train_loss,train_acc,test_acc
    std::vector<std::string> cells;
    std::stringstream ss(last);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    REQUIRE(cells.size() == 4);

    REQUIRE(run("eval --model " + kDir + "/m.grnm --data " + kDir + "/train.grnb",
                kDir + "/eval_train.txt") == 0);
    std::string out = read_file(kDir + "/eval_train.txt");
    CHECK(out.find("accuracy: " + cells[2] + "\n") != std::string::npos);
    CHECK(out.find("mean_loss: " + cells[1] + "\n") != std::string::npos);
}

TEST_CASE_FIXTURE(Fixture, "exit codes distinguish usage, check and format failures") {
    CHECK(run("gradcheck --target bogus") == 2);
    CHECK(run("gradcheck --target reorth --h 1") == 1);
    CHECK(run("eval --model " + kDir + "/train.grnb --data " + kDir + "/test.grnb") == 3);
    CHECK(run("train --train " + kDir + "/train.grnb --test " + kDir + "/test.grnb "
              "--blocks nonsense --epochs 1 --out-model " + kDir + "/x.grnm") == 2);
    CHECK(run("train --test " + kDir + "/test.grnb --epochs 1 --out-model " + kDir + "/x.grnm") == 2);
}

TEST_CASE_FIXTURE(Fixture, "gradcheck writes a line-delimited structured log") {
    REQUIRE(run("gradcheck --target projmap --log " + kDir + "/check.jsonl") == 0);
    std::string log = read_file(kDir + "/check.jsonl");
    CHECK(log.find("\"target\":\"projmap\"") != std::string::npos);
    CHECK(log.find("\"pass\":true") != std::string::npos);
}

#endif  // GRNET_CLI_PATH
