#pragma once

#include <cstdint>
#include <vector>

#include "grnet/data.hpp"
#include "grnet/net.hpp"

namespace grnet {

struct OptimState {
    double learning_rate = 0.01;
    RetractionMode mode = RetractionMode::PsdIdentity;
    long step_count = 0;
    long jitter_events = 0;  // PsdIdentity rank-guard activations
};

// One SGD step: FRMap filters take the Riemannian update
// w <- retract(w - lr * (g - g w^T w)), FC parameters a plain Euclidean step.
void step(Model& model, const ModelGrads& grads, OptimState& state);

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
};

struct EvalMetrics {
    double mean_loss = 0.0;
    double accuracy = 0.0;
    std::vector<std::vector<long>> confusion;  // [true][predicted]
};

EvalMetrics evaluate(const Model& model, const SubspaceDataset& data, int threads = 1);

// Minibatch SGD with a seeded shuffle per epoch. Train metrics are a full
// post-epoch evaluation pass (the same code path as evaluate), so they match
// a later eval call exactly. test_set may be null.
std::vector<EpochStats> train(Model& model, const SubspaceDataset& train_set,
                              const SubspaceDataset* test_set, int epochs, int batch_size,
                              std::uint64_t seed, OptimState& state, int threads = 1);

}  // namespace grnet
