#include "grnet/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grnet/rng.hpp"

namespace grnet {

void step(Model& model, const ModelGrads& grads, OptimState& state) {
    if (grads.block_weights.size() != model.block_weights.size() ||
        !grads.fc_weight.same_shape(model.fc_weight) ||
        grads.fc_bias.size() != model.fc_bias.size()) {
        throw ShapeMismatch("step: gradient shapes do not match the model");
    }
    if (state.learning_rate < 0.0 || !std::isfinite(state.learning_rate)) {
        throw ConfigInvalid("step: learning rate must be finite and non-negative");
    }

    for (std::size_t b = 0; b < model.block_weights.size(); ++b) {
        if (grads.block_weights[b].size() != model.block_weights[b].size()) {
            throw ShapeMismatch("step: filter gradient count does not match the model");
        }
        for (std::size_t j = 0; j < model.block_weights[b].size(); ++j) {
            FRWeight& w = model.block_weights[b][j];
            Matrix rgrad = riemannian_grad(w, grads.block_weights[b][j]);
            Matrix raw = w.w() - state.learning_rate * rgrad;
            std::uint64_t jitter_seed = 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(state.step_count + 1) ^
                                        (static_cast<std::uint64_t>(b) << 32) ^ static_cast<std::uint64_t>(j);
            int rounds = 0;
            w = retract(raw, state.mode, jitter_seed, &rounds);
            state.jitter_events += rounds;
        }
    }

    for (std::size_t i = 0; i < model.fc_weight.data().size(); ++i) {
        model.fc_weight.data()[i] -= state.learning_rate * grads.fc_weight.data()[i];
    }
    for (std::size_t c = 0; c < model.fc_bias.size(); ++c) {
        model.fc_bias[c] -= state.learning_rate * grads.fc_bias[c];
    }
    ++state.step_count;
}

EvalMetrics evaluate(const Model& model, const SubspaceDataset& data, int threads) {
    if (data.samples.empty()) throw EmptyDataset("evaluate: dataset is empty");
    Tape tape;
    Matrix probs = forward(model, data.samples, tape, threads);

    EvalMetrics metrics;
    metrics.mean_loss = loss(probs, data.labels);
    metrics.confusion.assign(static_cast<std::size_t>(data.classes),
                             std::vector<long>(static_cast<std::size_t>(data.classes), 0));
    long hits = 0;
    for (int i = 0; i < probs.rows(); ++i) {
        int best = 0;
        for (int c = 1; c < probs.cols(); ++c) {
            if (probs(i, c) > probs(i, best)) best = c;
        }
        int truth = data.labels[static_cast<std::size_t>(i)];
        ++metrics.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(best)];
        if (best == truth) ++hits;
    }
    metrics.accuracy = static_cast<double>(hits) / static_cast<double>(probs.rows());
    return metrics;
}

std::vector<EpochStats> train(Model& model, const SubspaceDataset& train_set,
                              const SubspaceDataset* test_set, int epochs, int batch_size,
                              std::uint64_t seed, OptimState& state, int threads) {
    if (train_set.samples.empty()) throw EmptyDataset("train: dataset is empty");
    if (batch_size < 1) throw ConfigInvalid("train: batch size must be >= 1");
    if (epochs < 0) throw ConfigInvalid("train: epochs must be >= 0");

    int n = static_cast<int>(train_set.samples.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    Rng shuffle_rng(seed);
    std::vector<EpochStats> history;
    history.reserve(static_cast<std::size_t>(epochs));

    for (int epoch = 0; epoch < epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        for (int start = 0; start < n; start += batch_size) {
            int end = std::min(start + batch_size, n);
            std::vector<OrthonormalBasis> batch;
            std::vector<int> labels;
            batch.reserve(static_cast<std::size_t>(end - start));
            for (int k = start; k < end; ++k) {
                int idx = order[static_cast<std::size_t>(k)];
                batch.push_back(train_set.samples[static_cast<std::size_t>(idx)]);
                labels.push_back(train_set.labels[static_cast<std::size_t>(idx)]);
            }
            Tape tape;
            forward(model, batch, tape, threads);
            ModelGrads grads = backward(model, tape, labels, 1.0, threads);
            step(model, grads, state);
        }

        EpochStats stats;
        stats.epoch = epoch;
        EvalMetrics on_train = evaluate(model, train_set, threads);
        stats.train_loss = on_train.mean_loss;
        stats.train_acc = on_train.accuracy;
        stats.test_acc = test_set ? evaluate(model, *test_set, threads).accuracy
                                  : std::nan("");
        history.push_back(stats);
    }
    return history;
}

}  // namespace grnet
