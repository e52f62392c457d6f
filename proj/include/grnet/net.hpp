#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grnet/layers.hpp"

namespace grnet {

struct BlockSpec {
    int d_in = 0;
    int d_out = 0;
    int m = 0;  // filters per FRMap layer
    PoolVariant pool = PoolVariant::Within;
    int pool_n = 4;
};

struct NetworkConfig {
    int input_dim = 0;
    std::vector<BlockSpec> blocks;
    int order = 0;    // q
    int classes = 0;  // C
    RetractionMode retraction = RetractionMode::PsdIdentity;
    double learning_rate = 0.01;
    int batch_size = 30;
    int epochs = 0;
    std::uint64_t seed = 1;
};

// Throws ConfigInvalid on any violated channel/dimension arithmetic.
void validate_config(const NetworkConfig& config);

// Ambient dimension and channel count entering the output block.
int output_dim(const NetworkConfig& config);
int output_channels(const NetworkConfig& config);
int fc_input_dim(const NetworkConfig& config);

struct Model {
    NetworkConfig config;
    std::vector<std::vector<FRWeight>> block_weights;
    Matrix fc_weight;             // C x fc_input_dim
    std::vector<double> fc_bias;  // C
};

// Seeded Gaussian initialization; FRMap filters are redrawn (at most 3
// times) until they pass the rank guard, the FC weight is scaled by
// 1/sqrt(fan_in), the bias starts at zero.
Model build(const NetworkConfig& config, std::uint64_t seed);

struct BlockCaches {
    FRMapCache frmap;
    ReOrthCache reorth;
    ProjMapCache projmap;
    PoolCache pool;
    OrthMapCache orthmap;
};

struct SampleTape {
    std::vector<BlockCaches> blocks;
    ProjMapCache out_projmap;
    FCCache fc;
};

// Per-forward-pass record of every layer cache, consumed by backward.
struct Tape {
    std::vector<SampleTape> samples;
    int n_blocks = 0;
    int classes = 0;
};

// Runs every sample through [FRMap, ReOrth, ProjMap, ProjPooling, OrthMap]
// per block, then ProjMap, FC, softmax. Returns a batch x C probability
// matrix; layer errors are rethrown tagged with block and sample indices.
Matrix forward(const Model& model, const std::vector<OrthonormalBasis>& batch,
               Tape& tape, int threads = 1);

struct ModelGrads {
    std::vector<std::vector<Matrix>> block_weights;  // Euclidean FRMap gradients
    Matrix fc_weight;
    std::vector<double> fc_bias;
};

// Cross-entropy gradients for every parameter, averaged over the batch.
// loss_scale multiplies the loss (and therefore every gradient).
ModelGrads backward(const Model& model, const Tape& tape, const std::vector<int>& labels,
                    double loss_scale = 1.0, int threads = 1);

// Mean of -log p[label] with probabilities clamped below at 1e-15.
double loss(const Matrix& probabilities, const std::vector<int>& labels);

// GRNM binary model format: magic "GRNM", u32 version 1, a config block,
// then all parameters in declaration order as little-endian f64.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace grnet
