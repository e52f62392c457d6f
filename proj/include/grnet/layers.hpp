#pragma once

#include <vector>

#include "grnet/linalg.hpp"
#include "grnet/manifold.hpp"

namespace grnet {

// One sample's channel stack at a given pipeline stage.
using Channels = std::vector<Matrix>;

enum class PoolVariant {
    Across,  // mean over groups of n consecutive channels
    Within,  // mean over non-overlapping sqrt(n) x sqrt(n) patches of each channel
};

struct FRMapCache {
    Channels inputs;
    std::vector<Matrix> weights;  // snapshot of the filter matrices
};

struct ReOrthCache {
    std::vector<QRFactors> factors;
};

struct ProjMapCache {
    Channels inputs;
};

struct PoolCache {
    PoolVariant variant = PoolVariant::Across;
    int group = 0;        // n
    int in_channels = 0;
    int in_dim = 0;
};

struct OrthMapCache {
    std::vector<EigFactors> factors;
    int order = 0;  // q
};

struct FCCache {
    std::vector<double> input_vec;
    std::vector<double> probs;
    int channels = 0;
    int dim = 0;
};

struct FRMapGrads {
    Channels input;
    std::vector<Matrix> weight;  // Euclidean gradients, one per filter
};

struct FCGrads {
    Matrix w_fc;
    std::vector<double> bias;
    Channels input;  // gradient reshaped back into per-channel dim x dim matrices
};

// X_k = W_k X_{k-1} for every (input channel, filter) pair; output channel
// i*m + j is weights[j] applied to channel i.
Channels frmap_fwd(const Channels& x, const std::vector<FRWeight>& weights, FRMapCache& cache);
FRMapGrads frmap_bwd(const FRMapCache& cache, const Channels& upstream);

// Replaces each channel by the Q factor of its thin QR decomposition.
Channels reorth_fwd(const Channels& x, ReOrthCache& cache);

// Reverse-mode step through the QR factorization. d_q is the gradient with
// respect to Q; d_r, when non-null, the gradient with respect to R (the
// network wiring passes none, i.e. zero).
Channels reorth_bwd(const ReOrthCache& cache, const Channels& d_q,
                    const std::vector<Matrix>* d_r = nullptr);

// X -> X X^T.
Channels projmap_fwd(const Channels& x, ProjMapCache& cache);
Channels projmap_bwd(const ProjMapCache& cache, const Channels& upstream);

// Mean over groups of n consecutive channels; channel count shrinks by n.
Channels projpool_a_fwd(const Channels& p, int n, PoolCache& cache);

// Mean over non-overlapping sqrt(n) x sqrt(n) patches inside each channel;
// output is re-symmetrized as (A + A^T)/2.
Channels projpool_w_fwd(const Channels& p, int n, PoolCache& cache);

// Adjoint of the mean for both pooling variants.
Channels projpool_bwd(const PoolCache& cache, const Channels& upstream);

// Top-q eigenvectors of each symmetric channel.
Channels orthmap_fwd(const Channels& p, int q, OrthMapCache& cache);

// Reverse-mode step through the symmetric eigendecomposition. d_u holds the
// gradient with respect to the extracted basis (padded internally to D x D);
// d_sigma, when non-null, the gradient with respect to the eigenvalues.
Channels orthmap_bwd(const OrthMapCache& cache, const Channels& d_u,
                     const std::vector<std::vector<double>>* d_sigma = nullptr);

// Row-major vectorization of all channels, then logits = w_fc * vec + b and
// a max-shifted softmax.
std::vector<double> fc_softmax_fwd(const Channels& p, const Matrix& w_fc,
                                   const std::vector<double>& bias, FCCache& cache);

// Cross-entropy backward: dlogits = probs - onehot(label), scaled by
// loss_scale.
FCGrads fc_softmax_bwd(const FCCache& cache, int label, const Matrix& w_fc,
                       double loss_scale = 1.0);

}  // namespace grnet
