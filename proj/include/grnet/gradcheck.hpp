#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grnet/net.hpp"

namespace grnet {

// Instance sizes used by check_layer; defaults keep every check well inside
// the full-rank, well-separated-spectrum regime.
struct LayerDims {
    int dim = 8;     // ambient dimension D
    int order = 3;   // q
    int d_out = 5;   // FRMap output dimension
    int m = 2;       // FRMap filters
    int pool_n = 4;  // pooling group / patch size
    int channels = 2;
    int classes = 3;
};

struct CheckReport {
    std::string target;
    double max_rel_error = 0.0;
    std::string worst_coord;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool pass = false;
    double h = 1e-6;
    double tol = 1e-5;
};

// Valid layer ids for check_layer: frmap, reorth, projmap, pool_a, pool_w,
// orthmap, fcsoftmax.
const std::vector<std::string>& layer_check_targets();

// Builds a seeded random instance of the layer, takes a fixed random linear
// functional as loss (a sign-invariant composed loss for orthmap), and
// compares the analytic backward pass against central finite differences per
// coordinate. Relative errors use max(|analytic|, |numeric|, 1e-8) as the
// denominator; symmetric-domain layers are probed along symmetrized basis
// directions. functional_scale scales the loss (0 checks the all-zero case).
CheckReport check_layer(const std::string& layer, const LayerDims& dims, std::uint64_t seed,
                        double h, double tol, double functional_scale = 1.0);

// Central-difference check of the cross-entropy gradient with respect to
// every FRMap filter entry (the Euclidean gradient, before the Riemannian
// projection) and every FC parameter, on a small random batch.
CheckReport check_network(const NetworkConfig& config, std::uint64_t seed, double h, double tol);

// A small 1-block configuration suitable for check_network.
NetworkConfig tiny_network_config();

// Every layer target plus the 1-block network, n_seeds seeds each, worst
// report kept per target.
std::vector<CheckReport> default_suite(double h = 1e-6, double layer_tol = 1e-5,
                                       double net_tol = 1e-4, int n_seeds = 5);

std::string format_report(const CheckReport& report);

}  // namespace grnet
