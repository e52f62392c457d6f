#include "grnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include "grnet/rng.hpp"

namespace grnet {

namespace {

Matrix gaussian_matrix(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.gaussian();
    return m;
}

Matrix random_orthonormal(int rows, int cols, Rng& rng) {
    return thin_qr(gaussian_matrix(rows, cols, rng)).q;
}

// Symmetric matrix with all eigenvalue gaps at 0.07, so spectral checks
// measure correctness rather than conditioning.
Matrix spread_spectrum_symmetric(int dim, Rng& rng) {
    Matrix v = random_orthonormal(dim, dim, rng);
    Matrix scaled = v;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) scaled(i, j) *= 1.0 - 0.07 * j;
    Matrix a = mul_bt(scaled, v);
    return 0.5 * (a + transpose(a));
}

void consider(CheckReport& report, const std::string& coord, double analytic, double numeric) {
    double rel = std::fabs(analytic - numeric) /
                 std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    if (report.worst_coord.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_coord = coord;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
    }
}

// Central differences of loss_with around value, compared entrywise against
// the analytic gradient. Symmetric domains use directions (e_ij + e_ji).
void scan_matrix(CheckReport& report, const std::string& name, const Matrix& value,
                 const Matrix& analytic, bool symmetric, double h,
                 const std::function<double(const Matrix&)>& loss_with) {
    for (int i = 0; i < value.rows(); ++i) {
        for (int j = symmetric ? i : 0; j < value.cols(); ++j) {
            Matrix plus = value;
            Matrix minus = value;
            plus(i, j) += h;
            minus(i, j) -= h;
            double expected = analytic(i, j);
            if (symmetric && i != j) {
                plus(j, i) += h;
                minus(j, i) -= h;
                expected += analytic(j, i);
            }
            double numeric = (loss_with(plus) - loss_with(minus)) / (2.0 * h);
            char coord[96];
            std::snprintf(coord, sizeof(coord), "%s(%d,%d)", name.c_str(), i, j);
            consider(report, coord, expected, numeric);
        }
    }
}

double functional(const Channels& out, const Channels& c) {
    double s = 0.0;
    for (std::size_t k = 0; k < out.size(); ++k) s += frob_inner(c[k], out[k]);
    return s;
}

CheckReport make_report(const std::string& target, double h, double tol) {
    CheckReport report;
    report.target = target;
    report.h = h;
    report.tol = tol;
    return report;
}

void check_frmap(CheckReport& report, const LayerDims& d, Rng& rng, double h, double scale) {
    Channels x{random_orthonormal(d.dim, d.order, rng)};
    std::vector<FRWeight> weights;
    for (int j = 0; j < d.m; ++j) weights.push_back(FRWeight(gaussian_matrix(d.d_out, d.dim, rng)));
    Channels c;
    for (int j = 0; j < d.m; ++j) c.push_back(scale * gaussian_matrix(d.d_out, d.order, rng));

    FRMapCache cache;
    functional(frmap_fwd(x, weights, cache), c);
    FRMapGrads grads = frmap_bwd(cache, c);

    scan_matrix(report, "input[0]", x[0], grads.input[0], false, h, [&](const Matrix& v) {
        FRMapCache tmp;
        return functional(frmap_fwd({v}, weights, tmp), c);
    });
    for (int j = 0; j < d.m; ++j) {
        scan_matrix(report, "weight[" + std::to_string(j) + "]", weights[static_cast<std::size_t>(j)].w(),
                    grads.weight[static_cast<std::size_t>(j)], false, h, [&](const Matrix& v) {
                        auto ws = weights;
                        ws[static_cast<std::size_t>(j)] = FRWeight(v);
                        FRMapCache tmp;
                        return functional(frmap_fwd(x, ws, tmp), c);
                    });
    }
}

void check_reorth(CheckReport& report, const LayerDims& d, Rng& rng, double h, double scale) {
    Channels x{gaussian_matrix(d.dim, d.order, rng)};
    Channels c{scale * gaussian_matrix(d.dim, d.order, rng)};

    ReOrthCache cache;
    reorth_fwd(x, cache);
    Channels grads = reorth_bwd(cache, c);

    scan_matrix(report, "input[0]", x[0], grads[0], false, h, [&](const Matrix& v) {
        ReOrthCache tmp;
        return functional(reorth_fwd({v}, tmp), c);
    });
}

void check_projmap(CheckReport& report, const LayerDims& d, Rng& rng, double h, double scale) {
    Channels x{random_orthonormal(d.dim, d.order, rng)};
    Channels c{scale * gaussian_matrix(d.dim, d.dim, rng)};

    ProjMapCache cache;
    projmap_fwd(x, cache);
    Channels grads = projmap_bwd(cache, c);

    scan_matrix(report, "input[0]", x[0], grads[0], false, h, [&](const Matrix& v) {
        ProjMapCache tmp;
        return functional(projmap_fwd({v}, tmp), c);
    });
}

void check_pool(CheckReport& report, const LayerDims& d, Rng& rng, double h, double scale,
                PoolVariant variant) {
    int n_channels = (variant == PoolVariant::Across) ? 2 * d.pool_n : d.channels;
    Channels x;
    for (int k = 0; k < n_channels; ++k) {
        Matrix basis = random_orthonormal(d.dim, d.order, rng);
        x.push_back(mul_bt(basis, basis));
    }

    PoolCache cache;
    Channels out = (variant == PoolVariant::Across) ? projpool_a_fwd(x, d.pool_n, cache)
                                                    : projpool_w_fwd(x, d.pool_n, cache);
    Channels c;
    for (const Matrix& o : out) c.push_back(scale * gaussian_matrix(o.rows(), o.cols(), rng));
    Channels grads = projpool_bwd(cache, c);

    bool symmetric = variant == PoolVariant::Within;
    for (int k = 0; k < n_channels; ++k) {
        scan_matrix(report, "input[" + std::to_string(k) + "]", x[static_cast<std::size_t>(k)],
                    grads[static_cast<std::size_t>(k)], symmetric, h, [&](const Matrix& v) {
                        Channels xs = x;
                        xs[static_cast<std::size_t>(k)] = v;
                        PoolCache tmp;
                        Channels o = (variant == PoolVariant::Across)
                                         ? projpool_a_fwd(xs, d.pool_n, tmp)
                                         : projpool_w_fwd(xs, d.pool_n, tmp);
                        return functional(o, c);
                    });
    }
}

// Sign-invariant composed loss <C, X X^T> with X the extracted basis, probed
// along symmetric directions only.
void check_orthmap(CheckReport& report, const LayerDims& d, Rng& rng, double h, double scale) {
    Channels x{spread_spectrum_symmetric(d.dim, rng)};
    Channels c{scale * gaussian_matrix(d.dim, d.dim, rng)};

    auto composed = [&](const Channels& in, OrthMapCache& om, ProjMapCache& pm) {
        return functional(projmap_fwd(orthmap_fwd(in, d.order, om), pm), c);
    };

    OrthMapCache om;
    ProjMapCache pm;
    composed(x, om, pm);
    Channels grads = orthmap_bwd(om, projmap_bwd(pm, c));

    scan_matrix(report, "input[0]", x[0], grads[0], true, h, [&](const Matrix& v) {
        OrthMapCache om2;
        ProjMapCache pm2;
        return composed({v}, om2, pm2);
    });
}

void check_fcsoftmax(CheckReport& report, const LayerDims& d, Rng& rng, double h, double scale) {
    Channels x;
    for (int k = 0; k < d.channels; ++k) {
        Matrix basis = random_orthonormal(d.d_out, d.order, rng);
        x.push_back(mul_bt(basis, basis));
    }
    int fan_in = d.channels * d.d_out * d.d_out;
    Matrix w_fc = (1.0 / std::sqrt(static_cast<double>(fan_in))) *
                  gaussian_matrix(d.classes, fan_in, rng);
    std::vector<double> bias(static_cast<std::size_t>(d.classes));
    for (double& v : bias) v = 0.1 * rng.gaussian();
    int label = rng.below(d.classes);

    auto ce = [&](const Channels& in, const Matrix& w, const std::vector<double>& b) {
        FCCache tmp;
        std::vector<double> probs = fc_softmax_fwd(in, w, b, tmp);
        return -scale * std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-15));
    };

    FCCache cache;
    fc_softmax_fwd(x, w_fc, bias, cache);
    FCGrads grads = fc_softmax_bwd(cache, label, w_fc, scale);

    for (int k = 0; k < d.channels; ++k) {
        scan_matrix(report, "input[" + std::to_string(k) + "]", x[static_cast<std::size_t>(k)],
                    grads.input[static_cast<std::size_t>(k)], false, h, [&](const Matrix& v) {
                        Channels xs = x;
                        xs[static_cast<std::size_t>(k)] = v;
                        return ce(xs, w_fc, bias);
                    });
    }
    scan_matrix(report, "w_fc", w_fc, grads.w_fc, false, h,
                [&](const Matrix& v) { return ce(x, v, bias); });

    Matrix bias_row(1, d.classes);
    Matrix bias_grad(1, d.classes);
    for (int k = 0; k < d.classes; ++k) {
        bias_row(0, k) = bias[static_cast<std::size_t>(k)];
        bias_grad(0, k) = grads.bias[static_cast<std::size_t>(k)];
    }
    scan_matrix(report, "bias", bias_row, bias_grad, false, h, [&](const Matrix& v) {
        std::vector<double> b(static_cast<std::size_t>(d.classes));
        for (int k = 0; k < d.classes; ++k) b[static_cast<std::size_t>(k)] = v(0, k);
        return ce(x, w_fc, b);
    });
}

}  // namespace

const std::vector<std::string>& layer_check_targets() {
    static const std::vector<std::string> targets = {
        "frmap", "reorth", "projmap", "pool_a", "pool_w", "orthmap", "fcsoftmax"};
    return targets;
}

CheckReport check_layer(const std::string& layer, const LayerDims& dims, std::uint64_t seed,
                        double h, double tol, double functional_scale) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigInvalid("check_layer: h must be positive");
    CheckReport report = make_report(layer, h, tol);
    Rng rng(seed);
    if (layer == "frmap") {
        check_frmap(report, dims, rng, h, functional_scale);
    } else if (layer == "reorth") {
        check_reorth(report, dims, rng, h, functional_scale);
    } else if (layer == "projmap") {
        check_projmap(report, dims, rng, h, functional_scale);
    } else if (layer == "pool_a") {
        check_pool(report, dims, rng, h, functional_scale, PoolVariant::Across);
    } else if (layer == "pool_w") {
        check_pool(report, dims, rng, h, functional_scale, PoolVariant::Within);
    } else if (layer == "orthmap") {
        check_orthmap(report, dims, rng, h, functional_scale);
    } else if (layer == "fcsoftmax") {
        check_fcsoftmax(report, dims, rng, h, functional_scale);
    } else {
        throw ConfigInvalid("check_layer: unknown layer '" + layer + "'");
    }
    report.pass = report.max_rel_error < tol;
    return report;
}

NetworkConfig tiny_network_config() {
    NetworkConfig config;
    config.input_dim = 12;
    config.order = 2;
    config.classes = 2;
    BlockSpec block;
    block.d_in = 12;
    block.d_out = 6;
    block.m = 2;
    block.pool = PoolVariant::Within;
    block.pool_n = 4;
    config.blocks.push_back(block);
    return config;
}

CheckReport check_network(const NetworkConfig& config, std::uint64_t seed, double h, double tol) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigInvalid("check_network: h must be positive");
    validate_config(config);
    CheckReport report = make_report("network", h, tol);

    Rng rng(seed);
    Model model = build(config, rng.next_u64());
    std::vector<OrthonormalBasis> batch;
    std::vector<int> labels;
    for (int i = 0; i < 3; ++i) {
        batch.push_back(OrthonormalBasis(random_orthonormal(config.input_dim, config.order, rng)));
        labels.push_back(rng.below(config.classes));
    }

    auto loss_of = [&](const Model& m) {
        Tape tape;
        return loss(forward(m, batch, tape), labels);
    };

    Tape tape;
    forward(model, batch, tape);
    ModelGrads grads = backward(model, tape, labels);

    for (std::size_t b = 0; b < model.block_weights.size(); ++b) {
        for (std::size_t j = 0; j < model.block_weights[b].size(); ++j) {
            std::string name = "block" + std::to_string(b) + ".weight[" + std::to_string(j) + "]";
            scan_matrix(report, name, model.block_weights[b][j].w(), grads.block_weights[b][j],
                        false, h, [&](const Matrix& v) {
                            Model m = model;
                            m.block_weights[b][j] = FRWeight(v);
                            return loss_of(m);
                        });
        }
    }
    scan_matrix(report, "fc_weight", model.fc_weight, grads.fc_weight, false, h,
                [&](const Matrix& v) {
                    Model m = model;
                    m.fc_weight = v;
                    return loss_of(m);
                });
    Matrix bias_row(1, config.classes);
    Matrix bias_grad(1, config.classes);
    for (int k = 0; k < config.classes; ++k) {
        bias_row(0, k) = model.fc_bias[static_cast<std::size_t>(k)];
        bias_grad(0, k) = grads.fc_bias[static_cast<std::size_t>(k)];
    }
    scan_matrix(report, "fc_bias", bias_row, bias_grad, false, h, [&](const Matrix& v) {
        Model m = model;
        for (int k = 0; k < config.classes; ++k) m.fc_bias[static_cast<std::size_t>(k)] = v(0, k);
        return loss_of(m);
    });

    report.pass = report.max_rel_error < tol;
    return report;
}

std::vector<CheckReport> default_suite(double h, double layer_tol, double net_tol, int n_seeds) {
    std::vector<CheckReport> reports;
    for (const std::string& target : layer_check_targets()) {
        CheckReport worst;
        for (int s = 1; s <= n_seeds; ++s) {
            CheckReport r = check_layer(target, LayerDims{}, static_cast<std::uint64_t>(s), h, layer_tol);
            if (s == 1 || r.max_rel_error > worst.max_rel_error) worst = r;
        }
        reports.push_back(worst);
    }
    CheckReport worst_net;
    for (int s = 1; s <= n_seeds; ++s) {
        CheckReport r = check_network(tiny_network_config(), static_cast<std::uint64_t>(s), h, net_tol);
        if (s == 1 || r.max_rel_error > worst_net.max_rel_error) worst_net = r;
    }
    reports.push_back(worst_net);
    return reports;
}

std::string format_report(const CheckReport& report) {
    char line[256];
    std::snprintf(line, sizeof(line),
                  "%-10s %s  max rel err %.3e  (tol %.1e, h %.1e)  worst %s  analytic % .6e  numeric % .6e",
                  report.target.c_str(), report.pass ? "PASS" : "FAIL", report.max_rel_error,
                  report.tol, report.h, report.worst_coord.c_str(), report.worst_analytic,
                  report.worst_numeric);
    return line;
}

}  // namespace grnet
