#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>
#include <optional>
#include <string>

#include "grnet/data.hpp"
#include "grnet/gradcheck.hpp"
#include "grnet/net.hpp"
#include "grnet/optim.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

grnet::Matrix to_matrix(const DoubleArray& arr) {
    if (arr.ndim() != 2) throw py::value_error("expected a 2-D array");
    grnet::Matrix m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::memcpy(m.data().data(), arr.data(), m.data().size() * sizeof(double));
    return m;
}

py::array_t<double> to_array(const grnet::Matrix& m) {
    py::array_t<double> arr({m.rows(), m.cols()});
    std::memcpy(arr.mutable_data(), m.data().data(), m.data().size() * sizeof(double));
    return arr;
}

grnet::RetractionMode parse_retraction(const std::string& mode) {
    if (mode == "psd") return grnet::RetractionMode::PsdIdentity;
    if (mode == "stiefel") return grnet::RetractionMode::StiefelQr;
    throw py::value_error("retraction must be 'psd' or 'stiefel'");
}

grnet::SubspaceDataset dataset_from_arrays(const std::vector<DoubleArray>& bases,
                                           const std::vector<int>& labels, int classes) {
    if (bases.empty()) throw py::value_error("need at least one sample");
    if (bases.size() != labels.size()) throw py::value_error("bases/labels length mismatch");
    grnet::SubspaceDataset ds;
    ds.classes = classes;
    for (std::size_t i = 0; i < bases.size(); ++i) {
        grnet::Matrix m = to_matrix(bases[i]);
        if (i == 0) {
            ds.dim = m.rows();
            ds.order = m.cols();
        }
        ds.samples.push_back(grnet::OrthonormalBasis(std::move(m)));
        ds.labels.push_back(labels[i]);
    }
    return ds;
}

py::dict report_to_dict(const grnet::CheckReport& r) {
    return py::dict("target"_a = r.target, "max_rel_error"_a = r.max_rel_error,
                    "worst_coord"_a = r.worst_coord, "analytic"_a = r.worst_analytic,
                    "numeric"_a = r.worst_numeric, "pass"_a = r.pass, "h"_a = r.h,
                    "tol"_a = r.tol);
}

// Python-facing model handle: configuration plus trained parameters.
struct PyModel {
    grnet::Model model;

    static PyModel create(int input_dim, int order, int classes,
                          const std::vector<std::tuple<int, int, int, std::string, int>>& blocks,
                          const std::string& retraction, std::uint64_t seed) {
        grnet::NetworkConfig config;
        config.input_dim = input_dim;
        config.order = order;
        config.classes = classes;
        for (const auto& [d_in, d_out, m, variant, n] : blocks) {
            grnet::BlockSpec block;
            block.d_in = d_in;
            block.d_out = d_out;
            block.m = m;
            if (variant == "A" || variant == "a") {
                block.pool = grnet::PoolVariant::Across;
            } else if (variant == "W" || variant == "w") {
                block.pool = grnet::PoolVariant::Within;
            } else {
                throw py::value_error("pool variant must be 'A' or 'W'");
            }
            block.pool_n = n;
            config.blocks.push_back(block);
        }
        config.retraction = parse_retraction(retraction);
        config.seed = seed;
        return PyModel{grnet::build(config, seed)};
    }

    std::vector<py::dict> fit(const grnet::SubspaceDataset& train_set,
                              std::optional<std::reference_wrapper<const grnet::SubspaceDataset>> test_set,
                              int epochs, double lr, int batch, std::uint64_t seed, int threads) {
        grnet::OptimState state;
        state.learning_rate = lr;
        state.mode = model.config.retraction;
        auto history = grnet::train(model, train_set,
                                    test_set ? &test_set->get() : nullptr, epochs, batch, seed,
                                    state, threads);
        std::vector<py::dict> rows;
        rows.reserve(history.size());
        for (const grnet::EpochStats& row : history) {
            rows.push_back(py::dict("epoch"_a = row.epoch, "train_loss"_a = row.train_loss,
                                    "train_acc"_a = row.train_acc, "test_acc"_a = row.test_acc));
        }
        return rows;
    }

    py::array_t<double> predict_proba(const std::vector<DoubleArray>& bases) {
        std::vector<grnet::OrthonormalBasis> batch;
        batch.reserve(bases.size());
        for (const DoubleArray& b : bases) batch.push_back(grnet::OrthonormalBasis(to_matrix(b)));
        grnet::Tape tape;
        return to_array(grnet::forward(model, batch, tape));
    }

    std::vector<int> predict(const std::vector<DoubleArray>& bases) {
        py::array_t<double> probs = predict_proba(bases);
        auto view = probs.unchecked<2>();
        std::vector<int> labels;
        labels.reserve(static_cast<std::size_t>(view.shape(0)));
        for (py::ssize_t i = 0; i < view.shape(0); ++i) {
            int best = 0;
            for (py::ssize_t c = 1; c < view.shape(1); ++c)
                if (view(i, c) > view(i, best)) best = static_cast<int>(c);
            labels.push_back(best);
        }
        return labels;
    }

    py::dict evaluate_on(const grnet::SubspaceDataset& data, int threads) {
        grnet::EvalMetrics metrics = grnet::evaluate(model, data, threads);
        return py::dict("mean_loss"_a = metrics.mean_loss, "accuracy"_a = metrics.accuracy,
                        "confusion"_a = metrics.confusion);
    }
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Grassmann network core: subspace layers, Riemannian SGD and gradient checks";

    py::register_exception<grnet::Error>(m, "GrnetError");

    // linalg
    m.def(
        "thin_qr",
        [](const DoubleArray& x) {
            grnet::QRFactors qr = grnet::thin_qr(to_matrix(x));
            return py::make_tuple(to_array(qr.q), to_array(qr.r));
        },
        "x"_a, "Thin QR with a positive-diagonal R; returns (q, r).");
    m.def(
        "sym_eig",
        [](const DoubleArray& a) {
            grnet::EigFactors eig = grnet::sym_eig(to_matrix(a));
            return py::make_tuple(to_array(eig.u), eig.sigma);
        },
        "a"_a, "Symmetric eigendecomposition; returns (u, sigma) with sigma non-increasing.");
    m.def("tril_strict", [](const DoubleArray& a) { return to_array(grnet::tril_strict(to_matrix(a))); }, "a"_a);
    m.def("asym", [](const DoubleArray& a) { return to_array(grnet::asym(to_matrix(a))); }, "a"_a);
    m.def("bsym", [](const DoubleArray& a) { return to_array(grnet::bsym(to_matrix(a))); }, "a"_a);
    m.def(
        "frob_inner",
        [](const DoubleArray& a, const DoubleArray& b) {
            return grnet::frob_inner(to_matrix(a), to_matrix(b));
        },
        "a"_a, "b"_a);

    // manifold
    m.def(
        "projection_metric",
        [](const DoubleArray& x1, const DoubleArray& x2) {
            return grnet::projection_metric(grnet::OrthonormalBasis(to_matrix(x1)),
                                            grnet::OrthonormalBasis(to_matrix(x2)));
        },
        "x1"_a, "x2"_a);
    m.def(
        "principal_angles",
        [](const DoubleArray& x1, const DoubleArray& x2) {
            return grnet::principal_angles(grnet::OrthonormalBasis(to_matrix(x1)),
                                           grnet::OrthonormalBasis(to_matrix(x2)));
        },
        "x1"_a, "x2"_a);
    m.def(
        "riemannian_grad",
        [](const DoubleArray& w, const DoubleArray& egrad) {
            return to_array(grnet::riemannian_grad(grnet::FRWeight(to_matrix(w)), to_matrix(egrad)));
        },
        "w"_a, "egrad"_a);
    m.def(
        "retract",
        [](const DoubleArray& w, const std::string& mode) {
            return to_array(grnet::retract(to_matrix(w), parse_retraction(mode)).w());
        },
        "w"_a, "mode"_a = "psd");

    // single-channel layer operations
    m.def(
        "reorth",
        [](const DoubleArray& x) {
            grnet::ReOrthCache cache;
            return to_array(grnet::reorth_fwd({to_matrix(x)}, cache)[0]);
        },
        "x"_a, "Q factor of the channel's thin QR decomposition.");
    m.def(
        "projmap",
        [](const DoubleArray& x) {
            grnet::ProjMapCache cache;
            return to_array(grnet::projmap_fwd({to_matrix(x)}, cache)[0]);
        },
        "x"_a, "The projection matrix X @ X.T.");
    m.def(
        "orthmap",
        [](const DoubleArray& p, int order) {
            grnet::OrthMapCache cache;
            return to_array(grnet::orthmap_fwd({to_matrix(p)}, order, cache)[0]);
        },
        "p"_a, "order"_a, "Top-q eigenvectors of a symmetric matrix.");

    // data
    py::class_<grnet::SubspaceDataset>(m, "Dataset")
        .def_static("from_arrays", &dataset_from_arrays, "bases"_a, "labels"_a, "classes"_a)
        .def_property_readonly("dim", [](const grnet::SubspaceDataset& d) { return d.dim; })
        .def_property_readonly("order", [](const grnet::SubspaceDataset& d) { return d.order; })
        .def_property_readonly("classes", [](const grnet::SubspaceDataset& d) { return d.classes; })
        .def_property_readonly("labels", [](const grnet::SubspaceDataset& d) { return d.labels; })
        .def_property_readonly("bases",
                               [](const grnet::SubspaceDataset& d) {
                                   std::vector<py::array_t<double>> out;
                                   out.reserve(d.samples.size());
                                   for (const grnet::OrthonormalBasis& s : d.samples)
                                       out.push_back(to_array(s.basis()));
                                   return out;
                               })
        .def("save", &grnet::save_dataset, "path"_a)
        .def("__len__", [](const grnet::SubspaceDataset& d) { return d.size(); });

    m.def("load_dataset", &grnet::load_dataset, "path"_a);
    m.def(
        "gen_synthetic",
        [](int classes, int per_class, int dim, int order, double noise, std::uint64_t seed) {
            grnet::SyntheticData data =
                grnet::gen_synthetic(classes, per_class, dim, order, noise, seed);
            std::vector<py::array_t<double>> prototypes;
            for (const grnet::OrthonormalBasis& p : data.prototypes)
                prototypes.push_back(to_array(p.basis()));
            return py::make_tuple(data.train, data.test, prototypes);
        },
        "classes"_a, "per_class"_a, "dim"_a, "order"_a, "noise"_a = 0.1, "seed"_a = 1,
        "Seeded synthetic task; returns (train, test, prototypes).");
    m.def(
        "nearest_prototype_accuracy",
        [](const grnet::SubspaceDataset& data, const std::vector<DoubleArray>& prototypes) {
            std::vector<grnet::OrthonormalBasis> protos;
            for (const DoubleArray& p : prototypes)
                protos.push_back(grnet::OrthonormalBasis(to_matrix(p)));
            return grnet::nearest_prototype_accuracy(data, protos);
        },
        "data"_a, "prototypes"_a);
    m.def(
        "subspace_from_features",
        [](const DoubleArray& features, int order) {
            return to_array(grnet::subspace_from_features(to_matrix(features), order).basis());
        },
        "features"_a, "order"_a);

    // model
    py::class_<PyModel>(m, "GrNet")
        .def(py::init(&PyModel::create), "input_dim"_a, "order"_a, "classes"_a,
             "blocks"_a = std::vector<std::tuple<int, int, int, std::string, int>>{},
             "retraction"_a = "psd", "seed"_a = 1,
             "blocks: list of (d_in, d_out, m, 'A'|'W', n) tuples.")
        .def("fit", &PyModel::fit, "train"_a, "test"_a = py::none(), "epochs"_a, "lr"_a = 0.01,
             "batch"_a = 30, "seed"_a = 1, "threads"_a = 1)
        .def("predict", &PyModel::predict, "bases"_a)
        .def("predict_proba", &PyModel::predict_proba, "bases"_a)
        .def("evaluate", &PyModel::evaluate_on, "data"_a, "threads"_a = 1)
        .def("save", [](const PyModel& self, const std::string& path) { grnet::save_model(self.model, path); },
             "path"_a)
        .def_static("load",
                    [](const std::string& path) { return PyModel{grnet::load_model(path)}; },
                    "path"_a)
        .def_property_readonly("input_dim",
                               [](const PyModel& self) { return self.model.config.input_dim; })
        .def_property_readonly("order", [](const PyModel& self) { return self.model.config.order; })
        .def_property_readonly("classes",
                               [](const PyModel& self) { return self.model.config.classes; });

    // gradient checks
    m.def(
        "check_layer",
        [](const std::string& layer, std::uint64_t seed, double h, double tol) {
            return report_to_dict(grnet::check_layer(layer, grnet::LayerDims{}, seed, h, tol));
        },
        "layer"_a, "seed"_a = 1, "h"_a = 1e-6, "tol"_a = 1e-5);
    m.def(
        "check_network",
        [](std::uint64_t seed, double h, double tol) {
            return report_to_dict(grnet::check_network(grnet::tiny_network_config(), seed, h, tol));
        },
        "seed"_a = 1, "h"_a = 1e-6, "tol"_a = 1e-4);
    m.def(
        "gradcheck_all",
        [](double h, double layer_tol, double net_tol, int n_seeds) {
            std::vector<py::dict> out;
            for (const grnet::CheckReport& r : grnet::default_suite(h, layer_tol, net_tol, n_seeds))
                out.push_back(report_to_dict(r));
            return out;
        },
        "h"_a = 1e-6, "layer_tol"_a = 1e-5, "net_tol"_a = 1e-4, "n_seeds"_a = 5);

    m.attr("layer_targets") = grnet::layer_check_targets();
}
