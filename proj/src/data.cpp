#include "grnet/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "grnet/rng.hpp"

namespace grnet {

namespace {

Matrix gaussian_matrix(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.gaussian();
    return m;
}

OrthonormalBasis random_basis(int dim, int order, Rng& rng) {
    return OrthonormalBasis(thin_qr(gaussian_matrix(dim, order, rng)).q);
}

}  // namespace

SyntheticData gen_synthetic(int classes, int per_class, int dim, int order,
                            double noise, std::uint64_t seed) {
    if (classes < 2) throw ConfigInvalid("gen_synthetic: need at least 2 classes");
    if (per_class < 1) throw ConfigInvalid("gen_synthetic: need per_class >= 1");
    if (order < 1 || order >= dim) throw ConfigInvalid("gen_synthetic: need 1 <= order < dim");
    if (noise < 0.0) throw ConfigInvalid("gen_synthetic: noise must be >= 0");

    Rng rng(seed);
    SyntheticData out;
    out.prototypes.reserve(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) out.prototypes.push_back(random_basis(dim, order, rng));

    for (SubspaceDataset* ds : {&out.train, &out.test}) {
        ds->dim = dim;
        ds->order = order;
        ds->classes = classes;
    }
    out.train.split = "train";
    out.test.split = "test";

    for (int c = 0; c < classes; ++c) {
        // 2 * per_class draws, seeded-shuffled into equal train/test halves.
        int total = 2 * per_class;
        std::vector<OrthonormalBasis> drawn;
        drawn.reserve(static_cast<std::size_t>(total));
        for (int i = 0; i < total; ++i) {
            Matrix perturbed = out.prototypes[static_cast<std::size_t>(c)].basis() +
                               noise * gaussian_matrix(dim, order, rng);
            drawn.push_back(OrthonormalBasis(thin_qr(perturbed).q));
        }
        std::vector<int> idx(static_cast<std::size_t>(total));
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        for (int i = 0; i < total; ++i) {
            SubspaceDataset& ds = (i < per_class) ? out.train : out.test;
            ds.samples.push_back(drawn[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
            ds.labels.push_back(c);
        }
    }
    return out;
}

double nearest_prototype_accuracy(const SubspaceDataset& data,
                                  const std::vector<OrthonormalBasis>& prototypes) {
    if (data.samples.empty()) throw EmptyDataset("nearest_prototype_accuracy: dataset is empty");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.samples.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = -1;
        for (std::size_t c = 0; c < prototypes.size(); ++c) {
            double d = projection_metric(data.samples[i], prototypes[c]);
            if (d < best) {
                best = d;
                best_c = static_cast<int>(c);
            }
        }
        if (best_c == data.labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(data.samples.size());
}

OrthonormalBasis subspace_from_features(const Matrix& features, int q) {
    if (features.cols() < q) {
        throw RankDeficient("subspace_from_features: need at least q feature columns", 0.0);
    }
    Matrix gram = mul_bt(features, features);
    EigFactors eig = sym_eig(0.5 * (gram + transpose(gram)));
    int dim = gram.rows();
    if (eig.sigma[static_cast<std::size_t>(q - 1)] <= 1e-12 * std::max(eig.sigma[0], 0.0)) {
        throw RankDeficient("subspace_from_features: features have rank below q", 0.0);
    }
    if (q < dim) {
        double gap = eig.sigma[static_cast<std::size_t>(q - 1)] - eig.sigma[static_cast<std::size_t>(q)];
        if (gap <= 1e-10) {
            throw DegenerateSpectrum("subspace_from_features: eigenvalue gap at q is below 1e-10");
        }
    }
    Matrix basis(dim, q);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < q; ++j) basis(i, j) = eig.u(i, j);
    return OrthonormalBasis(std::move(basis));
}

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((bits >> (8 * k)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
        if (!in_) throw TruncatedFile("cannot open file: " + path);
    }

    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }

    double f64() {
        unsigned char b[8];
        read(b, 8);
        std::uint64_t bits = 0;
        for (int k = 7; k >= 0; --k) bits = (bits << 8) | b[k];
        double v;
        std::memcpy(&v, &bits, sizeof(v));
        return v;
    }

    void magic(const char* expect) {
        char b[4];
        read(b, 4);
        if (std::memcmp(b, expect, 4) != 0) {
            throw BadMagic(std::string("bad magic, expected ") + expect);
        }
    }

    bool at_end() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    void read(void* dst, std::size_t n) {
        if (!in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
            throw TruncatedFile("file ended mid-record");
        }
    }

    std::ifstream in_;
};

}  // namespace

void save_dataset(const SubspaceDataset& dataset, const std::string& path) {
    std::string buf = "GRNB";
    put_u32(buf, 1);
    put_u32(buf, static_cast<std::uint32_t>(dataset.samples.size()));
    put_u32(buf, static_cast<std::uint32_t>(dataset.dim));
    put_u32(buf, static_cast<std::uint32_t>(dataset.order));
    put_u32(buf, static_cast<std::uint32_t>(dataset.classes));
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        put_u32(buf, static_cast<std::uint32_t>(dataset.labels[i]));
        for (double v : dataset.samples[i].basis().data()) put_f64(buf, v);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out || !out.write(buf.data(), static_cast<std::streamsize>(buf.size()))) {
        throw Error("save_dataset: cannot write " + path);
    }
}

SubspaceDataset load_dataset(const std::string& path) {
    Reader in(path);
    in.magic("GRNB");
    std::uint32_t version = in.u32();
    if (version != 1) throw BadVersion("unsupported GRNB version " + std::to_string(version));

    std::uint32_t count = in.u32();
    SubspaceDataset ds;
    ds.dim = static_cast<int>(in.u32());
    ds.order = static_cast<int>(in.u32());
    ds.classes = static_cast<int>(in.u32());
    if (ds.dim < 1 || ds.order < 1 || ds.order > ds.dim || ds.classes < 1) {
        throw InvariantViolation("load_dataset: header fields out of range");
    }

    ds.samples.reserve(count);
    ds.labels.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        int label = static_cast<int>(in.u32());
        if (label < 0 || label >= ds.classes) {
            throw InvariantViolation("load_dataset: label out of range");
        }
        Matrix basis(ds.dim, ds.order);
        for (double& v : basis.data()) v = in.f64();
        Matrix gram = mul_at(basis, basis);
        if (frob_norm(gram - Matrix::identity(ds.order)) >= 1e-8) {
            throw InvariantViolation("load_dataset: sample " + std::to_string(i) +
                                     " fails the orthonormality check");
        }
        ds.samples.push_back(OrthonormalBasis(std::move(basis)));
        ds.labels.push_back(label);
    }
    return ds;
}

}  // namespace grnet
