#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grnet/manifold.hpp"

namespace grnet {

struct SubspaceDataset {
    int dim = 0;      // D
    int order = 0;    // q
    int classes = 0;  // C
    std::vector<OrthonormalBasis> samples;
    std::vector<int> labels;
    std::string split;  // "train", "test" or empty

    std::size_t size() const { return samples.size(); }
};

struct SyntheticData {
    SubspaceDataset train;
    SubspaceDataset test;
    std::vector<OrthonormalBasis> prototypes;  // the generating class subspaces
};

// C class prototypes drawn as Q factors of Gaussian D x q matrices; each
// sample re-orthonormalizes prototype + noise * Gaussian. Produces per_class
// train and per_class test samples per class via a seeded 50/50 assignment.
SyntheticData gen_synthetic(int classes, int per_class, int dim, int order,
                            double noise, std::uint64_t seed);

// Fraction of samples whose nearest prototype under the projection metric
// matches their label.
double nearest_prototype_accuracy(const SubspaceDataset& data,
                                  const std::vector<OrthonormalBasis>& prototypes);

// Top-q left singular directions of a D x T feature matrix, computed as the
// leading eigenvectors of the Gram matrix features * features^T.
OrthonormalBasis subspace_from_features(const Matrix& features, int q);

// GRNB binary format: magic "GRNB", u32 version 1, u32 N/D/q/C, then N
// records of (u32 label, D*q little-endian f64, row-major). Round-trips are
// bitwise exact.
void save_dataset(const SubspaceDataset& dataset, const std::string& path);
SubspaceDataset load_dataset(const std::string& path);

}  // namespace grnet
