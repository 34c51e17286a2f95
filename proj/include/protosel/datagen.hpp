#ifndef PROTOSEL_DATAGEN_HPP
#define PROTOSEL_DATAGEN_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

#include "protosel/prototype_store.hpp"

namespace protosel {

/// Isotropic Gaussian classes; class c gets code c.
struct BlobSpec {
    std::vector<std::vector<double>> means;
    std::vector<double> stds;
    std::size_t samples_per_class = 100;
    std::uint64_t seed = 0;

    std::size_t num_classes() const { return means.size(); }
    std::size_t dimension() const { return means.empty() ? 0 : means.front().size(); }
    void validate() const;
};

/**
 * Binary rays: class c is a length-J vector of ones up to (not including) index boundaries[c]
 * and zeros after, with each entry flipped independently with the given probability.
 */
struct RaySpec {
    std::size_t length = 32;
    std::vector<std::size_t> boundaries;
    double flip_probability = 0.0;
    std::size_t samples_per_class = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Rows are grouped by class in code order. Throws ConfigError on an invalid spec.
PrototypeDatabase gen_blobs(const BlobSpec& spec);
PrototypeDatabase gen_rays(const RaySpec& spec);

struct DataSplit {
    PrototypeDatabase train;
    PrototypeDatabase validate;
    PrototypeDatabase test;
};

/**
 * Seeded shuffle into three disjoint parts of round(f * M) rows (test takes the remainder).
 * Each part keeps the original relative row order and is relabeled from 0.
 * Throws ConfigError unless the fractions are non-negative and sum to 1 within 1e-9.
 */
DataSplit split_database(const PrototypeDatabase& db, double train, double validate, double test, std::uint64_t seed);

}  // namespace protosel

#endif
