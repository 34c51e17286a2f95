#include "protosel/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "protosel/error.hpp"

namespace protosel {

void BlobSpec::validate() const {
    if (means.empty()) {
        throw ConfigError("blob spec needs at least one class");
    }
    if (stds.size() != means.size()) {
        throw ConfigError("blob spec needs one standard deviation per class");
    }
    if (dimension() == 0) {
        throw ConfigError("blob means must have at least one coordinate");
    }
    for (std::size_t c = 0; c < means.size(); ++c) {
        if (means[c].size() != dimension()) {
            throw ConfigError("blob means must share one dimension");
        }
        if (!(stds[c] > 0.0) || !std::isfinite(stds[c])) {
            throw ConfigError("blob standard deviations must be positive");
        }
        for (std::size_t d = 0; d < c; ++d) {
            if (means[c] == means[d]) {
                throw ConfigError("blob means must be distinct");
            }
        }
    }
}

void RaySpec::validate() const {
    if (length < 2) {
        throw ConfigError("ray length must be at least 2");
    }
    if (boundaries.empty()) {
        throw ConfigError("ray spec needs at least one radius class");
    }
    for (const std::size_t b : boundaries) {
        if (b < 1 || b > length - 1) {
            throw ConfigError("ray boundary " + std::to_string(b) + " must lie in [1, " + std::to_string(length - 1) +
                              "]");
        }
    }
    if (!(flip_probability >= 0.0 && flip_probability < 0.5)) {
        throw ConfigError("ray flip probability must lie in [0, 0.5)");
    }
}

PrototypeDatabase gen_blobs(const BlobSpec& spec) {
    spec.validate();
    const std::size_t dim = spec.dimension();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> features;
    std::vector<ClassCode> classes;
    features.reserve(spec.num_classes() * spec.samples_per_class * dim);
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
            for (std::size_t j = 0; j < dim; ++j) {
                features.push_back(spec.means[c][j] + spec.stds[c] * noise(rng));
            }
            classes.push_back(static_cast<ClassCode>(c));
        }
    }
    return PrototypeDatabase(dim, std::move(features), std::move(classes));
}

PrototypeDatabase gen_rays(const RaySpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::bernoulli_distribution flip(spec.flip_probability);
    std::vector<double> features;
    std::vector<ClassCode> classes;
    features.reserve(spec.boundaries.size() * spec.samples_per_class * spec.length);
    for (std::size_t c = 0; c < spec.boundaries.size(); ++c) {
        for (std::size_t n = 0; n < spec.samples_per_class; ++n) {
            for (std::size_t j = 0; j < spec.length; ++j) {
                const bool inside = j < spec.boundaries[c];
                features.push_back(inside != flip(rng) ? 1.0 : 0.0);
            }
            classes.push_back(static_cast<ClassCode>(c));
        }
    }
    return PrototypeDatabase(spec.length, std::move(features), std::move(classes));
}

DataSplit split_database(const PrototypeDatabase& db, double train, double validate, double test, std::uint64_t seed) {
    for (const double f : {train, validate, test}) {
        if (!(f >= 0.0 && f <= 1.0)) {
            throw ConfigError("split fractions must lie in [0, 1]");
        }
    }
    if (std::abs(train + validate + test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
    const std::size_t m = db.size();
    std::vector<PrototypeId> order(m);
    std::iota(order.begin(), order.end(), PrototypeId{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n_train = std::min(m, static_cast<std::size_t>(std::llround(train * static_cast<double>(m))));
    const auto n_validate =
        std::min(m - n_train, static_cast<std::size_t>(std::llround(validate * static_cast<double>(m))));
    auto part = [&](std::size_t begin, std::size_t end) {
        std::vector<PrototypeId> ids(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(ids.begin(), ids.end());
        return ids;
    };
    const auto train_ids = part(0, n_train);
    const auto validate_ids = part(n_train, n_train + n_validate);
    const auto test_ids = part(n_train + n_validate, m);
    return DataSplit{db.subset(train_ids), db.subset(validate_ids), db.subset(test_ids)};
}

}  // namespace protosel
