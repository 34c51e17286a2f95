#ifndef PROTOSEL_PROTOTYPE_STORE_HPP
#define PROTOSEL_PROTOTYPE_STORE_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace protosel {

using PrototypeId = std::uint32_t;
using ClassCode = std::uint32_t;

enum class Metric { l2 };

/// Accepts "l2" and "euclidean". Unknown identifiers raise ConfigError.
Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric metric);

/// Non-owning view of one database row.
struct Prototype {
    PrototypeId id;
    std::span<const double> features;
    ClassCode class_code;
};

/**
 * Immutable collection of labeled feature vectors sharing one dimension.
 *
 * Prototype ids are row indices: the i-th row ingested or constructed has id i.
 * Features are stored row-major at double precision.
 */
class PrototypeDatabase {
public:
    PrototypeDatabase() = default;

    /// Throws ContractViolation if the feature count is not rows * dimension or dimension is 0.
    PrototypeDatabase(std::size_t dimension, std::vector<double> features, std::vector<ClassCode> classes,
                      Metric metric = Metric::l2);

    std::size_t size() const { return classes_.size(); }
    std::size_t dimension() const { return dimension_; }
    bool empty() const { return classes_.empty(); }
    Metric metric() const { return metric_; }

    std::span<const double> features(PrototypeId id) const {
        return {features_.data() + static_cast<std::size_t>(id) * dimension_, dimension_};
    }
    ClassCode class_of(PrototypeId id) const { return classes_[id]; }
    Prototype prototype(PrototypeId id) const { return {id, features(id), classes_[id]}; }

    const std::vector<ClassCode>& classes() const { return classes_; }
    const std::vector<double>& raw_features() const { return features_; }

    /// Sorted distinct class codes.
    const std::vector<ClassCode>& class_registry() const { return registry_; }

    /// Position of `code` in the registry; throws ContractViolation if absent.
    std::size_t class_index(ClassCode code) const;

    /// New database holding the given rows, relabeled 0..n-1 in the given order.
    PrototypeDatabase subset(std::span<const PrototypeId> ids) const;

    friend bool operator==(const PrototypeDatabase&, const PrototypeDatabase&) = default;

private:
    std::size_t dimension_ = 0;
    std::vector<double> features_;
    std::vector<ClassCode> classes_;
    std::vector<ClassCode> registry_;
    Metric metric_ = Metric::l2;
};

/**
 * Reads the `id,class,f0,...,f{J-1}` CSV schema line by line.
 *
 * The id column must hold unique non-negative integers but rows are relabeled by
 * file order, so the resulting ids are 0..M-1.
 */
PrototypeDatabase ingest_csv(std::istream& in, Metric metric = Metric::l2);
PrototypeDatabase ingest_csv(const std::filesystem::path& path, Metric metric = Metric::l2);

/// Writes the CSV schema with shortest round-trip decimal encoding of features.
void write_csv(const PrototypeDatabase& db, std::ostream& out);
void write_csv(const PrototypeDatabase& db, std::span<const PrototypeId> ids, std::ostream& out);

/// Binary `PDB1` format: little-endian, versioned, FNV-1a checksummed.
void save(const PrototypeDatabase& db, std::ostream& out);
void save(const PrototypeDatabase& db, const std::filesystem::path& path);
PrototypeDatabase load(std::istream& in);
PrototypeDatabase load(const std::filesystem::path& path);

/// Loads `.pdb` files as binary and anything else as CSV.
PrototypeDatabase read_database(const std::filesystem::path& path, Metric metric = Metric::l2);

}  // namespace protosel

#endif
