#ifndef PROTOSEL_KNN_HPP
#define PROTOSEL_KNN_HPP

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "protosel/prototype_store.hpp"

namespace protosel {

/// Euclidean distance. Throws ContractViolation on a dimension mismatch.
double distance(std::span<const double> a, std::span<const double> b);
double distance(const Prototype& a, const Prototype& b);

/// Squared Euclidean distance summed in coordinate order. All neighbor ordering uses this value.
double squared_distance(std::span<const double> a, std::span<const double> b);

struct Neighbor {
    double squared_distance;
    PrototypeId id;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        if (a.squared_distance != b.squared_distance) {
            return a.squared_distance < b.squared_distance;
        }
        return a.id < b.id;
    }
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct NeighborResult {
    std::vector<PrototypeId> ids;
    std::vector<double> distances;

    std::size_t size() const { return ids.size(); }
    friend bool operator==(const NeighborResult&, const NeighborResult&) = default;
};

NeighborResult to_result(std::span<const Neighbor> neighbors);

/**
 * Exact K-nearest-neighbor search over a subset of a database.
 *
 * Results are ordered by (squared distance, id), identical to a linear scan. A kd-tree with
 * per-node bounding boxes prunes the search; a node is skipped only when its box is strictly
 * farther than the current K-th neighbor, or equally far with a smallest id that cannot win the
 * tie. Leaves of identical points are answered by id order without scanning.
 *
 * The index references `db`, which must outlive it.
 */
class KnnIndex {
public:
    KnnIndex(const PrototypeDatabase& db, std::span<const PrototypeId> subset, std::size_t leaf_size = 16);

    /// Index over every prototype of `db`.
    explicit KnnIndex(const PrototypeDatabase& db, std::size_t leaf_size = 16);

    std::size_t size() const { return ids_.size(); }
    std::size_t dimension() const { return dimension_; }

    /// Throws EmptySetError when nothing remains searchable after exclusions.
    NeighborResult query(std::span<const double> point, std::size_t k,
                         std::span<const PrototypeId> exclude = {}) const;

    /// Same as query() but fills `out` with squared distances, reusing its storage.
    void search(std::span<const double> point, std::size_t k, std::span<const PrototypeId> exclude,
                std::vector<Neighbor>& out) const;

private:
    struct Node {
        std::size_t begin;
        std::size_t end;
        std::size_t left = 0;
        std::size_t right = 0;
        PrototypeId min_id;
        bool leaf = false;
        bool uniform = false;
    };

    std::size_t build(std::size_t begin, std::size_t end, std::vector<PrototypeId>& order);
    void visit(std::size_t node, std::span<const double> point, std::size_t k, std::span<const PrototypeId> exclude,
               std::vector<Neighbor>& heap) const;
    double box_bound(std::size_t node, std::span<const double> point) const;

    const PrototypeDatabase* db_;
    std::size_t dimension_;
    std::size_t leaf_size_;
    std::vector<PrototypeId> ids_;
    std::vector<double> points_;
    std::vector<Node> nodes_;
    std::vector<double> lower_;
    std::vector<double> upper_;
};

/// Linear-scan reference search over `subset`, same ordering contract as KnnIndex.
NeighborResult knn_query(const PrototypeDatabase& db, std::span<const PrototypeId> subset,
                         std::span<const double> point, std::size_t k, std::span<const PrototypeId> exclude = {});

/**
 * Memoizes neighbor lists by exact query coordinates.
 *
 * Each lookup returns the first `depth` neighbors with no exclusions; callers drop excluded
 * ids afterwards, which is exact as long as depth >= k + number of exclusions. Not thread-safe;
 * use one per worker.
 */
class NeighborCache {
public:
    NeighborCache(const KnnIndex& index, std::size_t depth, std::size_t max_entries = 1u << 20);

    const std::vector<Neighbor>& lookup(std::span<const double> point);

    std::size_t searches() const { return searches_; }

private:
    const KnnIndex* index_;
    std::size_t depth_;
    std::size_t max_entries_;
    std::size_t searches_ = 0;
    std::unordered_map<std::string, std::vector<Neighbor>> entries_;
    std::vector<Neighbor> scratch_;
};

/// All ids 0..db.size()-1.
std::vector<PrototypeId> all_ids(const PrototypeDatabase& db);

}  // namespace protosel

#endif
