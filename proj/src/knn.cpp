#include "protosel/knn.hpp"

#include <algorithm>
#include <cmath>

#include "protosel/error.hpp"

namespace protosel {

namespace {

bool is_excluded(std::span<const PrototypeId> exclude, PrototypeId id) {
    return std::find(exclude.begin(), exclude.end(), id) != exclude.end();
}

// Max-heap of the best k candidates so far; front() is the current worst.
void offer(std::vector<Neighbor>& heap, std::size_t k, const Neighbor& candidate) {
    if (heap.size() < k) {
        heap.push_back(candidate);
        std::push_heap(heap.begin(), heap.end());
    } else if (candidate < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = candidate;
        std::push_heap(heap.begin(), heap.end());
    }
}

}  // namespace

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        sum += d * d;
    }
    return sum;
}

double distance(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "distance: dimension mismatch");
    return std::sqrt(squared_distance(a, b));
}

double distance(const Prototype& a, const Prototype& b) { return distance(a.features, b.features); }

NeighborResult to_result(std::span<const Neighbor> neighbors) {
    NeighborResult result;
    result.ids.reserve(neighbors.size());
    result.distances.reserve(neighbors.size());
    for (const auto& n : neighbors) {
        result.ids.push_back(n.id);
        result.distances.push_back(std::sqrt(n.squared_distance));
    }
    return result;
}

std::vector<PrototypeId> all_ids(const PrototypeDatabase& db) {
    std::vector<PrototypeId> ids(db.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = static_cast<PrototypeId>(i);
    }
    return ids;
}

KnnIndex::KnnIndex(const PrototypeDatabase& db, std::size_t leaf_size) : KnnIndex(db, all_ids(db), leaf_size) {}

KnnIndex::KnnIndex(const PrototypeDatabase& db, std::span<const PrototypeId> subset, std::size_t leaf_size)
    : db_(&db), dimension_(db.dimension()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    std::vector<PrototypeId> order(subset.begin(), subset.end());
    for (const PrototypeId id : order) {
        require(id < db.size(), "KnnIndex: subset id out of range");
    }
    if (!order.empty()) {
        nodes_.reserve(2 * (order.size() / leaf_size_ + 1));
        build(0, order.size(), order);
    }
    ids_ = std::move(order);
    points_.resize(ids_.size() * dimension_);
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        const auto row = db.features(ids_[i]);
        std::copy(row.begin(), row.end(), points_.begin() + static_cast<std::ptrdiff_t>(i * dimension_));
    }
}

std::size_t KnnIndex::build(std::size_t begin, std::size_t end, std::vector<PrototypeId>& order) {
    const std::size_t index = nodes_.size();
    nodes_.push_back(Node{begin, end, 0, 0, 0});
    lower_.resize(lower_.size() + dimension_);
    upper_.resize(upper_.size() + dimension_);
    double* lo = lower_.data() + index * dimension_;
    double* hi = upper_.data() + index * dimension_;

    const auto first = db_->features(order[begin]);
    std::copy(first.begin(), first.end(), lo);
    std::copy(first.begin(), first.end(), hi);
    PrototypeId min_id = order[begin];
    for (std::size_t i = begin + 1; i < end; ++i) {
        const auto row = db_->features(order[i]);
        for (std::size_t j = 0; j < dimension_; ++j) {
            lo[j] = std::min(lo[j], row[j]);
            hi[j] = std::max(hi[j], row[j]);
        }
        min_id = std::min(min_id, order[i]);
    }
    nodes_[index].min_id = min_id;

    std::size_t split_dim = 0;
    double spread = 0.0;
    for (std::size_t j = 0; j < dimension_; ++j) {
        if (hi[j] - lo[j] > spread) {
            spread = hi[j] - lo[j];
            split_dim = j;
        }
    }

    if (spread == 0.0 || end - begin <= leaf_size_) {
        std::sort(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
        nodes_[index].leaf = true;
        nodes_[index].uniform = spread == 0.0;
        return index;
    }

    auto coord = [&](PrototypeId id) { return db_->features(id)[split_dim]; };
    const auto b = order.begin() + static_cast<std::ptrdiff_t>(begin);
    const auto e = order.begin() + static_cast<std::ptrdiff_t>(end);
    const auto mid = b + static_cast<std::ptrdiff_t>((end - begin) / 2);
    std::nth_element(b, mid, e, [&](PrototypeId x, PrototypeId y) { return coord(x) < coord(y); });
    const double pivot = coord(*mid);
    auto cut = std::partition(b, e, [&](PrototypeId id) { return coord(id) < pivot; });
    if (cut == b) {
        cut = std::partition(b, e, [&](PrototypeId id) { return coord(id) <= pivot; });
    }
    const std::size_t split = begin + static_cast<std::size_t>(cut - b);

    const std::size_t left = build(begin, split, order);
    const std::size_t right = build(split, end, order);
    nodes_[index].left = left;
    nodes_[index].right = right;
    return index;
}

double KnnIndex::box_bound(std::size_t node, std::span<const double> point) const {
    const double* lo = lower_.data() + node * dimension_;
    const double* hi = upper_.data() + node * dimension_;
    double sum = 0.0;
    for (std::size_t j = 0; j < dimension_; ++j) {
        double d = 0.0;
        if (point[j] < lo[j]) {
            d = point[j] - lo[j];
        } else if (point[j] > hi[j]) {
            d = point[j] - hi[j];
        }
        sum += d * d;
    }
    return sum;
}

void KnnIndex::visit(std::size_t node_index, std::span<const double> point, std::size_t k,
                     std::span<const PrototypeId> exclude, std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[node_index];
    if (node.leaf) {
        if (node.uniform) {
            const double d2 = squared_distance(point, {points_.data() + node.begin * dimension_, dimension_});
            for (std::size_t i = node.begin; i < node.end; ++i) {
                if (is_excluded(exclude, ids_[i])) {
                    continue;
                }
                const Neighbor candidate{d2, ids_[i]};
                if (heap.size() == k && !(candidate < heap.front())) {
                    break;  // ids ascend, so nothing later in this leaf can win
                }
                offer(heap, k, candidate);
            }
            return;
        }
        for (std::size_t i = node.begin; i < node.end; ++i) {
            const double* row = points_.data() + i * dimension_;
            const bool full = heap.size() == k;
            const double worst = full ? heap.front().squared_distance : 0.0;
            double sum = 0.0;
            bool rejected = false;
            for (std::size_t j = 0; j < dimension_; ++j) {
                const double d = point[j] - row[j];
                sum += d * d;
                if (full && sum > worst) {
                    rejected = true;
                    break;
                }
            }
            if (rejected || is_excluded(exclude, ids_[i])) {
                continue;
            }
            offer(heap, k, Neighbor{sum, ids_[i]});
        }
        return;
    }

    const double left_bound = box_bound(node.left, point);
    const double right_bound = box_bound(node.right, point);
    const bool left_first = left_bound <= right_bound;
    const std::size_t order[2] = {left_first ? node.left : node.right, left_first ? node.right : node.left};
    const double bounds[2] = {left_first ? left_bound : right_bound, left_first ? right_bound : left_bound};
    for (int c = 0; c < 2; ++c) {
        if (heap.size() == k) {
            const Neighbor& worst = heap.front();
            if (bounds[c] > worst.squared_distance ||
                (bounds[c] == worst.squared_distance && nodes_[order[c]].min_id > worst.id)) {
                continue;
            }
        }
        visit(order[c], point, k, exclude, heap);
    }
}

void KnnIndex::search(std::span<const double> point, std::size_t k, std::span<const PrototypeId> exclude,
                      std::vector<Neighbor>& out) const {
    require(k >= 1, "k must be positive");
    require(point.size() == dimension_, "query dimension mismatch");
    out.clear();
    if (!nodes_.empty()) {
        visit(0, point, k, exclude, out);
    }
    if (out.empty()) {
        throw EmptySetError("nearest-neighbor search over an empty prototype set");
    }
    std::sort_heap(out.begin(), out.end());
}

NeighborResult KnnIndex::query(std::span<const double> point, std::size_t k,
                               std::span<const PrototypeId> exclude) const {
    std::vector<Neighbor> out;
    search(point, k, exclude, out);
    return to_result(out);
}

NeighborResult knn_query(const PrototypeDatabase& db, std::span<const PrototypeId> subset,
                         std::span<const double> point, std::size_t k, std::span<const PrototypeId> exclude) {
    require(k >= 1, "k must be positive");
    require(point.size() == db.dimension(), "query dimension mismatch");
    std::vector<Neighbor> all;
    all.reserve(subset.size());
    for (const PrototypeId id : subset) {
        if (!is_excluded(exclude, id)) {
            all.push_back({squared_distance(point, db.features(id)), id});
        }
    }
    if (all.empty()) {
        throw EmptySetError("nearest-neighbor search over an empty prototype set");
    }
    const std::size_t take = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end());
    all.resize(take);
    return to_result(all);
}

NeighborCache::NeighborCache(const KnnIndex& index, std::size_t depth, std::size_t max_entries)
    : index_(&index), depth_(depth), max_entries_(max_entries) {}

const std::vector<Neighbor>& NeighborCache::lookup(std::span<const double> point) {
    std::string key(reinterpret_cast<const char*>(point.data()), point.size_bytes());
    if (auto it = entries_.find(key); it != entries_.end()) {
        return it->second;
    }
    index_->search(point, depth_, {}, scratch_);
    ++searches_;
    if (entries_.size() >= max_entries_) {
        entries_.clear();
    }
    return entries_.emplace(std::move(key), scratch_).first->second;
}

}  // namespace protosel
