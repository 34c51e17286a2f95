#ifndef PROTOSEL_RANKING_HPP
#define PROTOSEL_RANKING_HPP

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "protosel/prototype_store.hpp"

namespace protosel {

struct RankScore {
    PrototypeId id;
    double score;

    friend bool operator==(const RankScore&, const RankScore&) = default;
};

/**
 * Class-boundary proximity score of every prototype, in id order.
 *
 * For prototype x with K nearest neighbors (itself excluded), the score is
 * (#neighbors of another class) / max(#neighbors of the same class, 1), so it lies in [0, K]:
 * 0 deep inside a class, K when surrounded by other classes. When fewer than K other
 * prototypes exist, all of them are used.
 *
 * Throws InsufficientDataError when the database has fewer than two prototypes.
 */
std::vector<RankScore> rank_all(const PrototypeDatabase& db, std::size_t k, unsigned threads = 1);

/// Nearest-rank percentile: the ceil(p*n/100)-th smallest value, minimum for p = 0.
double percentile(std::span<const double> values, double p);

/**
 * Per-class histogram over rank scores with N bins whose edges sit at the 0, 100/N, ..., 100
 * nearest-rank percentiles of that class's scores. Bin b holds scores in (edge[b], edge[b+1]],
 * bin 0 also holds edge[0]; a score equal to an edge goes to the lower bin.
 *
 * Membership lists are sorted by descending score, then ascending id. Edges never change
 * after construction.
 */
class RankHistogram {
public:
    std::size_t num_bins() const { return num_bins_; }
    std::size_t num_classes() const { return classes_.size(); }
    std::size_t num_prototypes() const { return scores_.size(); }

    /// Class codes in registry order; class indices below refer to positions here.
    const std::vector<ClassCode>& classes() const { return classes_; }

    /// N+1 non-decreasing edges for the class at `class_index`.
    const std::vector<double>& edges(std::size_t class_index) const { return edges_[class_index]; }

    const std::vector<PrototypeId>& members(std::size_t class_index, std::size_t bin) const {
        return members_[class_index * num_bins_ + bin];
    }

    double score(PrototypeId id) const { return scores_[id]; }
    std::size_t bin_of(PrototypeId id) const { return bin_of_[id]; }

    /// Members per bin index summed over classes.
    std::vector<std::size_t> bin_totals() const;

private:
    friend RankHistogram build_histogram(const PrototypeDatabase& db, std::span<const RankScore> scores,
                                         std::size_t num_bins);

    std::size_t num_bins_ = 0;
    std::vector<ClassCode> classes_;
    std::vector<std::vector<double>> edges_;
    std::vector<std::vector<PrototypeId>> members_;
    std::vector<double> scores_;
    std::vector<std::size_t> bin_of_;
};

/// Throws ContractViolation if num_bins < 1 or scores do not cover every prototype once.
RankHistogram build_histogram(const PrototypeDatabase& db, std::span<const RankScore> scores, std::size_t num_bins);

/// `id,class,score,bin` rows in id order.
void write_rank_csv(const PrototypeDatabase& db, const RankHistogram& hist, std::ostream& out);

/// Human-readable per-class edge and occupancy table.
void write_histogram_summary(const RankHistogram& hist, std::ostream& out);

}  // namespace protosel

#endif
