#ifndef PROTOSEL_SPARSIFIER_HPP
#define PROTOSEL_SPARSIFIER_HPP

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "protosel/prototype_store.hpp"
#include "protosel/ranking.hpp"

namespace protosel {

/// Per-bin retention fractions shared by every class. Counts come from round-half-away-from-zero.
struct SparsificationPlan {
    std::vector<double> fractions;

    std::size_t size() const { return fractions.size(); }

    /// Plan of `bins` entries all equal to `value`.
    static SparsificationPlan uniform(std::size_t bins, double value);

    friend bool operator==(const SparsificationPlan&, const SparsificationPlan&) = default;
};

/// round(fraction * size) clamped to [0, size].
std::size_t retained_count(double fraction, std::size_t size);

/**
 * The subsampled database DB(plan): selected ids of the parent plus per-(class, bin) bookkeeping.
 * Holds a reference to the parent database, which must outlive it.
 */
class SparsifiedDatabase {
public:
    const PrototypeDatabase& parent() const { return *parent_; }
    const std::vector<PrototypeId>& selected() const { return selected_; }
    std::size_t size() const { return selected_.size(); }
    bool empty() const { return selected_.empty(); }

    std::size_t num_bins() const { return num_bins_; }
    std::size_t num_classes() const { return original_.size() / num_bins_; }
    std::size_t retained(std::size_t class_index, std::size_t bin) const {
        return retained_[class_index * num_bins_ + bin];
    }
    std::size_t original(std::size_t class_index, std::size_t bin) const {
        return original_[class_index * num_bins_ + bin];
    }

    /// Selection without bin bookkeeping, e.g. the full database as a reference set.
    static SparsifiedDatabase whole(const PrototypeDatabase& db);

private:
    friend SparsifiedDatabase sparsify(const PrototypeDatabase& db, const RankHistogram& hist,
                                       const SparsificationPlan& plan);

    const PrototypeDatabase* parent_ = nullptr;
    std::vector<PrototypeId> selected_;
    std::size_t num_bins_ = 1;
    std::vector<std::size_t> retained_;
    std::vector<std::size_t> original_;
};

/**
 * Keeps, for every class and bin, the first round(fraction[bin] * size) members of the bin's
 * (descending score, ascending id) ordering. An all-zero plan yields an empty selection.
 *
 * Throws ContractViolation when the plan length differs from the histogram's bin count or a
 * fraction lies outside [0, 1].
 */
SparsifiedDatabase sparsify(const PrototypeDatabase& db, const RankHistogram& hist, const SparsificationPlan& plan);

struct ReductionReport {
    std::vector<std::size_t> retained_per_bin;
    std::vector<std::size_t> original_per_bin;
    /// retained / original per bin index; NaN for a bin with no members in any class.
    std::vector<double> retention_per_bin;
    std::size_t retained_total = 0;
    std::size_t original_total = 0;
    /// retained_total / original_total.
    double retention_total = 0.0;
};

ReductionReport reduction_report(const SparsifiedDatabase& s);

/// Structured key/value rendering of a reduction report.
void write_reduction_report(const ReductionReport& report, std::ostream& out);

}  // namespace protosel

#endif
