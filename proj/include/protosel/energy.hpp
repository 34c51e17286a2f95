#ifndef PROTOSEL_ENERGY_HPP
#define PROTOSEL_ENERGY_HPP

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "protosel/knn.hpp"
#include "protosel/prototype_store.hpp"
#include "protosel/ranking.hpp"
#include "protosel/sparsifier.hpp"

namespace protosel {

struct EnergyWeights {
    double alpha = 1.0;
    double beta = 0.0;

    /// Throws ContractViolation unless both weights are finite and non-negative.
    void validate() const;
};

/**
 * Coordinate perturbations used by the robustness term. Each query is shifted by `epsilon`
 * along every selected unit axis. With `subset_size` = 0 (or >= J) all J axes are used;
 * otherwise a fixed seeded subset of that size is used and the sum is scaled by J / subset_size.
 */
struct PerturbationConfig {
    double epsilon = 1.0;
    std::size_t subset_size = 0;
    std::uint64_t seed = 0;

    void validate(std::size_t dimension) const;
    std::vector<std::size_t> dimensions(std::size_t dimension) const;
    double scale(std::size_t dimension) const;
};

struct EnergyReport {
    double robustness = 0.0;
    double fidelity = 0.0;
    std::size_t sparsity = 0;
    double alpha = 0.0;
    double beta = 0.0;
    double total = 0.0;
    std::size_t db_size = 0;
    std::uint64_t classifier_calls = 0;
    bool empty_reference = false;

    friend bool operator==(const EnergyReport&, const EnergyReport&) = default;
};

/// Total reported for plans whose reference set is empty.
double energy_sentinel();

/// Majority class among `neighbors`, ties to the smallest class code.
ClassCode majority_class(const PrototypeDatabase& db, std::span<const Neighbor> neighbors);

/**
 * KNN majority-vote classifier backed by a sparsified database. Returns the winning class code as
 * a real number so squared differences between ordinal codes are meaningful.
 * Throws EmptySetError when the reference set is empty after exclusions.
 */
double classify(const SparsifiedDatabase& ref, std::span<const double> query, std::size_t k,
                std::span<const PrototypeId> exclude = {});

/// Sum over every original prototype of (class - f(x))^2, each classified with itself excluded.
double fidelity(const PrototypeDatabase& db, const SparsifiedDatabase& ref, std::size_t k, unsigned threads = 1);

/// Sum over prototypes and perturbation axes of |f(x) - f(x + eps e_j)|, leave-self-out throughout.
double robustness(const PrototypeDatabase& db, const SparsifiedDatabase& ref, std::size_t k,
                  const PerturbationConfig& perturbation, unsigned threads = 1);

/**
 * Evaluates robustness + alpha * fidelity + beta * |DB(plan)| for plans over one histogram.
 *
 * Per-prototype work is split across `threads` workers; every contribution is stored by index and
 * summed in index order, so the report does not depend on the worker count. An empty reference set
 * yields a report with the sentinel total and `empty_reference` set instead of an error.
 */
class EnergyEvaluator {
public:
    EnergyEvaluator(const PrototypeDatabase& db, const RankHistogram& hist, std::size_t k,
                    PerturbationConfig perturbation = {}, unsigned threads = 1);

    EnergyReport evaluate(const SparsificationPlan& plan, const EnergyWeights& weights) const;
    EnergyReport evaluate(const SparsifiedDatabase& ref, const EnergyWeights& weights) const;

    const PrototypeDatabase& database() const { return *db_; }
    const RankHistogram& histogram() const { return *hist_; }
    std::size_t k() const { return k_; }
    std::size_t num_bins() const { return hist_->num_bins(); }
    const PerturbationConfig& perturbation() const { return perturbation_; }
    unsigned threads() const { return threads_; }

private:
    const PrototypeDatabase* db_;
    const RankHistogram* hist_;
    std::size_t k_;
    PerturbationConfig perturbation_;
    std::vector<std::size_t> dims_;
    unsigned threads_;
};

EnergyReport evaluate(const PrototypeDatabase& db, const RankHistogram& hist, const SparsificationPlan& plan,
                      const EnergyWeights& weights, std::size_t k, const PerturbationConfig& perturbation = {},
                      unsigned threads = 1);

/// One `key = value` line per field.
void write_energy_report(const EnergyReport& report, std::ostream& out);

/// Single-line `key=value` rendering used in trace records.
std::string energy_fields(const EnergyReport& report);

}  // namespace protosel

#endif
