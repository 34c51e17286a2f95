#include "protosel/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "protosel/error.hpp"
#include "protosel/format.hpp"
#include "protosel/parallel.hpp"

namespace protosel {

namespace {

struct TermSums {
    double fidelity = 0.0;
    double robustness = 0.0;
    std::uint64_t calls = 0;
};

// Classifies queries issued on behalf of prototype `self`, which is never its own neighbor.
class LeaveSelfOutClassifier {
public:
    LeaveSelfOutClassifier(const PrototypeDatabase& db, const KnnIndex& index, std::size_t k)
        : db_(db), cache_(index, k + 1), k_(k) {
        kept_.reserve(k + 1);
    }

    double operator()(std::span<const double> query, PrototypeId self) {
        kept_.clear();
        for (const Neighbor& n : cache_.lookup(query)) {
            if (n.id == self) {
                continue;
            }
            if (kept_.size() == k_) {
                break;
            }
            kept_.push_back(n);
        }
        if (kept_.empty()) {
            throw EmptySetError("no reference prototypes left after excluding the query's own id");
        }
        return static_cast<double>(majority_class(db_, kept_));
    }

private:
    const PrototypeDatabase& db_;
    NeighborCache cache_;
    std::size_t k_;
    std::vector<Neighbor> kept_;
};

TermSums compute_terms(const PrototypeDatabase& db, const SparsifiedDatabase& ref, std::size_t k,
                       std::span<const std::size_t> dims, double epsilon, bool with_robustness, unsigned threads) {
    require(&ref.parent() == &db, "reference set must be drawn from the evaluated database");
    require(k >= 1, "k must be positive");
    if (ref.empty()) {
        throw EmptySetError("classification against an empty reference set");
    }
    const KnnIndex index(db, ref.selected());
    const std::size_t m = db.size();
    std::vector<double> fidelity(m, 0.0);
    std::vector<double> robustness(m, 0.0);

    parallel_for(m, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        LeaveSelfOutClassifier classify_as(db, index, k);
        std::vector<double> query(db.dimension());
        for (std::size_t i = begin; i < end; ++i) {
            const auto id = static_cast<PrototypeId>(i);
            const auto x = db.features(id);
            const double f = classify_as(x, id);
            const double miss = static_cast<double>(db.class_of(id)) - f;
            fidelity[i] = miss * miss;
            if (!with_robustness) {
                continue;
            }
            std::copy(x.begin(), x.end(), query.begin());
            double changes = 0.0;
            for (const std::size_t j : dims) {
                query[j] = x[j] + epsilon;
                changes += std::abs(f - classify_as(query, id));
                query[j] = x[j];
            }
            robustness[i] = changes;
        }
    });

    TermSums sums;
    for (std::size_t i = 0; i < m; ++i) {
        sums.fidelity += fidelity[i];
        sums.robustness += robustness[i];
    }
    sums.calls = static_cast<std::uint64_t>(m) * (1 + (with_robustness ? dims.size() : 0));
    return sums;
}

EnergyReport sentinel_report(const SparsifiedDatabase& ref, const EnergyWeights& weights) {
    EnergyReport r;
    r.sparsity = ref.size();
    r.db_size = ref.size();
    r.alpha = weights.alpha;
    r.beta = weights.beta;
    r.total = energy_sentinel();
    r.empty_reference = true;
    return r;
}

}  // namespace

void EnergyWeights::validate() const {
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be finite and non-negative");
    require(std::isfinite(beta) && beta >= 0.0, "beta must be finite and non-negative");
}

void PerturbationConfig::validate(std::size_t dimension) const {
    require(std::isfinite(epsilon) && epsilon > 0.0, "perturbation epsilon must be positive");
    require(subset_size <= dimension, "perturbation subset larger than the feature dimension");
}

std::vector<std::size_t> PerturbationConfig::dimensions(std::size_t dimension) const {
    std::vector<std::size_t> dims(dimension);
    std::iota(dims.begin(), dims.end(), std::size_t{0});
    if (subset_size == 0 || subset_size >= dimension) {
        return dims;
    }
    std::mt19937_64 rng(seed);
    std::shuffle(dims.begin(), dims.end(), rng);
    dims.resize(subset_size);
    std::sort(dims.begin(), dims.end());
    return dims;
}

double PerturbationConfig::scale(std::size_t dimension) const {
    if (subset_size == 0 || subset_size >= dimension) {
        return 1.0;
    }
    return static_cast<double>(dimension) / static_cast<double>(subset_size);
}

double energy_sentinel() { return std::numeric_limits<double>::max(); }

ClassCode majority_class(const PrototypeDatabase& db, std::span<const Neighbor> neighbors) {
    require(!neighbors.empty(), "majority vote over no neighbors");
    ClassCode votes[64];
    std::vector<ClassCode> spill;
    ClassCode* classes = votes;
    if (neighbors.size() > 64) {
        spill.resize(neighbors.size());
        classes = spill.data();
    }
    for (std::size_t n = 0; n < neighbors.size(); ++n) {
        classes[n] = db.class_of(neighbors[n].id);
    }
    std::sort(classes, classes + neighbors.size());
    ClassCode best = classes[0];
    std::size_t best_count = 0;
    for (std::size_t n = 0; n < neighbors.size();) {
        std::size_t run = n;
        while (run < neighbors.size() && classes[run] == classes[n]) {
            ++run;
        }
        // Strictly greater keeps the smallest code on ties; runs are visited in ascending order.
        if (run - n > best_count) {
            best_count = run - n;
            best = classes[n];
        }
        n = run;
    }
    return best;
}

double classify(const SparsifiedDatabase& ref, std::span<const double> query, std::size_t k,
                std::span<const PrototypeId> exclude) {
    if (ref.empty()) {
        throw EmptySetError("classification against an empty reference set");
    }
    const KnnIndex index(ref.parent(), ref.selected());
    std::vector<Neighbor> neighbors;
    index.search(query, k, exclude, neighbors);
    return static_cast<double>(majority_class(ref.parent(), neighbors));
}

double fidelity(const PrototypeDatabase& db, const SparsifiedDatabase& ref, std::size_t k, unsigned threads) {
    return compute_terms(db, ref, k, {}, 1.0, false, threads).fidelity;
}

double robustness(const PrototypeDatabase& db, const SparsifiedDatabase& ref, std::size_t k,
                  const PerturbationConfig& perturbation, unsigned threads) {
    perturbation.validate(db.dimension());
    const auto dims = perturbation.dimensions(db.dimension());
    const auto sums = compute_terms(db, ref, k, dims, perturbation.epsilon, true, threads);
    return sums.robustness * perturbation.scale(db.dimension());
}

EnergyEvaluator::EnergyEvaluator(const PrototypeDatabase& db, const RankHistogram& hist, std::size_t k,
                                 PerturbationConfig perturbation, unsigned threads)
    : db_(&db), hist_(&hist), k_(k), perturbation_(perturbation), threads_(std::max(1u, threads)) {
    require(k >= 1, "k must be positive");
    require(hist.num_prototypes() == db.size(), "histogram was built for a different database");
    perturbation_.validate(db.dimension());
    dims_ = perturbation_.dimensions(db.dimension());
}

EnergyReport EnergyEvaluator::evaluate(const SparsificationPlan& plan, const EnergyWeights& weights) const {
    weights.validate();
    return evaluate(sparsify(*db_, *hist_, plan), weights);
}

EnergyReport EnergyEvaluator::evaluate(const SparsifiedDatabase& ref, const EnergyWeights& weights) const {
    weights.validate();
    if (ref.empty()) {
        return sentinel_report(ref, weights);
    }
    TermSums sums;
    try {
        sums = compute_terms(*db_, ref, k_, dims_, perturbation_.epsilon, true, threads_);
    } catch (const EmptySetError&) {
        // A lone retained prototype cannot classify itself once excluded.
        return sentinel_report(ref, weights);
    }
    EnergyReport r;
    r.robustness = sums.robustness * perturbation_.scale(db_->dimension());
    r.fidelity = sums.fidelity;
    r.sparsity = ref.size();
    r.alpha = weights.alpha;
    r.beta = weights.beta;
    r.total = r.robustness + weights.alpha * r.fidelity + weights.beta * static_cast<double>(r.sparsity);
    r.db_size = ref.size();
    r.classifier_calls = sums.calls;
    return r;
}

EnergyReport evaluate(const PrototypeDatabase& db, const RankHistogram& hist, const SparsificationPlan& plan,
                      const EnergyWeights& weights, std::size_t k, const PerturbationConfig& perturbation,
                      unsigned threads) {
    return EnergyEvaluator(db, hist, k, perturbation, threads).evaluate(plan, weights);
}

void write_energy_report(const EnergyReport& r, std::ostream& out) {
    out << "robustness = " << format_double(r.robustness) << '\n';
    out << "fidelity = " << format_double(r.fidelity) << '\n';
    out << "sparsity = " << r.sparsity << '\n';
    out << "alpha = " << format_double(r.alpha) << '\n';
    out << "beta = " << format_double(r.beta) << '\n';
    out << "total = " << format_double(r.total) << '\n';
    out << "db_size = " << r.db_size << '\n';
    out << "classifier_calls = " << r.classifier_calls << '\n';
    out << "empty_reference = " << (r.empty_reference ? 1 : 0) << '\n';
}

std::string energy_fields(const EnergyReport& r) {
    return "robustness=" + format_double(r.robustness) + " fidelity=" + format_double(r.fidelity) +
           " sparsity=" + std::to_string(r.sparsity) + " total=" + format_double(r.total) +
           " db_size=" + std::to_string(r.db_size) + " calls=" + std::to_string(r.classifier_calls) +
           " empty=" + (r.empty_reference ? "1" : "0");
}

}  // namespace protosel
