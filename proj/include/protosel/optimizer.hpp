#ifndef PROTOSEL_OPTIMIZER_HPP
#define PROTOSEL_OPTIMIZER_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "protosel/energy.hpp"
#include "protosel/evaluation.hpp"

namespace protosel {

struct OptimizerConfig {
    std::size_t max_evaluations = 200;
    /// Empty means all ones.
    std::vector<double> initial_plan;
    double initial_step = 0.25;
    double min_step = 1e-3;
    /**
     * Share of the budget spent on a coarse lattice over [0,1]^bins before local search. Local
     * searches then start from the lattice points in order of energy, and from seeded random plans
     * after that, until the budget is spent. Zero gives one local search from the initial plan.
     */
    double explore_fraction = 0.5;
    std::uint64_t seed = 0;

    /// Throws ConfigError on a budget below bins + 1 or out-of-range steps or plan entries.
    void validate(std::size_t bins) const;
    std::vector<double> start(std::size_t bins) const;
};

/// Ask/tell interface for derivative-free minimization over the unit box.
class BoxSolver {
public:
    virtual ~BoxSolver() = default;
    /// Next point to evaluate; nullopt once converged. Every point lies in [0,1]^n.
    virtual std::optional<std::vector<double>> ask() = 0;
    /// Reports the value of the most recently asked point. Returns whether it became the incumbent.
    virtual bool tell(const std::vector<double>& point, double value) = 0;
    virtual const std::vector<double>& incumbent() const = 0;
    virtual double incumbent_value() const = 0;
};

/**
 * Compass search. Directions are tried coordinate by coordinate, minus before plus, and the first
 * strict improvement is taken. A full round without improvement halves the step; an improvement
 * grows it by 1.5 up to the initial step. Sentinel values are never accepted.
 */
class PatternSearch final : public BoxSolver {
public:
    PatternSearch(std::vector<double> start, double initial_step, double min_step);

    std::optional<std::vector<double>> ask() override;
    bool tell(const std::vector<double>& point, double value) override;
    const std::vector<double>& incumbent() const override { return x_; }
    double incumbent_value() const override { return fx_; }
    double step() const { return step_; }

private:
    std::vector<double> candidate(std::size_t direction) const;

    std::vector<double> x_;
    double fx_;
    double initial_step_;
    double min_step_;
    double step_;
    std::size_t direction_ = 0;
    std::size_t failures_ = 0;
    bool started_ = false;
};

struct TraceRecord {
    std::size_t cell = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::size_t evaluation = 0;
    std::vector<double> plan;
    EnergyReport report;
    /// Improved on the best total seen so far in this cell.
    bool accepted = false;

    friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

std::string format_trace_record(const TraceRecord& record);
/// Throws FormatError on malformed text.
TraceRecord parse_trace_record(const std::string& line);
/// Skips blank lines and lines starting with '#'.
std::vector<TraceRecord> read_trace(std::istream& in);

/// Serves recorded reports back in order. The first record that does not match is discarded
/// together with everything after it.
class TraceReplay {
public:
    explicit TraceReplay(std::vector<TraceRecord> records) : records_(std::move(records)) {}

    std::optional<EnergyReport> take(std::size_t cell, double alpha, double beta, std::size_t evaluation,
                                     const std::vector<double>& plan);
    std::size_t replayed() const { return position_; }
    std::size_t remaining() const { return records_.size() - position_; }

private:
    std::vector<TraceRecord> records_;
    std::size_t position_ = 0;
};

struct OptimizationTrace {
    std::vector<TraceRecord> records;
    std::vector<double> best_plan;
    EnergyReport best;
    bool budget_exhausted = false;
};

struct SearchHooks {
    std::size_t cell = 0;
    TraceReplay* replay = nullptr;
    std::function<void(const TraceRecord&)> on_record;
};

using EnergyFunction = std::function<EnergyReport(const SparsificationPlan&)>;
/// Plans with equal signatures are known to have equal energy.
using PlanSignature = std::function<std::vector<std::size_t>(const SparsificationPlan&)>;

/// Retained count per (class, bin), class-major; equal counts select the same prototypes.
std::vector<std::size_t> retained_counts(const RankHistogram& hist, const SparsificationPlan& plan);

/**
 * Minimizes `energy` over plans in [0,1]^bins, starting with cfg.start(). Plans already evaluated
 * (or sharing a signature with one, when `signature` is given) are answered from a cache and do
 * not count against the budget.
 */
OptimizationTrace minimize_inner(const EnergyFunction& energy, std::size_t bins, const EnergyWeights& weights,
                                 const OptimizerConfig& cfg, const SearchHooks& hooks = {},
                                 const PlanSignature& signature = {});

/// Weight-free energy terms memoized by retained counts, shared between weight settings.
class EnergyMemo {
public:
    explicit EnergyMemo(const EnergyEvaluator& evaluator) : evaluator_(&evaluator) {}

    EnergyReport evaluate(const SparsificationPlan& plan, const EnergyWeights& weights);
    std::size_t computed() const { return computed_; }

private:
    const EnergyEvaluator* evaluator_;
    std::map<std::vector<std::size_t>, EnergyReport> terms_;
    std::size_t computed_ = 0;
};

OptimizationTrace minimize_inner(const EnergyEvaluator& evaluator, const EnergyWeights& weights,
                                 const OptimizerConfig& cfg, const SearchHooks& hooks = {});

struct OuterConfig {
    double alpha_lo = 0.1;
    double alpha_hi = 10.0;
    double beta_lo = 0.001;
    double beta_hi = 1.0;
    std::size_t grid_points = 3;
    /// Number of inner runs.
    std::size_t budget = 13;
    ValidationMetric metric = ValidationMetric::automatic;

    /// Ranges must be positive and finite with lo <= hi.
    void validate() const;
};

struct OuterCell {
    std::size_t cell = 0;
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<double> plan;
    EnergyReport energy;
    /// Absent when the plan leaves an empty database.
    std::optional<MetricReport> validation;
    double score = 0.0;
};

struct OuterResult {
    std::vector<OuterCell> cells;
    std::size_t best = 0;
    ValidationMetric metric = ValidationMetric::automatic;
    OptimizationTrace trace;

    const OuterCell& best_cell() const { return cells[best]; }
};

/// Index of the winning cell: highest score, then smaller database, then earlier cell.
/// Cells without a validation report (empty database) lose to any cell with one.
std::size_t select_best(const std::vector<OuterCell>& cells);

/// Log-spaced (alpha, beta) points for a grid of `points` per axis, alpha-major.
std::vector<std::pair<double, double>> outer_grid(const OuterConfig& outer);

/**
 * Runs an inner minimization per (alpha, beta) cell on the training evaluator and scores the
 * resulting plan on `validation`. Cells cover a log grid, then the axial half-step neighbours of
 * the best grid cell, until the budget is spent. The highest score wins; ties go to the smaller
 * database and then the earlier cell. Empty databases never win against non-empty ones.
 * Throws ConfigError when the metric cannot be computed on `validation`.
 */
OuterResult optimize_outer(const EnergyEvaluator& train, const PrototypeDatabase& validation,
                           const OuterConfig& outer, const OptimizerConfig& inner, TraceReplay* replay = nullptr,
                           const std::function<void(const TraceRecord&)>& on_record = {});

}  // namespace protosel

#endif
