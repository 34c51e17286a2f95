#include "protosel/optimizer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <random>
#include <sstream>

#include "protosel/error.hpp"
#include "protosel/format.hpp"

namespace protosel {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t parse_unsigned(const std::string& text, const std::string& what) {
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw FormatError("invalid integer '" + text + "' for " + what);
    }
    return value;
}

EnergyReport reweighted(EnergyReport r, const EnergyWeights& w) {
    r.alpha = w.alpha;
    r.beta = w.beta;
    r.total = r.empty_reference ? energy_sentinel()
                                : r.robustness + w.alpha * r.fidelity + w.beta * static_cast<double>(r.sparsity);
    return r;
}

}  // namespace

void OptimizerConfig::validate(std::size_t bins) const {
    if (bins == 0) {
        throw ConfigError("optimizer needs at least one bin");
    }
    if (max_evaluations < bins + 1) {
        throw ConfigError("max_evaluations must be at least bins + 1 = " + std::to_string(bins + 1));
    }
    if (!(initial_step > 0.0 && initial_step <= 1.0)) {
        throw ConfigError("initial_step must lie in (0, 1]");
    }
    if (!(explore_fraction >= 0.0 && explore_fraction <= 1.0)) {
        throw ConfigError("explore_fraction must lie in [0, 1]");
    }
    if (!(min_step > 0.0 && min_step <= initial_step)) {
        throw ConfigError("min_step must lie in (0, initial_step]");
    }
    if (!initial_plan.empty()) {
        if (initial_plan.size() != bins) {
            throw ConfigError("initial plan has " + std::to_string(initial_plan.size()) + " fractions for " +
                              std::to_string(bins) + " bins");
        }
        for (const double f : initial_plan) {
            if (!(f >= 0.0 && f <= 1.0)) {
                throw ConfigError("initial plan fractions must lie in [0, 1]");
            }
        }
    }
}

std::vector<double> OptimizerConfig::start(std::size_t bins) const {
    return initial_plan.empty() ? std::vector<double>(bins, 1.0) : initial_plan;
}

PatternSearch::PatternSearch(std::vector<double> start, double initial_step, double min_step)
    : x_(std::move(start)), fx_(kInfinity), initial_step_(initial_step), min_step_(min_step), step_(initial_step) {
    require(!x_.empty(), "pattern search needs at least one coordinate");
    for (double& v : x_) {
        v = std::clamp(v, 0.0, 1.0);
    }
}

std::vector<double> PatternSearch::candidate(std::size_t direction) const {
    std::vector<double> x = x_;
    const std::size_t i = direction / 2;
    const double delta = direction % 2 == 0 ? -step_ : step_;
    x[i] = std::clamp(x[i] + delta, 0.0, 1.0);
    return x;
}

std::optional<std::vector<double>> PatternSearch::ask() {
    if (!started_) {
        return x_;
    }
    const std::size_t directions = 2 * x_.size();
    while (step_ >= min_step_) {
        while (failures_ < directions) {
            auto x = candidate(direction_);
            if (x != x_) {
                return x;
            }
            ++failures_;
            direction_ = (direction_ + 1) % directions;
        }
        step_ /= 2.0;
        failures_ = 0;
        direction_ = 0;
    }
    return std::nullopt;
}

bool PatternSearch::tell(const std::vector<double>& point, double value) {
    const bool admissible = value < energy_sentinel();
    if (!started_) {
        started_ = true;
        x_ = point;
        if (admissible) {
            fx_ = value;
        }
        return admissible;
    }
    if (admissible && value < fx_) {
        x_ = point;
        fx_ = value;
        step_ = std::min(step_ * 1.5, initial_step_);
        failures_ = 0;
        return true;
    }
    ++failures_;
    direction_ = (direction_ + 1) % (2 * x_.size());
    return false;
}

std::string format_trace_record(const TraceRecord& r) {
    return "cell=" + std::to_string(r.cell) + " alpha=" + format_double(r.alpha) + " beta=" + format_double(r.beta) +
           " eval=" + std::to_string(r.evaluation) + " plan=" + format_list(r.plan) + ' ' + energy_fields(r.report) +
           " accepted=" + (r.accepted ? "1" : "0");
}

TraceRecord parse_trace_record(const std::string& line) {
    std::istringstream in(line);
    std::map<std::string, std::string> fields;
    std::string token;
    while (in >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw FormatError("trace field without '=': '" + token + "'");
        }
        fields[token.substr(0, eq)] = token.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
        const auto it = fields.find(key);
        if (it == fields.end()) {
            throw FormatError(std::string("trace record lacks '") + key + "'");
        }
        return it->second;
    };
    auto flag = [&](const char* key) {
        const auto& v = get(key);
        if (v != "0" && v != "1") {
            throw FormatError(std::string("trace flag '") + key + "' must be 0 or 1");
        }
        return v == "1";
    };
    TraceRecord r;
    r.cell = parse_unsigned(get("cell"), "cell");
    r.alpha = parse_double_strict(get("alpha"), "alpha");
    r.beta = parse_double_strict(get("beta"), "beta");
    r.evaluation = parse_unsigned(get("eval"), "eval");
    r.plan = parse_list(get("plan"), "plan");
    r.report.robustness = parse_double_strict(get("robustness"), "robustness");
    r.report.fidelity = parse_double_strict(get("fidelity"), "fidelity");
    r.report.sparsity = parse_unsigned(get("sparsity"), "sparsity");
    r.report.total = parse_double_strict(get("total"), "total");
    r.report.db_size = parse_unsigned(get("db_size"), "db_size");
    r.report.classifier_calls = parse_unsigned(get("calls"), "calls");
    r.report.empty_reference = flag("empty");
    r.report.alpha = r.alpha;
    r.report.beta = r.beta;
    r.accepted = flag("accepted");
    return r;
}

std::vector<TraceRecord> read_trace(std::istream& in) {
    std::vector<TraceRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        out.push_back(parse_trace_record(line));
    }
    return out;
}

std::optional<EnergyReport> TraceReplay::take(std::size_t cell, double alpha, double beta, std::size_t evaluation,
                                              const std::vector<double>& plan) {
    if (position_ >= records_.size()) {
        return std::nullopt;
    }
    const auto& r = records_[position_];
    if (r.cell != cell || r.alpha != alpha || r.beta != beta || r.evaluation != evaluation || r.plan != plan) {
        records_.resize(position_);
        return std::nullopt;
    }
    ++position_;
    return r.report;
}

namespace {

/// Points per axis of the exploration lattice: the largest p >= 2 with p^bins within `budget`, else 0.
std::size_t lattice_points(std::size_t bins, std::size_t budget) {
    std::size_t p = 0;
    for (std::size_t q = 2;; ++q) {
        double count = 1.0;
        for (std::size_t b = 0; b < bins; ++b) {
            count *= static_cast<double>(q);
        }
        if (count > static_cast<double>(budget)) {
            return p;
        }
        p = q;
    }
}

}  // namespace

OptimizationTrace minimize_inner(const EnergyFunction& energy, std::size_t bins, const EnergyWeights& weights,
                                 const OptimizerConfig& cfg, const SearchHooks& hooks, const PlanSignature& signature) {
    cfg.validate(bins);
    weights.validate();
    OptimizationTrace trace;
    std::map<std::vector<double>, double> seen;
    double best_total = kInfinity;

    // Total for `x`, from the cache when possible; nullopt once the budget is spent.
    auto key_of = [&](const std::vector<double>& x) {
        if (!signature) {
            return x;
        }
        const auto counts = signature(SparsificationPlan{x});
        return std::vector<double>(counts.begin(), counts.end());
    };
    auto evaluate = [&](const std::vector<double>& x) -> std::optional<double> {
        auto key = key_of(x);
        const auto cached = seen.find(key);
        if (cached != seen.end()) {
            return cached->second;
        }
        if (trace.records.size() >= cfg.max_evaluations) {
            trace.budget_exhausted = true;
            return std::nullopt;
        }
        TraceRecord record;
        record.cell = hooks.cell;
        record.alpha = weights.alpha;
        record.beta = weights.beta;
        record.evaluation = trace.records.size();
        record.plan = x;
        std::optional<EnergyReport> replayed;
        if (hooks.replay != nullptr) {
            replayed = hooks.replay->take(record.cell, record.alpha, record.beta, record.evaluation, record.plan);
        }
        record.report = replayed ? *replayed : energy(SparsificationPlan{record.plan});
        const double total = record.report.total;
        seen.emplace(std::move(key), total);
        record.accepted = total < energy_sentinel() && total < best_total;
        if (record.accepted) {
            best_total = total;
        }
        if (record.accepted || trace.records.empty()) {
            trace.best_plan = record.plan;
            trace.best = record.report;
        }
        trace.records.push_back(record);
        if (hooks.on_record) {
            hooks.on_record(trace.records.back());
        }
        return total;
    };

    // Local search from `start` until it converges or the budget runs out.
    auto local_search = [&](std::vector<double> start, double step) {
        PatternSearch solver(std::move(start), step, std::min(cfg.min_step, step));
        while (auto next = solver.ask()) {
            const auto total = evaluate(*next);
            if (!total) {
                return false;
            }
            solver.tell(*next, *total);
        }
        return true;
    };

    const auto initial = cfg.start(bins);
    if (!evaluate(initial)) {
        return trace;
    }
    const auto explore_budget =
        static_cast<std::size_t>(std::floor(cfg.explore_fraction * static_cast<double>(cfg.max_evaluations)));
    const std::size_t p = cfg.explore_fraction > 0.0 ? lattice_points(bins, explore_budget) : 0;
    if (p == 0) {
        local_search(initial, cfg.initial_step);
        return trace;
    }

    std::vector<std::vector<double>> starts{initial};
    std::vector<std::size_t> index(bins, 0);
    while (true) {
        std::vector<double> x(bins);
        for (std::size_t b = 0; b < bins; ++b) {
            x[b] = static_cast<double>(index[b]) / static_cast<double>(p - 1);
        }
        if (x != initial) {
            if (!evaluate(x)) {
                return trace;
            }
            starts.push_back(std::move(x));
        }
        std::size_t b = 0;
        while (b < bins && ++index[b] == p) {
            index[b++] = 0;
        }
        if (b == bins) {
            break;
        }
    }
    std::stable_sort(starts.begin(), starts.end(),
                     [&](const auto& a, const auto& b) { return seen.at(key_of(a)) < seen.at(key_of(b)); });

    const double step = std::min(cfg.initial_step, 0.5 / static_cast<double>(p - 1));
    for (const auto& s : starts) {
        if (!local_search(s, step)) {
            return trace;
        }
    }
    // Random restarts stop once a run of them discovers nothing new.
    constexpr std::size_t kFruitlessRestarts = 32;
    std::mt19937_64 rng(cfg.seed);
    for (std::size_t fruitless = 0; fruitless < kFruitlessRestarts;) {
        const std::size_t before = trace.records.size();
        std::vector<double> s(bins);
        for (double& v : s) {
            v = unit_uniform(rng);
        }
        if (!local_search(std::move(s), step)) {
            return trace;
        }
        fruitless = trace.records.size() == before ? fruitless + 1 : 0;
    }
    return trace;
}

std::vector<std::size_t> retained_counts(const RankHistogram& hist, const SparsificationPlan& plan) {
    require(plan.fractions.size() == hist.num_bins(), "plan length differs from the number of bins");
    std::vector<std::size_t> counts;
    counts.reserve(hist.num_classes() * hist.num_bins());
    for (std::size_t c = 0; c < hist.num_classes(); ++c) {
        for (std::size_t b = 0; b < hist.num_bins(); ++b) {
            counts.push_back(retained_count(plan.fractions[b], hist.members(c, b).size()));
        }
    }
    return counts;
}

EnergyReport EnergyMemo::evaluate(const SparsificationPlan& plan, const EnergyWeights& weights) {
    auto key = retained_counts(evaluator_->histogram(), plan);
    auto it = terms_.find(key);
    if (it == terms_.end()) {
        ++computed_;
        it = terms_.emplace(std::move(key), evaluator_->evaluate(plan, EnergyWeights{0.0, 0.0})).first;
    }
    return reweighted(it->second, weights);
}

OptimizationTrace minimize_inner(const EnergyEvaluator& evaluator, const EnergyWeights& weights,
                                 const OptimizerConfig& cfg, const SearchHooks& hooks) {
    EnergyMemo memo(evaluator);
    return minimize_inner([&](const SparsificationPlan& p) { return memo.evaluate(p, weights); },
                          evaluator.num_bins(), weights, cfg, hooks,
                          [&](const SparsificationPlan& p) { return retained_counts(evaluator.histogram(), p); });
}

void OuterConfig::validate() const {
    auto check = [](double lo, double hi, const char* name) {
        if (!(lo > 0.0 && std::isfinite(lo) && hi > 0.0 && std::isfinite(hi))) {
            throw ConfigError(std::string(name) + " range needs positive finite endpoints");
        }
        if (lo > hi) {
            throw ConfigError(std::string(name) + " range has lo > hi");
        }
    };
    check(alpha_lo, alpha_hi, "alpha");
    check(beta_lo, beta_hi, "beta");
    if (grid_points == 0) {
        throw ConfigError("outer grid needs at least one point per axis");
    }
    if (budget == 0) {
        throw ConfigError("outer budget must be positive");
    }
}

namespace {

double log_point(double lo, double hi, double position, std::size_t points) {
    if (lo == hi || points < 2) {
        return lo;
    }
    const double t = position / static_cast<double>(points - 1);
    if (t <= 0.0) {
        return lo;
    }
    if (t >= 1.0) {
        return hi;
    }
    return std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)));
}

std::size_t axis_points(double lo, double hi, std::size_t points) { return lo == hi ? 1 : points; }

bool better(const OuterCell& a, const OuterCell& b) {
    if (a.validation.has_value() != b.validation.has_value()) {
        return a.validation.has_value();
    }
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.energy.db_size < b.energy.db_size;
}

}  // namespace

std::size_t select_best(const std::vector<OuterCell>& cells) {
    require(!cells.empty(), "no outer cells to choose from");
    std::size_t best = 0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        if (better(cells[i], cells[best])) {
            best = i;
        }
    }
    return best;
}

std::vector<std::pair<double, double>> outer_grid(const OuterConfig& outer) {
    const std::size_t na = axis_points(outer.alpha_lo, outer.alpha_hi, outer.grid_points);
    const std::size_t nb = axis_points(outer.beta_lo, outer.beta_hi, outer.grid_points);
    std::vector<std::pair<double, double>> grid;
    for (std::size_t i = 0; i < na; ++i) {
        for (std::size_t j = 0; j < nb; ++j) {
            grid.emplace_back(log_point(outer.alpha_lo, outer.alpha_hi, static_cast<double>(i), na),
                              log_point(outer.beta_lo, outer.beta_hi, static_cast<double>(j), nb));
        }
    }
    return grid;
}

OuterResult optimize_outer(const EnergyEvaluator& train, const PrototypeDatabase& validation,
                           const OuterConfig& outer, const OptimizerConfig& inner, TraceReplay* replay,
                           const std::function<void(const TraceRecord&)>& on_record) {
    outer.validate();
    inner.validate(train.num_bins());
    require(validation.dimension() == train.database().dimension(), "validation and training dimensions differ");

    OuterResult result;
    result.metric = resolve_metric(outer.metric, validation);
    EnergyMemo memo(train);

    auto run_cell = [&](double alpha, double beta) {
        OuterCell cell;
        cell.cell = result.cells.size();
        cell.alpha = alpha;
        cell.beta = beta;
        const EnergyWeights weights{alpha, beta};
        SearchHooks hooks{cell.cell, replay, on_record};
        auto trace = minimize_inner([&](const SparsificationPlan& p) { return memo.evaluate(p, weights); },
                                    train.num_bins(), weights, inner, hooks,
                                    [&](const SparsificationPlan& p) { return retained_counts(train.histogram(), p); });
        cell.plan = trace.best_plan;
        cell.energy = trace.best;
        const auto ref = sparsify(train.database(), train.histogram(), SparsificationPlan{cell.plan});
        if (!ref.empty()) {
            cell.validation = evaluate_classifier(ref, validation, train.k(), train.threads());
            cell.score = metric_value(*cell.validation, result.metric);
        }
        result.trace.budget_exhausted = result.trace.budget_exhausted || trace.budget_exhausted;
        result.trace.records.insert(result.trace.records.end(), trace.records.begin(), trace.records.end());
        result.cells.push_back(std::move(cell));
        result.best = select_best(result.cells);
    };

    const std::size_t na = axis_points(outer.alpha_lo, outer.alpha_hi, outer.grid_points);
    const std::size_t nb = axis_points(outer.beta_lo, outer.beta_hi, outer.grid_points);
    const auto grid = outer_grid(outer);
    for (const auto& [alpha, beta] : grid) {
        if (result.cells.size() >= outer.budget) {
            break;
        }
        run_cell(alpha, beta);
    }

    if (result.cells.size() == grid.size()) {
        const std::size_t ia = result.best / nb;
        const std::size_t ib = result.best % nb;
        const double a = static_cast<double>(ia);
        const double b = static_cast<double>(ib);
        const std::pair<double, double> offsets[] = {{-0.5, 0.0}, {0.5, 0.0}, {0.0, -0.5}, {0.0, 0.5}};
        for (const auto& [da, db] : offsets) {
            if (result.cells.size() >= outer.budget) {
                break;
            }
            const double pa = a + da;
            const double pb = b + db;
            if (pa < 0.0 || pb < 0.0 || pa > static_cast<double>(na - 1) || pb > static_cast<double>(nb - 1) ||
                (da != 0.0 && na < 2) || (db != 0.0 && nb < 2)) {
                continue;
            }
            run_cell(log_point(outer.alpha_lo, outer.alpha_hi, pa, na), log_point(outer.beta_lo, outer.beta_hi, pb, nb));
        }
    }

    const auto& best = result.cells[result.best];
    result.trace.best_plan = best.plan;
    result.trace.best = best.energy;
    return result;
}

}  // namespace protosel
