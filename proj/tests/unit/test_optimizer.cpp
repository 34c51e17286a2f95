#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "protosel/datagen.hpp"
#include "protosel/error.hpp"
#include "protosel/optimizer.hpp"

using namespace protosel;

namespace {

struct Fixture {
    PrototypeDatabase db;
    RankHistogram hist;
    std::vector<double> scores;
};

Fixture make_fixture(PrototypeDatabase db, std::size_t k, std::size_t bins) {
    Fixture f{std::move(db), {}, {}};
    const auto ranks = rank_all(f.db, k);
    f.hist = build_histogram(f.db, ranks, bins);
    for (const auto& r : ranks) {
        f.scores.push_back(r.score);
    }
    return f;
}

double grid_minimum(const Fixture& f, std::size_t k, double eps, const EnergyWeights& w) {
    double best = std::numeric_limits<double>::max();
    for (const auto& plan : oracle::fraction_grid(f.hist.num_bins())) {
        best = std::min(best, oracle::energy_total(f.db, f.scores, f.hist.num_bins(), plan, k, eps, w.alpha, w.beta));
    }
    return best;
}

std::string render(const OptimizationTrace& t) {
    std::string out;
    for (const auto& r : t.records) {
        out += format_trace_record(r) + '\n';
    }
    return out;
}

}  // namespace

TEST_CASE("search step") {
    SUBCASE("equal candidate is rejected") {
        PatternSearch s({0.5}, 0.25, 1e-3);
        REQUIRE(s.ask());
        CHECK(s.tell({0.5}, 3.0));
        const auto c = s.ask();
        REQUIRE(c);
        CHECK((*c)[0] == 0.25);
        CHECK_FALSE(s.tell(*c, 3.0));
        CHECK(s.incumbent() == std::vector<double>{0.5});
    }
    SUBCASE("sentinel candidate is rejected") {
        PatternSearch s({1.0, 1.0}, 0.25, 1e-3);
        s.ask();
        s.tell({1.0, 1.0}, 10.0);
        const auto c = s.ask();
        CHECK_FALSE(s.tell(*c, energy_sentinel()));
        CHECK(s.incumbent_value() == 10.0);
    }
    SUBCASE("1D quadratic surrogate converges within min_step") {
        const double target = 0.3137;
        PatternSearch s({1.0}, 0.25, 1e-3);
        int accepted = 0;
        int rejected = 0;
        while (auto x = s.ask()) {
            CHECK((*x)[0] >= 0.0);
            CHECK((*x)[0] <= 1.0);
            const double v = ((*x)[0] - target) * ((*x)[0] - target);
            (s.tell(*x, v) ? accepted : rejected) += 1;
        }
        CHECK(accepted > 0);
        CHECK(rejected > 0);
        CHECK(std::abs(s.incumbent()[0] - target) < 1e-3);
        CHECK(s.step() < 1e-3);
    }
    SUBCASE("bounds are never violated and no-move candidates are skipped") {
        PatternSearch s({1.0, 0.0}, 1.0, 0.1);
        s.ask();
        s.tell({1.0, 0.0}, 1.0);
        while (auto x = s.ask()) {
            for (double v : *x) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            CHECK(*x != s.incumbent());
            s.tell(*x, 2.0);
        }
    }
}

TEST_CASE("optimizer config validation") {
    OptimizerConfig c;
    CHECK_NOTHROW(c.validate(3));
    c.max_evaluations = 3;
    CHECK_THROWS_AS(c.validate(3), ConfigError);
    c = {};
    c.initial_plan = {1.0, 0.5};
    CHECK_THROWS_AS(c.validate(3), ConfigError);
    c.initial_plan = {1.0, 0.5, 1.5};
    CHECK_THROWS_AS(c.validate(3), ConfigError);
    c = {};
    c.min_step = 0.5;
    c.initial_step = 0.25;
    CHECK_THROWS_AS(c.validate(3), ConfigError);
    c = {};
    c.explore_fraction = 1.5;
    CHECK_THROWS_AS(c.validate(3), ConfigError);
    CHECK(OptimizerConfig{}.start(2) == std::vector<double>{1.0, 1.0});
}

TEST_CASE("minimize_inner examples") {
    SUBCASE("single-class database shrinks to the smallest useful size") {
        std::mt19937_64 rng(5);
        auto db = oracle::random_db(rng, 40, 2, 1, 8);
        auto f = make_fixture(std::move(db), 3, 2);
        const EnergyEvaluator ev(f.db, f.hist, 3);
        const EnergyWeights w{0.0, 1.0};
        OptimizerConfig cfg;
        const auto t = minimize_inner(ev, w, cfg);
        const double grid = grid_minimum(f, 3, 1.0, w);
        CHECK(t.best.robustness == 0.0);
        CHECK(t.best.fidelity == 0.0);
        CHECK(t.best.total <= grid);
        CHECK(t.best.db_size == 2);
    }
    SUBCASE("60-prototype fixture with two bins lands within 5% of the grid optimum") {
        std::mt19937_64 rng(60);
        auto f = make_fixture(oracle::random_clusters(rng, 60, 2, 1.5), 5, 2);
        const EnergyEvaluator ev(f.db, f.hist, 3);
        const EnergyWeights w{1.0, 0.05};
        const auto t = minimize_inner(ev, w, OptimizerConfig{});
        const double grid = grid_minimum(f, 3, 1.0, w);
        CHECK(t.best.total <= 1.05 * grid);
    }
    SUBCASE("zero weights and a robust classifier give total 0") {
        std::mt19937_64 rng(7);
        auto f = make_fixture(oracle::random_clusters(rng, 40, 2, 100.0), 3, 3);
        const EnergyEvaluator ev(f.db, f.hist, 3);
        const auto t = minimize_inner(ev, {0.0, 0.0}, OptimizerConfig{});
        CHECK(t.records.front().plan == std::vector<double>{1.0, 1.0, 1.0});
        CHECK(t.records.front().report.total == 0.0);
        CHECK(t.best.total == 0.0);
    }
}

TEST_CASE("inner optimizer invariants") {
    std::mt19937_64 rng(321);
    for (int trial = 0; trial < 6; ++trial) {
        const std::size_t bins = 1 + rng() % 3;
        auto f = make_fixture(oracle::random_clusters(rng, 30 + rng() % 50, 2, 1.0), 4, bins);
        const std::size_t k = 1 + rng() % 4;
        PerturbationConfig p;
        p.epsilon = 0.5;
        const EnergyEvaluator ev(f.db, f.hist, k, p);
        OptimizerConfig cfg;
        cfg.max_evaluations = 20 + rng() % 60;
        cfg.explore_fraction = static_cast<double>(rng() % 4) / 4.0;
        cfg.seed = rng();
        const EnergyWeights w{0.5, 0.02};
        const auto t = minimize_inner(ev, w, cfg);

        CHECK(t.records.size() <= cfg.max_evaluations);
        double incumbent = std::numeric_limits<double>::infinity();
        double best_accepted = std::numeric_limits<double>::infinity();
        std::uint64_t calls = 0;
        for (std::size_t i = 0; i < t.records.size(); ++i) {
            const auto& r = t.records[i];
            CHECK(r.evaluation == i);
            for (double v : r.plan) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            if (r.accepted) {
                CHECK(r.report.total < incumbent);
                incumbent = r.report.total;
                best_accepted = std::min(best_accepted, r.report.total);
            }
            calls += r.report.classifier_calls;
        }
        CHECK(t.best.total == best_accepted);
        CHECK(t.best.total <= t.records.front().report.total);
        CHECK(calls <= cfg.max_evaluations * f.db.size() * (1 + f.db.dimension()));

        const EnergyEvaluator threaded(f.db, f.hist, k, p, 3);
        CHECK(render(minimize_inner(threaded, w, cfg)) == render(t));
    }
}

TEST_CASE("without exploration the search stops when the step collapses") {
    std::mt19937_64 rng(17);
    auto f = make_fixture(oracle::random_clusters(rng, 40, 2, 1.0), 4, 2);
    const EnergyEvaluator ev(f.db, f.hist, 3);
    OptimizerConfig cfg;
    cfg.explore_fraction = 0.0;
    cfg.max_evaluations = 100000;
    const auto t = minimize_inner(ev, {1.0, 0.05}, cfg);
    CHECK_FALSE(t.budget_exhausted);
    CHECK(t.records.size() < 1000);
    CHECK(t.records.front().plan == std::vector<double>{1.0, 1.0});
}

TEST_CASE("energy memo is transparent") {
    std::mt19937_64 rng(12);
    auto f = make_fixture(oracle::random_clusters(rng, 50, 2, 1.0), 4, 3);
    const EnergyEvaluator ev(f.db, f.hist, 3);
    EnergyMemo memo(ev);
    for (const auto& plan : {std::vector<double>{1, 0.5, 0.2}, {0.98, 0.5, 0.2}, {0, 0, 0}, {1, 1, 1}}) {
        for (const EnergyWeights w : {EnergyWeights{1.0, 0.0}, EnergyWeights{0.3, 2.0}}) {
            CHECK(memo.evaluate(SparsificationPlan{plan}, w) == ev.evaluate(SparsificationPlan{plan}, w));
        }
    }
    CHECK(memo.computed() == 3);
}

TEST_CASE("trace text round trip and replay") {
    std::mt19937_64 rng(99);
    auto f = make_fixture(oracle::random_clusters(rng, 50, 2, 1.0), 4, 2);
    const EnergyEvaluator ev(f.db, f.hist, 3);
    OptimizerConfig cfg;
    cfg.max_evaluations = 40;
    const EnergyWeights w{1.0 / 3.0, 0.01};
    const auto full = minimize_inner(ev, w, cfg);
    REQUIRE(full.records.size() > 10);

    const PlanSignature signature = [&](const SparsificationPlan& p) { return retained_counts(f.hist, p); };

    std::istringstream in("# seed = 0\n\n" + render(full));
    const auto parsed = read_trace(in);
    CHECK(parsed == full.records);

    SUBCASE("complete replay computes nothing") {
        TraceReplay replay(parsed);
        std::size_t computed = 0;
        const auto t = minimize_inner(
            [&](const SparsificationPlan& p) {
                ++computed;
                return ev.evaluate(p, w);
            },
            2, w, cfg, SearchHooks{0, &replay, {}}, signature);
        CHECK(computed == 0);
        CHECK(render(t) == render(full));
    }
    SUBCASE("partial replay continues where the checkpoint stops") {
        std::vector<TraceRecord> half(parsed.begin(), parsed.begin() + 7);
        TraceReplay replay(half);
        std::size_t computed = 0;
        const auto t = minimize_inner(
            [&](const SparsificationPlan& p) {
                ++computed;
                return ev.evaluate(p, w);
            },
            2, w, cfg, SearchHooks{0, &replay, {}}, signature);
        CHECK(replay.replayed() == 7);
        CHECK(computed == full.records.size() - 7);
        CHECK(render(t) == render(full));
    }
    SUBCASE("a diverging record drops the rest of the checkpoint") {
        auto edited = parsed;
        edited[5].plan[0] = 0.123;
        TraceReplay replay(edited);
        const auto t = minimize_inner(ev, w, cfg, SearchHooks{0, &replay, {}});
        CHECK(replay.replayed() == 5);
        CHECK(replay.remaining() == 0);
        CHECK(render(t) == render(full));
    }
    SUBCASE("malformed records") {
        CHECK_THROWS_AS(parse_trace_record("cell=0 alpha=1"), FormatError);
        CHECK_THROWS_AS(parse_trace_record("garbage"), FormatError);
        auto line = format_trace_record(full.records[0]);
        line.replace(line.find("accepted=") + 9, 1, "7");
        CHECK_THROWS_AS(parse_trace_record(line), FormatError);
    }
}

TEST_CASE("outer selection") {
    SUBCASE("an empty database never wins") {
        std::vector<OuterCell> cells(2);
        cells[0].score = 0.9;
        cells[0].energy.db_size = 0;
        cells[1].validation = MetricReport{};
        cells[1].score = 0.1;
        cells[1].energy.db_size = 5;
        CHECK(select_best(cells) == 1);
    }
    SUBCASE("ties go to the smaller database, then the earlier cell") {
        std::vector<OuterCell> cells(3);
        for (auto& c : cells) {
            c.validation = MetricReport{};
            c.score = 0.8;
        }
        cells[0].energy.db_size = 9;
        cells[1].energy.db_size = 4;
        cells[2].energy.db_size = 4;
        CHECK(select_best(cells) == 1);
    }
    SUBCASE("grid layout") {
        OuterConfig o;
        o.alpha_lo = 0.1;
        o.alpha_hi = 10.0;
        o.beta_lo = o.beta_hi = 0.5;
        const auto g = outer_grid(o);
        REQUIRE(g.size() == 3);
        CHECK(g[1].first == doctest::Approx(1.0));
        CHECK(g[2].first == 10.0);
        CHECK(g[0].second == 0.5);
        o.alpha_lo = 2.0;
        o.alpha_hi = 1.0;
        CHECK_THROWS_AS(o.validate(), ConfigError);
        o.alpha_lo = 0.0;
        CHECK_THROWS_AS(o.validate(), ConfigError);
    }
}

TEST_CASE("optimize_outer examples") {
    BlobSpec spec;
    spec.means = {{0.0, 0.0}, {2.0, 0.0}};
    spec.stds = {1.0, 1.0};
    spec.samples_per_class = 150;
    spec.seed = 4;
    const auto parts = split_database(gen_blobs(spec), 0.5, 0.25, 0.25, 4);
    auto f = make_fixture(parts.train, 5, 3);
    const EnergyEvaluator ev(f.db, f.hist, 5);
    OptimizerConfig inner;
    inner.max_evaluations = 40;

    SUBCASE("collapsed ranges with budget 1 equal one inner run") {
        OuterConfig o;
        o.alpha_lo = o.alpha_hi = 0.7;
        o.beta_lo = o.beta_hi = 0.02;
        o.budget = 1;
        const auto r = optimize_outer(ev, parts.validate, o, inner);
        REQUIRE(r.cells.size() == 1);
        const auto single = minimize_inner(ev, {0.7, 0.02}, inner);
        CHECK(render(r.trace) == render(single));
        CHECK(r.best_cell().plan == single.best_plan);
        CHECK(r.metric == ValidationMetric::auc);
    }
    SUBCASE("single-class validation set is rejected for AUC") {
        OuterConfig o;
        o.metric = ValidationMetric::auc;
        PrototypeDatabase one(2, {0, 0, 1, 1}, {1, 1});
        CHECK_THROWS_AS(optimize_outer(ev, one, o, inner), ConfigError);
    }
    SUBCASE("selected weights match the best of nine hand-picked points") {
        OuterConfig o;
        o.metric = ValidationMetric::accuracy;
        const auto r = optimize_outer(ev, parts.validate, o, inner);
        CHECK(r.cells.size() >= 9);
        CHECK(r.cells.size() <= 13);
        double baseline = 0.0;
        for (double a : {0.3, 1.0, 3.0}) {
            for (double b : {0.003, 0.03, 0.3}) {
                const auto t = minimize_inner(ev, {a, b}, inner);
                const auto ref = sparsify(f.db, f.hist, SparsificationPlan{t.best_plan});
                if (!ref.empty()) {
                    baseline = std::max(baseline, evaluate_classifier(ref, parts.validate, 5).accuracy);
                }
            }
        }
        CHECK(r.best_cell().score >= baseline - 0.01);
        CHECK(r.best_cell().validation.has_value());
        const auto again = optimize_outer(ev, parts.validate, o, inner);
        CHECK(render(again.trace) == render(r.trace));
    }
}
