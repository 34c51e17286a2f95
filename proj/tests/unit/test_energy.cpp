#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "protosel/energy.hpp"
#include "protosel/error.hpp"

using namespace protosel;

namespace {

struct Built {
    PrototypeDatabase db;
    RankHistogram hist;
    std::vector<double> raw_scores;
};

Built build(PrototypeDatabase db, std::size_t k, std::size_t bins) {
    Built b{std::move(db), {}, {}};
    const auto scores = rank_all(b.db, k);
    b.hist = build_histogram(b.db, scores, bins);
    for (const auto& s : scores) {
        b.raw_scores.push_back(s.score);
    }
    return b;
}

}  // namespace

TEST_CASE("classify examples") {
    PrototypeDatabase db(1, {0, 1, 2, 10, 11}, {3, 1, 1, 2, 2});
    SUBCASE("single prototype reference forces the vote") {
        PrototypeDatabase one(1, {5.0}, {3});
        const auto ref = SparsifiedDatabase::whole(one);
        CHECK(classify(ref, std::vector<double>{-100.0}, 5) == 3.0);
        CHECK(classify(ref, std::vector<double>{7.0}, 1) == 3.0);
    }
    SUBCASE("majority") {
        PrototypeDatabase three(1, {0, 1, 2}, {1, 1, 2});
        CHECK(classify(SparsifiedDatabase::whole(three), std::vector<double>{1.0}, 3) == 1.0);
    }
    SUBCASE("tie goes to the smallest code") {
        PrototypeDatabase two(1, {0, 1}, {2, 1});
        CHECK(classify(SparsifiedDatabase::whole(two), std::vector<double>{0.5}, 2) == 1.0);
    }
    SUBCASE("empty reference") {
        const auto b = build(db, 1, 1);
        const auto empty = sparsify(b.db, b.hist, SparsificationPlan{{0.0}});
        CHECK_THROWS_AS(classify(empty, std::vector<double>{0.0}, 1), EmptySetError);
        CHECK_THROWS_AS(fidelity(b.db, empty, 1), EmptySetError);
    }
}

TEST_CASE("fidelity examples") {
    SUBCASE("well separated clusters reclassify perfectly") {
        std::mt19937_64 rng(3);
        const auto db = oracle::random_clusters(rng, 40, 2, 50.0);
        CHECK(fidelity(db, SparsifiedDatabase::whole(db), 3) == 0.0);
    }
    SUBCASE("all misclassified binary gives M") {
        PrototypeDatabase db(1, {0, 1, 10, 11, 20, 21}, {0, 1, 0, 1, 0, 1});
        CHECK(fidelity(db, SparsifiedDatabase::whole(db), 1) == 6.0);
    }
    SUBCASE("ordinal codes enter squared") {
        PrototypeDatabase db(1, {0, 1}, {0, 3});
        CHECK(fidelity(db, SparsifiedDatabase::whole(db), 1) == 18.0);
    }
    SUBCASE("30-point half-retained plan matches brute force") {
        std::mt19937_64 rng(30);
        auto b = build(oracle::random_clusters(rng, 30, 2, 1.0), 5, 2);
        const std::vector<double> plan{0.5, 0.5};
        const auto ref = sparsify(b.db, b.hist, SparsificationPlan{plan});
        const auto ids = oracle::sparsify(b.db, b.raw_scores, 2, plan);
        REQUIRE(ref.selected() == ids);
        const auto terms = oracle::energy_terms(b.db, ids, 3, 1.0);
        CHECK(fidelity(b.db, ref, 3) == terms.fidelity);
    }
}

TEST_CASE("robustness examples") {
    SUBCASE("single class is perfectly robust") {
        PrototypeDatabase db(2, {0, 0, 1, 1, 2, 0, 5, 5}, {4, 4, 4, 4});
        CHECK(robustness(db, SparsifiedDatabase::whole(db), 2, {}) == 0.0);
    }
    SUBCASE("tiny epsilon flips nothing") {
        std::mt19937_64 rng(4);
        const auto db = oracle::random_clusters(rng, 40, 3, 20.0);
        PerturbationConfig p;
        p.epsilon = 1e-6;
        CHECK(robustness(db, SparsifiedDatabase::whole(db), 3, p) == 0.0);
    }
    SUBCASE("20-point instance with epsilon 0.5 matches exhaustive perturbation") {
        std::mt19937_64 rng(20);
        const auto db = oracle::random_clusters(rng, 20, 3, 0.8);
        PerturbationConfig p;
        p.epsilon = 0.5;
        const auto terms = oracle::energy_terms(db, all_ids(db), 3, 0.5);
        CHECK(robustness(db, SparsifiedDatabase::whole(db), 3, p) == terms.robustness);
        CHECK(terms.robustness > 0.0);
    }
    SUBCASE("dimension subset is fixed by the seed and rescaled") {
        PerturbationConfig p;
        p.subset_size = 3;
        p.seed = 9;
        const auto d1 = p.dimensions(10);
        CHECK(d1.size() == 3);
        CHECK(d1 == p.dimensions(10));
        CHECK(std::is_sorted(d1.begin(), d1.end()));
        CHECK(p.scale(10) == doctest::Approx(10.0 / 3.0));
        PerturbationConfig all;
        CHECK(all.dimensions(4) == std::vector<std::size_t>{0, 1, 2, 3});
        CHECK(all.scale(4) == 1.0);
        PerturbationConfig bad;
        bad.epsilon = 0.0;
        CHECK_THROWS_AS(bad.validate(3), ContractViolation);
    }
}

TEST_CASE("evaluate examples") {
    std::mt19937_64 rng(40);
    auto b = build(oracle::random_clusters(rng, 40, 2, 1.2), 5, 2);
    const std::size_t k = 3;

    SUBCASE("zero weights leave only robustness") {
        const auto r = evaluate(b.db, b.hist, SparsificationPlan{{0.7, 0.4}}, {0.0, 0.0}, k);
        CHECK(r.total == r.robustness);
    }
    SUBCASE("identity plan with alpha 0, beta 1") {
        const auto r = evaluate(b.db, b.hist, SparsificationPlan{{1.0, 1.0}}, {0.0, 1.0}, k);
        const double rob = robustness(b.db, SparsifiedDatabase::whole(b.db), k, {});
        CHECK(r.total == rob + 40.0);
        CHECK(r.sparsity == 40);
    }
    SUBCASE("40-prototype fixture with plan (1, 0.5) matches the end-to-end oracle") {
        const std::vector<double> plan{1.0, 0.5};
        const auto r = evaluate(b.db, b.hist, SparsificationPlan{plan}, {1.0, 0.01}, k);
        const auto scores = oracle::rank_scores(b.db, 5);
        const auto ids = oracle::sparsify(b.db, scores, 2, plan);
        const auto t = oracle::energy_terms(b.db, ids, k, 1.0);
        CHECK(r.robustness == doctest::Approx(t.robustness).epsilon(1e-9));
        CHECK(r.fidelity == doctest::Approx(t.fidelity).epsilon(1e-9));
        CHECK(static_cast<double>(r.sparsity) == t.sparsity);
        CHECK(r.total == doctest::Approx(t.robustness + t.fidelity + 0.01 * t.sparsity).epsilon(1e-12));
        CHECK(r.classifier_calls == 40 * 3);
    }
    SUBCASE("empty plan maps to the sentinel") {
        const auto r = evaluate(b.db, b.hist, SparsificationPlan{{0.0, 0.0}}, {1.0, 1.0}, k);
        CHECK(r.empty_reference);
        CHECK(r.total == energy_sentinel());
        CHECK(r.db_size == 0);
    }
    SUBCASE("a lone retained prototype cannot classify itself") {
        PrototypeDatabase tiny(1, {0, 1, 2}, {0, 0, 0});
        std::vector<RankScore> s{{0, 0}, {1, 0}, {2, 0}};
        const auto h = build_histogram(tiny, s, 1);
        const auto r = evaluate(tiny, h, SparsificationPlan{{0.3}}, {1.0, 1.0}, 1);
        CHECK(r.db_size == 1);
        CHECK(r.empty_reference);
        CHECK(r.total == energy_sentinel());
    }
}

TEST_CASE("energy properties on random fixtures") {
    std::mt19937_64 rng(404);
    for (int trial = 0; trial < 15; ++trial) {
        const std::size_t bins = 1 + rng() % 3;
        auto b = build(oracle::random_clusters(rng, 20 + rng() % 60, 1 + rng() % 3, 1.0), 3, bins);
        SparsificationPlan plan;
        for (std::size_t i = 0; i < bins; ++i) {
            plan.fractions.push_back(0.3 + 0.7 * static_cast<double>(rng() % 100) / 100.0);
        }
        const std::size_t k = 1 + rng() % 5;
        PerturbationConfig p;
        p.epsilon = 0.4;
        const EnergyEvaluator serial(b.db, b.hist, k, p, 1);
        const EnergyEvaluator parallel(b.db, b.hist, k, p, 3);
        const auto r1 = serial.evaluate(plan, {0.0, 0.0});
        const auto r2 = serial.evaluate(plan, {2.5, 0.125});
        if (r1.empty_reference) {
            continue;
        }
        CHECK(r1.robustness >= 0.0);
        CHECK(r1.fidelity >= 0.0);
        // Affine in the weights with the reported terms as coefficients.
        CHECK(r2.total == r1.total + 2.5 * r1.fidelity + 0.125 * static_cast<double>(r1.sparsity));
        CHECK(parallel.evaluate(plan, {2.5, 0.125}) == r2);
    }
}

TEST_CASE("identity-plan fidelity equals leave-one-out KNN squared error") {
    std::mt19937_64 rng(55);
    for (int trial = 0; trial < 5; ++trial) {
        const auto db = oracle::random_db(rng, 50 + rng() % 150, 3, 3, 4);
        const std::size_t k = 1 + rng() % 7;
        double loo = 0.0;
        for (PrototypeId i = 0; i < db.size(); ++i) {
            const double f = oracle::classify(db, all_ids(db), oracle::row(db, i), k, i);
            loo += (db.class_of(i) - f) * (db.class_of(i) - f);
        }
        CHECK(fidelity(db, SparsifiedDatabase::whole(db), k) == loo);
    }
}

TEST_CASE("energy report rendering") {
    EnergyReport r;
    r.robustness = 2;
    r.fidelity = 0.5;
    r.sparsity = 7;
    r.total = 3.25;
    std::ostringstream out;
    write_energy_report(r, out);
    CHECK(out.str().find("total = 3.25\n") != std::string::npos);
    CHECK(energy_fields(r).find("sparsity=7") != std::string::npos);
}
