#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "protosel/error.hpp"
#include "protosel/ranking.hpp"

using namespace protosel;

TEST_CASE("percentile examples") {
    CHECK(percentile(std::vector<double>{1, 2, 3, 4}, 50) == 2);
    CHECK(percentile(std::vector<double>{5}, 0) == 5);
    CHECK(percentile(std::vector<double>{5}, 37.5) == 5);
    CHECK(percentile(std::vector<double>{5}, 100) == 5);
    CHECK(percentile(std::vector<double>{3, 1, 2}, 100) == 3);
    CHECK(percentile(std::vector<double>{3, 1, 2}, 0) == 1);
    CHECK_THROWS_AS(percentile(std::vector<double>{}, 50), ContractViolation);
}

TEST_CASE("rank score examples") {
    SUBCASE("all neighbors share the class") {
        PrototypeDatabase db(1, {0, 1, 2, 3, 100}, {0, 0, 0, 0, 1});
        const auto s = rank_all(db, 3);
        CHECK(s[0].score == 0.0);
        CHECK(s[1].score == 0.0);
    }
    SUBCASE("all neighbors from other classes gives K") {
        PrototypeDatabase db(1, {0, 1, 2, 3, 100}, {1, 0, 0, 0, 0});
        const auto s = rank_all(db, 3);
        CHECK(s[0].score == 3.0);
    }
    SUBCASE("two other, three same with K=5 gives 2/3") {
        // Prototype 0 at the origin; its five nearest are at distances 1, 1.5, 2, 2.5, 3.
        PrototypeDatabase db(2,
                             {0, 0,      // 0: class 0, query
                              1, 0,      // 1: same, d=1
                              0, 1.5,    // 2: other, d=1.5
                              -2, 0,     // 3: same, d=2
                              0, -2.5,   // 4: other, d=2.5
                              3, 0,      // 5: same, d=3
                              50, 50,    // far points
                              -50, 50},
                             {0, 0, 1, 0, 1, 0, 1, 1});
        const auto s = rank_all(db, 5);
        const auto expected = oracle::rank_scores(db, 5);
        CHECK(s[0].score == doctest::Approx(2.0 / 3.0));
        CHECK(expected[0] == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("fewer than two prototypes") {
        PrototypeDatabase db(1, {0}, {0});
        CHECK_THROWS_AS(rank_all(db, 3), InsufficientDataError);
    }
    SUBCASE("K larger than the database uses everything else") {
        PrototypeDatabase db(1, {0, 1, 2}, {0, 1, 1});
        const auto s = rank_all(db, 10);
        CHECK(s[0].score == 2.0);
        CHECK(s[1].score == 1.0);
    }
}

TEST_CASE("rank_all matches the full-matrix oracle and respects bounds") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t m = 2 + rng() % 120;
        const std::size_t dim = 1 + rng() % 6;
        const std::size_t k = std::vector<std::size_t>{1, 3, 10}[trial % 3];
        const auto db = oracle::random_db(rng, m, dim, 1 + rng() % 3, 3);
        const auto scores = rank_all(db, k, 1 + trial % 3);
        const auto expected = oracle::rank_scores(db, k);
        for (std::size_t i = 0; i < m; ++i) {
            CHECK(scores[i].id == i);
            CHECK(scores[i].score == expected[i]);
            CHECK(scores[i].score >= 0.0);
            CHECK(scores[i].score <= static_cast<double>(k));
        }
    }
}

TEST_CASE("rank scores follow feature content under row permutation") {
    std::mt19937_64 rng(23);
    const auto db = oracle::random_clusters(rng, 80, 3, 1.5);
    std::vector<PrototypeId> perm(db.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto shuffled = db.subset(perm);
    const auto a = rank_all(db, 5);
    const auto b = rank_all(shuffled, 5);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(b[i].score == a[perm[i]].score);
    }
}

TEST_CASE("histogram binning") {
    SUBCASE("single bin holds every member") {
        PrototypeDatabase db(1, {0, 1, 2, 3}, {0, 1, 0, 1});
        std::vector<RankScore> s{{0, 0.5}, {1, 1.0}, {2, 2.0}, {3, 0.0}};
        const auto h = build_histogram(db, s, 1);
        CHECK(h.members(0, 0) == std::vector<PrototypeId>{2, 0});
        CHECK(h.members(1, 0) == std::vector<PrototypeId>{1, 3});
    }
    SUBCASE("100 distinct scores in five bins of 20") {
        std::vector<double> f(100);
        std::vector<ClassCode> c(100, 4);
        std::vector<RankScore> s;
        std::mt19937_64 rng(1);
        std::vector<double> values(100);
        std::iota(values.begin(), values.end(), 0.0);
        std::shuffle(values.begin(), values.end(), rng);
        for (PrototypeId i = 0; i < 100; ++i) {
            s.push_back({i, values[i] / 10.0});
        }
        PrototypeDatabase db(1, f, c);
        const auto h = build_histogram(db, s, 5);
        // Edges are the ceil(b*100/5)-th smallest scores: 0, 1.9, 3.9, 5.9, 7.9, 9.9.
        CHECK(h.edges(0) == std::vector<double>{0.0, 1.9, 3.9, 5.9, 7.9, 9.9});
        for (std::size_t b = 0; b < 5; ++b) {
            CHECK(h.members(0, b).size() == 20);
            for (PrototypeId id : h.members(0, b)) {
                CHECK(static_cast<std::size_t>(values[id]) / 20 == b);
            }
        }
        const auto& top = h.members(0, 4);
        CHECK(values[top.front()] == 99.0);
    }
    SUBCASE("all-tied scores land in the lowest bin") {
        PrototypeDatabase db(1, {0, 1, 2, 3, 4}, {0, 0, 0, 0, 0});
        std::vector<RankScore> s{{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}};
        const auto h = build_histogram(db, s, 5);
        CHECK(h.members(0, 0) == std::vector<PrototypeId>{0, 1, 2, 3, 4});
        for (std::size_t b = 1; b < 5; ++b) {
            CHECK(h.members(0, b).empty());
        }
    }
    SUBCASE("bad arguments") {
        PrototypeDatabase db(1, {0, 1}, {0, 0});
        std::vector<RankScore> s{{0, 0}, {1, 0}};
        CHECK_THROWS_AS(build_histogram(db, s, 0), ContractViolation);
        CHECK_THROWS_AS(build_histogram(db, std::span(s).first(1), 2), ContractViolation);
    }
}

TEST_CASE("histogram partitions every class with monotone edges") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t m = 2 + rng() % 150;
        const auto db = oracle::random_db(rng, m, 2, 1 + rng() % 4, 4);
        const auto scores = rank_all(db, 1 + rng() % 6);
        const std::size_t bins = 1 + rng() % 7;
        const auto h = build_histogram(db, scores, bins);
        std::vector<int> hits(m, 0);
        for (std::size_t c = 0; c < h.num_classes(); ++c) {
            const auto& e = h.edges(c);
            CHECK(e.size() == bins + 1);
            CHECK(std::is_sorted(e.begin(), e.end()));
            std::size_t total = 0;
            for (std::size_t b = 0; b < bins; ++b) {
                const auto& mem = h.members(c, b);
                total += mem.size();
                for (std::size_t n = 0; n < mem.size(); ++n) {
                    ++hits[mem[n]];
                    CHECK(db.class_of(mem[n]) == h.classes()[c]);
                    CHECK(h.bin_of(mem[n]) == b);
                    if (n > 0) {
                        const double prev = h.score(mem[n - 1]);
                        const double cur = h.score(mem[n]);
                        CHECK((prev > cur || (prev == cur && mem[n - 1] < mem[n])));
                    }
                }
            }
            std::size_t class_size = 0;
            for (PrototypeId i = 0; i < m; ++i) {
                class_size += db.class_of(i) == h.classes()[c];
            }
            CHECK(total == class_size);
        }
        for (int n : hits) {
            CHECK(n == 1);
        }
    }
}

TEST_CASE("rank export and summary formats") {
    PrototypeDatabase db(1, {0, 1, 5}, {0, 0, 1});
    const auto scores = rank_all(db, 1);
    const auto h = build_histogram(db, scores, 2);
    std::ostringstream csv;
    write_rank_csv(db, h, csv);
    CHECK(csv.str() == "id,class,score,bin\n0,0,0,0\n1,0,0,0\n2,1,1,0\n");
    std::ostringstream summary;
    write_histogram_summary(h, summary);
    CHECK(summary.str().find("class.1.edges = 1,1,1") != std::string::npos);
}
