#include "protosel/ranking.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <ostream>

#include "protosel/error.hpp"
#include "protosel/knn.hpp"
#include "protosel/parallel.hpp"

namespace protosel {

namespace {

std::string format_double(double v) {
    std::array<char, 64> buffer{};
    const auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), v);
    return std::string(buffer.data(), ptr);
}

}  // namespace

std::vector<RankScore> rank_all(const PrototypeDatabase& db, std::size_t k, unsigned threads) {
    require(k >= 1, "rank_all: k must be positive");
    if (db.size() < 2) {
        throw InsufficientDataError("ranking needs at least two prototypes, got " + std::to_string(db.size()));
    }
    const KnnIndex index(db);
    std::vector<RankScore> scores(db.size());
    parallel_for(db.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        // One extra neighbor so that dropping the prototype itself still leaves K.
        NeighborCache cache(index, k + 1);
        for (std::size_t i = begin; i < end; ++i) {
            const auto id = static_cast<PrototypeId>(i);
            const ClassCode own = db.class_of(id);
            std::size_t same = 0;
            std::size_t other = 0;
            std::size_t used = 0;
            for (const Neighbor& n : cache.lookup(db.features(id))) {
                if (n.id == id) {
                    continue;
                }
                if (used == k) {
                    break;
                }
                ++used;
                if (db.class_of(n.id) == own) {
                    ++same;
                } else {
                    ++other;
                }
            }
            scores[i] = {id, static_cast<double>(other) / static_cast<double>(std::max<std::size_t>(same, 1))};
        }
    });
    return scores;
}

double percentile(std::span<const double> values, double p) {
    require(!values.empty(), "percentile of an empty list");
    require(p >= 0.0 && p <= 100.0, "percentile must lie in [0, 100]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = static_cast<double>(sorted.size());
    const auto rank = static_cast<std::size_t>(std::ceil(p * n / 100.0));
    return sorted[rank == 0 ? 0 : std::min(rank, sorted.size()) - 1];
}

std::vector<std::size_t> RankHistogram::bin_totals() const {
    std::vector<std::size_t> totals(num_bins_, 0);
    for (std::size_t c = 0; c < classes_.size(); ++c) {
        for (std::size_t b = 0; b < num_bins_; ++b) {
            totals[b] += members(c, b).size();
        }
    }
    return totals;
}

RankHistogram build_histogram(const PrototypeDatabase& db, std::span<const RankScore> scores, std::size_t num_bins) {
    require(num_bins >= 1, "histogram needs at least one bin");
    require(scores.size() == db.size(), "every prototype needs exactly one score");

    RankHistogram hist;
    hist.num_bins_ = num_bins;
    hist.classes_ = db.class_registry();
    hist.scores_.assign(db.size(), 0.0);
    std::vector<bool> seen(db.size(), false);
    for (const auto& s : scores) {
        require(s.id < db.size() && !seen[s.id], "score ids must cover every prototype once");
        seen[s.id] = true;
        hist.scores_[s.id] = s.score;
    }

    const std::size_t num_classes = hist.classes_.size();
    std::vector<std::vector<PrototypeId>> by_class(num_classes);
    for (PrototypeId id = 0; id < db.size(); ++id) {
        by_class[db.class_index(db.class_of(id))].push_back(id);
    }

    hist.edges_.resize(num_classes);
    hist.members_.assign(num_classes * num_bins, {});
    hist.bin_of_.assign(db.size(), 0);
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> sorted;
        sorted.reserve(by_class[c].size());
        for (const PrototypeId id : by_class[c]) {
            sorted.push_back(hist.scores_[id]);
        }
        std::sort(sorted.begin(), sorted.end());
        // Edge b is the ceil(b*n/N)-th smallest score, in integer arithmetic to avoid rounding.
        const std::size_t n = sorted.size();
        auto& edges = hist.edges_[c];
        edges.resize(num_bins + 1);
        for (std::size_t b = 0; b <= num_bins; ++b) {
            const std::size_t rank = (b * n + num_bins - 1) / num_bins;
            edges[b] = sorted[rank == 0 ? 0 : rank - 1];
        }
        for (const PrototypeId id : by_class[c]) {
            const double s = hist.scores_[id];
            // First bin whose upper edge is >= s; the last bin absorbs anything beyond.
            const auto upper = std::lower_bound(edges.begin() + 1, edges.end() - 1, s);
            const auto bin = static_cast<std::size_t>(upper - (edges.begin() + 1));
            hist.members_[c * num_bins + bin].push_back(id);
            hist.bin_of_[id] = bin;
        }
        for (std::size_t b = 0; b < num_bins; ++b) {
            auto& members = hist.members_[c * num_bins + b];
            std::sort(members.begin(), members.end(), [&](PrototypeId x, PrototypeId y) {
                const double sx = hist.scores_[x];
                const double sy = hist.scores_[y];
                return sx != sy ? sx > sy : x < y;
            });
        }
    }
    return hist;
}

void write_rank_csv(const PrototypeDatabase& db, const RankHistogram& hist, std::ostream& out) {
    out << "id,class,score,bin\n";
    for (PrototypeId id = 0; id < db.size(); ++id) {
        out << id << ',' << db.class_of(id) << ',' << format_double(hist.score(id)) << ',' << hist.bin_of(id) << '\n';
    }
}

void write_histogram_summary(const RankHistogram& hist, std::ostream& out) {
    out << "bins = " << hist.num_bins() << '\n';
    out << "classes = " << hist.num_classes() << '\n';
    out << "prototypes = " << hist.num_prototypes() << '\n';
    for (std::size_t c = 0; c < hist.num_classes(); ++c) {
        out << "class." << hist.classes()[c] << ".edges =";
        const auto& edges = hist.edges(c);
        for (std::size_t b = 0; b < edges.size(); ++b) {
            out << (b == 0 ? " " : ",") << format_double(edges[b]);
        }
        out << '\n';
        out << "class." << hist.classes()[c] << ".counts =";
        for (std::size_t b = 0; b < hist.num_bins(); ++b) {
            out << (b == 0 ? " " : ",") << hist.members(c, b).size();
        }
        out << '\n';
    }
}

}  // namespace protosel
