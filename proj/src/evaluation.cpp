#include "protosel/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "protosel/energy.hpp"
#include "protosel/error.hpp"
#include "protosel/format.hpp"
#include "protosel/knn.hpp"
#include "protosel/parallel.hpp"

namespace protosel {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : "n/a"; }

std::string number_text(double v) { return std::isnan(v) ? "n/a" : format_double(v); }

}  // namespace

double auc_rank_sum(std::span<const double> scores, const std::vector<bool>& positive) {
    require(scores.size() == positive.size(), "auc: score and label counts differ");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (positive[order[t]]) {
                positive_rank_sum += midrank;
                ++positives;
            }
        }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    require(positives > 0 && negatives > 0, "auc needs both positive and negative examples");
    const double p = static_cast<double>(positives);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

MetricReport evaluate_classifier(const SparsifiedDatabase& ref, const PrototypeDatabase& test, std::size_t k,
                                 unsigned threads) {
    require(k >= 1, "k must be positive");
    if (ref.empty()) {
        throw EmptySetError("cannot evaluate a classifier backed by an empty database");
    }
    require(test.size() > 0, "evaluation needs a non-empty test set");
    require(test.dimension() == ref.parent().dimension(), "test and reference dimensions differ");

    const auto& parent = ref.parent();
    const bool binary = test.class_registry().size() == 2;
    const ClassCode positive_class = binary ? test.class_registry().back() : 0;

    const KnnIndex index(parent, ref.selected());
    std::vector<ClassCode> predicted(test.size());
    std::vector<double> positive_share(test.size(), 0.0);
    parallel_for(test.size(), threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        NeighborCache cache(index, k);
        for (std::size_t i = begin; i < end; ++i) {
            const auto& neighbors = cache.lookup(test.features(static_cast<PrototypeId>(i)));
            predicted[i] = majority_class(parent, neighbors);
            if (binary) {
                std::size_t hits = 0;
                for (const auto& n : neighbors) {
                    hits += parent.class_of(n.id) == positive_class;
                }
                positive_share[i] = static_cast<double>(hits) / static_cast<double>(neighbors.size());
            }
        }
    });

    MetricReport r;
    r.db_size = ref.size();
    r.test_size = test.size();
    r.classes = test.class_registry();
    r.classes.insert(r.classes.end(), predicted.begin(), predicted.end());
    std::sort(r.classes.begin(), r.classes.end());
    r.classes.erase(std::unique(r.classes.begin(), r.classes.end()), r.classes.end());
    const std::size_t n = r.classes.size();
    auto index_of = [&](ClassCode c) {
        return static_cast<std::size_t>(std::lower_bound(r.classes.begin(), r.classes.end(), c) - r.classes.begin());
    };

    r.confusion.assign(n, std::vector<std::size_t>(n, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const ClassCode truth = test.class_of(static_cast<PrototypeId>(i));
        ++r.confusion[index_of(truth)][index_of(predicted[i])];
        correct += truth == predicted[i];
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());

    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t row = 0;
        std::size_t column = 0;
        for (std::size_t d = 0; d < n; ++d) {
            row += r.confusion[c][d];
            column += r.confusion[d][c];
        }
        const auto hit = static_cast<double>(r.confusion[c][c]);
        r.recall.push_back(row == 0 ? kNaN : hit / static_cast<double>(row));
        r.precision.push_back(column == 0 ? kNaN : hit / static_cast<double>(column));
        if (row > 0) {
            recall_sum += r.recall.back();
            ++present;
        }
    }
    r.macro_accuracy = recall_sum / static_cast<double>(present);

    if (binary) {
        std::vector<bool> is_positive(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            is_positive[i] = test.class_of(static_cast<PrototypeId>(i)) == positive_class;
        }
        r.auc = auc_rank_sum(positive_share, is_positive);
        r.sensitivity = r.recall[index_of(positive_class)];
        r.specificity = r.recall[index_of(test.class_registry().front())];
    }
    return r;
}

ValidationMetric parse_validation_metric(std::string_view name) {
    if (name == "auto") {
        return ValidationMetric::automatic;
    }
    if (name == "auc") {
        return ValidationMetric::auc;
    }
    if (name == "accuracy") {
        return ValidationMetric::accuracy;
    }
    if (name == "macro_accuracy") {
        return ValidationMetric::macro_accuracy;
    }
    throw ConfigError("unknown validation metric '" + std::string(name) + "'");
}

std::string_view validation_metric_name(ValidationMetric metric) {
    switch (metric) {
        case ValidationMetric::automatic:
            return "auto";
        case ValidationMetric::auc:
            return "auc";
        case ValidationMetric::accuracy:
            return "accuracy";
        case ValidationMetric::macro_accuracy:
            return "macro_accuracy";
    }
    return "auto";
}

ValidationMetric resolve_metric(ValidationMetric metric, const PrototypeDatabase& validation) {
    if (validation.empty()) {
        throw ConfigError("validation set is empty");
    }
    const std::size_t classes = validation.class_registry().size();
    if (metric == ValidationMetric::automatic) {
        metric = classes == 2 ? ValidationMetric::auc : ValidationMetric::macro_accuracy;
    }
    if (metric == ValidationMetric::auc && classes != 2) {
        throw ConfigError("AUC needs a validation set with exactly two classes, found " + std::to_string(classes));
    }
    if (classes < 2) {
        throw ConfigError("validation set has a single class; the metric cannot discriminate");
    }
    return metric;
}

double metric_value(const MetricReport& report, ValidationMetric metric) {
    switch (metric) {
        case ValidationMetric::auc:
            if (!report.auc) {
                throw ConfigError("AUC is undefined for a non-binary test set");
            }
            return *report.auc;
        case ValidationMetric::accuracy:
            return report.accuracy;
        case ValidationMetric::macro_accuracy:
            return report.macro_accuracy;
        case ValidationMetric::automatic:
            return report.auc ? *report.auc : report.macro_accuracy;
    }
    return report.accuracy;
}

void write_metric_report(const MetricReport& r, std::ostream& out, std::string_view prefix) {
    const std::string p(prefix);
    out << p << "db_size = " << r.db_size << '\n';
    out << p << "test_size = " << r.test_size << '\n';
    out << p << "accuracy = " << format_double(r.accuracy) << '\n';
    out << p << "macro_accuracy = " << format_double(r.macro_accuracy) << '\n';
    out << p << "auc = " << optional_text(r.auc) << '\n';
    out << p << "sensitivity = " << optional_text(r.sensitivity) << '\n';
    out << p << "specificity = " << optional_text(r.specificity) << '\n';
    for (std::size_t c = 0; c < r.classes.size(); ++c) {
        const std::string key = p + "class." + std::to_string(r.classes[c]);
        out << key << ".precision = " << number_text(r.precision[c]) << '\n';
        out << key << ".recall = " << number_text(r.recall[c]) << '\n';
        out << key << ".confusion =";
        for (std::size_t d = 0; d < r.classes.size(); ++d) {
            out << (d == 0 ? " " : ",") << r.confusion[c][d];
        }
        out << '\n';
    }
}

std::string metric_summary_header() { return "label,db_size,test_size,accuracy,macro_accuracy,auc,sensitivity,specificity"; }

std::string metric_summary_row(std::string_view label, const MetricReport& r) {
    return std::string(label) + ',' + std::to_string(r.db_size) + ',' + std::to_string(r.test_size) + ',' +
           format_double(r.accuracy) + ',' + format_double(r.macro_accuracy) + ',' + optional_text(r.auc) + ',' +
           optional_text(r.sensitivity) + ',' + optional_text(r.specificity);
}

}  // namespace protosel
