#ifndef PROTOSEL_EVALUATION_HPP
#define PROTOSEL_EVALUATION_HPP

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "protosel/prototype_store.hpp"
#include "protosel/sparsifier.hpp"

namespace protosel {

struct MetricReport {
    /// Sorted union of true and predicted class codes; indexes every per-class vector.
    std::vector<ClassCode> classes;
    /// confusion[true][predicted].
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<double> precision;  ///< NaN when a class is never predicted.
    std::vector<double> recall;     ///< NaN when a class never occurs in the test set.
    double accuracy = 0.0;
    /// Mean recall over classes present in the test set.
    double macro_accuracy = 0.0;

    /// Binary tasks only (exactly two classes in the test set, the larger code positive).
    std::optional<double> auc;
    std::optional<double> sensitivity;
    std::optional<double> specificity;

    std::size_t db_size = 0;
    std::size_t test_size = 0;
};

/**
 * Classifies every test prototype against `ref` with a K-nearest majority vote (no exclusions).
 * For binary test sets the AUC is the rank-sum statistic over each query's share of positive-class
 * votes. Throws EmptySetError if `ref` is empty and ContractViolation on a dimension mismatch.
 */
MetricReport evaluate_classifier(const SparsifiedDatabase& ref, const PrototypeDatabase& test, std::size_t k,
                                 unsigned threads = 1);

/// Mann-Whitney AUC with midranks for ties. Requires at least one positive and one negative.
double auc_rank_sum(std::span<const double> scores, const std::vector<bool>& positive);

enum class ValidationMetric { automatic, auc, accuracy, macro_accuracy };

ValidationMetric parse_validation_metric(std::string_view name);
std::string_view validation_metric_name(ValidationMetric metric);

/// Resolves `automatic` to AUC for binary sets and macro accuracy otherwise.
ValidationMetric resolve_metric(ValidationMetric metric, const PrototypeDatabase& validation);

/// Throws ConfigError when the metric is undefined for this report (e.g. AUC on one class).
double metric_value(const MetricReport& report, ValidationMetric metric);

/// `key = value` lines, each key prefixed with `prefix`.
void write_metric_report(const MetricReport& report, std::ostream& out, std::string_view prefix = "");

/// Header and row for a one-line machine-readable summary table.
std::string metric_summary_header();
std::string metric_summary_row(std::string_view label, const MetricReport& report);

}  // namespace protosel

#endif
