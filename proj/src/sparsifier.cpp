#include "protosel/sparsifier.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "protosel/error.hpp"

namespace protosel {

SparsificationPlan SparsificationPlan::uniform(std::size_t bins, double value) {
    return SparsificationPlan{std::vector<double>(bins, value)};
}

std::size_t retained_count(double fraction, std::size_t size) {
    const double wanted = std::round(fraction * static_cast<double>(size));
    if (!(wanted > 0.0)) {
        return 0;
    }
    return std::min(size, static_cast<std::size_t>(wanted));
}

SparsifiedDatabase SparsifiedDatabase::whole(const PrototypeDatabase& db) {
    SparsifiedDatabase s;
    s.parent_ = &db;
    s.selected_.resize(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) {
        s.selected_[i] = static_cast<PrototypeId>(i);
    }
    s.num_bins_ = 1;
    s.retained_.assign(db.class_registry().size(), 0);
    for (const ClassCode c : db.classes()) {
        ++s.retained_[db.class_index(c)];
    }
    s.original_ = s.retained_;
    return s;
}

SparsifiedDatabase sparsify(const PrototypeDatabase& db, const RankHistogram& hist, const SparsificationPlan& plan) {
    require(plan.size() == hist.num_bins(), "plan length must equal the histogram bin count");
    require(hist.num_prototypes() == db.size(), "histogram was built for a different database");
    for (const double f : plan.fractions) {
        require(f >= 0.0 && f <= 1.0, "plan fractions must lie in [0, 1]");
    }
    SparsifiedDatabase s;
    s.parent_ = &db;
    s.num_bins_ = hist.num_bins();
    s.retained_.assign(hist.num_classes() * hist.num_bins(), 0);
    s.original_.assign(hist.num_classes() * hist.num_bins(), 0);
    for (std::size_t c = 0; c < hist.num_classes(); ++c) {
        for (std::size_t b = 0; b < hist.num_bins(); ++b) {
            const auto& members = hist.members(c, b);
            const std::size_t keep = retained_count(plan.fractions[b], members.size());
            s.selected_.insert(s.selected_.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(keep));
            s.retained_[c * s.num_bins_ + b] = keep;
            s.original_[c * s.num_bins_ + b] = members.size();
        }
    }
    std::sort(s.selected_.begin(), s.selected_.end());
    return s;
}

ReductionReport reduction_report(const SparsifiedDatabase& s) {
    ReductionReport r;
    r.retained_per_bin.assign(s.num_bins(), 0);
    r.original_per_bin.assign(s.num_bins(), 0);
    for (std::size_t c = 0; c < s.num_classes(); ++c) {
        for (std::size_t b = 0; b < s.num_bins(); ++b) {
            r.retained_per_bin[b] += s.retained(c, b);
            r.original_per_bin[b] += s.original(c, b);
        }
    }
    for (std::size_t b = 0; b < s.num_bins(); ++b) {
        r.retention_per_bin.push_back(r.original_per_bin[b] == 0
                                          ? std::numeric_limits<double>::quiet_NaN()
                                          : static_cast<double>(r.retained_per_bin[b]) /
                                                static_cast<double>(r.original_per_bin[b]));
    }
    r.retained_total = s.size();
    r.original_total = s.parent().size();
    r.retention_total =
        r.original_total == 0 ? 0.0 : static_cast<double>(r.retained_total) / static_cast<double>(r.original_total);
    return r;
}

void write_reduction_report(const ReductionReport& report, std::ostream& out) {
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::fixed << std::setprecision(4);
    out << "bins = " << report.retention_per_bin.size() << '\n';
    for (std::size_t b = 0; b < report.retention_per_bin.size(); ++b) {
        out << "bin." << b << ".original = " << report.original_per_bin[b] << '\n';
        out << "bin." << b << ".retained = " << report.retained_per_bin[b] << '\n';
        out << "bin." << b << ".retention_percent = ";
        if (std::isnan(report.retention_per_bin[b])) {
            out << "n/a\n";
        } else {
            out << 100.0 * report.retention_per_bin[b] << '\n';
        }
    }
    out << "total.original = " << report.original_total << '\n';
    out << "total.retained = " << report.retained_total << '\n';
    out << "total.retention_percent = " << 100.0 * report.retention_total << '\n';
    out << "total.reduction_percent = " << 100.0 * (1.0 - report.retention_total) << '\n';
    out.flags(flags);
    out.precision(precision);
}

}  // namespace protosel
