#include "protosel/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "protosel/config.hpp"
#include "protosel/datagen.hpp"
#include "protosel/energy.hpp"
#include "protosel/error.hpp"
#include "protosel/evaluation.hpp"
#include "protosel/format.hpp"
#include "protosel/optimizer.hpp"
#include "protosel/prototype_store.hpp"
#include "protosel/ranking.hpp"
#include "protosel/sparsifier.hpp"

namespace protosel {

namespace fs = std::filesystem;

namespace {

struct Dataset {
    PrototypeDatabase full;
    DataSplit parts;
};

struct Ranked {
    Dataset data;
    RankHistogram hist;
};

Dataset load_dataset(const RunConfig& cfg) {
    Dataset d;
    if (!cfg.input.empty()) {
        d.full = read_database(cfg.input);
    } else if (cfg.generator == "rays") {
        d.full = gen_rays(cfg.ray_spec());
    } else {
        d.full = gen_blobs(cfg.blob_spec());
    }
    d.parts = split_database(d.full, cfg.split_train, cfg.split_validate, cfg.split_test,
                             derive_seed(cfg.seed, SeedStream::split));
    if (d.parts.train.empty()) {
        throw InsufficientDataError("the training split is empty");
    }
    return d;
}

Ranked rank_training(const RunConfig& cfg) {
    Ranked r{load_dataset(cfg), {}};
    const auto scores = rank_all(r.data.parts.train, cfg.k, cfg.threads);
    r.hist = build_histogram(r.data.parts.train, scores, cfg.bins);
    return r;
}

fs::path output_path(const RunConfig& cfg, const char* name) { return fs::path(cfg.output_dir) / name; }

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw LoadError("cannot write '" + path.string() + "'");
    }
    writer(out);
    out.flush();
    if (!out) {
        throw LoadError("failed while writing '" + path.string() + "'");
    }
}

void write_header(std::ostream& out, const RunConfig& cfg) { out << "# seed = " << cfg.seed << '\n'; }

void write_plan(const fs::path& path, const RunConfig& cfg, const std::vector<double>& plan, const EnergyWeights& w) {
    write_file(path, [&](std::ostream& out) {
        write_header(out, cfg);
        out << "bins = " << plan.size() << '\n';
        out << "fractions = " << format_list(plan) << '\n';
        out << "alpha = " << format_double(w.alpha) << '\n';
        out << "beta = " << format_double(w.beta) << '\n';
    });
}

std::vector<double> resolve_plan(const RunConfig& cfg, const std::string& plan_file) {
    std::vector<double> plan;
    if (!plan_file.empty()) {
        plan = read_plan(plan_file);
    } else if (!cfg.plan.empty()) {
        plan = cfg.plan;
    } else {
        plan = read_plan(output_path(cfg, "plan.txt"));
    }
    if (plan.size() != cfg.bins) {
        throw ConfigError("plan has " + std::to_string(plan.size()) + " fractions but bins = " +
                          std::to_string(cfg.bins));
    }
    for (const double f : plan) {
        if (!(f >= 0.0 && f <= 1.0)) {
            throw ConfigError("plan fractions must lie in [0, 1]");
        }
    }
    return plan;
}

void prepare(const RunConfig& cfg) {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (ec || !fs::is_directory(cfg.output_dir)) {
        throw ConfigError("cannot create output directory '" + cfg.output_dir + "'");
    }
}

void cmd_ingest(const RunConfig& cfg, std::ostream& out) {
    if (cfg.input.empty()) {
        throw ConfigError("ingest needs 'input'");
    }
    const auto db = read_database(cfg.input);
    save(db, output_path(cfg, "database.pdb"));
    write_file(output_path(cfg, "ingest.txt"), [&](std::ostream& o) {
        write_header(o, cfg);
        o << "prototypes = " << db.size() << '\n';
        o << "dimension = " << db.dimension() << '\n';
        o << "classes = " << db.class_registry().size() << '\n';
    });
    out << "ingested " << db.size() << " prototypes of dimension " << db.dimension() << '\n';
}

void cmd_gen(const RunConfig& cfg, std::ostream& out) {
    if (cfg.generator.empty()) {
        throw ConfigError("gen needs 'generator'");
    }
    const auto db = cfg.generator == "rays" ? gen_rays(cfg.ray_spec()) : gen_blobs(cfg.blob_spec());
    write_file(output_path(cfg, "dataset.csv"), [&](std::ostream& o) { write_csv(db, o); });
    out << "generated " << db.size() << " prototypes\n";
}

void write_rank_artifacts(const RunConfig& cfg, const Ranked& r) {
    write_file(output_path(cfg, "ranks.csv"), [&](std::ostream& o) { write_rank_csv(r.data.parts.train, r.hist, o); });
    write_file(output_path(cfg, "histogram.txt"), [&](std::ostream& o) {
        write_header(o, cfg);
        write_histogram_summary(r.hist, o);
    });
}

void cmd_rank(const RunConfig& cfg, std::ostream& out) {
    const auto r = rank_training(cfg);
    write_rank_artifacts(cfg, r);
    out << "ranked " << r.data.parts.train.size() << " training prototypes into " << cfg.bins << " bins\n";
}

void write_reduction(const RunConfig& cfg, const SparsifiedDatabase& s) {
    write_file(output_path(cfg, "reduction.txt"), [&](std::ostream& o) {
        write_header(o, cfg);
        write_reduction_report(reduction_report(s), o);
    });
}

void cmd_sparsify(const RunConfig& cfg, const std::string& plan_file, std::ostream& out) {
    const auto r = rank_training(cfg);
    const auto plan = resolve_plan(cfg, plan_file);
    const auto s = sparsify(r.data.parts.train, r.hist, SparsificationPlan{plan});
    write_file(output_path(cfg, "sparse.csv"), [&](std::ostream& o) { write_csv(r.data.parts.train, s.selected(), o); });
    write_reduction(cfg, s);
    out << "kept " << s.size() << " of " << r.data.parts.train.size() << " prototypes\n";
}

void cmd_optimize(const RunConfig& cfg, bool resume, std::ostream& out) {
    const auto r = rank_training(cfg);
    write_rank_artifacts(cfg, r);
    const auto& train = r.data.parts.train;
    const EnergyEvaluator evaluator(train, r.hist, cfg.k, cfg.perturbation(), cfg.threads);

    const auto trace_path = output_path(cfg, "trace.log");
    std::optional<TraceReplay> replay;
    if (resume && fs::exists(trace_path)) {
        std::ifstream in(trace_path);
        replay.emplace(read_trace(in));
    }
    std::ofstream trace_out(trace_path, std::ios::binary | std::ios::trunc);
    if (!trace_out) {
        throw LoadError("cannot write '" + trace_path.string() + "'");
    }
    write_header(trace_out, cfg);
    const auto on_record = [&](const TraceRecord& rec) { trace_out << format_trace_record(rec) << '\n' << std::flush; };

    std::vector<double> plan;
    EnergyReport energy;
    EnergyWeights weights = cfg.weights();
    std::size_t evaluations = 0;
    bool exhausted = false;
    std::optional<OuterResult> outer;
    if (cfg.mode == "fixed") {
        SearchHooks hooks{0, replay ? &*replay : nullptr, on_record};
        const auto t = minimize_inner(evaluator, weights, cfg.optimizer(), hooks);
        plan = t.best_plan;
        energy = t.best;
        evaluations = t.records.size();
        exhausted = t.budget_exhausted;
    } else {
        if (r.data.parts.validate.empty()) {
            throw ConfigError("outer mode needs a non-empty validation split");
        }
        outer = optimize_outer(evaluator, r.data.parts.validate, cfg.outer(), cfg.optimizer(),
                               replay ? &*replay : nullptr, on_record);
        const auto& best = outer->best_cell();
        plan = best.plan;
        energy = best.energy;
        weights = {best.alpha, best.beta};
        evaluations = outer->trace.records.size();
        exhausted = outer->trace.budget_exhausted;
    }
    trace_out.close();

    const auto s = sparsify(train, r.hist, SparsificationPlan{plan});
    const auto reduction = reduction_report(s);
    write_plan(output_path(cfg, "plan.txt"), cfg, plan, weights);
    write_file(output_path(cfg, "energy.txt"), [&](std::ostream& o) {
        write_header(o, cfg);
        write_energy_report(energy, o);
    });
    write_reduction(cfg, s);
    write_file(output_path(cfg, "optimize.txt"), [&](std::ostream& o) {
        write_header(o, cfg);
        o << "mode = " << cfg.mode << '\n';
        o << "alpha = " << format_double(weights.alpha) << '\n';
        o << "beta = " << format_double(weights.beta) << '\n';
        o << "fractions = " << format_list(plan) << '\n';
        o << "evaluations = " << evaluations << '\n';
        o << "budget_exhausted = " << (exhausted ? 1 : 0) << '\n';
        o << "original_size = " << train.size() << '\n';
        o << "db_size = " << s.size() << '\n';
        o << "reduction_percent = " << std::fixed << std::setprecision(4) << 100.0 * (1.0 - reduction.retention_total) << '\n';
        o << std::defaultfloat;
        if (outer) {
            o << "validation_metric = " << validation_metric_name(outer->metric) << '\n';
            o << "validation_score = " << format_double(outer->best_cell().score) << '\n';
            for (const auto& c : outer->cells) {
                o << "cell." << c.cell << " = alpha=" << format_double(c.alpha) << " beta=" << format_double(c.beta)
                  << " db_size=" << c.energy.db_size
                  << " score=" << (c.validation ? format_double(c.score) : std::string("n/a")) << '\n';
            }
        }
    });
    if (replay) {
        out << "replayed " << replay->replayed() << " recorded evaluations\n";
    }
    out << "kept " << s.size() << " of " << train.size() << " prototypes (alpha " << format_double(weights.alpha)
        << ", beta " << format_double(weights.beta) << ")" << (exhausted ? ", budget exhausted" : "") << '\n';
}

struct Comparison {
    MetricReport full;
    MetricReport sparse;
    ReductionReport reduction;
};

Comparison compare(const RunConfig& cfg, const std::string& plan_file) {
    const auto r = rank_training(cfg);
    if (r.data.parts.test.empty()) {
        throw ConfigError("evaluation needs a non-empty test split");
    }
    const auto plan = resolve_plan(cfg, plan_file);
    const auto& train = r.data.parts.train;
    const auto s = sparsify(train, r.hist, SparsificationPlan{plan});
    if (s.empty()) {
        throw EmptySetError("the plan keeps no prototypes; nothing to evaluate");
    }
    return {evaluate_classifier(SparsifiedDatabase::whole(train), r.data.parts.test, cfg.k, cfg.threads),
            evaluate_classifier(s, r.data.parts.test, cfg.k, cfg.threads), reduction_report(s)};
}

void cmd_evaluate(const RunConfig& cfg, const std::string& plan_file, std::ostream& out) {
    const auto c = compare(cfg, plan_file);
    write_file(output_path(cfg, "metrics.txt"), [&](std::ostream& o) {
        write_header(o, cfg);
        write_metric_report(c.full, o, "full.");
        write_metric_report(c.sparse, o, "sparse.");
    });
    write_file(output_path(cfg, "metrics_table.csv"), [&](std::ostream& o) {
        o << metric_summary_header() << '\n';
        o << metric_summary_row("full", c.full) << '\n';
        o << metric_summary_row("sparse", c.sparse) << '\n';
    });
    out << "test accuracy " << format_double(c.full.accuracy) << " (full, " << c.full.db_size << ") vs "
        << format_double(c.sparse.accuracy) << " (sparse, " << c.sparse.db_size << ")\n";
}

void cmd_report(const RunConfig& cfg, const std::string& plan_file, std::ostream& out) {
    const auto c = compare(cfg, plan_file);
    std::ostringstream text;
    write_header(text, cfg);
    auto cell = [](const std::optional<double>& v) {
        std::ostringstream s;
        if (v) {
            s << std::fixed << std::setprecision(4) << *v;
        } else {
            s << "n/a";
        }
        return s.str();
    };
    text << std::left << std::setw(12) << "database" << std::setw(10) << "size" << std::setw(13) << "sensitivity"
         << std::setw(13) << "specificity" << std::setw(10) << "accuracy" << std::setw(8) << "auc" << '\n';
    for (const auto& [label, m] : {std::pair<const char*, const MetricReport*>{"full", &c.full}, {"sparse", &c.sparse}}) {
        text << std::setw(12) << label << std::setw(10) << m->db_size << std::setw(13) << cell(m->sensitivity)
             << std::setw(13) << cell(m->specificity) << std::setw(10) << cell(m->accuracy) << std::setw(8)
             << cell(m->auc) << '\n';
    }
    text << "reduction = " << std::fixed << std::setprecision(4) << 100.0 * (1.0 - c.reduction.retention_total) << "%\n";
    write_file(output_path(cfg, "report.txt"), [&](std::ostream& o) { o << text.str(); });
    out << text.str();
}

}  // namespace

std::vector<double> read_plan(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open plan file '" + path.string() + "'");
    }
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (line.empty() || line.front() == '#' || eq == std::string::npos) {
            continue;
        }
        std::string key = line.substr(0, eq);
        key.erase(key.find_last_not_of(" \t") + 1);
        if (key == "fractions") {
            std::string value = line.substr(eq + 1);
            value.erase(0, value.find_first_not_of(" \t"));
            if (!value.empty() && value.back() == '\r') {
                value.pop_back();
            }
            try {
                return parse_list(value, "plan fractions");
            } catch (const FormatError& e) {
                throw ConfigError(e.what());
            }
        }
    }
    throw ConfigError("plan file '" + path.string() + "' has no 'fractions' entry");
}

int exit_code_for_current_exception(std::ostream& err) {
    try {
        throw;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return exit_usage;
    } catch (const EmptySetError& e) {
        err << "empty set: " << e.what() << '\n';
        return exit_data;
    } catch (const Error& e) {
        err << "data error: " << e.what() << '\n';
        return exit_data;
    } catch (const ContractViolation& e) {
        err << "internal error: " << e.what() << '\n';
        return exit_internal;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Shrinks a nearest-neighbor prototype database by energy-minimizing selection."};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string plan_file;
    bool resume = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "Configuration file (key = value lines)");
        sub->add_option("--set", overrides, "Override one configuration key (key=value), repeatable");
    };
    auto* ingest = app.add_subcommand("ingest", "Validate a prototype CSV and store it as a binary database");
    auto* gen = app.add_subcommand("gen", "Write a synthetic dataset as CSV");
    auto* rank = app.add_subcommand("rank", "Rank training prototypes and bin them per class");
    auto* sparsify_cmd = app.add_subcommand("sparsify", "Apply a plan and write the reduced database");
    auto* optimize = app.add_subcommand("optimize", "Search for the energy-minimizing plan");
    auto* evaluate = app.add_subcommand("evaluate", "Compare test metrics of the full and reduced databases");
    auto* report = app.add_subcommand("report", "Print a full-versus-reduced summary table");
    for (auto* sub : {ingest, gen, rank, sparsify_cmd, optimize, evaluate, report}) {
        add_common(sub);
    }
    for (auto* sub : {sparsify_cmd, evaluate, report}) {
        sub->add_option("--plan", plan_file, "Plan file (defaults to plan.txt in the output directory)");
    }
    optimize->add_flag("--resume", resume, "Replay matching evaluations from an existing trace.log");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream help;
        std::ostringstream diagnostics;
        const int code = app.exit(e, help, diagnostics);
        out << help.str();
        err << diagnostics.str();
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
        for (const auto& o : overrides) {
            apply_override(cfg, o);
        }
        prepare(cfg);
        write_file(output_path(cfg, "config.txt"), [&](std::ostream& o) { write_config(cfg, o); });

        if (ingest->parsed()) {
            cmd_ingest(cfg, out);
        } else if (gen->parsed()) {
            cmd_gen(cfg, out);
        } else if (rank->parsed()) {
            cmd_rank(cfg, out);
        } else if (sparsify_cmd->parsed()) {
            cmd_sparsify(cfg, plan_file, out);
        } else if (optimize->parsed()) {
            cmd_optimize(cfg, resume, out);
        } else if (evaluate->parsed()) {
            cmd_evaluate(cfg, plan_file, out);
        } else if (report->parsed()) {
            cmd_report(cfg, plan_file, out);
        }
    } catch (...) {
        return exit_code_for_current_exception(err);
    }
    return exit_ok;
}

}  // namespace protosel
