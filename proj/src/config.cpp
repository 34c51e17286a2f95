#include "protosel/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>

#include "protosel/error.hpp"
#include "protosel/format.hpp"

namespace protosel {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::string describe(std::string_view key) { return "configuration key '" + std::string(key) + "'"; }

template <typename T>
T to_unsigned(std::string_view key, std::string_view value) {
    T out{};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
        throw ConfigError(describe(key) + " expects a non-negative integer, got '" + std::string(value) + "'");
    }
    return out;
}

double to_double(std::string_view key, std::string_view value) {
    try {
        return parse_double_strict(value, describe(key));
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
}

std::vector<double> to_list(std::string_view key, std::string_view value) {
    try {
        return parse_list(value, describe(key));
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
}

std::vector<std::size_t> to_index_list(std::string_view key, std::string_view value) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= value.size()) {
        auto comma = value.find(',', start);
        if (comma == std::string_view::npos) {
            comma = value.size();
        }
        out.push_back(to_unsigned<std::size_t>(key, trim(value.substr(start, comma - start))));
        start = comma + 1;
    }
    return out;
}

std::pair<double, double> to_range(std::string_view key, std::string_view value) {
    const auto v = to_list(key, value);
    if (v.size() == 1) {
        return {v[0], v[0]};
    }
    if (v.size() != 2) {
        throw ConfigError(describe(key) + " expects 'lo,hi'");
    }
    return {v[0], v[1]};
}

std::string join_indices(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i == 0 ? "" : ",") + std::to_string(v[i]);
    }
    return out;
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"input", [](RunConfig& c, auto, auto v) { c.input = std::string(v); }},
        {"generator",
         [](RunConfig& c, auto k, auto v) {
             if (!v.empty() && v != "rays" && v != "blobs") {
                 throw ConfigError(describe(k) + " must be 'rays' or 'blobs'");
             }
             c.generator = std::string(v);
         }},
        {"gen.length", [](RunConfig& c, auto k, auto v) { c.gen_length = to_unsigned<std::size_t>(k, v); }},
        {"gen.boundaries", [](RunConfig& c, auto k, auto v) { c.gen_boundaries = to_index_list(k, v); }},
        {"gen.flip", [](RunConfig& c, auto k, auto v) { c.gen_flip = to_double(k, v); }},
        {"gen.samples", [](RunConfig& c, auto k, auto v) { c.gen_samples = to_unsigned<std::size_t>(k, v); }},
        {"gen.means",
         [](RunConfig& c, auto k, auto v) {
             c.gen_means.clear();
             std::size_t start = 0;
             while (start <= v.size()) {
                 auto semi = v.find(';', start);
                 if (semi == std::string_view::npos) {
                     semi = v.size();
                 }
                 c.gen_means.push_back(to_list(k, trim(v.substr(start, semi - start))));
                 start = semi + 1;
             }
         }},
        {"gen.stds", [](RunConfig& c, auto k, auto v) { c.gen_stds = to_list(k, v); }},
        {"output_dir", [](RunConfig& c, auto, auto v) { c.output_dir = std::string(v); }},
        {"seed", [](RunConfig& c, auto k, auto v) { c.seed = to_unsigned<std::uint64_t>(k, v); }},
        {"split",
         [](RunConfig& c, auto k, auto v) {
             const auto f = to_list(k, v);
             if (f.size() != 3) {
                 throw ConfigError(describe(k) + " expects 'train,validate,test'");
             }
             c.split_train = f[0];
             c.split_validate = f[1];
             c.split_test = f[2];
         }},
        {"k", [](RunConfig& c, auto k, auto v) { c.k = to_unsigned<std::size_t>(k, v); }},
        {"bins", [](RunConfig& c, auto k, auto v) { c.bins = to_unsigned<std::size_t>(k, v); }},
        {"epsilon", [](RunConfig& c, auto k, auto v) { c.epsilon = to_double(k, v); }},
        {"perturb_dims", [](RunConfig& c, auto k, auto v) { c.perturb_dims = to_unsigned<std::size_t>(k, v); }},
        {"mode",
         [](RunConfig& c, auto k, auto v) {
             if (v != "fixed" && v != "outer") {
                 throw ConfigError(describe(k) + " must be 'fixed' or 'outer'");
             }
             c.mode = std::string(v);
         }},
        {"alpha", [](RunConfig& c, auto k, auto v) { c.alpha = to_double(k, v); }},
        {"beta", [](RunConfig& c, auto k, auto v) { c.beta = to_double(k, v); }},
        {"alpha_range", [](RunConfig& c, auto k, auto v) { std::tie(c.alpha_lo, c.alpha_hi) = to_range(k, v); }},
        {"beta_range", [](RunConfig& c, auto k, auto v) { std::tie(c.beta_lo, c.beta_hi) = to_range(k, v); }},
        {"outer_grid", [](RunConfig& c, auto k, auto v) { c.outer_grid = to_unsigned<std::size_t>(k, v); }},
        {"outer_budget", [](RunConfig& c, auto k, auto v) { c.outer_budget = to_unsigned<std::size_t>(k, v); }},
        {"metric", [](RunConfig& c, auto, auto v) { c.metric = parse_validation_metric(v); }},
        {"max_evaluations",
         [](RunConfig& c, auto k, auto v) { c.max_evaluations = to_unsigned<std::size_t>(k, v); }},
        {"initial_step", [](RunConfig& c, auto k, auto v) { c.initial_step = to_double(k, v); }},
        {"min_step", [](RunConfig& c, auto k, auto v) { c.min_step = to_double(k, v); }},
        {"explore_fraction", [](RunConfig& c, auto k, auto v) { c.explore_fraction = to_double(k, v); }},
        {"plan", [](RunConfig& c, auto k, auto v) { c.plan = v.empty() ? std::vector<double>{} : to_list(k, v); }},
        {"threads", [](RunConfig& c, auto k, auto v) { c.threads = to_unsigned<unsigned>(k, v); }},
    };
    return table;
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
    key = trim(key);
    const auto it = setters().find(key);
    if (it == setters().end()) {
        throw ConfigError("unknown configuration key '" + std::string(key) + "'");
    }
    it->second(cfg, key, trim(value));
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) {
        throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
    }
    apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunConfig parse_config(std::istream& in, RunConfig base) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::string_view text = line;
        if (const auto hash = text.find('#'); hash != std::string_view::npos) {
            text = text.substr(0, hash);
        }
        text = trim(text);
        if (text.empty()) {
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
        }
        try {
            apply_setting(base, text.substr(0, eq), text.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(number) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open configuration file '" + path.string() + "'");
    }
    return parse_config(in);
}

void write_config(const RunConfig& c, std::ostream& out) {
    std::string means;
    for (std::size_t i = 0; i < c.gen_means.size(); ++i) {
        means += (i == 0 ? "" : ";") + format_list(c.gen_means[i]);
    }
    out << "# seed = " << c.seed << '\n'
        << "input = " << c.input << '\n'
        << "generator = " << c.generator << '\n'
        << "gen.length = " << c.gen_length << '\n'
        << "gen.boundaries = " << join_indices(c.gen_boundaries) << '\n'
        << "gen.flip = " << format_double(c.gen_flip) << '\n'
        << "gen.samples = " << c.gen_samples << '\n'
        << "gen.means = " << means << '\n'
        << "gen.stds = " << format_list(c.gen_stds) << '\n'
        << "output_dir = " << c.output_dir << '\n'
        << "seed = " << c.seed << '\n'
        << "split = " << format_double(c.split_train) << ',' << format_double(c.split_validate) << ','
        << format_double(c.split_test) << '\n'
        << "k = " << c.k << '\n'
        << "bins = " << c.bins << '\n'
        << "epsilon = " << format_double(c.epsilon) << '\n'
        << "perturb_dims = " << c.perturb_dims << '\n'
        << "mode = " << c.mode << '\n'
        << "alpha = " << format_double(c.alpha) << '\n'
        << "beta = " << format_double(c.beta) << '\n'
        << "alpha_range = " << format_double(c.alpha_lo) << ',' << format_double(c.alpha_hi) << '\n'
        << "beta_range = " << format_double(c.beta_lo) << ',' << format_double(c.beta_hi) << '\n'
        << "outer_grid = " << c.outer_grid << '\n'
        << "outer_budget = " << c.outer_budget << '\n'
        << "metric = " << validation_metric_name(c.metric) << '\n'
        << "max_evaluations = " << c.max_evaluations << '\n'
        << "initial_step = " << format_double(c.initial_step) << '\n'
        << "min_step = " << format_double(c.min_step) << '\n'
        << "explore_fraction = " << format_double(c.explore_fraction) << '\n'
        << "plan = " << format_list(c.plan) << '\n'
        << "threads = " << c.threads << '\n';
}

std::uint64_t derive_seed(std::uint64_t root, SeedStream stream) {
    // splitmix64 finalizer over the root offset by the stream id.
    std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(stream);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void RunConfig::validate() const {
    if (input.empty() && generator.empty()) {
        throw ConfigError("set either 'input' or 'generator'");
    }
    if (!input.empty() && !std::filesystem::is_regular_file(input)) {
        throw ConfigError("input file '" + input + "' does not exist");
    }
    if (input.empty()) {
        if (generator == "rays") {
            ray_spec().validate();
        } else {
            blob_spec().validate();
        }
    }
    if (output_dir.empty()) {
        throw ConfigError("output_dir must not be empty");
    }
    if (mode != "fixed" && mode != "outer") {
        throw ConfigError("mode must be 'fixed' or 'outer', got '" + mode + "'");
    }
    for (const double f : {split_train, split_validate, split_test}) {
        if (!(f >= 0.0 && f <= 1.0)) {
            throw ConfigError("split fractions must lie in [0, 1]");
        }
    }
    if (std::abs(split_train + split_validate + split_test - 1.0) > 1e-9) {
        throw ConfigError("split fractions must sum to 1");
    }
    if (k == 0) {
        throw ConfigError("k must be positive");
    }
    if (bins == 0) {
        throw ConfigError("bins must be positive");
    }
    if (!(epsilon > 0.0 && std::isfinite(epsilon))) {
        throw ConfigError("epsilon must be positive and finite");
    }
    if (!(alpha >= 0.0 && std::isfinite(alpha) && beta >= 0.0 && std::isfinite(beta))) {
        throw ConfigError("alpha and beta must be finite and non-negative");
    }
    if (threads == 0) {
        throw ConfigError("threads must be positive");
    }
    outer().validate();
    optimizer().validate(bins);
    if (!plan.empty()) {
        if (plan.size() != bins) {
            throw ConfigError("plan has " + std::to_string(plan.size()) + " fractions for " + std::to_string(bins) +
                              " bins");
        }
        for (const double f : plan) {
            if (!(f >= 0.0 && f <= 1.0)) {
                throw ConfigError("plan fractions must lie in [0, 1]");
            }
        }
    }
}

BlobSpec RunConfig::blob_spec() const {
    BlobSpec s;
    s.means = gen_means;
    s.stds = gen_stds;
    s.samples_per_class = gen_samples;
    s.seed = derive_seed(seed, SeedStream::generator);
    return s;
}

RaySpec RunConfig::ray_spec() const {
    RaySpec s;
    s.length = gen_length;
    s.boundaries = gen_boundaries;
    s.flip_probability = gen_flip;
    s.samples_per_class = gen_samples;
    s.seed = derive_seed(seed, SeedStream::generator);
    return s;
}

PerturbationConfig RunConfig::perturbation() const {
    PerturbationConfig p;
    p.epsilon = epsilon;
    p.subset_size = perturb_dims;
    p.seed = derive_seed(seed, SeedStream::perturbation);
    return p;
}

OptimizerConfig RunConfig::optimizer() const {
    OptimizerConfig o;
    o.max_evaluations = max_evaluations;
    o.initial_step = initial_step;
    o.min_step = min_step;
    o.explore_fraction = explore_fraction;
    o.seed = derive_seed(seed, SeedStream::optimizer);
    return o;
}

OuterConfig RunConfig::outer() const {
    OuterConfig o;
    o.alpha_lo = alpha_lo;
    o.alpha_hi = alpha_hi;
    o.beta_lo = beta_lo;
    o.beta_hi = beta_hi;
    o.grid_points = outer_grid;
    o.budget = outer_budget;
    o.metric = metric;
    return o;
}

}  // namespace protosel
