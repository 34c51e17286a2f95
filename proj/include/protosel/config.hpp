#ifndef PROTOSEL_CONFIG_HPP
#define PROTOSEL_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "protosel/datagen.hpp"
#include "protosel/energy.hpp"
#include "protosel/evaluation.hpp"
#include "protosel/optimizer.hpp"

namespace protosel {

/// Everything a run needs. One root seed feeds every random stream.
struct RunConfig {
    std::string input;      ///< Prototype CSV or .pdb file; empty means use `generator`.
    std::string generator;  ///< "rays" or "blobs" when `input` is empty.
    std::size_t gen_length = 32;
    std::vector<std::size_t> gen_boundaries{12, 20};
    double gen_flip = 0.05;
    std::size_t gen_samples = 500;  ///< Per class.
    std::vector<std::vector<double>> gen_means{{0.0, 0.0}, {3.0, 0.0}};
    std::vector<double> gen_stds{1.0, 1.0};

    std::string output_dir = "out";
    std::uint64_t seed = 0;
    double split_train = 0.6;
    double split_validate = 0.2;
    double split_test = 0.2;

    std::size_t k = 10;
    std::size_t bins = 5;
    double epsilon = 1.0;
    std::size_t perturb_dims = 0;

    std::string mode = "fixed";  ///< "fixed" or "outer".
    double alpha = 1.0;
    double beta = 0.01;
    double alpha_lo = 0.1;
    double alpha_hi = 10.0;
    double beta_lo = 0.001;
    double beta_hi = 1.0;
    std::size_t outer_grid = 3;
    std::size_t outer_budget = 13;
    ValidationMetric metric = ValidationMetric::automatic;

    std::size_t max_evaluations = 200;
    double initial_step = 0.25;
    double min_step = 1e-3;
    double explore_fraction = 0.5;
    std::vector<double> plan;  ///< Optional explicit plan for `sparsify`/`evaluate`.
    unsigned threads = 1;

    /// Throws ConfigError on inconsistent values or an unresolvable input path.
    void validate() const;

    BlobSpec blob_spec() const;
    RaySpec ray_spec() const;
    PerturbationConfig perturbation() const;
    OptimizerConfig optimizer() const;
    OuterConfig outer() const;
    EnergyWeights weights() const { return {alpha, beta}; }
};

/// Independent stream seeds derived from the root seed.
enum class SeedStream : std::uint64_t { generator = 1, split = 2, perturbation = 3, optimizer = 4 };
std::uint64_t derive_seed(std::uint64_t root, SeedStream stream);

/// Applies one `key = value` assignment. Throws ConfigError on unknown keys or bad values.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// Same, from `key=value` text as given on the command line.
void apply_override(RunConfig& cfg, std::string_view assignment);

/// Reads `key = value` lines; '#' starts a comment. Later keys override earlier ones.
RunConfig parse_config(std::istream& in, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path);

/// Every key in canonical order, so the output parses back to an equal configuration.
void write_config(const RunConfig& cfg, std::ostream& out);

}  // namespace protosel

#endif
