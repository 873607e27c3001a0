#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tenrep/cluster.hpp"
#include "tenrep/data.hpp"
#include "tenrep/nn.hpp"
#include "tenrep/ssl.hpp"
#include "tenrep/vae.hpp"

namespace tenrep {

/// Invalid or incomplete experiment configuration.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class ModelKind { ae1, ae2, ae3, tae1, tae2, ptae, vae, tvae, cl, tcl, rbm, trbm, kmeans };

std::string_view to_string(ModelKind m);
ModelKind model_kind_from_string(std::string_view name);
/// Models whose clusters come from the alternating loop rather than from k-means on an embedding.
bool learns_assignment(ModelKind m);

enum class TclArch { automatic, conv, dense };

std::string_view to_string(TclArch a);

struct ExperimentConfig {
    ModelKind model = ModelKind::ptae;
    /// A synthetic kind, "csv" or "idx".
    std::string dataset;
    std::size_t k = 0;  // 0: number of distinct labels
    std::size_t epochs = 500;
    std::optional<double> learning_rate;  // unset: 0.001, or 0.05 for rbm and trbm
    OptimizerKind optimizer = OptimizerKind::adam;
    std::size_t batch_size = 0;  // 0: full batch
    double lambda = 0.0;
    double penalty_clip = 1.0;
    ReconMode recon_mode = ReconMode::bce_sigmoid;
    ReparamMode reparam_mode = ReparamMode::sigma;
    std::size_t hidden = 200;
    std::size_t latent = 2;
    std::size_t embed_dim = 128;
    std::size_t trunk_dim = 64;
    TclArch tcl_arch = TclArch::automatic;
    double elastic_alpha = 8.0;
    double elastic_sigma = 3.0;
    PairMode pair_mode = PairMode::unsupervised;
    std::size_t gibbs_steps = 1;
    std::size_t rbm_hidden = 64;
    bool exact_gradient = false;
    std::uint64_t init_seed = 0;
    std::uint64_t data_seed = 0;
    std::uint64_t noise_seed = 0;
    double noise = 0.1;
    NoiseMode noise_mode = NoiseMode::variance;
    std::string data_path;
    std::string label_column;
    std::vector<std::string> feature_columns;
    std::string images_path;
    std::string labels_path;
    std::vector<int> classes{0, 1, 2, 3, 4};
    std::size_t per_class = 200;
    std::string infer_path;
    std::string output_dir = "out";
    std::string run_id;
    std::size_t record_every = 1;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};  // recipe repetitions
    double tsne_perplexity = 30.0;
    std::size_t tsne_iters = 1000;

    double effective_learning_rate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Ordered key=value pairs as written in a config file.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;

/// Parses key=value lines ('#' starts a comment). Errors carry the line number.
ConfigEntries parse_config_entries(std::string_view text);

/// Applies entries over `base`; unknown keys and bad values raise ConfigError.
ExperimentConfig apply_config(ExperimentConfig base, const ConfigEntries& entries);

/// Full config from text; `model` and `dataset` are required.
ExperimentConfig parse_config_text(std::string_view text);
ExperimentConfig parse_config(const std::string& path);

/// key=value text that parses back to an equal config.
std::string serialize(const ExperimentConfig& config);

struct ExperimentRecord {
    std::string run_id;
    std::string model;
    std::string dataset;
    std::string metric;  // ari, mse_denoise, param_count, epoch_loss, epoch_wall_ms
    double value = 0.0;
    long long epoch = -1;  // -1: final
    double wall_ms = 0.0;
};

inline constexpr std::string_view records_header = "run_id,model,dataset,metric,value,epoch,wall_ms";

std::string format_records(const std::vector<ExperimentRecord>& records);
void write_records(const std::string& path, const std::vector<ExperimentRecord>& records);

/// Dataset named by the config; binarized at 0.5 for rbm and trbm.
Dataset load_dataset(const ExperimentConfig& config);

/**
 * Uniform view of every model family for the alternating loop. Loss
 * matrices are k x n; lower is better.
 */
class ClusterModel {
public:
    virtual ~ClusterModel() = default;

    virtual std::size_t k() const = 0;
    virtual std::size_t param_count() const = 0;
    virtual void set_centers(const ClusterCenters& centers) = 0;
    /// One pass of optimizer steps under fixed S. Returns the mean pre-step objective.
    virtual double train_epoch(const Tensor& X, const AssignmentMatrix& S,
                               const std::vector<std::vector<std::size_t>>& batches) = 0;
    virtual Tensor loss_matrix(const Tensor& X) = 0;
    /// Per-cluster losses of new points, evaluated the way inference defines them.
    virtual Tensor infer_losses(const Tensor& X) { return loss_matrix(X); }
    /// Cluster-j embedding of every row of X.
    virtual Tensor embed(const Tensor& X, std::size_t j) const = 0;
    /// Cluster-j reconstructions in data coordinates, or nullopt when the family has none.
    virtual std::optional<Tensor> reconstruct(const Tensor& X, std::size_t j) const;
    /// Decoded outputs for latent points Z under cluster j, or nullopt for families without a decoder prior.
    virtual std::optional<Tensor> decode_latent(const Tensor& Z, std::size_t j) const;
};

/// Builds the model named by the config for `data` with `k` clusters.
std::unique_ptr<ClusterModel> make_cluster_model(const ExperimentConfig& config, const Dataset& data,
                                                 std::size_t k);

struct LloydCheck {
    double before = 0.0;
    double after = 0.0;
};

struct TrainResult {
    Dataset data;
    std::unique_ptr<ClusterModel> model;
    AssignmentMatrix assignment;
    ClusterCenters centers;
    std::size_t clusters = 0;  // cluster count used for evaluation
    std::size_t epochs_run = 0;
    std::vector<ExperimentRecord> records;
    /// epoch_wall_ms rows; kept apart so records stay byte-reproducible.
    std::vector<ExperimentRecord> timing;
    /// Masked objective around every Lloyd step, same parameters on both sides.
    std::vector<LloydCheck> lloyd_checks;
    /// Cluster labels used for the ari record (S, or k-means on the embedding).
    std::vector<std::size_t> predicted;
};

std::string run_id_of(const ExperimentConfig& config);

TrainResult train(const ExperimentConfig& config);
TrainResult train(const ExperimentConfig& config, Dataset data);

struct InferResult {
    std::size_t cluster = 0;
    std::vector<double> embedding;
};

/// Argmin over the per-cluster loss (ties to the lowest index), then that cluster's embedding.
InferResult infer(ClusterModel& model, std::span<const double> x);

/// Mean squared error between clean X and the reconstruction of its noisy copy.
std::optional<double> denoise_mse(ClusterModel& model, const Tensor& clean, const Tensor& noisy);

struct RecipeOptions {
    ConfigEntries overrides;
    std::string output_dir = "out";
    std::optional<std::uint64_t> seed;
};

struct RecipeResult {
    std::vector<ExperimentRecord> records;
    std::vector<ExperimentRecord> timing;
    std::vector<std::string> exports;  // files written besides records.csv and timing.csv
    std::vector<std::string> notes;    // human-readable report lines
};

std::vector<std::string> recipe_names();

/// Runs a named experiment and writes records.csv, timing.csv and its exports under options.output_dir.
RecipeResult run_recipe(const std::string& name, const RecipeOptions& options);

/// Writes a CSV with the given header and numeric rows.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

}  // namespace tenrep
