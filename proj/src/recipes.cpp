#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "tenrep/harness.hpp"
#include "tenrep/metrics.hpp"

namespace tenrep {

namespace {

namespace fs = std::filesystem;

constexpr std::size_t grid_side = 15;
constexpr double grid_extent = 2.0;
constexpr std::size_t recon_samples_per_digit = 8;

const std::vector<SyntheticKind> synthetic_suite{SyntheticKind::parallel_lines, SyntheticKind::lines3d,
                                                 SyntheticKind::orthogonal, SyntheticKind::triangle};
const std::vector<ModelKind> recon_suite{ModelKind::ae1, ModelKind::ae2, ModelKind::ae3, ModelKind::tae1,
                                         ModelKind::tae2, ModelKind::ptae};

class Recipe {
public:
    Recipe(std::string name, const RecipeOptions& options) : name_(std::move(name)), options_(options) {}

    /// Recipe defaults, then user overrides, then the cell's own model, dataset, seeds and run id.
    ExperimentConfig cell(ExperimentConfig base, ModelKind model, const std::string& dataset, std::uint64_t seed,
                          const std::string& tag) const
    {
        base = apply_config(std::move(base), options_.overrides);
        base.model = model;
        base.dataset = dataset;
        base.init_seed = base.data_seed = base.noise_seed = seed;
        base.run_id = name_ + "-" + std::string(to_string(model)) + "-" + tag + "-s" + std::to_string(seed);
        base.output_dir = options_.output_dir;
        return base;
    }

    std::vector<std::uint64_t> seeds(const ExperimentConfig& base) const
    {
        if (options_.seed)
            return {*options_.seed};
        return apply_config(base, options_.overrides).seeds;
    }

    /// Seed for single-run recipes: --seed, else the first configured seed.
    std::uint64_t first_seed(const ExperimentConfig& base) const
    {
        const auto s = seeds(base);
        return s.empty() ? 0 : s.front();
    }

    std::string path(const std::string& file)
    {
        const std::string p = (fs::path(options_.output_dir) / file).string();
        result_.exports.push_back(p);
        return p;
    }

    void absorb(const TrainResult& r)
    {
        result_.records.insert(result_.records.end(), r.records.begin(), r.records.end());
        result_.timing.insert(result_.timing.end(), r.timing.begin(), r.timing.end());
    }

    void note(const std::string& line) { result_.notes.push_back(line); }
    RecipeResult& result() { return result_; }
    const RecipeOptions& options() const { return options_; }

private:
    std::string name_;
    const RecipeOptions& options_;
    RecipeResult result_;
};

double median(std::vector<double> v)
{
    if (v.empty())
        return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const auto m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::string fixed(double v, int digits = 4)
{
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

std::optional<double> final_metric(const TrainResult& r, std::string_view metric)
{
    for (const auto& rec : r.records)
        if (rec.metric == metric && rec.epoch == -1)
            return rec.value;
    return std::nullopt;
}

ExperimentConfig idx_base(const RecipeOptions& options, std::vector<int> classes, std::size_t per_class)
{
    ExperimentConfig base;
    base.dataset = "idx";
    base.classes = std::move(classes);
    base.per_class = per_class;
    const ExperimentConfig merged = apply_config(base, options.overrides);
    if (merged.images_path.empty() || merged.labels_path.empty())
        throw ConfigError("this recipe needs images_path and labels_path (MNIST IDX files)");
    return base;
}

std::vector<std::string> with_columns(std::vector<std::string> head, const std::string& prefix, std::size_t count)
{
    for (std::size_t p = 0; p < count; ++p) head.push_back(prefix + std::to_string(p));
    return head;
}

/// Rows of a larger load that are not among the first per_class of their class.
Dataset held_out(const Dataset& larger, std::size_t per_class)
{
    std::map<int, std::size_t> seen;
    std::vector<std::size_t> rows;
    Dataset out;
    for (std::size_t i = 0; i < larger.n(); ++i)
        if (++seen[larger.labels[i]] > per_class) {
            rows.push_back(i);
            out.labels.push_back(larger.labels[i]);
        }
    out.X = rows.empty() ? Tensor() : select_rows(larger.X, rows);
    out.name = larger.name;
    return out;
}

void export_latent_grids(Recipe& recipe, const ClusterModel& model, const std::string& stem)
{
    const auto grid = latent_grid(grid_side, grid_extent);
    Tensor Z = Tensor::matrix(grid.size(), 2);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        Z(g, 0) = grid[g][0];
        Z(g, 1) = grid[g][1];
    }
    for (std::size_t j = 0; j < model.k(); ++j) {
        const auto decoded = model.decode_latent(Z, j);
        if (!decoded)
            return;
        std::vector<std::vector<double>> rows;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            std::vector<double> row{Z(g, 0), Z(g, 1)};
            row.insert(row.end(), decoded->row(g).begin(), decoded->row(g).end());
            rows.push_back(std::move(row));
        }
        write_csv(recipe.path("latent_" + stem + "_c" + std::to_string(j) + ".csv"),
                  with_columns({"z1", "z2"}, "p", decoded->row_size()), rows);
    }
}

/// index,label,cluster,z... for points with known clusters.
void export_embedding(Recipe& recipe, const std::string& file, const ClusterModel& model, const Tensor& X,
                      const std::vector<int>& labels, const std::vector<std::size_t>& clusters)
{
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    for (std::size_t j = 0; j < model.k(); ++j) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            if (clusters[i] == j) members.push_back(i);
        if (members.empty())
            continue;
        const Tensor Z = model.embed(select_rows(X, members), j);
        width = Z.row_size();
        for (std::size_t r = 0; r < members.size(); ++r) {
            const auto i = members[r];
            std::vector<double> row{static_cast<double>(i), static_cast<double>(labels.empty() ? -1 : labels[i]),
                                    static_cast<double>(j)};
            row.insert(row.end(), Z.row(r).begin(), Z.row(r).end());
            rows.push_back(std::move(row));
        }
    }
    std::sort(rows.begin(), rows.end());
    write_csv(recipe.path(file), with_columns({"index", "label", "cluster"}, "z", width), rows);
}

std::vector<std::size_t> infer_clusters(ClusterModel& model, const Tensor& X)
{
    return lloyd_step(model.infer_losses(X)).labels();
}

/// Class -> cluster histogram plus a one-line summary of which classes each cluster holds.
std::string cluster_histogram(Recipe& recipe, const std::string& file, const std::vector<int>& labels,
                              const std::vector<std::size_t>& clusters, std::size_t k)
{
    std::map<int, std::vector<double>> hist;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto& h = hist[labels[i]];
        h.resize(k, 0.0);
        h[clusters[i]] += 1.0;
    }
    std::vector<std::vector<double>> rows;
    std::vector<std::set<int>> groups(k);
    for (const auto& [label, h] : hist) {
        std::vector<double> row{static_cast<double>(label)};
        row.insert(row.end(), h.begin(), h.end());
        rows.push_back(row);
        groups[static_cast<std::size_t>(std::max_element(h.begin(), h.end()) - h.begin())].insert(label);
    }
    write_csv(recipe.path(file), with_columns({"label"}, "cluster_", k), rows);
    std::string summary;
    for (std::size_t j = 0; j < k; ++j) {
        summary += (j ? " | cluster " : "cluster ") + std::to_string(j) + ": {";
        std::size_t c = 0;
        for (int label : groups[j]) summary += (c++ ? "," : "") + std::to_string(label);
        summary += "}";
    }
    return summary;
}

// ---------------------------------------------------------------- recipes

void run_fig2(Recipe& recipe)
{
    ExperimentConfig base;
    base.epochs = 500;
    base.learning_rate = 0.01;
    base.record_every = 50;
    std::vector<ModelKind> models{ModelKind::kmeans};
    models.insert(models.end(), recon_suite.begin(), recon_suite.end());
    for (auto kind : synthetic_suite) {
        const std::string ds(to_string(kind));
        std::map<ModelKind, std::vector<double>> ari_by_model, mse_by_model;
        std::map<ModelKind, double> params;
        for (auto seed : recipe.seeds(base)) {
            const Dataset data = gen_synthetic(kind, seed);
            for (auto m : models) {
                const TrainResult r = train(recipe.cell(base, m, ds, seed, ds), data);
                recipe.absorb(r);
                ari_by_model[m].push_back(final_metric(r, "ari").value_or(0.0));
                if (auto v = final_metric(r, "mse_denoise")) mse_by_model[m].push_back(*v);
                params[m] = r.model->param_count();
            }
        }
        for (auto m : models)
            recipe.note(ds + " " + std::string(to_string(m)) + ": median ari " + fixed(median(ari_by_model[m])) +
                        ", median mse_denoise " + fixed(median(mse_by_model[m])) + ", params " +
                        std::to_string(static_cast<long long>(params[m])));
    }
}

void run_fig3(Recipe& recipe)
{
    ExperimentConfig base = idx_base(recipe.options(), {0, 1, 9}, 200);
    base.epochs = 50;
    base.hidden = 200;
    base.latent = 2;
    base.recon_mode = ReconMode::bce_sigmoid;
    base.noise = 0.0;
    const auto seed = recipe.first_seed(base);
    const ExperimentConfig probe = recipe.cell(base, ModelKind::tvae, "idx", seed, "mnist");
    const Dataset train_set = load_dataset(probe);
    recipe.note("fig3 training set " + std::to_string(train_set.n()) + "x" + std::to_string(train_set.d()));
    std::optional<Dataset> test_set;
    try {
        ExperimentConfig larger = probe;
        larger.per_class = 2 * probe.per_class;
        test_set = held_out(load_dataset(larger), probe.per_class);
    } catch (const DataError& e) {
        recipe.note(std::string("fig3 test embeddings skipped: ") + e.what());
    }
    for (auto m : {ModelKind::vae, ModelKind::tvae}) {
        const std::string stem(to_string(m));
        const TrainResult r = train(recipe.cell(base, m, "idx", seed, "mnist"), train_set);
        recipe.absorb(r);
        export_latent_grids(recipe, *r.model, stem);
        export_embedding(recipe, "embed_" + stem + "_train.csv", *r.model, r.data.X, r.data.labels,
                         r.assignment.labels());
        if (test_set && test_set->n() > 0)
            export_embedding(recipe, "embed_" + stem + "_test.csv", *r.model, test_set->X, test_set->labels,
                             infer_clusters(*r.model, test_set->X));
        recipe.note("fig3 " + stem + ": ari " + fixed(final_metric(r, "ari").value_or(0.0)));
    }
}

void run_fig4(Recipe& recipe)
{
    ExperimentConfig base = idx_base(recipe.options(), {0, 1, 2, 3, 4}, 100);
    base.epochs = 10;
    base.noise = 0.0;
    const auto seed = recipe.first_seed(base);
    const Dataset data = load_dataset(recipe.cell(base, ModelKind::tcl, "idx", seed, "mnist"));
    for (auto mode : {PairMode::unsupervised, PairMode::supervised})
        for (auto m : {ModelKind::cl, ModelKind::tcl}) {
            ExperimentConfig cfg = recipe.cell(base, m, "idx", seed, std::string(to_string(mode)));
            cfg.pair_mode = mode;
            const TrainResult r = train(cfg, data);
            recipe.absorb(r);
            const auto clusters = r.assignment.labels();
            Tensor Z = Tensor::matrix(data.n(), cfg.embed_dim);
            for (std::size_t j = 0; j < r.model->k(); ++j) {
                const auto members = r.assignment.members(j);
                if (members.empty())
                    continue;
                const Tensor Zj = r.model->embed(select_rows(data.X, members), j);
                for (std::size_t q = 0; q < members.size(); ++q)
                    std::copy(Zj.row(q).begin(), Zj.row(q).end(), Z.row(members[q]).begin());
            }
            TsneOptions topt;
            topt.perplexity = std::min(cfg.tsne_perplexity, static_cast<double>(data.n() - 1) / 3.0);
            topt.iterations = cfg.tsne_iters;
            topt.seed = seed;
            const TsneResult t = tsne(Z, topt);
            std::vector<std::vector<double>> rows;
            for (std::size_t i = 0; i < data.n(); ++i)
                rows.push_back({static_cast<double>(i), static_cast<double>(data.labels[i]),
                                static_cast<double>(clusters[i]), t.embedding(i, 0), t.embedding(i, 1)});
            write_csv(recipe.path("embed_" + std::string(to_string(m)) + "_" + std::string(to_string(mode)) + ".csv"),
                      {"index", "label", "cluster", "t1", "t2"}, rows);
            const auto cos = cosine_summary(Z, data.labels);
            recipe.note("fig4 " + std::string(to_string(m)) + " " + std::string(to_string(mode)) + ": ari " +
                        fixed(final_metric(r, "ari").value_or(0.0)) + ", cosine within " + fixed(cos.within) +
                        " between " + fixed(cos.between));
        }
}

void run_fig5(Recipe& recipe)
{
    ExperimentConfig base = idx_base(recipe.options(), {0, 1, 2, 3, 4}, 200);
    base.epochs = 20;
    base.batch_size = 20;
    base.rbm_hidden = 64;
    base.noise = 0.0;
    const auto seed = recipe.first_seed(base);
    const Dataset data = load_dataset(recipe.cell(base, ModelKind::trbm, "idx", seed, "mnist"));
    recipe.note("fig5 dataset " + std::to_string(data.n()) + "x" + std::to_string(data.d()));
    // the first few samples of digits 0 and 1 are the strip being reconstructed
    std::vector<std::size_t> picks;
    for (int digit : {0, 1}) {
        std::size_t got = 0;
        for (std::size_t i = 0; i < data.n() && got < recon_samples_per_digit; ++i)
            if (data.labels[i] == digit) {
                picks.push_back(i);
                ++got;
            }
    }
    const Tensor strip = select_rows(data.X, picks);
    for (auto m : {ModelKind::rbm, ModelKind::trbm}) {
        const std::string stem(to_string(m));
        const TrainResult r = train(recipe.cell(base, m, "idx", seed, "mnist"), data);
        recipe.absorb(r);
        std::vector<std::vector<double>> rows;
        for (std::size_t q = 0; q < picks.size(); ++q) {
            std::vector<double> row{static_cast<double>(picks[q]), static_cast<double>(data.labels[picks[q]]), -1.0};
            row.insert(row.end(), strip.row(q).begin(), strip.row(q).end());
            rows.push_back(std::move(row));
        }
        for (std::size_t j = 0; j < r.model->k(); ++j) {
            const Tensor rec = *r.model->reconstruct(strip, j);
            for (std::size_t q = 0; q < picks.size(); ++q) {
                std::vector<double> row{static_cast<double>(picks[q]), static_cast<double>(data.labels[picks[q]]),
                                        static_cast<double>(j)};
                row.insert(row.end(), rec.row(q).begin(), rec.row(q).end());
                rows.push_back(std::move(row));
            }
        }
        write_csv(recipe.path("recon_" + stem + ".csv"), with_columns({"index", "label", "cluster"}, "p", data.d()),
                  rows);
        recipe.note("fig5 " + stem + ": ari " + fixed(final_metric(r, "ari").value_or(0.0)) + ", " +
                    cluster_histogram(recipe, "embed_" + stem + "_histogram.csv", data.labels,
                                      r.assignment.labels(), r.model->k()));
    }
}

void run_app_runtime(Recipe& recipe)
{
    ExperimentConfig base;
    base.epochs = 20;
    base.learning_rate = 0.01;
    base.noise = 0.0;
    base.record_every = 20;
    for (auto kind : synthetic_suite) {
        const std::string ds(to_string(kind));
        for (auto m : recon_suite) {
            std::vector<double> per_run;
            std::string model_name(to_string(m));
            for (auto seed : recipe.seeds(base)) {
                const Dataset data = gen_synthetic(kind, seed);
                const ExperimentConfig cfg = recipe.cell(base, m, ds, seed, ds);
                const TrainResult r = train(cfg, data);
                for (const auto& rec : r.records)
                    if (rec.metric != "ari") recipe.result().records.push_back(rec);
                double total = 0.0;
                for (const auto& t : r.timing) total += t.value;
                const double mean_ms = r.timing.empty() ? 0.0 : total / static_cast<double>(r.timing.size());
                per_run.push_back(mean_ms);
                recipe.result().timing.push_back({cfg.run_id, model_name, ds, "epoch_wall_ms", mean_ms, -1, mean_ms});
            }
            const double avg = std::accumulate(per_run.begin(), per_run.end(), 0.0) /
                               static_cast<double>(std::max<std::size_t>(per_run.size(), 1));
            recipe.result().timing.push_back(
                {"app_runtime-" + model_name + "-" + ds + "-mean", model_name, ds, "epoch_wall_ms", avg, -1, avg});
            recipe.note("runtime " + ds + " " + model_name + ": " + fixed(avg, 3) + " ms per epoch over " +
                        std::to_string(per_run.size()) + " runs");
        }
    }
}

void run_app_underclust(Recipe& recipe)
{
    ExperimentConfig base = idx_base(recipe.options(), {0, 1, 3, 6, 7, 9}, 200);
    base.epochs = 50;
    base.k = 2;
    base.noise = 0.0;
    const auto seed = recipe.first_seed(base);
    const ExperimentConfig cfg = recipe.cell(base, ModelKind::tvae, "idx", seed, "mnist");
    const Dataset data = load_dataset(cfg);
    recipe.note("app_underclust dataset " + std::to_string(data.n()) + "x" + std::to_string(data.d()));
    const TrainResult r = train(cfg, data);
    recipe.absorb(r);
    export_latent_grids(recipe, *r.model, "tvae");
    export_embedding(recipe, "embed_tvae_train.csv", *r.model, r.data.X, r.data.labels, r.assignment.labels());
    recipe.note("app_underclust grouping " +
                cluster_histogram(recipe, "embed_tvae_histogram.csv", r.data.labels, r.assignment.labels(), r.model->k()) +
                " (reference grouping {0,6} and {1,3,7,9})");
}

}  // namespace

std::vector<std::string> recipe_names()
{
    return {"fig2", "fig3", "fig4", "fig5", "app_runtime", "app_underclust"};
}

RecipeResult run_recipe(const std::string& name, const RecipeOptions& options)
{
    for (const auto& [key, value] : options.overrides)
        if (key == "model" || key == "dataset")
            throw ConfigError("recipes choose their own " + key + "; remove '" + key + "=" + value + "'");
    Recipe recipe(name, options);
    fs::create_directories(options.output_dir);
    if (name == "fig2") run_fig2(recipe);
    else if (name == "fig3") run_fig3(recipe);
    else if (name == "fig4") run_fig4(recipe);
    else if (name == "fig5") run_fig5(recipe);
    else if (name == "app_runtime") run_app_runtime(recipe);
    else if (name == "app_underclust") run_app_underclust(recipe);
    else throw ConfigError("unknown recipe '" + name + "'");
    write_records((fs::path(options.output_dir) / "records.csv").string(), recipe.result().records);
    write_records((fs::path(options.output_dir) / "timing.csv").string(), recipe.result().timing);
    return std::move(recipe.result());
}

}  // namespace tenrep
