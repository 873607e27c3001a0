// Command-line front end: gen-data, train, infer, recipe, param-count.
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tenrep/harness.hpp"

namespace fs = std::filesystem;
using namespace tenrep;

namespace {

ConfigEntries read_entries(const std::string& path)
{
    if (path.empty())
        return {};
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_entries(ss.str());
}

/// Config file, then --out and --seed on top.
ExperimentConfig load_run_config(const std::string& path, const std::string& out, const std::optional<std::uint64_t>& seed)
{
    if (path.empty())
        throw ConfigError("--config is required");
    ExperimentConfig c = parse_config(path);
    if (!out.empty())
        c.output_dir = out;
    if (seed)
        c.init_seed = c.data_seed = c.noise_seed = *seed;
    return c;
}

std::vector<std::string> numbered(std::vector<std::string> head, const std::string& prefix, std::size_t count)
{
    for (std::size_t i = 0; i < count; ++i) head.push_back(prefix + std::to_string(i));
    return head;
}

void export_training_embedding(const TrainResult& r, const std::string& path)
{
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    for (std::size_t i = 0; i < r.data.n(); ++i) {
        const std::size_t j = r.assignment[i];
        const Tensor z = r.model->embed(select_rows(r.data.X, std::vector<std::size_t>{i}), j);
        width = z.size();
        std::vector<double> row{static_cast<double>(i), r.data.has_labels() ? static_cast<double>(r.data.labels[i]) : -1.0,
                                static_cast<double>(j)};
        row.insert(row.end(), z.data().begin(), z.data().end());
        rows.push_back(std::move(row));
    }
    write_csv(path, numbered({"index", "label", "cluster"}, "z", width), rows);
}

int cmd_gen_data(const std::string& config_path, const std::string& out, const std::optional<std::uint64_t>& seed)
{
    ExperimentConfig c = apply_config(ExperimentConfig{}, read_entries(config_path));
    if (c.dataset.empty())
        throw ConfigError("gen-data needs dataset=<kind>");
    if (seed)
        c.data_seed = *seed;
    const Dataset data = load_dataset(c);
    const std::string dir = out.empty() ? c.output_dir : out;
    fs::create_directories(dir);
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < data.n(); ++i) {
        std::vector<double> row(data.X.row(i).begin(), data.X.row(i).end());
        row.push_back(data.has_labels() ? data.labels[i] : -1);
        rows.push_back(std::move(row));
    }
    auto head = numbered({}, "x", data.d());
    head.push_back("label");
    const std::string path = (fs::path(dir) / ("data_" + c.dataset + ".csv")).string();
    write_csv(path, head, rows);
    std::cout << path << ": " << data.n() << " x " << data.d() << ", " << data.num_classes() << " classes\n";
    return 0;
}

int cmd_train(const ExperimentConfig& c)
{
    fs::create_directories(c.output_dir);
    const TrainResult r = train(c);
    write_records((fs::path(c.output_dir) / "records.csv").string(), r.records);
    write_records((fs::path(c.output_dir) / "timing.csv").string(), r.timing);
    export_training_embedding(r, (fs::path(c.output_dir) / "embed_train.csv").string());
    std::cout << run_id_of(c) << ": " << r.epochs_run << " epochs, " << r.data.n() << " points, "
              << r.model->param_count() << " parameters\n";
    for (const auto& rec : r.records)
        if (rec.epoch == -1) std::cout << "  " << rec.metric << " = " << rec.value << "\n";
    return 0;
}

int cmd_infer(const ExperimentConfig& c)
{
    if (c.infer_path.empty())
        throw ConfigError("infer needs infer_path (a CSV of points with a header row)");
    fs::create_directories(c.output_dir);
    TrainResult r = train(c);
    write_records((fs::path(c.output_dir) / "records.csv").string(), r.records);
    Dataset points = load_csv(c.infer_path, CsvOptions{{}, c.feature_columns, false});
    if (points.d() != r.data.d())
        throw ShapeError("infer points have " + std::to_string(points.d()) + " features, model expects " +
                         std::to_string(r.data.d()));
    const auto& scale = r.data.scale_info;
    if (!scale.min.empty())
        for (std::size_t i = 0; i < points.n(); ++i)
            for (std::size_t f = 0; f < points.d(); ++f) {
                const double span = scale.max[f] - scale.min[f];
                points.X(i, f) = span > 0.0 ? (points.X(i, f) - scale.min[f]) / span : 0.0;
            }
    std::vector<std::vector<double>> rows;
    std::size_t width = 0;
    for (std::size_t i = 0; i < points.n(); ++i) {
        const InferResult res = infer(*r.model, points.X.row(i));
        width = res.embedding.size();
        std::vector<double> row{static_cast<double>(i), static_cast<double>(res.cluster)};
        row.insert(row.end(), res.embedding.begin(), res.embedding.end());
        rows.push_back(std::move(row));
    }
    const std::string path = (fs::path(c.output_dir) / "embed_infer.csv").string();
    write_csv(path, numbered({"index", "cluster"}, "z", width), rows);
    std::cout << path << ": " << rows.size() << " points assigned\n";
    return 0;
}

int cmd_recipe(const std::string& name, const std::string& config_path, const std::string& out,
               const std::optional<std::uint64_t>& seed)
{
    RecipeOptions opt;
    opt.overrides = read_entries(config_path);
    opt.output_dir = out.empty() ? apply_config(ExperimentConfig{}, opt.overrides).output_dir : out;
    opt.seed = seed;
    const RecipeResult res = run_recipe(name, opt);
    for (const auto& line : res.notes) std::cout << line << "\n";
    std::cout << "wrote " << (fs::path(opt.output_dir) / "records.csv").string() << " (" << res.records.size()
              << " rows) and " << res.exports.size() << " exports\n";
    return 0;
}

int cmd_param_count(const ExperimentConfig& c)
{
    const Dataset data = load_dataset(c);
    const std::size_t k = c.k ? c.k : data.num_classes();
    const auto model = make_cluster_model(c, data, k);
    std::cout << to_string(c.model) << "," << c.dataset << "," << model->param_count() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Cluster-specific representation learning experiments"};
    app.require_subcommand(1);
    std::string config_path, out, recipe_name;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value config file");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "overrides every seed in the config");
    };
    auto* gen = app.add_subcommand("gen-data", "write a dataset as CSV");
    auto* trn = app.add_subcommand("train", "train a model and write records");
    auto* inf = app.add_subcommand("infer", "train, then assign and embed the points in infer_path");
    auto* rec = app.add_subcommand("recipe", "run a named experiment");
    auto* prm = app.add_subcommand("param-count", "print the parameter count of a configured model");
    for (auto* sub : {gen, trn, inf, rec, prm}) add_common(sub);
    rec->add_option("name", recipe_name, "fig2, fig3, fig4, fig5, app_runtime or app_underclust")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen_data(config_path, out, seed);
        if (*rec) return cmd_recipe(recipe_name, config_path, out, seed);
        const ExperimentConfig c = load_run_config(config_path, out, seed);
        if (*trn) return cmd_train(c);
        if (*inf) return cmd_infer(c);
        if (*prm) return cmd_param_count(c);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
