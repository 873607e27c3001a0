#include "tenrep/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "tenrep/metrics.hpp"
#include "tenrep/rbm.hpp"
#include "tenrep/recon.hpp"

namespace tenrep {

namespace {

constexpr std::array<ModelKind, 13> all_models{ModelKind::ae1, ModelKind::ae2, ModelKind::ae3,  ModelKind::tae1,
                                               ModelKind::tae2, ModelKind::ptae, ModelKind::vae, ModelKind::tvae,
                                               ModelKind::cl,  ModelKind::tcl,  ModelKind::rbm, ModelKind::trbm,
                                               ModelKind::kmeans};

std::string fmt_double(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool is_recon(ModelKind m)
{
    return m == ModelKind::ae1 || m == ModelKind::ae2 || m == ModelKind::ae3 || m == ModelKind::tae1 ||
           m == ModelKind::tae2 || m == ModelKind::ptae;
}

ReconArch recon_arch(ModelKind m)
{
    return recon_arch_from_string(to_string(m));
}

}  // namespace

std::string_view to_string(ModelKind m)
{
    switch (m) {
    case ModelKind::ae1: return "ae1";
    case ModelKind::ae2: return "ae2";
    case ModelKind::ae3: return "ae3";
    case ModelKind::tae1: return "tae1";
    case ModelKind::tae2: return "tae2";
    case ModelKind::ptae: return "ptae";
    case ModelKind::vae: return "vae";
    case ModelKind::tvae: return "tvae";
    case ModelKind::cl: return "cl";
    case ModelKind::tcl: return "tcl";
    case ModelKind::rbm: return "rbm";
    case ModelKind::trbm: return "trbm";
    case ModelKind::kmeans: return "kmeans";
    }
    return "?";
}

ModelKind model_kind_from_string(std::string_view name)
{
    for (auto m : all_models)
        if (to_string(m) == name)
            return m;
    throw ConfigError("unknown model '" + std::string(name) + "'");
}

bool learns_assignment(ModelKind m)
{
    return m == ModelKind::tae1 || m == ModelKind::tae2 || m == ModelKind::ptae || m == ModelKind::tvae ||
           m == ModelKind::tcl || m == ModelKind::trbm || m == ModelKind::kmeans;
}

std::string_view to_string(TclArch a)
{
    switch (a) {
    case TclArch::automatic: return "auto";
    case TclArch::conv: return "conv";
    case TclArch::dense: return "dense";
    }
    return "?";
}

double ExperimentConfig::effective_learning_rate() const
{
    if (learning_rate)
        return *learning_rate;
    return model == ModelKind::rbm || model == ModelKind::trbm ? 0.05 : 0.001;
}

// ---------------------------------------------------------------- config

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& value)
{
    std::istringstream in(value);
    T out{};
    in >> out;
    if (in.fail() || !in.eof())
        throw ConfigError("key '" + key + "': cannot parse '" + value + "' as a number");
    if constexpr (std::is_unsigned_v<T>)
        if (!value.empty() && value[0] == '-')
            throw ConfigError("key '" + key + "': value must be non-negative, got '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(value);
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

template <class T>
std::string join(const std::vector<T>& v)
{
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<T, std::string>)
            out += v[i];
        else
            out += std::to_string(v[i]);
    }
    return out;
}

template <class F>
auto translate(const std::string& key, F&& f)
{
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError("key '" + key + "': " + e.what());
    }
}

struct KeySpec {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
KeySpec number_key(T ExperimentConfig::*field)
{
    return {[field](ExperimentConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); },
            [field](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return fmt_double(c.*field);
                else
                    return std::to_string(c.*field);
            }};
}

KeySpec string_key(std::string ExperimentConfig::*field)
{
    return {[field](ExperimentConfig& c, const std::string&, const std::string& v) { c.*field = v; },
            [field](const ExperimentConfig& c) { return c.*field; }};
}

const std::map<std::string, KeySpec>& key_table()
{
    static const std::map<std::string, KeySpec> table = [] {
        std::map<std::string, KeySpec> t;
        t["model"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.model = model_kind_from_string(v); },
                      [](const ExperimentConfig& c) { return std::string(to_string(c.model)); }};
        t["dataset"] = string_key(&ExperimentConfig::dataset);
        t["k"] = number_key(&ExperimentConfig::k);
        t["epochs"] = number_key(&ExperimentConfig::epochs);
        t["learning_rate"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                  const double lr = parse_number<double>(k, v);
                                  if (!(lr > 0.0))
                                      throw ConfigError("key 'learning_rate': must be positive, got '" + v + "'");
                                  c.learning_rate = lr;
                              },
                              [](const ExperimentConfig& c) {
                                  return c.learning_rate ? fmt_double(*c.learning_rate) : std::string();
                              }};
        t["optimizer"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                              c.optimizer = translate(k, [&] { return optimizer_from_string(v); });
                          },
                          [](const ExperimentConfig& c) { return std::string(to_string(c.optimizer)); }};
        t["batch_size"] = number_key(&ExperimentConfig::batch_size);
        t["lambda"] = number_key(&ExperimentConfig::lambda);
        t["penalty_clip"] = number_key(&ExperimentConfig::penalty_clip);
        t["recon_mode"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                               c.recon_mode = translate(k, [&] { return recon_mode_from_string(v); });
                           },
                           [](const ExperimentConfig& c) { return std::string(to_string(c.recon_mode)); }};
        t["reparam_mode"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                 c.reparam_mode = translate(k, [&] { return reparam_mode_from_string(v); });
                             },
                             [](const ExperimentConfig& c) { return std::string(to_string(c.reparam_mode)); }};
        t["hidden"] = number_key(&ExperimentConfig::hidden);
        t["latent"] = number_key(&ExperimentConfig::latent);
        t["embed_dim"] = number_key(&ExperimentConfig::embed_dim);
        t["trunk_dim"] = number_key(&ExperimentConfig::trunk_dim);
        t["tcl_arch"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) {
                             if (v == "auto") c.tcl_arch = TclArch::automatic;
                             else if (v == "conv") c.tcl_arch = TclArch::conv;
                             else if (v == "dense") c.tcl_arch = TclArch::dense;
                             else throw ConfigError("key 'tcl_arch': unknown value '" + v + "'");
                         },
                         [](const ExperimentConfig& c) { return std::string(to_string(c.tcl_arch)); }};
        t["elastic_alpha"] = number_key(&ExperimentConfig::elastic_alpha);
        t["elastic_sigma"] = number_key(&ExperimentConfig::elastic_sigma);
        t["pair_mode"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                              c.pair_mode = translate(k, [&] { return pair_mode_from_string(v); });
                          },
                          [](const ExperimentConfig& c) { return std::string(to_string(c.pair_mode)); }};
        t["gibbs_steps"] = number_key(&ExperimentConfig::gibbs_steps);
        t["rbm_hidden"] = number_key(&ExperimentConfig::rbm_hidden);
        t["exact_gradient"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.exact_gradient = parse_bool(k, v); },
                               [](const ExperimentConfig& c) { return std::string(c.exact_gradient ? "true" : "false"); }};
        t["init_seed"] = number_key(&ExperimentConfig::init_seed);
        t["data_seed"] = number_key(&ExperimentConfig::data_seed);
        t["noise_seed"] = number_key(&ExperimentConfig::noise_seed);
        t["noise"] = number_key(&ExperimentConfig::noise);
        t["noise_mode"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                               c.noise_mode = translate(k, [&] { return noise_mode_from_string(v); });
                           },
                           [](const ExperimentConfig& c) { return std::string(to_string(c.noise_mode)); }};
        t["data_path"] = string_key(&ExperimentConfig::data_path);
        t["label_column"] = string_key(&ExperimentConfig::label_column);
        t["feature_columns"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.feature_columns = split_list(v); },
                                [](const ExperimentConfig& c) { return join(c.feature_columns); }};
        t["images_path"] = string_key(&ExperimentConfig::images_path);
        t["labels_path"] = string_key(&ExperimentConfig::labels_path);
        t["classes"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                            c.classes.clear();
                            for (const auto& item : split_list(v)) c.classes.push_back(parse_number<int>(k, item));
                        },
                        [](const ExperimentConfig& c) { return join(c.classes); }};
        t["per_class"] = number_key(&ExperimentConfig::per_class);
        t["infer_path"] = string_key(&ExperimentConfig::infer_path);
        t["output_dir"] = string_key(&ExperimentConfig::output_dir);
        t["run_id"] = string_key(&ExperimentConfig::run_id);
        t["record_every"] = number_key(&ExperimentConfig::record_every);
        t["seeds"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                          c.seeds.clear();
                          for (const auto& item : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(k, item));
                      },
                      [](const ExperimentConfig& c) { return join(c.seeds); }};
        t["tsne_perplexity"] = number_key(&ExperimentConfig::tsne_perplexity);
        t["tsne_iters"] = number_key(&ExperimentConfig::tsne_iters);
        return t;
    }();
    return table;
}

std::string strip(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

void validate(const ExperimentConfig& c)
{
    if (c.dataset.empty())
        throw ConfigError("missing required key 'dataset'");
    if (c.record_every == 0)
        throw ConfigError("record_every must be at least 1");
    if (c.noise < 0.0)
        throw ConfigError("noise must be non-negative");
    if (c.lambda < 0.0)
        throw ConfigError("lambda must be non-negative");
    if (c.latent == 0 || c.hidden == 0 || c.embed_dim == 0 || c.trunk_dim == 0 || c.rbm_hidden == 0)
        throw ConfigError("layer sizes must be positive");
}

}  // namespace

ConfigEntries parse_config_entries(std::string_view text)
{
    ConfigEntries out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        const std::string s = strip(line);
        if (s.empty())
            continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + s + "'");
        std::string key = strip(s.substr(0, eq));
        if (key.empty())
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!key_table().count(key))
            throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        out.emplace_back(std::move(key), strip(s.substr(eq + 1)));
    }
    return out;
}

ExperimentConfig apply_config(ExperimentConfig base, const ConfigEntries& entries)
{
    for (const auto& [key, value] : entries) {
        const auto it = key_table().find(key);
        if (it == key_table().end())
            throw ConfigError("unknown key '" + key + "'");
        it->second.set(base, key, value);
    }
    return base;
}

ExperimentConfig parse_config_text(std::string_view text)
{
    const auto entries = parse_config_entries(text);
    const auto has = [&](const char* key) {
        return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.first == key; });
    };
    if (!has("model"))
        throw ConfigError("missing required key 'model'");
    if (!has("dataset"))
        throw ConfigError("missing required key 'dataset'");
    ExperimentConfig c = apply_config(ExperimentConfig{}, entries);
    validate(c);
    return c;
}

ExperimentConfig parse_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string serialize(const ExperimentConfig& config)
{
    std::string out;
    for (const auto& [key, spec] : key_table()) {
        const std::string v = spec.get(config);
        if (v.empty() && key != "model" && key != "dataset")
            continue;
        out += key + "=" + v + "\n";
    }
    return out;
}

// ---------------------------------------------------------------- records

std::string format_records(const std::vector<ExperimentRecord>& records)
{
    std::string out(records_header);
    out += '\n';
    for (const auto& r : records)
        out += r.run_id + ',' + r.model + ',' + r.dataset + ',' + r.metric + ',' + fmt_double(r.value) + ',' +
               std::to_string(r.epoch) + ',' + fmt_double(r.wall_ms) + '\n';
    return out;
}

void write_records(const std::string& path, const std::vector<ExperimentRecord>& records)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write '" + path + "'");
    out << format_records(records);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write '" + path + "'");
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw ShapeError("write_csv: row width differs from header in '" + path + "'");
        for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << fmt_double(row[c]);
        out << '\n';
    }
}

// ---------------------------------------------------------------- datasets

Dataset load_dataset(const ExperimentConfig& config)
{
    Dataset ds;
    if (auto kind = try_synthetic_kind(config.dataset)) {
        ds = gen_synthetic(*kind, config.data_seed);
    } else if (config.dataset == "csv") {
        if (config.data_path.empty())
            throw ConfigError("dataset=csv needs data_path");
        ds = load_csv(config.data_path, CsvOptions{config.label_column, config.feature_columns, true});
    } else if (config.dataset == "idx") {
        if (config.images_path.empty() || config.labels_path.empty())
            throw ConfigError("dataset=idx needs images_path and labels_path");
        if (config.classes.empty() || config.per_class == 0)
            throw ConfigError("dataset=idx needs non-empty classes and per_class > 0");
        ds = load_idx(config.images_path, config.labels_path, config.classes, config.per_class);
    } else {
        throw ConfigError("unknown dataset '" + config.dataset + "'");
    }
    if (config.model == ModelKind::rbm || config.model == ModelKind::trbm)
        ds.X = binarize(ds.X, 0.5);
    return ds;
}

// ---------------------------------------------------------------- adapters

std::optional<Tensor> ClusterModel::reconstruct(const Tensor&, std::size_t) const
{
    return std::nullopt;
}

std::optional<Tensor> ClusterModel::decode_latent(const Tensor&, std::size_t) const
{
    return std::nullopt;
}

namespace {

std::span<const std::size_t> batch_span(const std::vector<std::size_t>& b)
{
    return {b.data(), b.size()};
}

class ReconAdapter final : public ClusterModel {
public:
    ReconAdapter(PtaeModel m, Optimizer opt) : m_(std::move(m)), opt_(opt) {}

    std::size_t k() const override { return m_.k(); }
    std::size_t param_count() const override { return m_.param_count(); }
    void set_centers(const ClusterCenters& c) override { m_.centers = c; }

    double train_epoch(const Tensor& X, const AssignmentMatrix& S,
                       const std::vector<std::vector<std::size_t>>& batches) override
    {
        double acc = 0.0;
        for (const auto& b : batches) acc += ptae_grad_step(m_, X, S, opt_, batch_span(b));
        return acc / static_cast<double>(batches.size());
    }

    Tensor loss_matrix(const Tensor& X) override { return ptae_loss_matrix(m_, X); }
    Tensor embed(const Tensor& X, std::size_t j) const override { return encode_rows(m_, X, j); }
    std::optional<Tensor> reconstruct(const Tensor& X, std::size_t j) const override
    {
        return reconstruct_rows(m_, X, j);
    }

private:
    PtaeModel m_;
    Optimizer opt_;
};

class VaeAdapter final : public ClusterModel {
public:
    VaeAdapter(TvaeModel m, Optimizer opt, std::uint64_t seed) : m_(std::move(m)), opt_(opt), rng_(seed) {}

    std::size_t k() const override { return m_.k(); }
    std::size_t param_count() const override { return m_.param_count(); }
    void set_centers(const ClusterCenters& c) override { m_.centers = c; }

    double train_epoch(const Tensor& X, const AssignmentMatrix& S,
                       const std::vector<std::vector<std::size_t>>& batches) override
    {
        double acc = 0.0;
        for (const auto& b : batches) acc += tvae_grad_step(m_, X, S, opt_, rng_, batch_span(b));
        return acc / static_cast<double>(batches.size());
    }

    Tensor loss_matrix(const Tensor& X) override { return tvae_loss_matrix(m_, X, rng_); }

    Tensor infer_losses(const Tensor& X) override
    {
        return tvae_loss_matrix(m_, X, Tensor({m_.k(), X.dim(0), m_.latent_dim()}));
    }

    Tensor embed(const Tensor& X, std::size_t j) const override
    {
        Tensor out = Tensor::matrix(X.dim(0), m_.latent_dim());
        for (std::size_t i = 0; i < X.dim(0); ++i) {
            const auto post = encode(m_, X.row(i), j);
            std::copy(post.mean.begin(), post.mean.end(), out.row(i).begin());
        }
        return out;
    }

    std::optional<Tensor> reconstruct(const Tensor& X, std::size_t j) const override
    {
        Tensor out = zeros_like(X);
        const auto c = m_.center_of(j, X.row_size());
        for (std::size_t i = 0; i < X.dim(0); ++i) {
            const auto post = encode(m_, X.row(i), j);
            const auto y = decode(m_, post.mean, j);
            auto row = out.row(i);
            for (std::size_t e = 0; e < row.size(); ++e)
                row[e] = m_.recon_mode == ReconMode::bce_sigmoid ? 1.0 / (1.0 + std::exp(-y[e])) : y[e] + c[e];
        }
        return out;
    }

    std::optional<Tensor> decode_latent(const Tensor& Z, std::size_t j) const override
    {
        std::vector<std::vector<double>> grid;
        for (std::size_t g = 0; g < Z.dim(0); ++g) grid.emplace_back(Z.row(g).begin(), Z.row(g).end());
        const auto out = sample_latent_grid(m_, j, grid);
        const std::size_t d = out.empty() ? 0 : out[0].size();
        Tensor T = Tensor::matrix(out.size(), d);
        for (std::size_t g = 0; g < out.size(); ++g) std::copy(out[g].begin(), out[g].end(), T.row(g).begin());
        return T;
    }

private:
    TvaeModel m_;
    Optimizer opt_;
    Rng rng_;
};

class TclAdapter final : public ClusterModel {
public:
    TclAdapter(TclModel m, Optimizer opt, const ExperimentConfig& cfg, const Dataset& data, std::size_t clusters,
               std::size_t side)
        : m_(std::move(m)), opt_(opt), mode_(cfg.pair_mode), elastic_{cfg.elastic_alpha, cfg.elastic_sigma},
          seed_(cfg.init_seed), side_(side), labels_(data.labels), rng_(cfg.init_seed ^ 0x7C1A55EDULL)
    {
        if (mode_ == PairMode::supervised && labels_.empty())
            throw ConfigError("supervised pairs need a labeled dataset");
        if (mode_ == PairMode::unsupervised && side_ == 0)
            throw ConfigError("unsupervised pairs need square images for the elastic transform");
        if (mode_ == PairMode::unsupervised && m_.k() == 1) {
            if (clusters < 2)
                throw ConfigError("unsupervised pairs need k >= 2 to draw negatives");
            // a single head draws its negatives from a fixed k-means partition
            pair_assignment_ = kmeans(data.X, clusters, cfg.init_seed).assignment;
        }
    }

    std::size_t k() const override { return m_.k(); }
    std::size_t param_count() const override { return m_.param_count(); }
    void set_centers(const ClusterCenters&) override {}

    double train_epoch(const Tensor& X, const AssignmentMatrix& S,
                       const std::vector<std::vector<std::size_t>>& batches) override
    {
        train_X_ = X;
        assignment_ = S;
        const std::uint64_t seed = seed_ ^ (0x9E3779B97F4A7C15ULL * (++epoch_));
        if (mode_ == PairMode::supervised)
            triplets_ = gen_pairs_supervised(X, labels_, seed);
        else
            triplets_ = gen_pairs_unsupervised(X, m_.k() == 1 ? pair_assignment_ : S, side_, side_, elastic_, seed);
        double acc = 0.0;
        for (const auto& b : batches) acc += tcl_grad_step(m_, triplets_, S, opt_, batch_span(b));
        return acc / static_cast<double>(batches.size());
    }

    Tensor loss_matrix(const Tensor& X) override
    {
        if (triplets_.size() != X.dim(0))
            throw std::logic_error("tcl loss matrix requested before triplets exist for these points");
        return tcl_loss(m_, triplets_, AssignmentMatrix(m_.k(), std::vector<std::size_t>(X.dim(0), 0))).matrix;
    }

    /// Positive: elastic copy (or the point itself for non-image data). Negative: a training point outside cluster j.
    Tensor infer_losses(const Tensor& X) override
    {
        if (train_X_.empty())
            throw std::logic_error("tcl inference before training");
        const auto n = X.dim(0), k = m_.k();
        Tensor L = Tensor::matrix(k, n);
        TripletBatch b;
        b.anchors = X;
        b.positives = X;
        if (side_ != 0)
            for (std::size_t i = 0; i < n; ++i) {
                const Tensor img = elastic_transform(Tensor({side_, side_}, std::vector<double>(X.row(i).begin(), X.row(i).end())),
                                                     elastic_.alpha, elastic_.sigma, rng_());
                std::copy(img.data().begin(), img.data().end(), b.positives.row(i).begin());
            }
        for (std::size_t j = 0; j < k; ++j) {
            std::vector<std::size_t> outside;
            for (std::size_t i = 0; i < assignment_.n(); ++i)
                if (k == 1 || assignment_[i] != j) outside.push_back(i);
            if (outside.empty())
                outside.resize(train_X_.dim(0)), std::iota(outside.begin(), outside.end(), 0);
            std::uniform_int_distribution<std::size_t> pick(0, outside.size() - 1);
            std::vector<std::size_t> neg(n);
            for (auto& v : neg) v = outside[pick(rng_)];
            b.negatives = select_rows(train_X_, neg);
            b.anchor_index.assign(n, 0);
            const Tensor Lj = tcl_loss(m_, b, AssignmentMatrix(k, std::vector<std::size_t>(n, j))).matrix;
            for (std::size_t i = 0; i < n; ++i) L(j, i) = Lj(j, i);
        }
        return L;
    }

    Tensor embed(const Tensor& X, std::size_t j) const override { return tcl_embed(m_, X, j); }

private:
    TclModel m_;
    Optimizer opt_;
    PairMode mode_;
    ElasticParams elastic_;
    std::uint64_t seed_;
    std::size_t side_;
    std::vector<int> labels_;
    Rng rng_;
    AssignmentMatrix pair_assignment_;
    AssignmentMatrix assignment_;
    TripletBatch triplets_;
    Tensor train_X_;
    std::uint64_t epoch_ = 0;
};

class RbmAdapter final : public ClusterModel {
public:
    RbmAdapter(std::vector<RbmParams> models, TrbmOptions opt) : models_(std::move(models)), opt_(opt)
    {
        for (std::size_t j = 0; j < models_.size(); ++j) streams_.emplace_back(cluster_stream_seed(opt_.seed, j));
    }

    std::size_t k() const override { return models_.size(); }
    std::size_t param_count() const override
    {
        std::size_t total = 0;
        for (const auto& m : models_) total += m.param_count();
        return total;
    }
    void set_centers(const ClusterCenters&) override {}

    /// CD training does not track an objective; returns 0.
    double train_epoch(const Tensor& X, const AssignmentMatrix& S,
                       const std::vector<std::vector<std::size_t>>&) override
    {
        trbm_train_epoch(models_, X, S, opt_, streams_);
        return 0.0;
    }

    Tensor loss_matrix(const Tensor& X) override { return trbm_loss_matrix(models_, X); }

    Tensor embed(const Tensor& X, std::size_t j) const override
    {
        Tensor out = Tensor::matrix(X.dim(0), models_[j].hidden());
        for (std::size_t i = 0; i < X.dim(0); ++i) {
            const auto h = hidden_probs(models_[j], X.row(i));
            std::copy(h.begin(), h.end(), out.row(i).begin());
        }
        return out;
    }

    std::optional<Tensor> reconstruct(const Tensor& X, std::size_t j) const override
    {
        Tensor out = zeros_like(X);
        for (std::size_t i = 0; i < X.dim(0); ++i) {
            const auto r = tenrep::reconstruct(models_[j], X.row(i));
            std::copy(r.begin(), r.end(), out.row(i).begin());
        }
        return out;
    }

private:
    std::vector<RbmParams> models_;
    TrbmOptions opt_;
    std::vector<Rng> streams_;
};

class KMeansAdapter final : public ClusterModel {
public:
    KMeansAdapter(std::size_t k, std::size_t d) : k_(k), d_(d) {}

    std::size_t k() const override { return k_; }
    std::size_t param_count() const override { return k_ * d_; }
    void set_centers(const ClusterCenters& c) override { centers_ = c; }

    double train_epoch(const Tensor&, const AssignmentMatrix&, const std::vector<std::vector<std::size_t>>&) override
    {
        return 0.0;
    }

    Tensor loss_matrix(const Tensor& X) override
    {
        Tensor L = Tensor::matrix(k_, X.dim(0));
        for (std::size_t j = 0; j < k_; ++j)
            for (std::size_t i = 0; i < X.dim(0); ++i) L(j, i) = squared_distance(X.row(i), centers_.center(j));
        return L;
    }

    Tensor embed(const Tensor& X, std::size_t) const override { return X; }

    std::optional<Tensor> reconstruct(const Tensor& X, std::size_t j) const override
    {
        Tensor out = zeros_like(X);
        for (std::size_t i = 0; i < X.dim(0); ++i)
            std::copy(centers_.center(j).begin(), centers_.center(j).end(), out.row(i).begin());
        return out;
    }

private:
    std::size_t k_;
    std::size_t d_;
    ClusterCenters centers_;
};

std::size_t image_side(std::size_t d)
{
    const auto s = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
    return s * s == d && s >= 5 ? s : 0;
}

bool within_unit_interval(const Tensor& X)
{
    return std::all_of(X.data().begin(), X.data().end(), [](double v) { return v >= 0.0 && v <= 1.0; });
}

}  // namespace

std::unique_ptr<ClusterModel> make_cluster_model(const ExperimentConfig& config, const Dataset& data, std::size_t k)
{
    const std::size_t d = data.d();
    const std::size_t C = k;
    const std::size_t model_k = learns_assignment(config.model) ? k : 1;
    Rng rng(config.init_seed);
    const Optimizer opt(config.optimizer, config.effective_learning_rate());
    if (is_recon(config.model)) {
        PtaeModel m = make_recon_model(recon_arch(config.model), d, C, model_k, rng);
        m.lambda = config.lambda;
        m.penalty_grad_clip = config.penalty_clip;
        return std::make_unique<ReconAdapter>(std::move(m), opt);
    }
    switch (config.model) {
    case ModelKind::vae:
    case ModelKind::tvae: {
        if (config.recon_mode == ReconMode::bce_sigmoid && !within_unit_interval(data.X))
            throw ConfigError("recon_mode=bce needs data in [0,1]; use recon_mode=mse for '" + config.dataset + "'");
        TvaeModel m = make_tvae(d, config.hidden, config.latent, model_k, config.recon_mode, rng);
        m.reparam_mode = config.reparam_mode;
        m.centered = config.model == ModelKind::tvae;
        return std::make_unique<VaeAdapter>(std::move(m), opt, config.init_seed ^ 0xE95A11CEULL);
    }
    case ModelKind::cl:
    case ModelKind::tcl: {
        const std::size_t side = image_side(d);
        const bool conv = config.tcl_arch == TclArch::conv || (config.tcl_arch == TclArch::automatic && side != 0);
        if (conv && side == 0)
            throw ConfigError("tcl_arch=conv needs square image rows");
        TclModel m = conv ? make_tcl_conv(side, side, model_k, rng, config.trunk_dim, config.embed_dim)
                          : make_tcl_dense(d, config.trunk_dim, config.embed_dim, model_k, rng);
        return std::make_unique<TclAdapter>(std::move(m), opt, config, data, C, side);
    }
    case ModelKind::rbm:
    case ModelKind::trbm: {
        std::vector<RbmParams> models;
        for (std::size_t j = 0; j < model_k; ++j) models.push_back(make_rbm(d, config.rbm_hidden, rng));
        TrbmOptions opt_rbm;
        opt_rbm.k_gibbs = config.gibbs_steps;
        opt_rbm.learning_rate = config.effective_learning_rate();
        opt_rbm.batch_size = config.batch_size;
        opt_rbm.exact_gradient = config.exact_gradient;
        opt_rbm.seed = config.init_seed;
        if (opt_rbm.exact_gradient && d > max_exact_visible)
            throw ConfigError("exact_gradient needs at most " + std::to_string(max_exact_visible) + " visible units");
        return std::make_unique<RbmAdapter>(std::move(models), opt_rbm);
    }
    case ModelKind::kmeans:
        return std::make_unique<KMeansAdapter>(model_k, d);
    default:
        break;
    }
    throw ConfigError("unsupported model '" + std::string(to_string(config.model)) + "'");
}

// ---------------------------------------------------------------- training

std::string run_id_of(const ExperimentConfig& config)
{
    if (!config.run_id.empty())
        return config.run_id;
    return std::string(to_string(config.model)) + "-" + config.dataset + "-s" + std::to_string(config.init_seed);
}

TrainResult train(const ExperimentConfig& config)
{
    return train(config, load_dataset(config));
}

namespace {

constexpr std::size_t stable_epochs_to_stop = 10;
constexpr double relative_loss_tol = 1e-6;

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng)
{
    if (batch_size == 0 || batch_size >= n)
        return {{}};
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t s = 0; s < n; s += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch_size)));
    return out;
}

}  // namespace

TrainResult train(const ExperimentConfig& config, Dataset data)
{
    validate(config);
    if (config.k == 0 && !data.has_labels())
        throw ConfigError("k=0 needs a labeled dataset to count classes");
    const std::size_t C = config.k ? config.k : data.num_classes();
    const std::size_t n = data.n();
    if (C > n)
        throw ConfigError("k=" + std::to_string(C) + " exceeds the " + std::to_string(n) + " data points");

    TrainResult r;
    r.clusters = C;
    r.model = make_cluster_model(config, data, C);
    const std::size_t model_k = r.model->k();
    const std::string id = run_id_of(config);
    const std::string model_name(to_string(config.model));
    auto record = [&](std::vector<ExperimentRecord>& into, const char* metric, double value, long long epoch,
                      double wall = 0.0) { into.push_back({id, model_name, config.dataset, metric, value, epoch, wall}); };

    const Tensor& X = data.X;
    AssignmentMatrix S = model_k == 1 ? AssignmentMatrix(1, std::vector<std::size_t>(n, 0))
                                      : kmeanspp_init(X, model_k, config.init_seed);
    ClusterCenters centers = compute_centers(X, S);
    r.model->set_centers(centers);

    Rng batch_rng(config.init_seed ^ 0xBA7C4E5ULL);
    std::size_t stable = 0;
    double prev_loss = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto batches = make_batches(n, config.batch_size, batch_rng);
        const auto t0 = std::chrono::steady_clock::now();
        r.model->train_epoch(X, S, batches);
        const Tensor L = r.model->loss_matrix(X);
        L.require_finite("loss matrix at epoch " + std::to_string(epoch));
        AssignmentMatrix next = model_k == 1 ? S : lloyd_step(L);
        const LloydCheck check{masked_objective(L, S), masked_objective(L, next)};
        centers = compute_centers(X, next, &centers);
        r.model->set_centers(centers);
        const double wall =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

        r.lloyd_checks.push_back(check);
        stable = next == S ? stable + 1 : 0;
        S = std::move(next);
        const double loss = check.after / static_cast<double>(n);
        const bool last = epoch == config.epochs;
        const bool converged = stable >= stable_epochs_to_stop && std::isfinite(prev_loss) &&
                               std::abs(loss - prev_loss) <= relative_loss_tol * std::max(std::abs(prev_loss), 1e-300);
        if (epoch % config.record_every == 0 || last || converged)
            record(r.records, "epoch_loss", loss, static_cast<long long>(epoch));
        record(r.timing, "epoch_wall_ms", wall, static_cast<long long>(epoch), wall);
        prev_loss = loss;
        r.epochs_run = epoch;
        if (converged)
            break;
    }

    if (learns_assignment(config.model)) {
        r.predicted = S.labels();
    } else {
        r.predicted = kmeans(r.model->embed(X, 0), C, config.init_seed).assignment.labels();
    }
    if (data.has_labels())
        record(r.records, "ari", ari(r.predicted, data.labels), -1);
    if (config.noise > 0.0) {
        const Tensor noisy = add_noise(X, config.noise, config.noise_mode, config.noise_seed);
        if (auto m = denoise_mse(*r.model, X, noisy))
            record(r.records, "mse_denoise", *m, -1);
    }
    record(r.records, "param_count", static_cast<double>(r.model->param_count()), -1);

    r.assignment = std::move(S);
    r.centers = std::move(centers);
    r.data = std::move(data);
    return r;
}

InferResult infer(ClusterModel& model, std::span<const double> x)
{
    const Tensor X({1, x.size()}, std::vector<double>(x.begin(), x.end()));
    const Tensor L = model.infer_losses(X);
    const std::size_t j = lloyd_step(L)[0];
    const Tensor z = model.embed(X, j);
    return {j, std::vector<double>(z.data().begin(), z.data().end())};
}

std::optional<double> denoise_mse(ClusterModel& model, const Tensor& clean, const Tensor& noisy)
{
    if (clean.shape() != noisy.shape())
        throw ShapeError("denoise_mse: clean and noisy data differ in shape");
    const AssignmentMatrix S = lloyd_step(model.infer_losses(noisy));
    Tensor recon = zeros_like(clean);
    for (std::size_t j = 0; j < S.k(); ++j) {
        const auto rows = S.members(j);
        if (rows.empty())
            continue;
        const auto out = model.reconstruct(select_rows(noisy, rows), j);
        if (!out)
            return std::nullopt;
        for (std::size_t r = 0; r < rows.size(); ++r)
            std::copy(out->row(r).begin(), out->row(r).end(), recon.row(rows[r]).begin());
    }
    return mse(clean, recon);
}

}  // namespace tenrep
