#include "tenrep/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace tenrep {

using Rng64 = std::mt19937_64;

std::size_t Dataset::num_classes() const
{
    return std::set<int>(labels.begin(), labels.end()).size();
}

namespace {

constexpr double jitter_std = 0.05;
constexpr double half_length = 1.0;  // segments have length 2
constexpr std::uint64_t rotation_seed = 0x5EEDF00DULL;

struct Geometry {
    std::size_t native = 0;
    std::size_t d = 0;
    std::size_t per_class = 0;
    std::vector<std::vector<double>> centers;
    std::vector<std::vector<double>> directions;  // empty for the Gaussian mixture
    double blob_std = 0.0;
};

Geometry geometry(SyntheticKind kind)
{
    const double r = 1.0 / std::sqrt(2.0);
    Geometry g;
    switch (kind) {
    case SyntheticKind::parallel_lines:
        g = {2, 5, 75, {{1.5 * r, -1.5 * r}, {-1.5 * r, 1.5 * r}}, {{r, r}, {r, r}}, 0.0};
        break;
    case SyntheticKind::lines3d: {
        const double o = 1.5 * std::sqrt(2.0);
        g = {3, 6, 100, {{0, o, 0}, {0, 0, o}, {o, 0, 0}}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, 0.0};
        break;
    }
    case SyntheticKind::orthogonal:
        g = {2, 5, 75, {{-1.5, 0}, {1.5, 0}}, {{1, 0}, {0, 1}}, 0.0};
        break;
    case SyntheticKind::triangle: {
        // equilateral triangle with side 3; class j runs along the edge from vertex j towards j+1
        const std::array<std::array<double, 2>, 3> v{{{0.0, std::sqrt(3.0)}, {-1.5, -std::sqrt(3.0) / 2}, {1.5, -std::sqrt(3.0) / 2}}};
        g.native = 2;
        g.d = 6;
        g.per_class = 50;
        for (std::size_t j = 0; j < 3; ++j) {
            const auto& a = v[j];
            const auto& b = v[(j + 1) % 3];
            const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
            g.centers.push_back({a[0], a[1]});
            g.directions.push_back({(b[0] - a[0]) / len, (b[1] - a[1]) / len});
        }
        break;
    }
    case SyntheticKind::gmm2d:
        g = {2, 10, 100, {{0.0, 2.5}, {-2.5, -1.5}, {2.5, -1.5}}, {}, 0.5};
        break;
    case SyntheticKind::binary_families:
        throw std::logic_error("binary_families has no continuous geometry");
    }
    return g;
}

/// Haar-distributed orthogonal d x d matrix from a fixed seed (modified Gram-Schmidt on a Gaussian matrix).
Tensor haar_rotation(std::size_t d, std::uint64_t seed)
{
    Rng64 rng(seed);
    std::normal_distribution<double> n01;
    Tensor Q = Tensor::matrix(d, d);
    for (auto& v : Q.data()) v = n01(rng);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t p = 0; p < c; ++p) {
            double proj = 0.0;
            for (std::size_t r = 0; r < d; ++r) proj += Q(r, c) * Q(r, p);
            for (std::size_t r = 0; r < d; ++r) Q(r, c) -= proj * Q(r, p);
        }
        double norm = 0.0;
        for (std::size_t r = 0; r < d; ++r) norm += Q(r, c) * Q(r, c);
        norm = std::sqrt(norm);
        for (std::size_t r = 0; r < d; ++r) Q(r, c) /= norm;
    }
    return Q;
}

void sample_continuous(const Geometry& g, const Tensor& Q, std::size_t cls, std::size_t count, Rng64& rng,
                       Tensor& out, std::size_t first_row)
{
    std::uniform_real_distribution<double> unif(-half_length, half_length);
    std::normal_distribution<double> n01;
    std::vector<double> native(g.native);
    for (std::size_t i = 0; i < count; ++i) {
        if (g.directions.empty()) {
            for (std::size_t a = 0; a < g.native; ++a) native[a] = g.centers[cls][a] + g.blob_std * n01(rng);
        } else {
            const double t = unif(rng);
            for (std::size_t a = 0; a < g.native; ++a) native[a] = g.centers[cls][a] + t * g.directions[cls][a];
        }
        auto row = out.row(first_row + i);
        for (std::size_t r = 0; r < g.d; ++r) {
            double v = 0.0;
            for (std::size_t a = 0; a < g.native; ++a) v += Q(r, a) * native[a];
            row[r] = v + jitter_std * n01(rng);
        }
    }
}

constexpr std::size_t family_block = 6;
constexpr std::size_t family_active = 3;

void sample_binary(std::size_t cls, std::size_t count, Rng64& rng, Tensor& out, std::size_t first_row)
{
    std::vector<std::size_t> units(family_block);
    for (std::size_t i = 0; i < count; ++i) {
        std::iota(units.begin(), units.end(), cls * family_block);
        std::shuffle(units.begin(), units.end(), rng);
        auto row = out.row(first_row + i);
        std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t a = 0; a < family_active; ++a) row[units[a]] = 1.0;
    }
}

FeatureScale observed_range(const Tensor& X)
{
    const auto n = X.dim(0), d = X.row_size();
    FeatureScale s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t c = 0; c < d; ++c) {
        double lo = X(0, c), hi = X(0, c);
        for (std::size_t r = 1; r < n; ++r) {
            lo = std::min(lo, X(r, c));
            hi = std::max(hi, X(r, c));
        }
        s.min[c] = lo;
        s.max[c] = hi;
    }
    return s;
}

}  // namespace

std::string_view to_string(SyntheticKind k)
{
    switch (k) {
    case SyntheticKind::parallel_lines: return "parallel_lines";
    case SyntheticKind::lines3d: return "lines3d";
    case SyntheticKind::orthogonal: return "orthogonal";
    case SyntheticKind::triangle: return "triangle";
    case SyntheticKind::gmm2d: return "gmm2d";
    case SyntheticKind::binary_families: return "binary_families";
    }
    return "?";
}

std::optional<SyntheticKind> try_synthetic_kind(std::string_view name)
{
    for (auto k : {SyntheticKind::parallel_lines, SyntheticKind::lines3d, SyntheticKind::orthogonal,
                   SyntheticKind::triangle, SyntheticKind::gmm2d, SyntheticKind::binary_families})
        if (to_string(k) == name)
            return k;
    return std::nullopt;
}

SyntheticKind synthetic_kind_from_string(std::string_view name)
{
    if (auto k = try_synthetic_kind(name))
        return *k;
    throw std::invalid_argument("unknown synthetic dataset '" + std::string(name) + "'");
}

Dataset gen_synthetic(SyntheticKind kind, std::uint64_t seed)
{
    Dataset ds;
    ds.name = std::string(to_string(kind));
    ds.seed = seed;
    Rng64 rng(seed);
    if (kind == SyntheticKind::binary_families) {
        constexpr std::size_t per_class = 20;
        ds.X = Tensor::matrix(2 * per_class, 2 * family_block);
        for (std::size_t c = 0; c < 2; ++c) {
            sample_binary(c, per_class, rng, ds.X, c * per_class);
            ds.labels.insert(ds.labels.end(), per_class, static_cast<int>(c));
        }
        return ds;
    }
    const Geometry g = geometry(kind);
    const Tensor Q = haar_rotation(g.d, rotation_seed + static_cast<std::uint64_t>(kind));
    const std::size_t C = g.centers.size();
    ds.X = Tensor::matrix(C * g.per_class, g.d);
    for (std::size_t c = 0; c < C; ++c) {
        sample_continuous(g, Q, c, g.per_class, rng, ds.X, c * g.per_class);
        ds.labels.insert(ds.labels.end(), g.per_class, static_cast<int>(c));
    }
    return ds;
}

Tensor sample_synthetic_class(SyntheticKind kind, int cls, std::size_t count, std::uint64_t seed)
{
    Rng64 rng(seed);
    if (kind == SyntheticKind::binary_families) {
        if (cls < 0 || cls > 1)
            throw std::invalid_argument("binary_families has classes 0 and 1");
        Tensor out = Tensor::matrix(count, 2 * family_block);
        sample_binary(static_cast<std::size_t>(cls), count, rng, out, 0);
        return out;
    }
    const Geometry g = geometry(kind);
    if (cls < 0 || static_cast<std::size_t>(cls) >= g.centers.size())
        throw std::invalid_argument("class " + std::to_string(cls) + " out of range for " + std::string(to_string(kind)));
    const Tensor Q = haar_rotation(g.d, rotation_seed + static_cast<std::uint64_t>(kind));
    Tensor out = Tensor::matrix(count, g.d);
    sample_continuous(g, Q, static_cast<std::size_t>(cls), count, rng, out, 0);
    return out;
}

namespace {

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r\"");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\"");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"')
            quoted = !quoted;
        else if (ch == ',' && !quoted) {
            out.push_back(trim(field));
            field.clear();
        } else
            field.push_back(ch);
    }
    out.push_back(trim(field));
    return out;
}

bool is_missing(const std::string& field)
{
    static const std::set<std::string> tokens{"", "NA", "N/A", "NaN", "nan", "null", "NULL", "None"};
    return tokens.count(field) != 0;
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvOptions& options)
{
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open csv file '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw DataError("csv file '" + path + "' is empty");
    const auto header = split_csv(line);
    auto column_of = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw DataError("csv file '" + path + "' has no column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::optional<std::size_t> label_col;
    if (!options.label_column.empty())
        label_col = column_of(options.label_column);
    std::vector<std::size_t> feature_cols;
    if (options.feature_columns.empty()) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (c != label_col) feature_cols.push_back(c);
    } else {
        for (const auto& name : options.feature_columns) feature_cols.push_back(column_of(name));
    }
    if (feature_cols.empty())
        throw DataError("csv file '" + path + "' has no feature columns");

    Dataset ds;
    ds.name = path;
    std::vector<double> values;
    std::vector<std::string> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
        if (std::any_of(fields.begin(), fields.end(), is_missing)) {
            ++ds.dropped_rows;
            continue;
        }
        for (auto c : feature_cols) {
            const auto& f = fields[c];
            char* end = nullptr;
            const double v = std::strtod(f.c_str(), &end);
            if (end != f.c_str() + f.size())
                throw DataError(path + ":" + std::to_string(line_no) + ": non-numeric value '" + f + "' in column '" +
                                header[c] + "'");
            values.push_back(v);
        }
        if (label_col)
            raw_labels.push_back(fields[*label_col]);
    }
    const std::size_t d = feature_cols.size();
    const std::size_t n = values.size() / d;
    if (n == 0)
        throw DataError("csv file '" + path + "' has no complete rows");
    ds.X = Tensor({n, d}, std::move(values));
    if (label_col) {
        std::map<std::string, int> ids;
        for (const auto& s : raw_labels) ids.emplace(s, 0);
        int next = 0;
        for (auto& [name, id] : ids) id = next++;
        for (const auto& s : raw_labels) ds.labels.push_back(ids.at(s));
    }
    if (options.scale_to_unit) {
        ds.scale_info = observed_range(ds.X);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                const double span = ds.scale_info.max[c] - ds.scale_info.min[c];
                ds.X(r, c) = span > 0.0 ? (ds.X(r, c) - ds.scale_info.min[c]) / span : 0.0;
            }
    }
    return ds;
}

namespace {

constexpr std::uint32_t idx_images_magic = 0x00000803;
constexpr std::uint32_t idx_labels_magic = 0x00000801;

std::vector<std::uint8_t> read_all(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open idx file '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const std::string& path)
{
    if (buf.size() < offset + 4)
        throw DataError("idx file '" + path + "' is truncated in its header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v)
{
    const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                                static_cast<char>(v)};
    out.write(b.data(), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, const std::vector<int>& classes,
                 std::size_t per_class)
{
    const auto img = read_all(images_path);
    const auto lab = read_all(labels_path);
    if (const auto m = read_be32(img, 0, images_path); m != idx_images_magic)
        throw DataError("idx image file '" + images_path + "' has bad magic " + std::to_string(m));
    if (const auto m = read_be32(lab, 0, labels_path); m != idx_labels_magic)
        throw DataError("idx label file '" + labels_path + "' has bad magic " + std::to_string(m));
    const std::size_t count = read_be32(img, 4, images_path);
    const std::size_t rows = read_be32(img, 8, images_path);
    const std::size_t cols = read_be32(img, 12, images_path);
    const std::size_t label_count = read_be32(lab, 4, labels_path);
    const std::size_t pixels = rows * cols;
    if (img.size() < 16 + count * pixels)
        throw DataError("idx image file '" + images_path + "' is truncated");
    if (lab.size() < 8 + label_count)
        throw DataError("idx label file '" + labels_path + "' is truncated");
    if (label_count != count)
        throw DataError("idx files disagree on the sample count");

    std::map<int, std::size_t> taken;
    for (int c : classes) taken.emplace(c, 0);
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < count && picked.size() < taken.size() * per_class; ++i) {
        const auto it = taken.find(static_cast<int>(lab[8 + i]));
        if (it == taken.end() || it->second == per_class)
            continue;
        ++it->second;
        picked.push_back(i);
    }
    for (const auto& [c, got] : taken)
        if (got < per_class)
            throw DataError("idx file holds only " + std::to_string(got) + " samples of class " + std::to_string(c) +
                            ", " + std::to_string(per_class) + " requested");

    Dataset ds;
    ds.name = images_path;
    ds.X = Tensor::matrix(picked.size(), pixels);
    for (std::size_t r = 0; r < picked.size(); ++r) {
        const auto* src = img.data() + 16 + picked[r] * pixels;
        auto row = ds.X.row(r);
        for (std::size_t p = 0; p < pixels; ++p) row[p] = src[p] / 255.0;
        ds.labels.push_back(lab[8 + picked[r]]);
    }
    ds.scale_info = {std::vector<double>(pixels, 0.0), std::vector<double>(pixels, 255.0)};
    return ds;
}

void write_idx(const std::string& images_path, const std::string& labels_path, std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels)
{
    if (pixels.size() != labels.size() * rows * cols)
        throw ShapeError("write_idx: pixel buffer does not match labels x rows x cols");
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab)
        throw DataError("cannot create idx files '" + images_path + "', '" + labels_path + "'");
    put_be32(img, idx_images_magic);
    put_be32(img, static_cast<std::uint32_t>(labels.size()));
    put_be32(img, static_cast<std::uint32_t>(rows));
    put_be32(img, static_cast<std::uint32_t>(cols));
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    put_be32(lab, idx_labels_magic);
    put_be32(lab, static_cast<std::uint32_t>(labels.size()));
    lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

std::string_view to_string(NoiseMode m)
{
    return m == NoiseMode::variance ? "variance" : "stddev";
}

NoiseMode noise_mode_from_string(std::string_view name)
{
    if (name == "variance") return NoiseMode::variance;
    if (name == "stddev") return NoiseMode::stddev;
    throw std::invalid_argument("unknown noise mode '" + std::string(name) + "'");
}

Tensor add_noise(const Tensor& X, double param, NoiseMode mode, std::uint64_t seed)
{
    if (!(param >= 0.0))
        throw std::invalid_argument("noise parameter must be non-negative");
    Tensor out = X;
    if (param == 0.0)
        return out;
    const double s = mode == NoiseMode::variance ? std::sqrt(param) : param;
    Rng64 rng(seed);
    std::normal_distribution<double> n01;
    for (auto& v : out.data()) v += s * n01(rng);
    return out;
}

}  // namespace tenrep
