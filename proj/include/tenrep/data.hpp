#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tenrep/tensor.hpp"

namespace tenrep {

/// Raised for unreadable, malformed or exhausted data files.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-feature range that mapped raw values onto [0, 1]; empty when unscaled.
struct FeatureScale {
    std::vector<double> min;
    std::vector<double> max;
};

struct Dataset {
    Tensor X;                 // n x d
    std::vector<int> labels;  // length n, or empty
    std::string name;
    std::optional<std::uint64_t> seed;
    FeatureScale scale_info;
    /// Rows discarded by a loader because of missing values.
    std::size_t dropped_rows = 0;

    std::size_t n() const { return X.empty() ? 0 : X.dim(0); }
    std::size_t d() const { return X.empty() ? 0 : X.row_size(); }
    bool has_labels() const { return !labels.empty(); }
    /// Number of distinct labels.
    std::size_t num_classes() const;
};

enum class SyntheticKind { parallel_lines, lines3d, orthogonal, triangle, gmm2d, binary_families };

std::string_view to_string(SyntheticKind k);
SyntheticKind synthetic_kind_from_string(std::string_view name);
std::optional<SyntheticKind> try_synthetic_kind(std::string_view name);

/**
 * Seeded synthetic datasets, rows grouped by class:
 *   parallel_lines  d=5  n=150 C=2   two parallel segments, offset across the shared direction
 *   lines3d         d=6  n=300 C=3   axis-parallel segments in 3-D
 *   orthogonal      d=5  n=150 C=2   two perpendicular segments
 *   triangle        d=6  n=150 C=3   segments along the edges of a triangle
 *   gmm2d           d=10 n=300 C=3   isotropic 2-D Gaussian mixture
 *   binary_families d=12 n=40  C=2   3 active units inside a family's own block of 6
 * Continuous kinds are embedded into d dimensions by a fixed rotation that
 * does not depend on the seed, then jittered with N(0, 0.05^2) per entry.
 */
Dataset gen_synthetic(SyntheticKind kind, std::uint64_t seed);

/// `count` fresh rows from class `cls` of the same generator geometry.
Tensor sample_synthetic_class(SyntheticKind kind, int cls, std::size_t count, std::uint64_t seed);

struct CsvOptions {
    std::string label_column;                  // empty: unlabeled
    std::vector<std::string> feature_columns;  // empty: every other column
    bool scale_to_unit = true;                 // min-max scale each feature onto [0, 1]
};

/**
 * Header row plus comma-separated records. A row with a missing field in any
 * column is dropped and counted in `dropped_rows`. Labels are mapped to
 * 0-based integers in sorted order of their distinct strings.
 */
Dataset load_csv(const std::string& path, const CsvOptions& options);

/// The first per_class occurrences of each class in file order; pixels / 255; labels keep the digit values.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, const std::vector<int>& classes,
                 std::size_t per_class);

/// Writes an IDX3 image file (rows x cols bytes per image) and its IDX1 label file.
void write_idx(const std::string& images_path, const std::string& labels_path, std::size_t rows, std::size_t cols,
               const std::vector<std::uint8_t>& pixels, const std::vector<std::uint8_t>& labels);

enum class NoiseMode { variance, stddev };

std::string_view to_string(NoiseMode m);
NoiseMode noise_mode_from_string(std::string_view name);

/// X + N(0, s^2) per entry, s = sqrt(param) in variance mode and param in stddev mode.
Tensor add_noise(const Tensor& X, double param, NoiseMode mode, std::uint64_t seed);

}  // namespace tenrep
