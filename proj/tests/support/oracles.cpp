#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "tenrep/data.hpp"

namespace oracle {

double rel_err(double a, double b, double floor)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheck check_gradients(const std::vector<Tensor*>& params, const std::vector<Tensor>& analytic,
                          const std::function<double()>& loss, std::uint64_t seed, std::size_t per_tensor, double h,
                          double floor)
{
    if (params.size() != analytic.size())
        throw std::invalid_argument("check_gradients: parameter and gradient counts differ");
    std::mt19937_64 rng(seed);
    GradCheck out;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& p = *params[t];
        if (p.size() != analytic[t].size())
            throw std::invalid_argument("check_gradients: gradient shape differs");
        std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
        for (std::size_t s = 0; s < std::min(per_tensor, p.size()); ++s) {
            const std::size_t e = per_tensor >= p.size() ? s : pick(rng);
            const double keep = p[e];
            p[e] = keep + h;
            const double up = loss();
            p[e] = keep - h;
            const double down = loss();
            p[e] = keep;
            const double numeric = (up - down) / (2.0 * h);
            out.max_rel_err = std::max(out.max_rel_err, rel_err(analytic[t][e], numeric, floor));
            ++out.checked;
        }
    }
    return out;
}

Tensor naive_conv(const Tensor& kernels, const Tensor& bias, const Tensor& img, std::size_t stride)
{
    const auto oc = kernels.dim(0), ic = kernels.dim(1), kh = kernels.dim(2), kw = kernels.dim(3);
    const auto H = img.dim(1), W = img.dim(2);
    const auto oh = (H - kh) / stride + 1, ow = (W - kw) / stride + 1;
    Tensor out({oc, oh, ow});
    for (std::size_t o = 0; o < oc; ++o)
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = bias.empty() ? 0.0 : bias[o];
                for (std::size_t c = 0; c < ic; ++c)
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v)
                            acc += kernels[((o * ic + c) * kh + u) * kw + v] *
                                   img[(c * H + y * stride + u) * W + x * stride + v];
                out[(o * oh + y) * ow + x] = acc;
            }
    return out;
}

double ari_pairs(const std::vector<int>& a, const std::vector<int>& b)
{
    double both = 0, only_a = 0, only_b = 0, neither = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j], sb = b[i] == b[j];
            if (sa && sb) both += 1;
            else if (sa) only_a += 1;
            else if (sb) only_b += 1;
            else neither += 1;
        }
    const double pairs = both + only_a + only_b + neither;
    const double expected = (both + only_a) * (both + only_b) / pairs;
    const double maximum = 0.5 * ((both + only_a) + (both + only_b));
    if (maximum == expected)
        return 1.0;
    return (both - expected) / (maximum - expected);
}

double kl_quadrature(double mu, double logvar)
{
    const double sd = std::exp(0.5 * logvar);
    const double lo = mu - 14.0 * sd, hi = mu + 14.0 * sd;
    const std::size_t steps = 20000;
    const double dx = (hi - lo) / steps;
    constexpr double log_2pi = 1.8378770664093453;
    auto f = [&](double x) {
        const double log_q = -0.5 * (log_2pi + logvar) - 0.5 * (x - mu) * (x - mu) / (sd * sd);
        const double log_p = -0.5 * log_2pi - 0.5 * x * x;
        return std::exp(log_q) * (log_q - log_p);
    };
    double acc = f(lo) + f(hi);
    for (std::size_t s = 1; s < steps; ++s) acc += (s % 2 ? 4.0 : 2.0) * f(lo + s * dx);
    return acc * dx / 3.0;
}

double rbm_energy_loops(const tenrep::RbmParams& p, const std::vector<double>& x, const std::vector<double>& z)
{
    double e = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) e -= x[i] * p.a[i];
    for (std::size_t j = 0; j < z.size(); ++j) e -= z[j] * p.b[j];
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < z.size(); ++j) e -= x[i] * p.W[i * z.size() + j] * z[j];
    return e;
}

namespace {

std::vector<double> bits(std::uint64_t s, std::size_t n)
{
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>((s >> i) & 1U);
    return v;
}

}  // namespace

double rbm_free_energy_enum(const tenrep::RbmParams& p, const std::vector<double>& x)
{
    const std::size_t h = p.b.size();
    double sum = 0.0;
    for (std::uint64_t s = 0; s < (std::uint64_t{1} << h); ++s) sum += std::exp(-rbm_energy_loops(p, x, bits(s, h)));
    return -std::log(sum);
}

double rbm_partition_enum(const tenrep::RbmParams& p)
{
    const std::size_t d = p.a.size(), h = p.b.size();
    double sum = 0.0;
    for (std::uint64_t sx = 0; sx < (std::uint64_t{1} << d); ++sx) {
        const auto x = bits(sx, d);
        for (std::uint64_t sz = 0; sz < (std::uint64_t{1} << h); ++sz) sum += std::exp(-rbm_energy_loops(p, x, bits(sz, h)));
    }
    return sum;
}

std::vector<double> first_pc(const Tensor& X)
{
    const std::size_t n = X.dim(0), d = X.dim(1);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) mean[c] += X[i * d + c] / static_cast<double>(n);
    std::vector<double> cov(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b < d; ++b)
                cov[a * d + b] += (X[i * d + a] - mean[a]) * (X[i * d + b] - mean[b]);
    std::vector<double> v(d, 1.0), w(d);
    for (int it = 0; it < 2000; ++it) {
        double norm = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            w[a] = 0.0;
            for (std::size_t b = 0; b < d; ++b) w[a] += cov[a * d + b] * v[b];
            norm += w[a] * w[a];
        }
        norm = std::sqrt(norm);
        for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / norm;
    }
    return v;
}

void write_digit_idx(const std::string& images_path, const std::string& labels_path, std::size_t per_class,
                     std::uint64_t seed)
{
    constexpr std::size_t side = 28, classes = 10, strokes = 3;
    struct Stroke {
        double x0, y0, x1, y1;
    };
    std::vector<std::vector<Stroke>> templates(classes);
    for (std::size_t c = 0; c < classes; ++c) {
        std::mt19937_64 trng(1000 + c);
        std::uniform_real_distribution<double> pos(6.0, 21.0);
        for (std::size_t s = 0; s < strokes; ++s) templates[c].push_back({pos(trng), pos(trng), pos(trng), pos(trng)});
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> shift(-2, 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::uint8_t> pixels, labels;
    for (std::size_t i = 0; i < per_class; ++i)
        for (std::size_t c = 0; c < classes; ++c) {
            const int dx = shift(rng), dy = shift(rng);
            const double gain = 0.8 + 0.2 * unit(rng);
            for (std::size_t y = 0; y < side; ++y)
                for (std::size_t x = 0; x < side; ++x) {
                    double v = 0.0;
                    for (const auto& s : templates[c]) {
                        // distance from the pixel to the shifted segment
                        const double ax = s.x0 + dx, ay = s.y0 + dy, bx = s.x1 + dx, by = s.y1 + dy;
                        const double vx = bx - ax, vy = by - ay;
                        const double len2 = vx * vx + vy * vy;
                        double t = len2 > 0 ? ((x - ax) * vx + (y - ay) * vy) / len2 : 0.0;
                        t = std::clamp(t, 0.0, 1.0);
                        const double ex = x - (ax + t * vx), ey = y - (ay + t * vy);
                        v = std::max(v, std::exp(-(ex * ex + ey * ey) / 2.0));
                    }
                    v = std::clamp(gain * v + 0.08 * unit(rng), 0.0, 1.0);
                    pixels.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
                }
            labels.push_back(static_cast<std::uint8_t>(c));
        }
    tenrep::write_idx(images_path, labels_path, side, side, pixels, labels);
}

std::string temp_dir(const std::string& leaf)
{
    const auto p = std::filesystem::temp_directory_path() / ("tenrep_" + leaf);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace oracle
