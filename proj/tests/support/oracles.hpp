#pragma once

// Independent reference implementations for the tests: plain loops over
// doubles, no tensor algebra. Also random-input generators and a central
// finite-difference helper.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <torch/torch.h>

namespace oracle {

inline std::vector<double> values(const torch::Tensor& t) {
    auto c = t.detach().to(torch::kFloat64).contiguous();
    return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

inline double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double clamp_p(double p, double eps) { return std::min(std::max(p, eps), 1.0 - eps); }

inline double adv_d(const torch::Tensor& real, const torch::Tensor& fake, double gp, double lambda_gp) {
    return mean(values(fake)) - mean(values(real)) + lambda_gp * gp;
}

inline double adv_g(const torch::Tensor& fake) { return -mean(values(fake)); }

/// Binary cross-entropy summed over attributes, averaged over the batch.
inline double cls(const torch::Tensor& p, const torch::Tensor& y, double eps = 1e-7) {
    const auto pv = values(p), yv = values(y);
    const auto b = p.size(0), k = p.size(1);
    double total = 0;
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < k; ++j) {
            const double q = clamp_p(pv[i * k + j], eps), t = yv[i * k + j];
            total += -(t * std::log(q) + (1 - t) * std::log(1 - q));
        }
    return total / static_cast<double>(b);
}

inline double l1_mean(const torch::Tensor& a, const torch::Tensor& b) {
    const auto av = values(a), bv = values(b);
    double s = 0;
    for (std::size_t i = 0; i < av.size(); ++i) s += std::fabs(av[i] - bv[i]);
    return s / static_cast<double>(av.size());
}

/// -(1/(B*H*W)) sum_b sum_ij sum_c target * log(max(p, eps)) over [B,C,H,W].
inline double mask_ce(const torch::Tensor& target, const torch::Tensor& p, double eps = 1e-7) {
    const auto tv = values(target), pv = values(p);
    const auto b = target.size(0), c = target.size(1), h = target.size(2), w = target.size(3);
    double s = 0;
    for (int64_t n = 0; n < b; ++n)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < h * w; ++i) {
                const auto idx = (n * c + ch) * h * w + i;
                s += tv[idx] * std::log(std::max(pv[idx], eps));
            }
    return -s / static_cast<double>(b * h * w);
}

/// Penalty for the quadratic critic D(x) = sum_i a_i x_i^2 + c_i x_i, whose
/// input gradient is 2 a_i x_i + c_i, at x_hat = u x_in + (1-u) x_out.
inline double gp_quadratic(const torch::Tensor& a, const torch::Tensor& c, const torch::Tensor& x_in,
                           const torch::Tensor& x_out, const std::vector<double>& u) {
    const auto av = values(a), cv = values(c), xi = values(x_in), xo = values(x_out);
    const auto b = x_in.size(0);
    const auto per = static_cast<int64_t>(xi.size()) / b;
    double s = 0;
    for (int64_t n = 0; n < b; ++n) {
        double sq = 0;
        for (int64_t i = 0; i < per; ++i) {
            const double xh = u[n] * xi[n * per + i] + (1 - u[n]) * xo[n * per + i];
            const double g = 2 * av[i] * xh + cv[i];
            sq += g * g;
        }
        s += (std::sqrt(sq) - 1) * (std::sqrt(sq) - 1);
    }
    return s / static_cast<double>(b);
}

/// exp(mean KL(p || marginal)) on one split.
inline double inception_split(const std::vector<std::vector<double>>& p) {
    const auto k = p.front().size();
    std::vector<double> marginal(k, 0.0);
    for (const auto& row : p)
        for (std::size_t j = 0; j < k; ++j) marginal[j] += row[j] / static_cast<double>(p.size());
    double kl = 0;
    for (const auto& row : p)
        for (std::size_t j = 0; j < k; ++j)
            if (row[j] > 0) kl += row[j] * std::log(row[j] / marginal[j]);
    return std::exp(kl / static_cast<double>(p.size()));
}

/// Closed form for diagonal covariances: sum (mu_a-mu_b)^2 + (sqrt(va) - sqrt(vb))^2.
inline double frechet_diagonal(const std::vector<double>& mu_a, const std::vector<double>& var_a,
                               const std::vector<double>& mu_b, const std::vector<double>& var_b) {
    double s = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        s += (mu_a[i] - mu_b[i]) * (mu_a[i] - mu_b[i]);
        s += (std::sqrt(var_a[i]) - std::sqrt(var_b[i])) * (std::sqrt(var_a[i]) - std::sqrt(var_b[i]));
    }
    return s;
}

inline double relative_error(double got, double want, double floor = 1e-12) {
    return std::fabs(got - want) / std::max(std::fabs(want), floor);
}

/// Central difference of f along coordinate `index` of the flattened tensor x.
inline double central_difference(const std::function<double(const torch::Tensor&)>& f, const torch::Tensor& x,
                                 int64_t index, double h = 1e-6) {
    auto plus = x.detach().clone(), minus = x.detach().clone();
    plus.view(-1)[index] += h;
    minus.view(-1)[index] -= h;
    return (f(plus) - f(minus)) / (2 * h);
}

// ----------------------------------------------------------------------------
// Hand-rolled generators
// ----------------------------------------------------------------------------

struct Gen {
    std::mt19937_64 rng;
    explicit Gen(uint64_t seed) : rng(seed) {}

    int64_t integer(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(rng); }
    double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

    torch::Tensor uniform(std::vector<int64_t> shape, double lo, double hi) {
        auto t = torch::empty(shape, torch::kFloat64);
        auto* p = t.data_ptr<double>();
        for (int64_t i = 0; i < t.numel(); ++i) p[i] = real(lo, hi);
        return t;
    }

    torch::Tensor bits(std::vector<int64_t> shape) {
        auto t = torch::empty(shape, torch::kFloat64);
        auto* p = t.data_ptr<double>();
        for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<double>(integer(0, 1));
        return t;
    }

    /// Per-pixel distributions over `c` channels, strictly positive.
    torch::Tensor soft_mask(int64_t b, int64_t c, int64_t h, int64_t w) {
        auto raw = uniform({b, c, h, w}, 0.05, 1.0);
        return raw / raw.sum(1, true);
    }

    torch::Tensor one_hot_mask(int64_t b, int64_t c, int64_t h, int64_t w) {
        auto t = torch::zeros({b, c, h, w}, torch::kFloat64);
        for (int64_t n = 0; n < b; ++n)
            for (int64_t i = 0; i < h; ++i)
                for (int64_t j = 0; j < w; ++j) t[n][integer(0, c - 1)][i][j] = 1.0;
        return t;
    }
};

}  // namespace oracle
