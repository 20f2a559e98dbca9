#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "annodiff/common.hpp"

namespace annodiff {

/// Fractional (average) ranks, 1-based. Tied values share the mean of the
/// ranks they would occupy.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

/// Product-moment correlation. nullopt when either vector has zero variance.
inline std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("pearson: length mismatch");
    if (x.size() < 2) throw ValidationError("pearson: need at least 2 points");
    const std::size_t n = x.size();
    const bool const_x = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    const bool const_y = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (const_x || const_y) return std::nullopt;

    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double cov = 0.0, vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    const double r = cov / std::sqrt(vx * vy);
    return std::clamp(r, -1.0, 1.0);
}

/// Rank correlation: Pearson over fractional ranks. nullopt when either rank
/// vector is constant. Identical and exactly reversed rank vectors short-cut
/// to +-1.0 so perfect (dis)agreement is exact.
inline std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw ValidationError("spearman: length mismatch");
    if (x.size() < 2) throw ValidationError("spearman: need at least 2 points");
    const std::vector<double> rx = fractional_ranks(x);
    const std::vector<double> ry = fractional_ranks(y);
    const bool const_x = std::all_of(rx.begin(), rx.end(), [&](double v) { return v == rx[0]; });
    const bool const_y = std::all_of(ry.begin(), ry.end(), [&](double v) { return v == ry[0]; });
    if (const_x || const_y) return std::nullopt;

    if (rx == ry) return 1.0;
    const double flip = static_cast<double>(x.size() + 1);
    bool reversed = true;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        if (rx[i] + ry[i] != flip) {
            reversed = false;
            break;
        }
    }
    if (reversed) return -1.0;
    return pearson(rx, ry);
}

template <typename Int>
std::vector<double> to_doubles(const std::vector<Int>& v) {
    return std::vector<double>(v.begin(), v.end());
}

struct SignTestResult {
    double p_value = 1.0;
    int wins_a = 0;
    int wins_b = 0;
    int ties = 0;
};

/// Exact two-sided sign test on paired values. Ties are dropped;
/// p = min(1, 2 * binomial tail at min(wins, losses)).
inline SignTestResult sign_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ValidationError("sign_test: length mismatch");
    SignTestResult res;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i])
            ++res.wins_a;
        else if (b[i] > a[i])
            ++res.wins_b;
        else
            ++res.ties;
    }
    const int n = res.wins_a + res.wins_b;
    if (n == 0) throw ValidationError("sign_test: no informative pairs");
    const int m = std::min(res.wins_a, res.wins_b);

    if (n <= 1000) {
        // Tail sum of C(n, i) for i <= m; exact in double while C(n, i) < 2^53.
        double tail = 0.0;
        double binom = 1.0;  // C(n, 0)
        for (int i = 0; i <= m; ++i) {
            tail += binom;
            binom = binom * static_cast<double>(n - i) / static_cast<double>(i + 1);
        }
        const double p = 2.0 * tail / std::ldexp(1.0, n);
        res.p_value = std::min(1.0, p);
    } else {
        // Log-space tail to avoid overflow for very large n.
        const double log2v = std::log(2.0);
        double log_tail = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= m; ++i) {
            const double log_binom = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) -
                                     std::lgamma(static_cast<double>(n - i) + 1.0);
            const double term = log_binom - n * log2v;
            log_tail = std::max(log_tail, term) +
                       std::log1p(std::exp(std::min(log_tail, term) - std::max(log_tail, term)));
        }
        res.p_value = std::min(1.0, 2.0 * std::exp(log_tail));
    }
    return res;
}

}  // namespace annodiff
