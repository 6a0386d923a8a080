// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "error.hpp"

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace cxreval {

namespace detail {

// Lower regularized gamma P(a, x) by its power series; converges fast for x < a + 1.
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 0; n < 10000; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::fabs(term) < std::fabs(sum) * 1e-17) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized gamma Q(a, x) by Lentz's continued fraction; for x >= a + 1.
inline double gamma_q_continued_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double delta = d * c;
        h *= delta;
        if (std::fabs(delta - 1.0) < 1e-17) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

} // namespace detail

/// Upper regularized incomplete gamma function Q(a, x).
inline double regularized_gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw Error(ErrorKind::DomainError, "gamma_q requires x >= 0, a > 0");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_continued_fraction(a, x);
}

/// Survival function of the chi-square distribution with `df` degrees of freedom.
inline double chi_square_sf(double x, int df) {
    if (!(x >= 0.0)) throw Error(ErrorKind::DomainError, "chi-square statistic must be >= 0");
    if (df < 1) throw Error(ErrorKind::DomainError, "degrees of freedom must be >= 1");
    return regularized_gamma_q(0.5 * df, 0.5 * x);
}

struct CochranQResult {
    double q_statistic = 0.0;
    int df = 1;
    double p_value = 1.0;
    // Subjects whose row is not constant (the only ones that carry information).
    std::size_t n_subjects_used = 0;
    std::size_t n_subjects = 0;
    // Every row constant: Q is reported as 0 with p = 1.
    bool degenerate = false;
};

/// Cochran's Q for an n x k matrix of binary outcomes (row = subject,
/// column = treatment). Rows must all have the same length.
inline CochranQResult cochran_q(const std::vector<std::vector<int>>& outcomes) {
    if (outcomes.empty()) throw Error(ErrorKind::EmptyInput, "Cochran Q needs at least one subject");
    const std::size_t k = outcomes.front().size();
    if (k < 2) throw Error(ErrorKind::InvalidConfig, "Cochran Q needs at least two treatments");

    std::vector<long long> col(k, 0);
    long long sum_l = 0;
    long long sum_l2 = 0;
    CochranQResult r;
    r.n_subjects = outcomes.size();
    for (const auto& row : outcomes) {
        if (row.size() != k) throw Error(ErrorKind::LengthMismatch, "ragged outcome matrix");
        long long l = 0;
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j] != 0 && row[j] != 1)
                throw Error(ErrorKind::DomainError, "outcomes must be 0 or 1");
            col[j] += row[j];
            l += row[j];
        }
        sum_l += l;
        sum_l2 += l * l;
        if (l != 0 && l != static_cast<long long>(k)) ++r.n_subjects_used;
    }
    const long long kk = static_cast<long long>(k);
    long long sum_g2 = 0;
    for (auto g : col) sum_g2 += g * g;

    r.df = static_cast<int>(k - 1);
    const long long denom = kk * sum_l - sum_l2;
    if (denom == 0) {
        r.degenerate = true;
        r.q_statistic = 0.0;
        r.p_value = 1.0;
        return r;
    }
    const long long numer = (kk - 1) * (kk * sum_g2 - sum_l * sum_l);
    r.q_statistic = static_cast<double>(numer) / static_cast<double>(denom);
    r.p_value = chi_square_sf(r.q_statistic, r.df);
    return r;
}

} // namespace cxreval
