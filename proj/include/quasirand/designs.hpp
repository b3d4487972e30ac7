#pragma once

// Sampling-design primitives: size-to-probability calibration, Poisson
// sampling, systematic PPS without replacement, and design variances of
// weighted reference-sample totals.

#include "quasirand/model.hpp"
#include "quasirand/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace quasirand {

// Scales positive size measures to inclusion probabilities summing to n.
// Units pushed above 1 are capped and the remaining sample size is
// redistributed proportionally over the rest, iterated to a fixpoint.
inline Vector calibrate_inclusion_probs(const Vector& sizes, Eigen::Index n) {
    const Eigen::Index N = sizes.size();
    if (N < 1) throw std::invalid_argument("calibrate_inclusion_probs: empty sizes");
    if (n < 1 || n > N) throw std::invalid_argument("calibrate_inclusion_probs: need 1 <= n <= N");
    for (Eigen::Index i = 0; i < N; ++i)
        if (!(sizes[i] > 0.0) || !std::isfinite(sizes[i]))
            throw std::invalid_argument("calibrate_inclusion_probs: sizes must be strictly positive");

    Vector pi = Vector::Zero(N);
    std::vector<bool> capped(static_cast<std::size_t>(N), false);
    Eigen::Index n_capped = 0;
    while (true) {
        double size_sum = 0.0;
        for (Eigen::Index i = 0; i < N; ++i)
            if (!capped[static_cast<std::size_t>(i)]) size_sum += sizes[i];
        const double remaining = static_cast<double>(n - n_capped);
        bool new_cap = false;
        for (Eigen::Index i = 0; i < N; ++i) {
            if (capped[static_cast<std::size_t>(i)]) continue;
            const double value = remaining * sizes[i] / size_sum;
            if (value >= 1.0) {
                pi[i] = 1.0;
                capped[static_cast<std::size_t>(i)] = true;
                ++n_capped;
                new_cap = true;
            } else {
                pi[i] = value;
            }
        }
        if (!new_cap) break;
        if (n_capped >= n) {
            // Every slot taken by certainty units; the rest get probability 0,
            // which only happens when n == n_capped.
            for (Eigen::Index i = 0; i < N; ++i)
                if (!capped[static_cast<std::size_t>(i)]) pi[i] = 0.0;
            break;
        }
    }
    return pi;
}

// Independent Bernoulli inclusion per unit; deterministic given the stream.
inline IndexSet poisson_sample(const Vector& pi, RngStream& rng) {
    IndexSet sample;
    for (Eigen::Index i = 0; i < pi.size(); ++i) {
        if (!(pi[i] >= 0.0 && pi[i] <= 1.0))
            throw std::invalid_argument("poisson_sample: probability outside [0,1]");
        if (rng.uniform() < pi[i]) sample.push_back(i);
    }
    return sample;
}

// Systematic PPS on a uniformly permuted frame. Requires sum(pi) to be an
// integer n (within 1e-6) and returns exactly n distinct units whose marginal
// inclusion probability equals pi[i].
inline IndexSet pps_systematic_sample(const Vector& pi, RngStream& rng) {
    const Eigen::Index N = pi.size();
    double total = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
        if (!(pi[i] > 0.0 && pi[i] <= 1.0))
            throw std::invalid_argument("pps_systematic_sample: probability outside (0,1]");
        total += pi[i];
    }
    const double n_real = std::round(total);
    if (std::abs(total - n_real) > 1e-6)
        throw std::invalid_argument("pps_systematic_sample: probabilities must sum to an integer");
    const Eigen::Index n = static_cast<Eigen::Index>(n_real);

    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Fisher-Yates with the stream's own uniforms, for platform independence.
    for (Eigen::Index i = N - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(std::min(j, i))]);
    }

    const double start = rng.uniform();
    IndexSet sample;
    sample.reserve(static_cast<std::size_t>(n));
    std::vector<char> selected(static_cast<std::size_t>(N), 0);
    double cumulative = 0.0;
    Eigen::Index next_point = 0;
    for (Eigen::Index k = 0; k < N && next_point < n; ++k) {
        const Eigen::Index unit = order[static_cast<std::size_t>(k)];
        cumulative += pi[unit];
        while (next_point < n && start + static_cast<double>(next_point) < cumulative) {
            sample.push_back(unit);
            selected[static_cast<std::size_t>(unit)] = 1;
            ++next_point;
        }
    }
    // Roundoff at the tail can starve the last point; backfill from the end
    // of the permuted frame with units not yet selected.
    for (Eigen::Index k = N - 1; static_cast<Eigen::Index>(sample.size()) < n && k >= 0; --k) {
        const Eigen::Index unit = order[static_cast<std::size_t>(k)];
        if (!selected[static_cast<std::size_t>(unit)]) {
            sample.push_back(unit);
            selected[static_cast<std::size_t>(unit)] = 1;
        }
    }
    std::sort(sample.begin(), sample.end());
    return sample;
}

struct DesignVarianceEstimate {
    Matrix matrix;
    enum class Kind { hansen_hurwitz, poisson_theoretical } estimator_kind;
};

// With-replacement (Hansen-Hurwitz) variance estimate of the weighted total
// sum_{S_r} w_i a_i, from the expanded summands z_i = w_i a_i:
//   n/(n-1) * sum_i (z_i - z_bar)(z_i - z_bar)^T.
inline DesignVarianceEstimate design_variance_hh(const Matrix& summands, const Vector& pi_r) {
    const Eigen::Index n = summands.rows();
    if (n < 2) throw std::invalid_argument("design_variance_hh: need at least 2 reference units");
    if (pi_r.size() != n) throw std::invalid_argument("design_variance_hh: length mismatch");
    Matrix z = summands;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(pi_r[i] > 0.0 && pi_r[i] <= 1.0))
            throw std::invalid_argument("design_variance_hh: pi_r outside (0,1]");
        z.row(i) /= pi_r[i];
    }
    const Eigen::RowVectorXd z_bar = z.colwise().mean();
    z.rowwise() -= z_bar;
    DesignVarianceEstimate est;
    est.matrix = (static_cast<double>(n) / static_cast<double>(n - 1)) * (z.transpose() * z);
    est.estimator_kind = DesignVarianceEstimate::Kind::hansen_hurwitz;
    return est;
}

// Exact Poisson-design variance of the weighted total, evaluated over the
// full population: sum_U (1 - pi_r)/pi_r * a_i a_i^T, with a_i the
// un-expanded per-unit summand.
inline DesignVarianceEstimate design_variance_poisson_theoretical(const Matrix& summands,
                                                                  const Vector& pi_r_true) {
    const Eigen::Index N = summands.rows();
    if (pi_r_true.size() != N)
        throw std::invalid_argument("design_variance_poisson_theoretical: length mismatch");
    Matrix result = Matrix::Zero(summands.cols(), summands.cols());
    for (Eigen::Index i = 0; i < N; ++i) {
        if (!(pi_r_true[i] > 0.0))
            throw std::invalid_argument("design_variance_poisson_theoretical: pi_r must be positive");
        const double factor = (1.0 - pi_r_true[i]) / pi_r_true[i];
        if (factor != 0.0) result.noalias() += factor * (summands.row(i).transpose() * summands.row(i));
    }
    DesignVarianceEstimate est;
    est.matrix = std::move(result);
    est.estimator_kind = DesignVarianceEstimate::Kind::poisson_theoretical;
    return est;
}

} // namespace quasirand
