#pragma once

// The participation-probability estimators. CLW maximizes the reference-
// weighted pseudo-likelihood of the population Bernoulli model; ILR and PILR
// maximize stacked-sample likelihoods through the CRISP composite link; ALP
// is the two-step baseline that first fits a weighted logistic model for the
// stack membership probability and then inverts the link.

#include "quasirand/links.hpp"
#include "quasirand/model.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace quasirand {

namespace detail {

// One pass over the stacked rows: log-likelihood, score, expected and
// observed information of the selected method at beta.
struct Evaluation {
    double loglik = 0.0;
    double loglik_conv = 0.0;
    double loglik_ref = 0.0;
    Vector score;
    Matrix expected_info;
    Matrix observed_info;
    double max_abs_eta = 0.0;
};

inline void check_method_data(MethodKind method, const ObservedData& data) {
    if (method == MethodKind::ILR && !data.conv_pi_r)
        throw std::invalid_argument(
            "ILR requires conv_pi_r: reference inclusion probabilities must be known "
            "for convenience units");
}

inline Evaluation evaluate(MethodKind method, const ObservedData& data, const Vector& beta) {
    check_method_data(method, data);
    const Eigen::Index p1 = data.n_covariates() + 1;
    if (beta.size() != p1) throw std::invalid_argument("evaluate: beta length mismatch");

    Evaluation ev;
    ev.score = Vector::Zero(p1);
    ev.expected_info = Matrix::Zero(p1, p1);
    ev.observed_info = Matrix::Zero(p1, p1);

    Vector xt(p1);
    auto accumulate = [&](double s_coef, double ei_coef, double oi_coef) {
        ev.score.noalias() += s_coef * xt;
        ev.expected_info.noalias() += ei_coef * (xt * xt.transpose());
        ev.observed_info.noalias() += oi_coef * (xt * xt.transpose());
    };

    for (Eigen::Index i = 0; i < data.n_conv(); ++i) {
        xt[0] = 1.0;
        xt.tail(p1 - 1) = data.conv_x.row(i);
        const double eta = beta.dot(xt);
        ev.max_abs_eta = std::max(ev.max_abs_eta, std::abs(eta));
        const double pc = clamp_prob(expit(eta));
        double ll_term = 0.0, s = 0.0, ei = 0.0, oi = 0.0;
        switch (method) {
            case MethodKind::CLW:
                ll_term = std::log(pc / (1.0 - pc));
                s = 1.0;
                break;
            case MethodKind::ILR:
            case MethodKind::PILR: {
                const double rho = method == MethodKind::ILR ? (*data.conv_pi_r)[i] : 1.0;
                const double pz = clamp_prob(pc / (pc + rho));
                ll_term = std::log(pz);
                s = (1.0 - pz) * (1.0 - pc);
                ei = pz * (1.0 - pz) * (1.0 - pc) * (1.0 - pc);
                oi = ei + pc * (1.0 - pc) * (1.0 - pz);
                break;
            }
            case MethodKind::ALP:
                throw std::invalid_argument("evaluate: ALP is fit by alp_two_step");
        }
        ev.loglik_conv += ll_term;
        accumulate(s, ei, oi);
    }

    for (Eigen::Index i = 0; i < data.n_ref(); ++i) {
        xt[0] = 1.0;
        xt.tail(p1 - 1) = data.ref_x.row(i);
        const double eta = beta.dot(xt);
        ev.max_abs_eta = std::max(ev.max_abs_eta, std::abs(eta));
        const double pc = clamp_prob(expit(eta));
        double ll_term = 0.0, s = 0.0, ei = 0.0, oi = 0.0;
        switch (method) {
            case MethodKind::CLW: {
                const double w = data.ref_w[i];
                ll_term = w * std::log(1.0 - pc);
                s = -w * pc;
                ei = w * pc * (1.0 - pc);
                oi = ei;
                break;
            }
            case MethodKind::ILR:
            case MethodKind::PILR: {
                const double rho = method == MethodKind::ILR ? data.ref_pi_r[i] : 1.0;
                const double w = method == MethodKind::ILR ? 1.0 : data.ref_w[i];
                const double pz = clamp_prob(pc / (pc + rho));
                ll_term = w * std::log(1.0 - pz);
                s = -w * pz * (1.0 - pc);
                ei = w * pz * (1.0 - pz) * (1.0 - pc) * (1.0 - pc);
                oi = ei - w * pc * (1.0 - pc) * pz;
                break;
            }
            case MethodKind::ALP:
                throw std::invalid_argument("evaluate: ALP is fit by alp_two_step");
        }
        ev.loglik_ref += ll_term;
        accumulate(s, ei, oi);
    }

    ev.loglik = ev.loglik_conv + ev.loglik_ref;
    if (!std::isfinite(ev.loglik))
        throw std::runtime_error("loglik: non-finite after clamping");
    return ev;
}

// Plain weighted logistic regression pass (ALP step 1): response 1 on
// convenience rows with weight 1, response 0 on reference rows with weight
// w_r. Observed and expected information coincide for the canonical link.
inline Evaluation evaluate_weighted_logistic(const ObservedData& data, const Vector& beta) {
    const Eigen::Index p1 = data.n_covariates() + 1;
    if (beta.size() != p1) throw std::invalid_argument("evaluate: beta length mismatch");
    Evaluation ev;
    ev.score = Vector::Zero(p1);
    ev.expected_info = Matrix::Zero(p1, p1);
    Vector xt(p1);
    const Eigen::Index n_total = data.n_conv() + data.n_ref();
    for (Eigen::Index row = 0; row < n_total; ++row) {
        const bool is_conv = row < data.n_conv();
        const Eigen::Index i = is_conv ? row : row - data.n_conv();
        xt[0] = 1.0;
        xt.tail(p1 - 1) = is_conv ? data.conv_x.row(i) : data.ref_x.row(i);
        const double eta = beta.dot(xt);
        ev.max_abs_eta = std::max(ev.max_abs_eta, std::abs(eta));
        const double pd = clamp_prob(expit(eta));
        const double w = is_conv ? 1.0 : data.ref_w[i];
        const double y = is_conv ? 1.0 : 0.0;
        (is_conv ? ev.loglik_conv : ev.loglik_ref) +=
            w * (y * std::log(pd) + (1.0 - y) * std::log(1.0 - pd));
        ev.score.noalias() += w * (y - pd) * xt;
        ev.expected_info.noalias() += w * pd * (1.0 - pd) * (xt * xt.transpose());
    }
    ev.observed_info = ev.expected_info;
    ev.loglik = ev.loglik_conv + ev.loglik_ref;
    if (!std::isfinite(ev.loglik))
        throw std::runtime_error("loglik: non-finite after clamping");
    return ev;
}

// Fisher scoring with step-halving; returns the last iterate either way.
template <typename Evaluator>
PropensityFit fisher_scoring(const Evaluator& evaluate_at, MethodKind method, Eigen::Index p1,
                             Eigen::Index n_rows, const SolverConfig& config) {
    config.validate();
    PropensityFit fit;
    fit.method = method;
    Vector beta = Vector::Zero(p1);
    Evaluation ev = evaluate_at(beta);
    const double scale = static_cast<double>(n_rows);

    int iter = 0;
    for (; iter < config.max_iter; ++iter) {
        const double scaled_score = ev.score.cwiseAbs().maxCoeff() / scale;
        if (scaled_score <= config.tol_score) break;

        Matrix info = ev.expected_info;
        if (config.ridge > 0.0) info.diagonal().array() += config.ridge;
        Vector step;
        double damping = 0.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            Matrix damped = info;
            if (damping > 0.0) damped.diagonal().array() += damping;
            Eigen::LDLT<Matrix> ldlt(damped);
            if (ldlt.info() == Eigen::Success) {
                step = ldlt.solve(ev.score);
                if (step.allFinite()) break;
            }
            // Singular to machine precision: ridge-damped retry.
            const double base = std::max(info.trace() / static_cast<double>(p1), 1.0);
            damping = damping == 0.0 ? 1e-10 * base : damping * 100.0;
            step.resize(0);
        }
        if (step.size() == 0) break;

        bool accepted = false;
        double factor = 1.0;
        for (int h = 0; h <= config.max_halvings; ++h, factor *= 0.5) {
            const Vector candidate = beta + factor * step;
            Evaluation trial;
            try {
                trial = evaluate_at(candidate);
            } catch (const std::runtime_error&) {
                continue;  // non-finite loglik: halve further
            }
            if (trial.loglik >= ev.loglik) {
                beta = candidate;
                ev = std::move(trial);
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            ++iter;
            break;
        }
    }

    fit.beta_hat = beta;
    fit.iterations = iter;
    fit.score_norm = ev.score.cwiseAbs().maxCoeff() / scale;
    fit.loglik = ev.loglik;
    fit.info_matrix = ev.expected_info;
    fit.at_link_boundary = ev.max_abs_eta >= kEtaClamp - 1e-9;
    fit.converged = fit.score_norm <= config.tol_score && !fit.at_link_boundary;
    return fit;
}

} // namespace detail

inline double loglik(MethodKind method, const ObservedData& data, const Vector& beta) {
    return detail::evaluate(method, data, beta).loglik;
}

// Convenience-sample and reference-sample parts of the (pseudo-)log-likelihood.
inline std::pair<double, double> loglik_terms(MethodKind method, const ObservedData& data,
                                              const Vector& beta) {
    const auto ev = detail::evaluate(method, data, beta);
    return {ev.loglik_conv, ev.loglik_ref};
}

inline Vector score(MethodKind method, const ObservedData& data, const Vector& beta) {
    return detail::evaluate(method, data, beta).score;
}

// Expected information of the (pseudo-)likelihood over the observed rows;
// positive semidefinite by construction, used as the Fisher-scoring matrix.
inline Matrix expected_information(MethodKind method, const ObservedData& data,
                                   const Vector& beta) {
    return detail::evaluate(method, data, beta).expected_info;
}

// Negative analytic Hessian; for CLW it coincides with the expected
// information because the convenience part is linear in beta.
inline Matrix observed_information(MethodKind method, const ObservedData& data,
                                   const Vector& beta) {
    return detail::evaluate(method, data, beta).observed_info;
}

// Fitted participation probabilities for arbitrary covariate rows.
inline Vector predict_pi_c(MethodKind method, const Vector& beta, const Matrix& x) {
    if (x.cols() + 1 != beta.size()) throw std::invalid_argument("predict_pi_c: dimension mismatch");
    Vector out(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double eta = beta[0];
        for (Eigen::Index j = 0; j < x.cols(); ++j) eta += beta[j + 1] * x(i, j);
        const double p = clamp_prob(expit(eta));
        out[i] = method == MethodKind::ALP ? p / (1.0 - p) : p;
    }
    return out;
}

// Fisher scoring from beta = 0 with step-halving. Convergence means the
// max-abs score per observation fell below tol_score away from the link
// boundary; a fit driven into the clamp reports converged = false, which is
// the separation signature.
inline PropensityFit fit(MethodKind method, const ObservedData& data,
                         const SolverConfig& config = {}) {
    data.validate();
    detail::check_method_data(method, data);
    if (method == MethodKind::ALP)
        throw std::invalid_argument("fit: use alp_two_step for the ALP method");
    const Eigen::Index p1 = data.n_covariates() + 1;
    const Eigen::Index n_rows = data.n_conv() + data.n_ref();
    auto evaluator = [&](const Vector& b) { return detail::evaluate(method, data, b); };
    PropensityFit result = detail::fisher_scoring(evaluator, method, p1, n_rows, config);
    result.pi_c_hat_conv = predict_pi_c(method, result.beta_hat, data.conv_x);
    return result;
}

// ALP: step 1 fits the weighted logistic model for pi_delta on the stacked
// rows; step 2 inverts pi_delta = pi_c/(1+pi_c). The inverted values may
// exceed 1 and are reported unclamped with a flag count.
inline PropensityFit alp_two_step(const ObservedData& data, const SolverConfig& config = {}) {
    data.validate();
    const Eigen::Index p1 = data.n_covariates() + 1;
    const Eigen::Index n_rows = data.n_conv() + data.n_ref();
    auto evaluator = [&](const Vector& b) { return detail::evaluate_weighted_logistic(data, b); };
    PropensityFit result = detail::fisher_scoring(evaluator, MethodKind::ALP, p1, n_rows, config);
    result.pi_c_hat_conv.resize(data.n_conv());
    for (Eigen::Index i = 0; i < data.n_conv(); ++i) {
        double eta = result.beta_hat[0];
        for (Eigen::Index j = 0; j < data.conv_x.cols(); ++j)
            eta += result.beta_hat[j + 1] * data.conv_x(i, j);
        const double pd = clamp_prob(expit(eta));
        if (pd >= 1.0 - kProbClamp) ++result.n_flagged_rows;
        const double pc = pd / (1.0 - pd);
        if (pc > 1.0) ++result.n_pi_above_one;
        result.pi_c_hat_conv[i] = pc;
    }
    return result;
}

} // namespace quasirand
