#pragma once

// Hajek IPW mean and the plug-in asymptotic variances of the mean and of the
// propensity coefficients. Population sums are estimated from the convenience
// sample with weights 1/pi_c_hat; the reference-design contribution D is
// estimated by the with-replacement (Hansen-Hurwitz) variance of the
// method-specific weighted total over the reference sample.

#include "quasirand/designs.hpp"
#include "quasirand/links.hpp"
#include "quasirand/model.hpp"
#include "quasirand/propensity.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace quasirand {

inline constexpr double kConditionLimit = 1e12;

struct HajekEstimate {
    double mu_hat;
    double n_hat;
};

// mu_hat = sum(y_i/pi_i) / sum(1/pi_i), n_hat = sum(1/pi_i).
inline HajekEstimate hajek_mean(const Vector& y, const Vector& pi_c_hat) {
    const Eigen::Index n = y.size();
    if (n < 1) throw std::invalid_argument("hajek_mean: empty sample");
    if (pi_c_hat.size() != n) throw std::invalid_argument("hajek_mean: length mismatch");
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(pi_c_hat[i] > 0.0) || !std::isfinite(pi_c_hat[i]))
            throw std::invalid_argument("hajek_mean: probabilities must be positive and finite");
        const double w = 1.0 / pi_c_hat[i];
        num += w * y[i];
        den += w;
    }
    return {num / den, den};
}

struct VarianceComponents {
    Matrix H;
    Matrix A;
    Matrix D;
    Vector C_vec;
    Vector b;
    double var_U_mu = 0.0;
    double n_hat = 0.0;
    double h_condition = 0.0;
    bool h_singular = false;  // condition number above kConditionLimit
};

// Plug-in evaluation of the Theorem-5.1 matrices for CLW, ILR, or PILR at the
// fitted coefficients.
inline VarianceComponents variance_components(MethodKind method, const ObservedData& data,
                                              const PropensityFit& fit, double mu_hat) {
    if (method == MethodKind::ALP)
        throw std::invalid_argument("variance_components: no plug-in variance for ALP");
    if (method == MethodKind::ILR && !data.conv_pi_r)
        throw std::invalid_argument("variance_components: ILR requires conv_pi_r");
    const Eigen::Index p1 = data.n_covariates() + 1;
    if (fit.beta_hat.size() != p1 || fit.pi_c_hat_conv.size() != data.n_conv())
        throw std::invalid_argument("variance_components: fit does not match data");

    VarianceComponents comp;
    comp.H = Matrix::Zero(p1, p1);
    comp.A = Matrix::Zero(p1, p1);
    comp.C_vec = Vector::Zero(p1);
    Vector c_b = Vector::Zero(p1);
    Matrix a_correction = Matrix::Zero(p1, p1);

    Vector xt(p1);
    for (Eigen::Index i = 0; i < data.n_conv(); ++i) {
        xt[0] = 1.0;
        xt.tail(p1 - 1) = data.conv_x.row(i);
        const double pc = clamp_prob(fit.pi_c_hat_conv[i]);
        const double u = 1.0 / pc;
        const double resid = data.conv_y[i] - mu_hat;
        comp.n_hat += u;
        comp.var_U_mu += u * ((1.0 - pc) / pc) * resid * resid;
        c_b.noalias() += u * (1.0 - pc) * resid * xt;
        switch (method) {
            case MethodKind::CLW: {
                comp.H.noalias() += (1.0 - pc) * (xt * xt.transpose());
                comp.C_vec.noalias() += u * (1.0 - pc) * resid * xt;
                break;
            }
            case MethodKind::ILR: {
                const double rho = (*data.conv_pi_r)[i];
                const double pz = clamp_prob(pc / (pc + rho));
                const double core = pz * (1.0 - pz) * (1.0 - pc) * (1.0 - pc);
                comp.H.noalias() += u * (pc + rho) * core * (xt * xt.transpose());
                a_correction.noalias() += u * (rho + 1.0) * pc * core * (xt * xt.transpose());
                comp.C_vec.noalias() +=
                    u * resid * (1.0 - pz) * (1.0 - pc) * (1.0 - pc) * xt;
                break;
            }
            case MethodKind::PILR: {
                const double pd = clamp_prob(pc / (pc + 1.0));
                const double core = pd * (1.0 - pd) * (1.0 - pc) * (1.0 - pc);
                comp.H.noalias() += u * (pc + 1.0) * core * (xt * xt.transpose());
                a_correction.noalias() += u * 2.0 * pc * core * (xt * xt.transpose());
                comp.C_vec.noalias() +=
                    u * resid * (1.0 - pd) * (1.0 - pc) * (1.0 - pc) * xt;
                break;
            }
            case MethodKind::ALP:
                break;
        }
    }
    comp.A = comp.H - a_correction;

    // Reference-design contribution. Certainty units are fixed under the
    // design and contribute no variance; with a census reference sample D is
    // exactly zero.
    const Vector pi_c_ref = predict_pi_c(method, fit.beta_hat, data.ref_x);
    std::vector<Eigen::Index> random_units;
    for (Eigen::Index i = 0; i < data.n_ref(); ++i)
        if (data.ref_pi_r[i] < 1.0 - 1e-12) random_units.push_back(i);
    if (random_units.size() >= 2) {
        Matrix summands(static_cast<Eigen::Index>(random_units.size()), p1);
        Vector pis(static_cast<Eigen::Index>(random_units.size()));
        for (std::size_t k = 0; k < random_units.size(); ++k) {
            const Eigen::Index i = random_units[k];
            xt[0] = 1.0;
            xt.tail(p1 - 1) = data.ref_x.row(i);
            const double pc = clamp_prob(pi_c_ref[i]);
            const double pi_r = data.ref_pi_r[i];
            double scale = 0.0;
            switch (method) {
                case MethodKind::CLW:
                    scale = pc;
                    break;
                case MethodKind::ILR:
                    scale = pi_r * clamp_prob(pc / (pc + pi_r)) * (1.0 - pc);
                    break;
                case MethodKind::PILR:
                    scale = clamp_prob(pc / (pc + 1.0)) * (1.0 - pc);
                    break;
                case MethodKind::ALP:
                    break;
            }
            summands.row(static_cast<Eigen::Index>(k)) = scale * xt.transpose();
            pis[static_cast<Eigen::Index>(k)] = pi_r;
        }
        comp.D = design_variance_hh(summands, pis).matrix;
    } else {
        comp.D = Matrix::Zero(p1, p1);
    }

    Eigen::JacobiSVD<Matrix> svd(comp.H, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    comp.h_condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
    comp.h_singular = !(comp.h_condition < kConditionLimit);
    if (!comp.h_singular) {
        comp.b = comp.H.ldlt().solve(c_b);
    } else {
        comp.b = Vector::Constant(p1, std::numeric_limits<double>::quiet_NaN());
    }
    return comp;
}

// N_hat^-2 (Var[U(mu)] - 2 b^T C + b^T (A + D) b); negative plug-in values
// are clamped to zero, a singular H yields +infinity.
inline double var_mu(const VarianceComponents& comp, bool* clamped = nullptr) {
    if (clamped) *clamped = false;
    if (comp.h_singular) return std::numeric_limits<double>::infinity();
    const double quad = comp.b.dot((comp.A + comp.D) * comp.b);
    double value =
        (comp.var_U_mu - 2.0 * comp.b.dot(comp.C_vec) + quad) / (comp.n_hat * comp.n_hat);
    if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
    if (value < 0.0) {
        if (clamped) *clamped = true;
        value = 0.0;
    }
    return value;
}

// H^-1 (A + D) H^-1; NaN-filled when H is numerically singular.
inline Matrix var_beta(const VarianceComponents& comp) {
    const Eigen::Index p1 = comp.H.rows();
    if (comp.h_singular)
        return Matrix::Constant(p1, p1, std::numeric_limits<double>::quiet_NaN());
    const Matrix h_inv_ad = comp.H.ldlt().solve(comp.A + comp.D);
    Matrix result = comp.H.ldlt().solve(h_inv_ad.transpose()).transpose();
    // Symmetrize away solver roundoff.
    result = 0.5 * (result + result.transpose()).eval();
    return result;
}

// Inverse standard normal CDF (Acklam's rational approximation, ~1e-9).
inline double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double q, r;
    if (prob < p_low) {
        q = std::sqrt(-2.0 * std::log(prob));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (prob <= 1.0 - p_low) {
        q = prob - 0.5;
        r = q * q;
        return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
               (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    q = std::sqrt(-2.0 * std::log(1.0 - prob));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
}

inline std::pair<double, double> confidence_interval(double mu_hat, double variance,
                                                     double level = 0.95) {
    if (!std::isfinite(variance) || variance < 0.0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan};
    }
    const double z = normal_quantile(0.5 + level / 2.0);
    const double half_width = z * std::sqrt(variance);
    return {mu_hat - half_width, mu_hat + half_width};
}

struct InferenceResult {
    double mu_hat = 0.0;
    double n_hat = 0.0;
    double var_mu = 0.0;
    Matrix var_beta;
    double se_mu = 0.0;
    std::pair<double, double> ci{0.0, 0.0};
    VarianceComponents components;
    bool var_clamped = false;
    bool var_inf = false;
};

// Full inference pass for one fitted method.
inline InferenceResult infer(MethodKind method, const ObservedData& data,
                             const PropensityFit& fit, double level = 0.95) {
    InferenceResult result;
    const HajekEstimate hajek = hajek_mean(data.conv_y, fit.pi_c_hat_conv);
    result.mu_hat = hajek.mu_hat;
    result.n_hat = hajek.n_hat;
    result.components = variance_components(method, data, fit, hajek.mu_hat);
    result.var_mu = var_mu(result.components, &result.var_clamped);
    result.var_beta = var_beta(result.components);
    result.var_inf = !std::isfinite(result.var_mu);
    result.se_mu = std::sqrt(result.var_mu);
    result.ci = confidence_interval(result.mu_hat, result.var_mu, level);
    return result;
}

} // namespace quasirand
