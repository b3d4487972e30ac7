#pragma once

// Link functions shared by the estimators: the logistic link for the
// participation model and the CRISP family tying the latent participation
// probability to observable stacked-sample membership probabilities.

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace quasirand {

// Linear predictors are clamped before exponentiation; probabilities are
// clamped away from {0,1} at link evaluation only, never in stored data.
inline constexpr double kEtaClamp = 35.0;
inline constexpr double kProbClamp = 1e-12;

inline double clamp_eta(double eta) { return std::clamp(eta, -kEtaClamp, kEtaClamp); }

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

inline double expit(double eta) {
    const double e = clamp_eta(eta);
    if (e >= 0.0) {
        const double z = std::exp(-e);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(e);
    return z / (1.0 + z);
}

inline double logit(double p) {
    const double q = clamp_prob(p);
    return std::log(q / (1.0 - q));
}

// pi_z = pi_c / (pi_c + pi_r): probability that a stacked-sample unit came
// from the convenience part, for independently drawn samples.
inline double crisp(double pi_c, double pi_r) {
    if (!(pi_c > 0.0 && pi_c < 1.0)) throw std::invalid_argument("crisp: pi_c outside (0,1)");
    if (!(pi_r > 0.0 && pi_r <= 1.0)) throw std::invalid_argument("crisp: pi_r outside (0,1]");
    return pi_c / (pi_c + pi_r);
}

// Generalization for samples drawn from frames covering the target
// population with probabilities p_c and p_r.
inline double crisp_with_coverage(double pi_c, double p_c, double pi_r, double p_r) {
    if (!(pi_c > 0.0 && pi_c < 1.0)) throw std::invalid_argument("crisp_with_coverage: pi_c outside (0,1)");
    if (!(p_c > 0.0 && p_c <= 1.0) || !(p_r > 0.0 && p_r <= 1.0))
        throw std::invalid_argument("crisp_with_coverage: coverage outside (0,1]");
    if (!(pi_r > 0.0 && pi_r <= 1.0)) throw std::invalid_argument("crisp_with_coverage: pi_r outside (0,1]");
    return pi_c * p_c / (pi_c * p_c + pi_r * p_r);
}

// Union-sample variant with overlapping units removed from the reference
// side: I_z = 1 on S_c, 0 on S_r \ S_c.
inline double crisp_union_keep_reference(double pi_c, double pi_r) {
    if (!(pi_c > 0.0 && pi_c < 1.0) || !(pi_r > 0.0 && pi_r < 1.0))
        throw std::invalid_argument("crisp_union_keep_reference: probabilities outside (0,1)");
    return pi_c / (pi_c + pi_r - pi_c * pi_r);
}

// Union-sample variant with overlapping units removed from the convenience
// side: I_z = 1 on S_c \ S_r, 0 on S_r.
inline double crisp_union_keep_convenience(double pi_c, double pi_r) {
    if (!(pi_c > 0.0 && pi_c < 1.0) || !(pi_r > 0.0 && pi_r < 1.0))
        throw std::invalid_argument("crisp_union_keep_convenience: probabilities outside (0,1)");
    return pi_c * (1.0 - pi_r) / (pi_c + pi_r - pi_c * pi_r);
}

// One evaluation of the composite link at linear predictor eta. rho is the
// denominator probability of the CRISP composition: the unit's reference
// inclusion probability for ILR, or 1 for PILR/ALP (where pi_z_or_delta is
// the stacked sample-plus-population membership probability pi_delta).
struct LinkEval {
    double pi_c;
    double pi_z_or_delta;
    double d_pi_c_d_eta;
};

inline LinkEval eval_link(double eta, double rho) {
    LinkEval ev;
    ev.pi_c = clamp_prob(expit(eta));
    ev.pi_z_or_delta = clamp_prob(ev.pi_c / (ev.pi_c + rho));
    ev.d_pi_c_d_eta = ev.pi_c * (1.0 - ev.pi_c);
    return ev;
}

} // namespace quasirand
