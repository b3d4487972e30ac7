#pragma once

// Shared domain types: the finite population used as simulation ground truth,
// the stacked convenience + reference data that every estimator consumes, and
// the result object returned by the propensity fitters.

#include <Eigen/Dense>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace quasirand {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexSet = std::vector<Eigen::Index>;

// Coefficient vector of the participation model, intercept first.
using PropensityParams = Vector;

enum class MethodKind { CLW, ILR, PILR, ALP };

inline const char* method_name(MethodKind m) {
    switch (m) {
        case MethodKind::CLW: return "CLW";
        case MethodKind::ILR: return "ILR";
        case MethodKind::PILR: return "PILR";
        case MethodKind::ALP: return "ALP";
    }
    throw std::logic_error("unknown MethodKind");
}

inline MethodKind parse_method(const std::string& name) {
    if (name == "CLW") return MethodKind::CLW;
    if (name == "ILR") return MethodKind::ILR;
    if (name == "PILR") return MethodKind::PILR;
    if (name == "ALP") return MethodKind::ALP;
    throw std::invalid_argument("unknown method: " + name);
}

// Prepends the intercept column entry: x -> (1, x_1, ..., x_p).
inline Vector design_row(const Vector& x) {
    if (!x.allFinite()) throw std::invalid_argument("design_row: non-finite covariate");
    Vector row(x.size() + 1);
    row[0] = 1.0;
    row.tail(x.size()) = x;
    return row;
}

// Covariates, outcomes, and true participation/selection probabilities for
// all N units. Simulation ground truth; never seen by the estimators.
struct FinitePopulation {
    Matrix x;          // N x p covariates
    Vector y;          // N outcomes
    Vector pi_c_true;  // N participation probabilities, in (0,1)
    Vector size_r;     // N positive PPS size measures
    Vector pi_r_true;  // N reference inclusion probabilities after calibration, in (0,1]

    Eigen::Index size() const { return y.size(); }

    void validate() const {
        const Eigen::Index n = y.size();
        if (n < 1) throw std::invalid_argument("FinitePopulation: empty");
        if (x.rows() != n || pi_c_true.size() != n || size_r.size() != n || pi_r_true.size() != n)
            throw std::invalid_argument("FinitePopulation: inconsistent lengths");
        if (!x.allFinite() || !y.allFinite())
            throw std::invalid_argument("FinitePopulation: non-finite data");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!(pi_c_true[i] > 0.0 && pi_c_true[i] < 1.0))
                throw std::invalid_argument("FinitePopulation: pi_c_true outside (0,1)");
            if (!(pi_r_true[i] > 0.0 && pi_r_true[i] <= 1.0))
                throw std::invalid_argument("FinitePopulation: pi_r_true outside (0,1]");
            if (!(size_r[i] > 0.0))
                throw std::invalid_argument("FinitePopulation: nonpositive size measure");
        }
    }

    double mean_y() const { return y.mean(); }
};

// The stacked convenience + reference samples with known reference-design
// quantities. This is the only input the estimators see.
struct ObservedData {
    Matrix conv_x;                       // n_c x p
    Vector conv_y;                       // n_c
    std::optional<Vector> conv_pi_r;     // reference inclusion probs of convenience units (ILR)
    Matrix ref_x;                        // n_r x p
    Vector ref_pi_r;                     // n_r, in (0,1]
    Vector ref_w;                        // n_r, ref_w[i] = 1/ref_pi_r[i]

    Eigen::Index n_conv() const { return conv_y.size(); }
    Eigen::Index n_ref() const { return ref_pi_r.size(); }
    Eigen::Index n_covariates() const { return conv_x.cols(); }

    void validate() const {
        if (n_conv() < 1 || n_ref() < 1)
            throw std::invalid_argument("ObservedData: both samples must be nonempty");
        if (conv_x.rows() != n_conv() || ref_x.rows() != n_ref())
            throw std::invalid_argument("ObservedData: inconsistent row counts");
        if (conv_x.cols() != ref_x.cols())
            throw std::invalid_argument("ObservedData: covariate dimension mismatch");
        if (!conv_x.allFinite() || !conv_y.allFinite() || !ref_x.allFinite())
            throw std::invalid_argument("ObservedData: non-finite data");
        if (ref_w.size() != n_ref())
            throw std::invalid_argument("ObservedData: ref_w length mismatch");
        for (Eigen::Index i = 0; i < n_ref(); ++i) {
            if (!(ref_pi_r[i] > 0.0 && ref_pi_r[i] <= 1.0))
                throw std::invalid_argument("ObservedData: ref_pi_r outside (0,1]");
            if (!(ref_w[i] >= 1.0 - 1e-12))
                throw std::invalid_argument("ObservedData: ref_w below 1");
        }
        if (conv_pi_r) {
            if (conv_pi_r->size() != n_conv())
                throw std::invalid_argument("ObservedData: conv_pi_r length mismatch");
            for (Eigen::Index i = 0; i < n_conv(); ++i)
                if (!((*conv_pi_r)[i] > 0.0 && (*conv_pi_r)[i] <= 1.0))
                    throw std::invalid_argument("ObservedData: conv_pi_r outside (0,1]");
        }
    }

    // Extracts the observed samples from a population given the drawn index
    // sets; covariate and outcome values are copied exactly.
    static ObservedData from_population(const FinitePopulation& pop, const IndexSet& s_c,
                                        const IndexSet& s_r) {
        ObservedData data;
        const Eigen::Index p = pop.x.cols();
        data.conv_x.resize(static_cast<Eigen::Index>(s_c.size()), p);
        data.conv_y.resize(static_cast<Eigen::Index>(s_c.size()));
        Vector cpr(static_cast<Eigen::Index>(s_c.size()));
        for (std::size_t k = 0; k < s_c.size(); ++k) {
            data.conv_x.row(static_cast<Eigen::Index>(k)) = pop.x.row(s_c[k]);
            data.conv_y[static_cast<Eigen::Index>(k)] = pop.y[s_c[k]];
            cpr[static_cast<Eigen::Index>(k)] = pop.pi_r_true[s_c[k]];
        }
        data.conv_pi_r = std::move(cpr);
        data.ref_x.resize(static_cast<Eigen::Index>(s_r.size()), p);
        data.ref_pi_r.resize(static_cast<Eigen::Index>(s_r.size()));
        data.ref_w.resize(static_cast<Eigen::Index>(s_r.size()));
        for (std::size_t k = 0; k < s_r.size(); ++k) {
            data.ref_x.row(static_cast<Eigen::Index>(k)) = pop.x.row(s_r[k]);
            data.ref_pi_r[static_cast<Eigen::Index>(k)] = pop.pi_r_true[s_r[k]];
            data.ref_w[static_cast<Eigen::Index>(k)] = 1.0 / pop.pi_r_true[s_r[k]];
        }
        return data;
    }
};

// Solver behaviour for the Fisher-scoring fits.
struct SolverConfig {
    double tol_score = 1e-8;  // max-abs score per observation
    int max_iter = 100;
    int max_halvings = 20;
    double ridge = 0.0;

    void validate() const {
        if (!(tol_score > 0.0)) throw std::invalid_argument("SolverConfig: tol_score must be > 0");
        if (max_iter < 1) throw std::invalid_argument("SolverConfig: max_iter must be >= 1");
        if (max_halvings < 0 || ridge < 0.0)
            throw std::invalid_argument("SolverConfig: negative setting");
    }
};

// Result of a propensity fit: coefficients, fitted participation
// probabilities on the convenience rows, and solver diagnostics.
struct PropensityFit {
    MethodKind method = MethodKind::ILR;
    PropensityParams beta_hat;
    Vector pi_c_hat_conv;
    bool converged = false;
    int iterations = 0;
    double score_norm = 0.0;  // max-abs score / (n_c + n_r) at the returned iterate
    double loglik = 0.0;
    Matrix info_matrix;       // expected information at beta_hat
    bool at_link_boundary = false;  // some |eta| hit the clamp: separation signature
    int n_pi_above_one = 0;   // ALP only: fitted pi_c above 1
    int n_flagged_rows = 0;   // ALP only: pi_delta at the upper clamp
};

} // namespace quasirand
