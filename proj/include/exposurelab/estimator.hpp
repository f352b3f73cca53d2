#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "exposurelab/panel.hpp"

namespace exposurelab::estimator {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Group labels encoded as dense codes 0..levels-1 (first-appearance order).
struct Factor {
    std::vector<std::size_t> codes;
    std::size_t levels = 0;
};

Factor encode_factor(const std::vector<std::string>& labels);
Factor subset_factor(const Factor& factor, const std::vector<std::size_t>& rows);

/// Row indices that survive iterated removal of singleton groups in any
/// factor.
std::vector<std::size_t> non_singleton_rows(const std::vector<Factor>& factors);

struct AbsorbOptions {
    double tol = 1e-8;
    int max_iter = 10000;
};

struct Absorbed {
    Matrix columns;
    int iterations = 0;
    double max_group_mean = 0.0;
};

/// Alternating weighted group demeaning until every column's weighted mean
/// in every group of every factor is at most `tol` in absolute value.
/// A single factor is one exact pass. Throws NumericalError on
/// non-convergence.
Absorbed absorb_fixed_effects(const Matrix& columns, const std::vector<Factor>& factors, const Vector& weights,
                              const AbsorbOptions& options = {});

struct WlsFit {
    Vector coef;
    Vector residuals;
    Matrix bread;  // (X'WX)^-1
};

/// Weighted least squares through a column-pivoted QR of sqrt(W) X with
/// equilibrated columns. Throws NumericalError naming collinear columns.
WlsFit wls_fit(const Vector& y, const Matrix& X, const Vector& weights, const std::vector<std::string>& names = {});
Vector wls(const Vector& y, const Matrix& X, const Vector& weights);

struct TslsFit {
    Vector coef;          // [endogenous..., exogenous...]
    Vector residuals;     // y - [X_endog, X_exog] coef
    Matrix projected;     // [fitted endogenous, X_exog]
    Matrix bread;         // (Xhat' W Xhat)^-1
    std::vector<WlsFit> first_stages;  // regressors [Z, X_exog]
};

TslsFit tsls(const Vector& y, const Matrix& X_endog, const Matrix& X_exog, const Matrix& Z, const Vector& weights,
             const std::vector<std::string>& names = {});

struct DofSpec {
    bool small_sample = true;
    std::size_t extra_params = 0;  // absorbed parameters counted in K
};

/// Cluster-robust sandwich: bread * (sum_g s_g s_g') * bread with
/// s_g = sum_{i in g} w_i e_i x_i, scaled by G/(G-1) (N-1)/(N-K).
Matrix cluster_vcov(const Matrix& X, const Vector& residuals, const Factor& clusters, const Vector& weights,
                    const DofSpec& dof = {});
Matrix cluster_vcov(const Matrix& bread, const Matrix& X, const Vector& residuals, const Factor& clusters,
                    const Vector& weights, const DofSpec& dof);

/// Cluster-robust Wald statistic on the `excluded` coefficients divided by
/// their count.
double first_stage_f(const Vector& coef, const Matrix& vcov, const std::vector<Eigen::Index>& excluded);

struct RegressionSpec {
    std::string id;
    std::string dependent;
    std::vector<std::string> endogenous;
    std::vector<std::string> exogenous;
    std::vector<std::string> instruments;
    std::vector<std::string> fixed_effects;  // panel factor names
    std::string cluster = "occ_ind";
    std::string weights = "weight";
    AbsorbOptions absorb;
    DofSpec dof;
    bool count_unnested_fe = true;  // add absorbed levels not nested in clusters to K

    void validate() const;
};

struct Term {
    std::string name;
    double coef = 0.0;
    double se = 0.0;
    double t = 0.0;
    double p = 0.0;
};

struct FirstStage {
    std::string endogenous;
    std::vector<Term> terms;  // instruments then exogenous
    double f_stat = 0.0;
};

struct RegressionResult {
    std::string id;
    std::string dependent;
    std::string method;  // "ols" or "2sls"
    std::vector<Term> terms;
    std::vector<FirstStage> first_stage;
    double r2 = 0.0;          // adjusted
    double r2_within = 0.0;   // adjusted
    double r2_raw = 0.0;
    double r2_within_raw = 0.0;
    std::size_t n_obs = 0;
    std::size_t n_clusters = 0;
    std::size_t dropped_singletons = 0;
    std::size_t fe_params = 0;
    int absorb_iterations = 0;
    std::vector<std::string> fixed_effects;

    const Term* term(std::string_view name) const;
    std::optional<double> f_stat(std::string_view endogenous) const;
};

std::string stars(double p);

RegressionResult run_spec(const panel::PanelFrame& panel, const RegressionSpec& spec);

/// The six columns of a results table for `outcome`: automation, augmentation
/// and both, each without and with industry3 x year effects. With
/// instruments, six 2SLS columns follow.
std::vector<RegressionSpec> table_specs(const panel::PanelFrame& panel, std::string_view outcome,
                                        std::string_view id_prefix = {});

void write_results_csv(std::ostream& out, const std::vector<RegressionResult>& results);
void write_results_json(std::ostream& out, const std::vector<RegressionResult>& results);
/// Plain-text grid: Panel A (OLS) and Panel B (2SLS), six columns.
std::string render_table(std::string_view title, const std::vector<RegressionResult>& results);

}  // namespace exposurelab::estimator
