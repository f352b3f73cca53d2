#include "exposurelab/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "exposurelab/common.hpp"

namespace exposurelab::estimator {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kRankThreshold = 1e-10;
constexpr double kFeCollinearRatio = 1e-8;

// Weighted group means of every column of `r` for one factor.
RowMatrix group_means(const RowMatrix& r, const Factor& f, const Vector& w) {
    RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(f.levels), r.cols());
    Vector wsum = Vector::Zero(static_cast<Eigen::Index>(f.levels));
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
        const auto g = static_cast<Eigen::Index>(f.codes[static_cast<std::size_t>(i)]);
        sums.row(g) += w(i) * r.row(i);
        wsum(g) += w(i);
    }
    for (Eigen::Index g = 0; g < sums.rows(); ++g)
        if (wsum(g) > 0.0) sums.row(g) /= wsum(g);
    return sums;
}

void subtract_means(RowMatrix& r, const Factor& f, const RowMatrix& means) {
    for (Eigen::Index i = 0; i < r.rows(); ++i)
        r.row(i) -= means.row(static_cast<Eigen::Index>(f.codes[static_cast<std::size_t>(i)]));
}

std::string column_name(const std::vector<std::string>& names, Eigen::Index j) {
    const auto idx = static_cast<std::size_t>(j);
    return idx < names.size() ? names[idx] : "x" + std::to_string(j);
}

void require_finite(const Matrix& m, std::string_view what) {
    if (!m.allFinite()) throw NumericalError(std::string(what) + " contains non-finite values");
}

// (X'WX)^-1 and the QR solve, shared by wls_fit and the vcov helpers.
struct QrSolve {
    Vector coef;
    Matrix bread;
};

QrSolve solve_weighted(const Vector& y, const Matrix& X, const Vector& weights, const std::vector<std::string>& names) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (k == 0) throw ValidationError("regression without regressors");
    if (y.size() != n || weights.size() != n) throw ValidationError("regression inputs differ in length");
    if (n <= k) throw NumericalError("fewer observations than regressors");
    require_finite(X, "design matrix");
    require_finite(y, "dependent variable");
    require_finite(weights, "weights");
    if ((weights.array() <= 0.0).any()) throw ValidationError("weights must be positive");

    const Vector sw = weights.array().sqrt();
    Matrix xw = X.array().colwise() * sw.array();
    const Vector yw = y.array() * sw.array();

    Vector scale(k);
    std::vector<std::string> zero_cols;
    for (Eigen::Index j = 0; j < k; ++j) {
        scale(j) = xw.col(j).norm();
        if (scale(j) == 0.0) zero_cols.push_back(column_name(names, j));
        else xw.col(j) /= scale(j);
    }
    if (!zero_cols.empty())
        throw NumericalError("rank-deficient design; all-zero columns: " + join(zero_cols, ", "));

    Eigen::ColPivHouseholderQR<Matrix> qr(n, k);
    qr.setThreshold(kRankThreshold);
    qr.compute(xw);
    if (qr.rank() < k) {
        std::vector<std::string> collinear;
        for (Eigen::Index j = qr.rank(); j < k; ++j) collinear.push_back(column_name(names, qr.colsPermutation().indices()(j)));
        std::sort(collinear.begin(), collinear.end());
        throw NumericalError("rank-deficient design; collinear columns: " + join(collinear, ", "));
    }

    QrSolve out;
    out.coef = qr.solve(yw).array() / scale.array();

    const Matrix r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Matrix r_inv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(k, k));
    const Matrix inner = r_inv * r_inv.transpose();  // (R'R)^-1 in pivoted order
    Matrix scaled(k, k);
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index a = 0; a < k; ++a)
        for (Eigen::Index b = 0; b < k; ++b) scaled(perm(a), perm(b)) = inner(a, b);
    out.bread = scaled.array() / (scale * scale.transpose()).array();
    return out;
}

std::size_t count_components(const Factor& a, const Factor& b) {
    // union-find over a.levels + b.levels nodes
    std::vector<std::size_t> parent(a.levels + b.levels);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t i = 0; i < a.codes.size(); ++i) {
        const auto ra = find(a.codes[i]);
        const auto rb = find(a.levels + b.codes[i]);
        if (ra != rb) parent[ra] = rb;
    }
    std::size_t components = 0;
    for (std::size_t x = 0; x < parent.size(); ++x)
        if (find(x) == x) ++components;
    return components;
}

std::size_t fe_dof(const std::vector<Factor>& factors) {
    if (factors.empty()) return 0;
    std::size_t dof = factors[0].levels;
    if (factors.size() >= 2) dof += factors[1].levels - count_components(factors[0], factors[1]);
    for (std::size_t k = 2; k < factors.size(); ++k) dof += factors[k].levels - 1;
    return dof;
}

bool nested_in(const Factor& f, const Factor& clusters) {
    std::vector<long long> owner(f.levels, -1);
    for (std::size_t i = 0; i < f.codes.size(); ++i) {
        auto& o = owner[f.codes[i]];
        const auto c = static_cast<long long>(clusters.codes[i]);
        if (o == -1) o = c;
        else if (o != c) return false;
    }
    return true;
}

double weighted_sum(const Vector& w, const Vector& x) {
    std::vector<double> terms(static_cast<std::size_t>(x.size()));
    for (Eigen::Index i = 0; i < x.size(); ++i) terms[static_cast<std::size_t>(i)] = w(i) * x(i);
    return pairwise_sum(terms);
}

std::vector<Term> make_terms(const std::vector<std::string>& names, const Vector& coef, const Matrix& vcov,
                             std::size_t clusters) {
    const boost::math::students_t dist(static_cast<double>(std::max<std::size_t>(clusters, 2) - 1));
    std::vector<Term> out;
    for (Eigen::Index j = 0; j < coef.size(); ++j) {
        Term t;
        t.name = names[static_cast<std::size_t>(j)];
        t.coef = coef(j);
        t.se = std::sqrt(std::max(0.0, vcov(j, j)));
        t.t = t.se > 0.0 ? t.coef / t.se : 0.0;
        t.p = t.se > 0.0 ? 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t.t))) : 1.0;
        out.push_back(std::move(t));
    }
    return out;
}

Matrix gather(const panel::PanelFrame& panel, const std::vector<std::string>& names) {
    Matrix m(static_cast<Eigen::Index>(panel.size()), static_cast<Eigen::Index>(names.size()));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto col = panel.column(names[j]);
        for (std::size_t i = 0; i < col.size(); ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
    }
    return m;
}

}  // namespace

Factor encode_factor(const std::vector<std::string>& labels) {
    Factor f;
    std::unordered_map<std::string, std::size_t> codes;
    f.codes.reserve(labels.size());
    for (const auto& l : labels) {
        auto [it, inserted] = codes.emplace(l, codes.size());
        f.codes.push_back(it->second);
    }
    f.levels = codes.size();
    return f;
}

Factor subset_factor(const Factor& factor, const std::vector<std::size_t>& rows) {
    Factor f;
    std::vector<long long> remap(factor.levels, -1);
    for (auto r : rows) {
        auto& code = remap[factor.codes.at(r)];
        if (code == -1) code = static_cast<long long>(f.levels++);
        f.codes.push_back(static_cast<std::size_t>(code));
    }
    return f;
}

std::vector<std::size_t> non_singleton_rows(const std::vector<Factor>& factors) {
    const std::size_t n = factors.empty() ? 0 : factors[0].codes.size();
    std::vector<bool> active(n, true);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& f : factors) {
            std::vector<std::size_t> counts(f.levels, 0);
            for (std::size_t i = 0; i < n; ++i)
                if (active[i]) ++counts[f.codes[i]];
            for (std::size_t i = 0; i < n; ++i)
                if (active[i] && counts[f.codes[i]] == 1) {
                    active[i] = false;
                    changed = true;
                }
        }
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i)
        if (active[i]) rows.push_back(i);
    return rows;
}

Absorbed absorb_fixed_effects(const Matrix& columns, const std::vector<Factor>& factors, const Vector& weights,
                              const AbsorbOptions& options) {
    if (!(options.tol > 0.0)) throw ValidationError("absorption tolerance must be positive");
    if (options.max_iter < 1) throw ValidationError("absorption max_iter must be >= 1");
    for (const auto& f : factors)
        if (static_cast<Eigen::Index>(f.codes.size()) != columns.rows())
            throw ValidationError("fixed-effect factor length differs from the data");

    RowMatrix r = columns;
    Absorbed out;
    if (factors.empty()) {
        out.columns = r;
        return out;
    }

    auto max_mean = [&] {
        double m = 0.0;
        for (const auto& f : factors) m = std::max(m, group_means(r, f, weights).cwiseAbs().maxCoeff());
        return m;
    };

    for (int iter = 1; iter <= options.max_iter; ++iter) {
        double removed = 0.0;
        for (const auto& f : factors) {
            const auto means = group_means(r, f, weights);
            removed = std::max(removed, means.cwiseAbs().maxCoeff());
            subtract_means(r, f, means);
        }
        out.iterations = iter;
        if (factors.size() == 1) {
            out.max_group_mean = max_mean();
            out.columns = r;
            return out;
        }
        if (removed <= options.tol) {
            out.max_group_mean = max_mean();
            if (out.max_group_mean <= options.tol) {
                out.columns = r;
                return out;
            }
        }
    }
    throw NumericalError("fixed-effect absorption did not converge in " + std::to_string(options.max_iter) +
                         " iterations (max group mean " + format_exact(max_mean()) + ", residual norm " +
                         format_exact(r.norm()) + ")");
}

WlsFit wls_fit(const Vector& y, const Matrix& X, const Vector& weights, const std::vector<std::string>& names) {
    auto solved = solve_weighted(y, X, weights, names);
    WlsFit fit;
    fit.coef = std::move(solved.coef);
    fit.residuals = y - X * fit.coef;
    fit.bread = std::move(solved.bread);
    return fit;
}

Vector wls(const Vector& y, const Matrix& X, const Vector& weights) { return wls_fit(y, X, weights).coef; }

TslsFit tsls(const Vector& y, const Matrix& X_endog, const Matrix& X_exog, const Matrix& Z, const Vector& weights,
             const std::vector<std::string>& names) {
    const Eigen::Index n = y.size();
    const Eigen::Index p = X_endog.cols();
    const Eigen::Index m = Z.cols();
    if (p == 0) throw ValidationError("2SLS needs at least one endogenous regressor");
    if (m < p) throw ValidationError("2SLS needs at least as many instruments as endogenous regressors");
    if (X_endog.rows() != n || Z.rows() != n || X_exog.rows() != n)
        throw ValidationError("2SLS inputs differ in length");

    std::vector<std::string> endog_names(names.begin(), names.begin() + std::min<std::size_t>(names.size(), p));
    std::vector<std::string> exog_names;
    if (names.size() > static_cast<std::size_t>(p)) exog_names.assign(names.begin() + p, names.end());

    Matrix zx(n, m + X_exog.cols());
    zx << Z, X_exog;
    std::vector<std::string> zx_names;
    for (Eigen::Index j = 0; j < m; ++j) zx_names.push_back("instrument" + std::to_string(j));
    for (Eigen::Index j = 0; j < X_exog.cols(); ++j) zx_names.push_back(column_name(exog_names, j));

    TslsFit fit;
    fit.projected.resize(n, p + X_exog.cols());
    for (Eigen::Index j = 0; j < p; ++j) {
        auto fs = wls_fit(X_endog.col(j), zx, weights, zx_names);
        fit.projected.col(j) = zx * fs.coef;
        fit.first_stages.push_back(std::move(fs));
    }
    fit.projected.rightCols(X_exog.cols()) = X_exog;

    std::vector<std::string> second_names = endog_names;
    for (Eigen::Index j = 0; j < X_exog.cols(); ++j) second_names.push_back(column_name(exog_names, j));
    QrSolve second;
    try {
        second = solve_weighted(y, fit.projected, weights, second_names);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("weak-rank first stage: ") + e.what());
    }
    fit.coef = std::move(second.coef);
    fit.bread = std::move(second.bread);
    Matrix x_full(n, p + X_exog.cols());
    x_full << X_endog, X_exog;
    fit.residuals = y - x_full * fit.coef;
    return fit;
}

Matrix cluster_vcov(const Matrix& bread, const Matrix& X, const Vector& residuals, const Factor& clusters,
                    const Vector& weights, const DofSpec& dof) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (residuals.size() != n || weights.size() != n || static_cast<Eigen::Index>(clusters.codes.size()) != n)
        throw ValidationError("cluster_vcov inputs differ in length");
    std::vector<bool> seen(clusters.levels, false);
    std::size_t g_count = 0;
    for (auto c : clusters.codes)
        if (!seen[c]) {
            seen[c] = true;
            ++g_count;
        }
    if (g_count < 2) throw NumericalError("cluster-robust covariance needs at least 2 clusters");

    Matrix scores = Matrix::Zero(static_cast<Eigen::Index>(clusters.levels), k);
    for (Eigen::Index i = 0; i < n; ++i)
        scores.row(static_cast<Eigen::Index>(clusters.codes[static_cast<std::size_t>(i)])) +=
            (weights(i) * residuals(i)) * X.row(i);
    const Matrix meat = scores.transpose() * scores;

    double c = 1.0;
    if (dof.small_sample) {
        const double g = static_cast<double>(g_count);
        const double nn = static_cast<double>(n);
        const double kk = static_cast<double>(k) + static_cast<double>(dof.extra_params);
        if (nn <= kk) throw NumericalError("no residual degrees of freedom for the small-sample correction");
        c = g / (g - 1.0) * (nn - 1.0) / (nn - kk);
    }
    Matrix v = c * bread * meat * bread;
    return (v + v.transpose()) / 2.0;
}

Matrix cluster_vcov(const Matrix& X, const Vector& residuals, const Factor& clusters, const Vector& weights,
                    const DofSpec& dof) {
    const auto solved = solve_weighted(Vector::Zero(X.rows()), X, weights, {});
    return cluster_vcov(solved.bread, X, residuals, clusters, weights, dof);
}

double first_stage_f(const Vector& coef, const Matrix& vcov, const std::vector<Eigen::Index>& excluded) {
    if (excluded.empty()) throw ValidationError("first-stage F needs at least one excluded instrument");
    const auto m = static_cast<Eigen::Index>(excluded.size());
    Vector b(m);
    Matrix v(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
        b(a) = coef(excluded[static_cast<std::size_t>(a)]);
        for (Eigen::Index c = 0; c < m; ++c)
            v(a, c) = vcov(excluded[static_cast<std::size_t>(a)], excluded[static_cast<std::size_t>(c)]);
    }
    Eigen::FullPivLU<Matrix> lu(v);
    lu.setThreshold(1e-12);
    if (lu.rank() < m || !(v.diagonal().array() > 0.0).all())
        throw NumericalError("singular covariance block for the excluded instruments");
    const double wald = b.dot(lu.solve(b));
    return wald / static_cast<double>(m);
}

void RegressionSpec::validate() const {
    if (dependent.empty()) throw ValidationError("spec " + id + ": missing dependent variable");
    if (endogenous.size() > 2) throw ValidationError("spec " + id + ": at most two endogenous regressors");
    if (instruments.size() < endogenous.size())
        throw ValidationError("spec " + id + ": fewer instruments than endogenous regressors");
    if (!endogenous.empty() && instruments.empty())
        throw ValidationError("spec " + id + ": endogenous regressors need instruments");
    if (endogenous.empty() && !instruments.empty())
        throw ValidationError("spec " + id + ": instruments given without endogenous regressors");
    if (endogenous.empty() && exogenous.empty()) throw ValidationError("spec " + id + ": no regressors");
    if (cluster.empty()) throw ValidationError("spec " + id + ": cluster factor is required");
}

const Term* RegressionResult::term(std::string_view name) const {
    for (const auto& t : terms)
        if (t.name == name) return &t;
    return nullptr;
}

std::optional<double> RegressionResult::f_stat(std::string_view endogenous) const {
    for (const auto& fs : first_stage)
        if (fs.endogenous == endogenous) return fs.f_stat;
    return std::nullopt;
}

std::string stars(double p) {
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

RegressionResult run_spec(const panel::PanelFrame& panel, const RegressionSpec& spec) {
    spec.validate();
    auto require = [&](const std::string& name) {
        if (!panel.has_column(name)) throw ValidationError("spec " + spec.id + ": panel has no column '" + name + "'");
    };
    require(spec.dependent);
    require(spec.weights);
    for (const auto* list : {&spec.endogenous, &spec.exogenous, &spec.instruments})
        for (const auto& name : *list) require(name);

    const std::size_t n_all = panel.size();
    std::vector<Factor> factors_all;
    for (const auto& fe : spec.fixed_effects) factors_all.push_back(encode_factor(panel.factor(fe)));
    if (factors_all.empty()) factors_all.push_back(Factor{std::vector<std::size_t>(n_all, 0), n_all ? 1u : 0u});
    const Factor clusters_all = encode_factor(panel.factor(spec.cluster));

    const auto keep = non_singleton_rows(factors_all);
    const panel::PanelFrame data = keep.size() == n_all ? panel : panel.subset(keep);
    std::vector<Factor> factors;
    for (const auto& f : factors_all) factors.push_back(subset_factor(f, keep));
    const Factor clusters = subset_factor(clusters_all, keep);

    const Vector w = gather(data, {spec.weights}).col(0);
    std::vector<std::string> all_names{spec.dependent};
    all_names.insert(all_names.end(), spec.endogenous.begin(), spec.endogenous.end());
    all_names.insert(all_names.end(), spec.exogenous.begin(), spec.exogenous.end());
    all_names.insert(all_names.end(), spec.instruments.begin(), spec.instruments.end());
    const Matrix raw = gather(data, all_names);
    const auto absorbed = absorb_fixed_effects(raw, factors, w, spec.absorb);
    const Matrix& dm = absorbed.columns;

    // Columns wiped out by the fixed effects.
    const double wsum = w.sum();
    for (Eigen::Index j = 1; j < raw.cols(); ++j) {
        const double mean = weighted_sum(w, raw.col(j)) / wsum;
        const Vector centered = raw.col(j).array() - mean;
        const double before = std::sqrt(weighted_sum(w, centered.cwiseProduct(centered)));
        const double after = std::sqrt(weighted_sum(w, dm.col(j).cwiseProduct(dm.col(j))));
        if (after <= kFeCollinearRatio * before || before == 0.0)
            throw NumericalError("spec " + spec.id + ": column '" + all_names[static_cast<std::size_t>(j)] +
                                 "' is collinear with the fixed effects");
    }

    const auto p = static_cast<Eigen::Index>(spec.endogenous.size());
    const auto q = static_cast<Eigen::Index>(spec.exogenous.size());
    const auto m = static_cast<Eigen::Index>(spec.instruments.size());
    const Vector y = dm.col(0);
    const Matrix x_endog = dm.middleCols(1, p);
    const Matrix x_exog = dm.middleCols(1 + p, q);
    const Matrix z = dm.middleCols(1 + p + q, m);

    RegressionResult result;
    result.id = spec.id;
    result.dependent = spec.dependent;
    result.fixed_effects = spec.fixed_effects;
    result.n_obs = keep.size();
    result.dropped_singletons = n_all - keep.size();
    result.absorb_iterations = absorbed.iterations;
    result.fe_params = fe_dof(factors);

    DofSpec dof = spec.dof;
    if (spec.count_unnested_fe)
        for (const auto& f : factors)
            if (!nested_in(f, clusters)) dof.extra_params += f.levels - 1;

    std::vector<std::string> names = spec.endogenous;
    names.insert(names.end(), spec.exogenous.begin(), spec.exogenous.end());

    Vector coef;
    Vector resid;
    Matrix vcov;
    {
        std::vector<bool> seen(clusters.levels, false);
        for (auto c : clusters.codes) seen[c] = true;
        result.n_clusters = static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
    }
    if (p == 0) {
        result.method = "ols";
        const auto fit = wls_fit(y, x_exog, w, names);
        coef = fit.coef;
        resid = fit.residuals;
        vcov = cluster_vcov(fit.bread, x_exog, resid, clusters, w, dof);
    } else {
        result.method = "2sls";
        const auto fit = tsls(y, x_endog, x_exog, z, w, names);
        coef = fit.coef;
        resid = fit.residuals;
        vcov = cluster_vcov(fit.bread, fit.projected, resid, clusters, w, dof);

        Matrix zx(z.rows(), m + q);
        zx << z, x_exog;
        std::vector<std::string> fs_names = spec.instruments;
        fs_names.insert(fs_names.end(), spec.exogenous.begin(), spec.exogenous.end());
        std::vector<Eigen::Index> excluded(static_cast<std::size_t>(m));
        std::iota(excluded.begin(), excluded.end(), 0);
        for (Eigen::Index j = 0; j < p; ++j) {
            const auto& fs = fit.first_stages[static_cast<std::size_t>(j)];
            const Matrix fs_vcov = cluster_vcov(fs.bread, zx, fs.residuals, clusters, w, dof);
            FirstStage out;
            out.endogenous = spec.endogenous[static_cast<std::size_t>(j)];
            out.terms = make_terms(fs_names, fs.coef, fs_vcov, result.n_clusters);
            out.f_stat = first_stage_f(fs.coef, fs_vcov, excluded);
            result.first_stage.push_back(std::move(out));
        }
    }
    result.terms = make_terms(names, coef, vcov, result.n_clusters);

    const Vector y_raw = raw.col(0);
    const double ybar = weighted_sum(w, y_raw) / wsum;
    const Vector yc = y_raw.array() - ybar;
    const double sst = weighted_sum(w, yc.cwiseProduct(yc));
    const double sst_within = weighted_sum(w, y.cwiseProduct(y));
    const double ssr = weighted_sum(w, resid.cwiseProduct(resid));
    result.r2_raw = 1.0 - ssr / sst;
    result.r2_within_raw = 1.0 - ssr / sst_within;
    const double nn = static_cast<double>(result.n_obs);
    const double k_total = static_cast<double>(coef.size() + static_cast<Eigen::Index>(result.fe_params));
    const double adj = (nn - 1.0) / std::max(nn - k_total, 1.0);
    result.r2 = 1.0 - (1.0 - result.r2_raw) * adj;
    result.r2_within = 1.0 - (1.0 - result.r2_within_raw) * adj;
    return result;
}

std::vector<RegressionSpec> table_specs(const panel::PanelFrame& panel, std::string_view outcome,
                                        std::string_view id_prefix) {
    const std::string prefix = id_prefix.empty() ? std::string(outcome) + "/" : std::string(id_prefix);
    const auto controls = panel.default_controls(outcome);
    const std::vector<std::vector<std::string>> regressors = {{"auto_ai"}, {"augm_ai"}, {"auto_ai", "augm_ai"}};
    const std::vector<std::vector<std::string>> fe_sets = {{"occ_ind"}, {"occ_ind", "ind3_year"}};

    std::vector<RegressionSpec> out;
    auto add = [&](bool iv) {
        int column = 1;
        for (const auto& regs : regressors)
            for (const auto& fes : fe_sets) {
                RegressionSpec s;
                s.id = prefix + (iv ? "2sls/" : "ols/") + std::to_string(column++);
                s.dependent = std::string(outcome);
                s.fixed_effects = fes;
                if (iv) {
                    s.endogenous = regs;
                    for (const auto& r : regs) s.instruments.push_back(r + "_iv");
                    s.exogenous = controls;
                } else {
                    s.exogenous = regs;
                    s.exogenous.insert(s.exogenous.end(), controls.begin(), controls.end());
                }
                out.push_back(std::move(s));
            }
    };
    add(false);
    if (panel.has_instruments()) add(true);
    return out;
}

void write_results_csv(std::ostream& out, const std::vector<RegressionResult>& results) {
    out << "spec_id,term,coef,se,stars,fstat_auto,fstat_augm,r2,r2_within,n,clusters\n";
    for (const auto& r : results) {
        const auto f_auto = r.f_stat("auto_ai");
        const auto f_augm = r.f_stat("augm_ai");
        for (const auto& t : r.terms) {
            out << r.id << ',' << t.name << ',' << format_sig9(t.coef) << ',' << format_sig9(t.se) << ','
                << stars(t.p) << ',' << (f_auto ? format_sig9(*f_auto) : "") << ','
                << (f_augm ? format_sig9(*f_augm) : "") << ',' << format_sig9(r.r2) << ','
                << format_sig9(r.r2_within) << ',' << r.n_obs << ',' << r.n_clusters << '\n';
        }
    }
}

void write_results_json(std::ostream& out, const std::vector<RegressionResult>& results) {
    auto terms_json = [](const std::vector<Term>& terms) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& t : terms)
            arr.push_back({{"term", t.name}, {"coef", t.coef}, {"se", t.se}, {"t", t.t}, {"p", t.p}, {"stars", stars(t.p)}});
        return arr;
    };
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json j;
        j["spec_id"] = r.id;
        j["dependent"] = r.dependent;
        j["method"] = r.method;
        j["fixed_effects"] = r.fixed_effects;
        j["terms"] = terms_json(r.terms);
        auto fs = nlohmann::ordered_json::array();
        for (const auto& f : r.first_stage)
            fs.push_back({{"endogenous", f.endogenous}, {"f_stat", f.f_stat}, {"terms", terms_json(f.terms)}});
        j["first_stage"] = std::move(fs);
        j["r2_adj"] = r.r2;
        j["r2_within_adj"] = r.r2_within;
        j["r2"] = r.r2_raw;
        j["r2_within"] = r.r2_within_raw;
        j["n_obs"] = r.n_obs;
        j["n_clusters"] = r.n_clusters;
        j["dropped_singletons"] = r.dropped_singletons;
        j["fe_params"] = r.fe_params;
        j["absorb_iterations"] = r.absorb_iterations;
        arr.push_back(std::move(j));
    }
    out << arr.dump(2) << '\n';
}

std::string render_table(std::string_view title, const std::vector<RegressionResult>& results) {
    std::vector<const RegressionResult*> ols, iv;
    for (const auto& r : results) (r.method == "ols" ? ols : iv).push_back(&r);

    constexpr int label_w = 24;
    constexpr int col_w = 13;
    std::ostringstream os;
    const std::size_t ncol = std::max(ols.size(), iv.size());
    const std::string rule(static_cast<std::size_t>(label_w + col_w * static_cast<int>(ncol)), '-');

    auto cell = [&](const std::string& s) { os << std::setw(col_w) << s; };
    auto label = [&](const std::string& s) { os << std::left << std::setw(label_w) << s << std::right; };
    auto fmt = [](double v, int digits) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(digits) << v;
        return s.str();
    };
    auto coef_rows = [&](const std::vector<const RegressionResult*>& cols, const std::string& term,
                         const std::string& name) {
        label(name);
        for (const auto* r : cols) {
            const auto* t = r->term(term);
            cell(t ? fmt(t->coef, 3) + stars(t->p) : "");
        }
        os << '\n';
        label("");
        for (const auto* r : cols) {
            const auto* t = r->term(term);
            cell(t ? "(" + fmt(t->se, 3) + ")" : "");
        }
        os << '\n';
    };

    os << title << '\n' << rule << '\n';
    label("");
    for (std::size_t c = 0; c < ncol; ++c) cell("(" + std::to_string(c + 1) + ")");
    os << '\n' << rule << '\n';
    if (!ols.empty()) {
        os << "Panel A: OLS estimators\n";
        coef_rows(ols, "auto_ai", "Automation AI");
        coef_rows(ols, "augm_ai", "Augmentation AI");
        label("R2 adj.");
        for (const auto* r : ols) cell(fmt(r->r2, 3));
        os << '\n';
        label("R2 within adj.");
        for (const auto* r : ols) cell(fmt(r->r2_within, 3));
        os << '\n';
    }
    if (!iv.empty()) {
        os << "Panel B: 2SLS estimators\n";
        coef_rows(iv, "auto_ai", "Automation AI");
        coef_rows(iv, "augm_ai", "Augmentation AI");
        label("F-Stat (auto)");
        for (const auto* r : iv) {
            const auto f = r->f_stat("auto_ai");
            cell(f ? fmt(*f, 0) : "");
        }
        os << '\n';
        label("F-Stat (augm)");
        for (const auto* r : iv) {
            const auto f = r->f_stat("augm_ai");
            cell(f ? fmt(*f, 0) : "");
        }
        os << '\n';
    }
    os << rule << '\n';
    const auto& ref = ols.empty() ? iv : ols;
    auto fe_row = [&](const std::string& fe, const std::string& name) {
        label(name);
        for (const auto* r : ref) {
            const bool has = std::find(r->fixed_effects.begin(), r->fixed_effects.end(), fe) != r->fixed_effects.end();
            cell(has ? "x" : "");
        }
        os << '\n';
    };
    fe_row("occ_ind", "occ x ind FE");
    fe_row("ind3_year", "ind3 x year FE");
    label("Observations");
    for (const auto* r : ref) cell(std::to_string(r->n_obs));
    os << '\n';
    label("Clusters");
    for (const auto* r : ref) cell(std::to_string(r->n_clusters));
    os << '\n' << rule << '\n';
    return os.str();
}

}  // namespace exposurelab::estimator
