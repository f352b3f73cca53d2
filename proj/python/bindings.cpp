#include <fstream>
#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "exposurelab/common.hpp"
#include "exposurelab/estimator.hpp"
#include "exposurelab/newwork.hpp"
#include "exposurelab/pipeline.hpp"
#include "exposurelab/scoring.hpp"
#include "exposurelab/semlink.hpp"

namespace py = pybind11;
namespace el = exposurelab;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// (post_id, year, votes, tags) tuples from Python.
using PostTuple = std::tuple<std::string, int, std::int64_t, std::vector<std::string>>;

std::vector<el::corpus::Post> to_posts(const std::vector<PostTuple>& rows) {
    std::vector<el::corpus::Post> posts;
    posts.reserve(rows.size());
    for (const auto& [id, year, votes, tags] : rows) posts.push_back({id, year, votes, tags, ""});
    return posts;
}

std::map<std::string, std::map<int, double>> tag_scores(const std::vector<PostTuple>& rows, double decay,
                                                        int end_year) {
    const auto posts = to_posts(rows);
    std::map<std::string, std::map<int, double>> out;
    for (auto& t : el::scoring::tag_year_scores(el::scoring::smooth_question_scores(posts, decay, end_year), posts))
        out.emplace(std::move(t.tag_id), std::move(t.scores));
    return out;
}

std::vector<el::estimator::Factor> to_factors(const std::vector<std::vector<std::string>>& labels) {
    std::vector<el::estimator::Factor> factors;
    for (const auto& l : labels) factors.push_back(el::estimator::encode_factor(l));
    return factors;
}

el::semlink::EmbeddingStore to_store(const std::vector<std::string>& ids, const RowMatrix& vectors) {
    if (static_cast<Eigen::Index>(ids.size()) != vectors.rows())
        throw el::ValidationError("ids and vectors differ in length");
    el::semlink::EmbeddingStore store(static_cast<std::size_t>(vectors.cols()));
    for (Eigen::Index r = 0; r < vectors.rows(); ++r)
        store.add(ids[static_cast<std::size_t>(r)],
                  std::vector<double>(vectors.row(r).data(), vectors.row(r).data() + vectors.cols()));
    return store;
}

py::tuple from_store(const el::semlink::EmbeddingStore& store) {
    RowMatrix m(static_cast<Eigen::Index>(store.size()), static_cast<Eigen::Index>(store.dim()));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& v = store.at(store.ids()[i]);
        for (std::size_t j = 0; j < v.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[j];
    }
    return py::make_tuple(store.ids(), m);
}

el::semlink::SimilarityMatrix similarity(const Eigen::MatrixXd& values) {
    el::semlink::SimilarityMatrix m;
    for (Eigen::Index r = 0; r < values.rows(); ++r) m.row_ids.push_back(std::to_string(r));
    for (Eigen::Index c = 0; c < values.cols(); ++c) m.col_ids.push_back(std::to_string(c));
    m.values = values;
    return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "AI exposure indices, new-work detection and fixed-effect regressions";

    auto base = py::register_exception<el::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<el::ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<el::DataError>(m, "DataError", base.ptr());
    py::register_exception<el::NumericalError>(m, "NumericalError", base.ptr());

    m.def("tag_scores", &tag_scores, py::arg("posts"), py::arg("decay") = 0.5, py::arg("end_year") = 2022,
          "Tag-by-year scores from (post_id, year, votes, tags) tuples.");

    m.def("normalize_title", [](const std::string& t) { return el::newwork::normalize_title(t); });

    m.def(
        "joint_top_quantile",
        [](const Eigen::MatrixXd& by_name, const Eigen::MatrixXd& by_description, double q) {
            return el::semlink::joint_top_quantile_average(similarity(by_name), similarity(by_description), q).dense();
        },
        py::arg("by_name"), py::arg("by_description"), py::arg("q") = 0.25,
        "Dense transition matrix: mean of the two inputs where both are in their top-q share, else 0.");

    m.def(
        "test_embeddings",
        [](const std::vector<std::string>& texts, std::size_t dim, std::uint64_t seed) {
            return from_store(el::semlink::test_embedder(texts, dim, seed));
        },
        py::arg("texts"), py::arg("dim") = 64, py::arg("seed") = 20240101);

    m.def(
        "load_embeddings", [](const std::filesystem::path& path) { return from_store(el::semlink::load_store(path)); },
        "Reads an EMB1 or CSV store; returns (ids, vectors).");
    m.def(
        "save_embeddings",
        [](const std::filesystem::path& path, const std::vector<std::string>& ids, const RowMatrix& vectors,
           bool binary) {
            const auto store = to_store(ids, vectors);
            std::ofstream out(path, std::ios::binary);
            if (!out) throw el::DataError("cannot write " + path.string());
            if (binary)
                el::semlink::write_binary(out, store);
            else
                el::semlink::write_csv(out, store);
        },
        py::arg("path"), py::arg("ids"), py::arg("vectors"), py::arg("binary") = true);

    m.def(
        "absorb",
        [](const Eigen::MatrixXd& columns, const std::vector<std::vector<std::string>>& factors,
           const Eigen::VectorXd& weights, double tol) {
            el::estimator::AbsorbOptions opts;
            opts.tol = tol;
            return el::estimator::absorb_fixed_effects(columns, to_factors(factors), weights, opts).columns;
        },
        py::arg("columns"), py::arg("factors"), py::arg("weights"), py::arg("tol") = 1e-8);

    m.def("wls", &el::estimator::wls, py::arg("y"), py::arg("X"), py::arg("weights"));

    m.def(
        "tsls",
        [](const Eigen::VectorXd& y, const Eigen::MatrixXd& x_endog, const Eigen::MatrixXd& x_exog,
           const Eigen::MatrixXd& z, const Eigen::VectorXd& weights) {
            return el::estimator::tsls(y, x_endog, x_exog, z, weights).coef;
        },
        py::arg("y"), py::arg("X_endog"), py::arg("X_exog"), py::arg("Z"), py::arg("weights"),
        "Coefficients on [X_endog, X_exog].");

    m.def(
        "cluster_vcov",
        [](const Eigen::MatrixXd& x, const Eigen::VectorXd& residuals, const std::vector<std::string>& clusters,
           const Eigen::VectorXd& weights, std::size_t extra_params) {
            el::estimator::DofSpec dof;
            dof.extra_params = extra_params;
            return el::estimator::cluster_vcov(x, residuals, el::estimator::encode_factor(clusters), weights, dof);
        },
        py::arg("X"), py::arg("residuals"), py::arg("clusters"), py::arg("weights"), py::arg("extra_params") = 0);

    m.def(
        "run",
        [](const std::string& stage, const std::filesystem::path& config, std::optional<std::filesystem::path> out,
           unsigned threads) {
            auto c = el::pipeline::RunConfig::load(config);
            if (out) c.out_dir = *out;
            py::list result;
            for (const auto& o : el::pipeline::run(el::pipeline::stage_from_string(stage), c, {threads, false}))
                result.append(py::dict(py::arg("stage") = std::string(el::pipeline::to_string(o.stage)),
                                       py::arg("cache_hit") = o.cache_hit, py::arg("reason") = o.reason));
            return result;
        },
        py::arg("stage"), py::arg("config"), py::arg("out") = py::none(), py::arg("threads") = 1,
        "Runs a pipeline stage and its upstream stages; returns one dict per stage.");
}
