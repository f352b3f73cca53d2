#include "exposurelab/semlink.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "exposurelab/common.hpp"
#include "exposurelab/csv.hpp"

namespace exposurelab::semlink {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

template <typename T>
void put_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in, std::string_view source) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError(std::string(source) + ": truncated file");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
    return value;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> prod(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) prod[i] = a[i] * b[i];
    return pairwise_sum(prod);
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {}

void EmbeddingStore::add(std::string id, std::vector<double> vector) {
    if (vector.size() != dim_)
        throw DataError("embedding '" + id + "' has length " + std::to_string(vector.size()) + ", store dim is " +
                        std::to_string(dim_));
    bool nonzero = false;
    for (double x : vector) {
        if (!std::isfinite(x)) throw DataError("embedding '" + id + "' has a non-finite component");
        nonzero = nonzero || x != 0.0;
    }
    if (!nonzero) throw DataError("embedding '" + id + "' is the zero vector");
    if (index_.contains(id)) throw DataError("duplicate embedding id '" + id + "'");
    index_.emplace(id, ids_.size());
    ids_.push_back(std::move(id));
    vectors_.push_back(std::move(vector));
}

bool EmbeddingStore::contains(std::string_view id) const { return index_.contains(std::string(id)); }

const std::vector<double>& EmbeddingStore::at(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw DataError("no embedding for '" + std::string(id) + "'");
    return vectors_[it->second];
}

EmbeddingStore EmbeddingStore::select(const std::vector<std::pair<std::string, std::string>>& id_text) const {
    EmbeddingStore out(dim_);
    for (const auto& [id, text] : id_text) out.add(id, at(text));
    return out;
}

void write_binary(std::ostream& out, const EmbeddingStore& store) {
    out.write(kMagic, 4);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(store.size()));
    for (const auto& id : store.ids()) {
        if (id.size() > 0xFFFF) throw DataError("embedding id longer than 65535 bytes");
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
        for (double x : store.at(id)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
    }
}

EmbeddingStore read_binary(std::istream& in, std::string_view source) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(std::string(source) + ": bad magic (expected EMB1)");
    const auto dim = get_le<std::uint32_t>(in, source);
    const auto count = get_le<std::uint64_t>(in, source);
    if (dim == 0) throw DataError(std::string(source) + ": zero dimension");
    EmbeddingStore store(dim);
    for (std::uint64_t r = 0; r < count; ++r) {
        const auto len = get_le<std::uint16_t>(in, source);
        std::string id(len, '\0');
        if (!in.read(id.data(), len)) throw DataError(std::string(source) + ": truncated id");
        std::vector<double> v(dim);
        for (auto& x : v) x = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, source)));
        store.add(std::move(id), std::move(v));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw DataError(std::string(source) + ": trailing bytes after " + std::to_string(count) + " records");
    return store;
}

void write_csv(std::ostream& out, const EmbeddingStore& store) {
    csv::Writer w(out);
    std::vector<std::string> header{"id"};
    for (std::size_t i = 0; i < store.dim(); ++i) header.push_back("v" + std::to_string(i));
    w.row(header);
    for (const auto& id : store.ids()) {
        std::vector<std::string> row{id};
        for (double x : store.at(id)) row.push_back(format_exact(static_cast<float>(x)));
        w.row(row);
    }
}

EmbeddingStore read_csv(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    if (table.header.size() < 2 || table.header[0] != "id")
        throw DataError(path.string() + ": expected header id,v0..v{dim-1}");
    const std::size_t dim = table.header.size() - 1;
    for (std::size_t i = 0; i < dim; ++i)
        if (table.header[i + 1] != "v" + std::to_string(i))
            throw DataError(path.string() + ": column " + std::to_string(i + 1) + " must be v" + std::to_string(i));
    EmbeddingStore store(dim);
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        std::vector<double> v(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            const auto& cell = table.rows[r][i + 1];
            char* end = nullptr;
            const float f = std::strtof(cell.c_str(), &end);
            if (cell.empty() || end != cell.c_str() + cell.size())
                throw DataError(table.where(r) + ": bad component '" + cell + "'");
            v[i] = f;
        }
        store.add(table.rows[r][0], std::move(v));
    }
    return store;
}

EmbeddingStore load_store(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0) {
        in.seekg(0);
        return read_binary(in, path.string());
    }
    return read_csv(path);
}

double stable_norm(const std::vector<double>& v) {
    double scale = 0.0;
    for (double x : v) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return 0.0;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double s = v[i] / scale;
        sq[i] = s * s;
    }
    return scale * std::sqrt(pairwise_sum(sq));
}

EmbeddingStore test_embedder(const std::vector<std::string>& texts, std::size_t dim, std::uint64_t seed) {
    if (dim < 8) throw ValidationError("test embedder needs dim >= 8");
    const std::uint64_t salt = splitmix64(seed);
    EmbeddingStore store(dim);
    for (const auto& text : texts) {
        if (text.empty()) throw ValidationError("cannot embed empty text");
        if (store.contains(text)) continue;
        const std::string padded = " " + text + " ";
        std::vector<double> v(dim, 0.0);
        for (std::size_t n = 2; n <= 4; ++n) {
            if (padded.size() < n) continue;
            for (std::size_t i = 0; i + n <= padded.size(); ++i) {
                const std::uint64_t h = splitmix64(fnv1a(std::string_view(padded).substr(i, n)) ^ salt);
                v[h % dim] += (h >> 63) ? -1.0 : 1.0;
            }
        }
        const double norm = stable_norm(v);
        if (norm == 0.0) throw NumericalError("hashed n-grams cancel to zero for '" + text + "'");
        for (auto& x : v) x /= norm;
        store.add(text, std::move(v));
    }
    return store;
}

SimilarityMatrix cosine_clamped(const EmbeddingStore& rows, const EmbeddingStore& cols, unsigned threads) {
    if (rows.dim() != cols.dim())
        throw ValidationError("embedding dim mismatch: " + std::to_string(rows.dim()) + " vs " +
                              std::to_string(cols.dim()));
    SimilarityMatrix m{rows.ids(), cols.ids(), Eigen::MatrixXd::Zero(rows.size(), cols.size())};

    std::vector<double> col_norms(cols.size());
    for (std::size_t c = 0; c < cols.size(); ++c) {
        col_norms[c] = stable_norm(cols.at(cols.ids()[c]));
        if (col_norms[c] == 0.0) throw DataError("zero embedding for '" + cols.ids()[c] + "'");
    }
    std::vector<double> row_norms(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        row_norms[r] = stable_norm(rows.at(rows.ids()[r]));
        if (row_norms[r] == 0.0) throw DataError("zero embedding for '" + rows.ids()[r] + "'");
    }

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const auto& u = rows.at(rows.ids()[r]);
            for (std::size_t c = 0; c < cols.size(); ++c) {
                const double cosine = dot(u, cols.at(cols.ids()[c])) / (row_norms[r] * col_norms[c]);
                m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = std::clamp(cosine, 0.0, 1.0);
            }
        }
    };

    const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(rows.size(), 1));
    if (n_threads == 1) {
        work(0, rows.size());
        return m;
    }
    std::vector<std::jthread> pool;
    const std::size_t chunk = (rows.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
        const std::size_t begin = t * chunk;
        const std::size_t end = std::min(rows.size(), begin + chunk);
        if (begin < end) pool.emplace_back(work, begin, end);
    }
    pool.clear();
    return m;
}

Eigen::MatrixXd TransitionMatrix::dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(row_ids.size(), col_ids.size());
    for (const auto& e : entries) out(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) = e.value;
    return out;
}

double top_quantile_threshold(const Eigen::MatrixXd& values, double q) {
    if (!(q > 0.0 && q <= 1.0)) throw ValidationError("quantile q must lie in (0,1], got " + format_exact(q));
    const auto n = static_cast<std::size_t>(values.size());
    if (n == 0) throw ValidationError("quantile of an empty matrix");
    std::vector<double> sorted(values.data(), values.data() + n);
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    // Guard against q*N landing a hair above an integer.
    auto keep = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
    keep = std::clamp<std::size_t>(keep, 1, n);
    return sorted[keep - 1];
}

TransitionMatrix joint_top_quantile_average(const SimilarityMatrix& by_name, const SimilarityMatrix& by_description,
                                            double q) {
    if (by_name.values.rows() != by_description.values.rows() || by_name.values.cols() != by_description.values.cols())
        throw ValidationError("transition matrices differ in shape");
    if (by_name.row_ids != by_description.row_ids || by_name.col_ids != by_description.col_ids)
        throw ValidationError("transition matrices differ in id ordering");

    const double t_name = top_quantile_threshold(by_name.values, q);
    const double t_desc = top_quantile_threshold(by_description.values, q);

    TransitionMatrix out{by_name.row_ids, by_name.col_ids, {}};
    for (Eigen::Index r = 0; r < by_name.values.rows(); ++r)
        for (Eigen::Index c = 0; c < by_name.values.cols(); ++c) {
            const double a = by_name.values(r, c);
            const double b = by_description.values(r, c);
            if (a >= t_name && b >= t_desc)
                out.entries.push_back({static_cast<std::size_t>(r), static_cast<std::size_t>(c), (a + b) / 2.0});
        }
    return out;
}

void write_transition(std::ostream& out, const TransitionMatrix& matrix) {
    nlohmann::ordered_json j;
    j["row_ids"] = matrix.row_ids;
    j["col_ids"] = matrix.col_ids;
    auto entries = nlohmann::json::array();
    for (const auto& e : matrix.entries) entries.push_back({e.row, e.col, e.value});
    j["entries"] = std::move(entries);
    out << j.dump() << '\n';
}

TransitionMatrix read_transition(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    TransitionMatrix m;
    try {
        const auto j = nlohmann::json::parse(in);
        m.row_ids = j.at("row_ids").get<std::vector<std::string>>();
        m.col_ids = j.at("col_ids").get<std::vector<std::string>>();
        for (const auto& e : j.at("entries")) {
            TransitionEntry t{e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), e.at(2).get<double>()};
            if (t.row >= m.row_ids.size() || t.col >= m.col_ids.size() || !(t.value >= 0.0 && t.value <= 1.0))
                throw DataError(path.string() + ": entry out of range");
            m.entries.push_back(t);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    return m;
}


TransitionMatrix link_entities(const std::vector<LinkText>& targets, const std::vector<LinkText>& tags,
                               const EmbeddingStore& text_store, double q, unsigned threads) {
    auto texts = [](const std::vector<LinkText>& items, bool description) {
        std::vector<std::pair<std::string, std::string>> out;
        out.reserve(items.size());
        for (const auto& it : items)
            out.emplace_back(it.id, description && !it.description.empty() ? it.description : it.name);
        return out;
    };
    const auto by_name = cosine_clamped(text_store.select(texts(targets, false)),
                                        text_store.select(texts(tags, false)), threads);
    const auto by_desc = cosine_clamped(text_store.select(texts(targets, true)),
                                        text_store.select(texts(tags, true)), threads);
    return joint_top_quantile_average(by_name, by_desc, q);
}

}  // namespace exposurelab::semlink
