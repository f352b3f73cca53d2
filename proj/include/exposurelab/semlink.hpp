#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace exposurelab::semlink {

/// Embedding vectors keyed by id, in insertion order. Values are held in
/// double precision; the binary file stores f32, so a file round trip is
/// bit-exact for vectors that came from a file.
class EmbeddingStore {
public:
    explicit EmbeddingStore(std::size_t dim = 0);

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return ids_.size(); }
    const std::vector<std::string>& ids() const { return ids_; }

    /// Throws DataError on wrong length, non-finite or all-zero vectors, or
    /// a duplicate id.
    void add(std::string id, std::vector<double> vector);
    bool contains(std::string_view id) const;
    /// Throws DataError naming the id when absent.
    const std::vector<double>& at(std::string_view id) const;

    /// A store keyed by `entity_id` whose vectors are looked up by text in
    /// this (text-keyed) store.
    EmbeddingStore select(const std::vector<std::pair<std::string, std::string>>& id_text) const;

private:
    std::size_t dim_;
    std::vector<std::string> ids_;
    std::vector<std::vector<double>> vectors_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Binary layout: "EMB1", u32 dim, u64 count, then per record u16 id length,
/// UTF-8 id bytes, dim little-endian f32.
void write_binary(std::ostream& out, const EmbeddingStore& store);
EmbeddingStore read_binary(std::istream& in, std::string_view source = "embedding store");
/// CSV layout: id,v0..v{dim-1}.
void write_csv(std::ostream& out, const EmbeddingStore& store);
EmbeddingStore read_csv(const std::filesystem::path& path);
/// Dispatches on the leading magic bytes.
EmbeddingStore load_store(const std::filesystem::path& path);

/// Deterministic stand-in for a sentence encoder: signed hashing of
/// character 2-, 3- and 4-grams into `dim` buckets, then L2 normalization.
/// Keys of the result are the texts themselves.
EmbeddingStore test_embedder(const std::vector<std::string>& texts, std::size_t dim, std::uint64_t seed);

/// L2 norm with the scaled two-pass scheme (no overflow or underflow).
double stable_norm(const std::vector<double>& v);

struct SimilarityMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
    Eigen::MatrixXd values;
};

/// max(0, cos(row, col)) for every row entry of `rows` against every entry
/// of `cols`. Rows are computed in parallel on `threads` workers.
SimilarityMatrix cosine_clamped(const EmbeddingStore& rows, const EmbeddingStore& cols, unsigned threads = 1);

struct TransitionEntry {
    std::size_t row = 0;
    std::size_t col = 0;
    double value = 0.0;

    bool operator==(const TransitionEntry&) const = default;
};

/// Sparse target-by-tag link weights in [0,1]. Rows are target entities
/// (abilities or micro-titles), columns are tags. Absent pairs are 0.
struct TransitionMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
    std::vector<TransitionEntry> entries;  // sorted by (row, col)

    Eigen::MatrixXd dense() const;
};

/// Smallest value still inside the top ceil(q * N) entries of `values`
/// (descending nearest rank, zeros included). q = 1 returns the minimum.
double top_quantile_threshold(const Eigen::MatrixXd& values, double q);

/// Keeps (r,c) when both matrices are at or above their own top-q threshold
/// and stores the mean of the two similarities.
TransitionMatrix joint_top_quantile_average(const SimilarityMatrix& by_name, const SimilarityMatrix& by_description,
                                            double q);

void write_transition(std::ostream& out, const TransitionMatrix& matrix);
TransitionMatrix read_transition(const std::filesystem::path& path);


/// A target entity of a transition matrix with the texts used for the
/// name-based and description-based similarities.
struct LinkText {
    std::string id;
    std::string name;
    std::string description;  // empty falls back to name
};

/// Name matrix (target names vs tag names) and description matrix (target
/// descriptions vs tag descriptions), filtered jointly at top-q and averaged.
/// `text_store` is keyed by text.
TransitionMatrix link_entities(const std::vector<LinkText>& targets, const std::vector<LinkText>& tags,
                               const EmbeddingStore& text_store, double q, unsigned threads = 1);

}  // namespace exposurelab::semlink
