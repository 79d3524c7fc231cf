#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "probemb/error.hpp"
#include "probemb/matrix.hpp"

namespace probemb {

/// One item's diagonal Gaussian N(mu, diag(exp(log_var))). The log-variance
/// is the canonical parameterization; variances are derived on demand.
class GaussianEmbedding {
public:
    GaussianEmbedding(std::vector<double> mu, std::vector<double> log_var);

    [[nodiscard]] std::size_t dim() const noexcept { return mu_.size(); }
    [[nodiscard]] std::span<const double> mu() const noexcept { return mu_; }
    [[nodiscard]] std::span<const double> log_var() const noexcept { return log_var_; }
    [[nodiscard]] double variance(std::size_t i) const;
    [[nodiscard]] std::vector<double> variances() const;
    /// Per-dimension standard deviation exp(log_var / 2).
    [[nodiscard]] std::vector<double> sigmas() const;

    friend bool operator==(const GaussianEmbedding&, const GaussianEmbedding&) = default;

private:
    std::vector<double> mu_;
    std::vector<double> log_var_;
};

/// Validating constructor; throws DimensionMismatch or NonFiniteValue.
GaussianEmbedding make_embedding(std::vector<double> mu, std::vector<double> log_var);

/// ||sigma^2||_1, the scalar uncertainty of an embedding.
double uncertainty_mass(const GaussianEmbedding& e);
/// ||sigma||_1, the alternative scalar some rankings use.
double sigma_l1(const GaussianEmbedding& e);

/// Log-variance written for deterministic (mu-only) items, i.e. sigma^2 ~ 0.
inline constexpr double kMuOnlyLogVar = -100.0;

enum class Modality { untagged = 0, visual = 1, textual = 2 };

std::string_view to_string(Modality m) noexcept;
Modality parse_modality(std::string_view name);

class EmbeddingSet {
public:
    EmbeddingSet() = default;
    /// Throws DuplicateId, InvalidArgument (empty id / length mismatch) or
    /// DimensionMismatch. `dim` is only consulted when the set is empty.
    EmbeddingSet(std::vector<std::string> ids, std::vector<GaussianEmbedding> embeddings,
                 Modality modality = Modality::untagged, bool has_log_var = true,
                 std::size_t dim = 0);

    [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
    [[nodiscard]] bool empty() const noexcept { return ids_.empty(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] Modality modality() const noexcept { return modality_; }
    /// False for deterministic sets whose variance section is absent on disk.
    [[nodiscard]] bool has_log_var() const noexcept { return has_log_var_; }

    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
    [[nodiscard]] const std::vector<GaussianEmbedding>& embeddings() const noexcept {
        return embeddings_;
    }
    [[nodiscard]] const GaussianEmbedding& operator[](std::size_t i) const { return embeddings_[i]; }
    [[nodiscard]] const std::string& id(std::size_t i) const { return ids_[i]; }
    [[nodiscard]] std::optional<std::size_t> find(std::string_view id) const;

    friend bool operator==(const EmbeddingSet& a, const EmbeddingSet& b) {
        return a.ids_ == b.ids_ && a.embeddings_ == b.embeddings_ && a.modality_ == b.modality_ &&
               a.has_log_var_ == b.has_log_var_ && a.dim_ == b.dim_;
    }

private:
    std::vector<std::string> ids_;
    std::vector<GaussianEmbedding> embeddings_;
    Modality modality_ = Modality::untagged;
    bool has_log_var_ = true;
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Batched (mu, log_var) block with one row per item. This is the working
/// representation for losses and optimizers.
struct GaussianBatch {
    Matrix mu;
    Matrix log_var;

    [[nodiscard]] std::size_t size() const noexcept { return mu.rows(); }
    [[nodiscard]] std::size_t dim() const noexcept { return mu.cols(); }
};

GaussianBatch to_batch(const EmbeddingSet& set);
GaussianBatch to_batch(std::span<const GaussianEmbedding> items);

struct MatchEntry {
    std::string query;
    std::string gallery;
    double relevance = 0.0;
};

/// Sparse query x gallery relevance in [0, 1]; unlisted pairs are 0.
class MatchTable {
public:
    MatchTable() = default;
    /// Throws UnknownId for ids not listed, OutOfRange for values outside
    /// [0, 1], DuplicateId for repeated query/gallery ids. A repeated entry
    /// overwrites the earlier value.
    MatchTable(std::vector<std::string> query_ids, std::vector<std::string> gallery_ids,
               const std::vector<MatchEntry>& entries);

    [[nodiscard]] const std::vector<std::string>& query_ids() const noexcept { return query_ids_; }
    [[nodiscard]] const std::vector<std::string>& gallery_ids() const noexcept {
        return gallery_ids_;
    }
    [[nodiscard]] std::size_t num_queries() const noexcept { return query_ids_.size(); }
    [[nodiscard]] std::size_t num_gallery() const noexcept { return gallery_ids_.size(); }

    [[nodiscard]] std::optional<std::size_t> query_index(std::string_view id) const;
    [[nodiscard]] std::optional<std::size_t> gallery_index(std::string_view id) const;

    [[nodiscard]] double relevance(std::size_t q, std::size_t g) const;
    /// Listed (gallery index, relevance) pairs for a query, gallery order.
    [[nodiscard]] const std::vector<std::pair<std::size_t, double>>& row(std::size_t q) const {
        return rows_[q];
    }
    /// Gallery indices with relevance >= threshold.
    [[nodiscard]] std::vector<std::size_t> positives(std::size_t q, double threshold = 0.5) const;

    [[nodiscard]] Matrix dense() const;
    [[nodiscard]] MatchTable transposed() const;
    [[nodiscard]] std::vector<MatchEntry> entries() const;

private:
    std::vector<std::string> query_ids_;
    std::vector<std::string> gallery_ids_;
    std::unordered_map<std::string, std::size_t> query_index_;
    std::unordered_map<std::string, std::size_t> gallery_index_;
    std::vector<std::vector<std::pair<std::size_t, double>>> rows_;
};

}  // namespace probemb
