#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "probemb/core_types.hpp"
#include "probemb/distances.hpp"
#include "probemb/matrix.hpp"

namespace probemb {

struct RankedItem {
    std::size_t index = 0;  ///< position in the gallery
    std::string id;
    double score = 0.0;

    friend bool operator==(const RankedItem&, const RankedItem&) = default;
};

/// Gallery items for one query, best first. For distance scores the order
/// is ascending; ties keep gallery insertion order.
struct RankedList {
    std::string query_id;
    std::vector<RankedItem> items;

    friend bool operator==(const RankedList&, const RankedList&) = default;
};

struct CoarseConfig {
    std::size_t nlist = 1;
    int training_iters = 25;
    std::uint64_t seed = 0;
};

/// Inverted-file coarse quantizer over gallery means.
struct IvfIndex {
    Matrix centroids;
    std::vector<std::vector<std::size_t>> lists;
    friend bool operator==(const IvfIndex&, const IvfIndex&) = default;
};

/// Gallery means plus the per-item variance mass ||sigma^2||_1 kept as a
/// side table. Immutable after build; safe for concurrent queries.
class ProbIndex {
public:
    ProbIndex(std::vector<std::string> ids, Matrix mu, std::vector<double> mass,
              std::optional<IvfIndex> ivf = std::nullopt);

    [[nodiscard]] std::size_t size() const noexcept { return ids_.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return mu_.cols(); }
    [[nodiscard]] const std::vector<std::string>& ids() const noexcept { return ids_; }
    [[nodiscard]] const Matrix& mu() const noexcept { return mu_; }
    [[nodiscard]] const std::vector<double>& mass() const noexcept { return mass_; }
    [[nodiscard]] const std::optional<IvfIndex>& ivf() const noexcept { return ivf_; }

    friend bool operator==(const ProbIndex&, const ProbIndex&) = default;

private:
    std::vector<std::string> ids_;
    Matrix mu_;
    std::vector<double> mass_;
    std::optional<IvfIndex> ivf_;
};

/// k-means++ seeding followed by Lloyd iterations. Returns nlist centroids.
Matrix train_kmeans(const Matrix& points, const CoarseConfig& cfg);

ProbIndex build_index(const EmbeddingSet& gallery, const std::optional<CoarseConfig>& coarse = std::nullopt);

/// Top-k by csd, scored as ||mu_q - mu_g||^2 + mass(q) + mass(g).
RankedList search_exact(const ProbIndex& index, const GaussianEmbedding& query, std::size_t k,
                        const std::string& query_id = {});

/// Stage 1 keeps shortlist_k candidates by squared mean distance, either
/// exhaustively (nprobe == 0) or from the nprobe closest IVF lists. Stage 2
/// re-ranks the shortlist with the stored gallery mass and returns top-k
/// with the same csd score as search_exact.
RankedList search_two_stage(const ProbIndex& index, const GaussianEmbedding& query, std::size_t k,
                            std::size_t shortlist_k, std::size_t nprobe = 0,
                            const std::string& query_id = {});

enum class SearchMode { exact, two_stage };

struct SearchOptions {
    SearchMode mode = SearchMode::exact;
    std::size_t k = 10;
    std::size_t shortlist_k = 100;
    std::size_t nprobe = 0;
    unsigned threads = 1;
};

/// One ranked list per query, in query order; independent of thread count.
std::vector<RankedList> search_batch(const ProbIndex& index, const EmbeddingSet& queries,
                                     const SearchOptions& opts);

/// Full ranking of every gallery column for every row of a score matrix.
std::vector<RankedList> rank_from_matrix(const Matrix& scores, const std::vector<std::string>& query_ids,
                                         const std::vector<std::string>& gallery_ids,
                                         bool higher_is_better = false);

}  // namespace probemb
