#include "probemb/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "probemb/parallel.hpp"
#include "probemb/random.hpp"

namespace probemb {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

// Shared by both search paths so identical inputs give identical scores.
double csd_score(double mu_sq, double query_mass, double gallery_mass) {
    return mu_sq + (query_mass + gallery_mass);
}

struct Candidate {
    double key;
    std::size_t index;
};

bool candidate_less(const Candidate& x, const Candidate& y) {
    return x.key < y.key || (x.key == y.key && x.index < y.index);
}

void keep_top(std::vector<Candidate>& c, std::size_t k) {
    k = std::min(k, c.size());
    std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(k), c.end(), candidate_less);
    c.resize(k);
}

void require_query(const ProbIndex& index, const GaussianEmbedding& query, std::size_t k) {
    if (query.dim() != index.dim()) {
        throw Error(ErrorCode::DimensionMismatch, "query dimension " + std::to_string(query.dim()) +
                                                      ", index dimension " + std::to_string(index.dim()));
    }
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
}

RankedList to_ranked(const ProbIndex& index, std::vector<Candidate> scored, std::size_t k,
                     const std::string& query_id) {
    keep_top(scored, k);
    RankedList out{query_id, {}};
    out.items.reserve(scored.size());
    for (const auto& c : scored) out.items.push_back({c.index, index.ids()[c.index], c.key});
    return out;
}

std::size_t nearest_centroid(const Matrix& centroids, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        const double d = squared_distance(centroids.row(c), x);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

ProbIndex::ProbIndex(std::vector<std::string> ids, Matrix mu, std::vector<double> mass,
                     std::optional<IvfIndex> ivf)
    : ids_(std::move(ids)), mu_(std::move(mu)), mass_(std::move(mass)), ivf_(std::move(ivf)) {
    if (ids_.size() != mu_.rows() || ids_.size() != mass_.size()) {
        throw Error(ErrorCode::ShapeMismatch, "index ids, means and masses differ in length");
    }
    if (ivf_) {
        if (ivf_->centroids.rows() != ivf_->lists.size() || ivf_->centroids.cols() != mu_.cols()) {
            throw Error(ErrorCode::ShapeMismatch, "IVF centroids do not match posting lists");
        }
        std::vector<bool> seen(ids_.size(), false);
        std::size_t total = 0;
        for (const auto& list : ivf_->lists) {
            for (std::size_t i : list) {
                if (i >= ids_.size() || seen[i]) throw Error(ErrorCode::MalformedFile, "IVF lists do not partition the gallery");
                seen[i] = true;
                ++total;
            }
        }
        if (total != ids_.size()) throw Error(ErrorCode::MalformedFile, "IVF lists do not cover the gallery");
    }
}

Matrix train_kmeans(const Matrix& points, const CoarseConfig& cfg) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    if (cfg.nlist == 0 || cfg.nlist > n) {
        throw Error(ErrorCode::BadNlist, "nlist " + std::to_string(cfg.nlist) + " for " + std::to_string(n) + " points");
    }
    Rng rng = make_rng(cfg.seed, 0x6b6d);
    Matrix centroids(cfg.nlist, d);

    // k-means++ seeding
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    std::size_t pick = first(rng);
    std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(0).begin());
    std::vector<double> closest(n);
    for (std::size_t i = 0; i < n; ++i) closest[i] = squared_distance(points.row(i), centroids.row(0));
    for (std::size_t c = 1; c < cfg.nlist; ++c) {
        const double total = std::accumulate(closest.begin(), closest.end(), 0.0);
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double target = u(rng);
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                target -= closest[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = first(rng);
        }
        std::copy(points.row(pick).begin(), points.row(pick).end(), centroids.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) {
            closest[i] = std::min(closest[i], squared_distance(points.row(i), centroids.row(c)));
        }
    }

    std::vector<std::size_t> assign(n, 0);
    for (int iter = 0; iter < cfg.training_iters; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = nearest_centroid(centroids, points.row(i));
            changed = changed || c != assign[i] || iter == 0;
            assign[i] = c;
        }
        Matrix sums(cfg.nlist, d);
        std::vector<std::size_t> counts(cfg.nlist, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t k = 0; k < d; ++k) sums(assign[i], k) += points(i, k);
        }
        for (std::size_t c = 0; c < cfg.nlist; ++c) {
            if (counts[c] == 0) continue;  // empty cluster keeps its centroid
            for (std::size_t k = 0; k < d; ++k) centroids(c, k) = sums(c, k) / static_cast<double>(counts[c]);
        }
        if (!changed) break;
    }
    return centroids;
}

ProbIndex build_index(const EmbeddingSet& gallery, const std::optional<CoarseConfig>& coarse) {
    if (gallery.empty()) throw Error(ErrorCode::EmptyGallery, "cannot index an empty gallery");
    const GaussianBatch batch = to_batch(gallery);
    std::vector<double> mass(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) mass[i] = uncertainty_mass(gallery[i]);
    std::optional<IvfIndex> ivf;
    if (coarse) {
        IvfIndex built{train_kmeans(batch.mu, *coarse), {}};
        built.lists.resize(coarse->nlist);
        for (std::size_t i = 0; i < gallery.size(); ++i) {
            built.lists[nearest_centroid(built.centroids, batch.mu.row(i))].push_back(i);
        }
        ivf = std::move(built);
    }
    return ProbIndex(gallery.ids(), batch.mu, std::move(mass), std::move(ivf));
}

RankedList search_exact(const ProbIndex& index, const GaussianEmbedding& query, std::size_t k,
                        const std::string& query_id) {
    require_query(index, query, k);
    const double query_mass = uncertainty_mass(query);
    std::vector<Candidate> scored(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        scored[i] = {csd_score(squared_distance(query.mu(), index.mu().row(i)), query_mass, index.mass()[i]), i};
    }
    return to_ranked(index, std::move(scored), k, query_id);
}

RankedList search_two_stage(const ProbIndex& index, const GaussianEmbedding& query, std::size_t k,
                            std::size_t shortlist_k, std::size_t nprobe, const std::string& query_id) {
    require_query(index, query, k);
    if (shortlist_k < k) {
        throw Error(ErrorCode::ShortlistTooSmall,
                    "shortlist_k " + std::to_string(shortlist_k) + " < k " + std::to_string(k));
    }

    std::vector<Candidate> shortlist;
    auto consider = [&](std::size_t i) {
        shortlist.push_back({squared_distance(query.mu(), index.mu().row(i)), i});
    };
    if (nprobe == 0 || !index.ivf() || nprobe >= index.ivf()->lists.size()) {
        shortlist.reserve(index.size());
        for (std::size_t i = 0; i < index.size(); ++i) consider(i);
    } else {
        const IvfIndex& ivf = *index.ivf();
        std::vector<Candidate> lists(ivf.centroids.rows());
        for (std::size_t c = 0; c < lists.size(); ++c) lists[c] = {squared_distance(query.mu(), ivf.centroids.row(c)), c};
        keep_top(lists, nprobe);
        for (const auto& l : lists) {
            for (std::size_t i : ivf.lists[l.index]) consider(i);
        }
    }
    keep_top(shortlist, shortlist_k);

    const double query_mass = uncertainty_mass(query);
    for (auto& c : shortlist) c.key = csd_score(c.key, query_mass, index.mass()[c.index]);
    return to_ranked(index, std::move(shortlist), k, query_id);
}

std::vector<RankedList> search_batch(const ProbIndex& index, const EmbeddingSet& queries,
                                     const SearchOptions& opts) {
    std::vector<RankedList> out(queries.size());
    parallel_for(queries.size(), opts.threads, [&](std::size_t q) {
        out[q] = opts.mode == SearchMode::exact
                     ? search_exact(index, queries[q], opts.k, queries.id(q))
                     : search_two_stage(index, queries[q], opts.k, opts.shortlist_k, opts.nprobe, queries.id(q));
    });
    return out;
}

std::vector<RankedList> rank_from_matrix(const Matrix& scores, const std::vector<std::string>& query_ids,
                                         const std::vector<std::string>& gallery_ids, bool higher_is_better) {
    if (scores.rows() != query_ids.size() || scores.cols() != gallery_ids.size()) {
        throw Error(ErrorCode::ShapeMismatch, "score matrix does not match id lists");
    }
    std::vector<RankedList> out(scores.rows());
    std::vector<std::size_t> order(scores.cols());
    for (std::size_t q = 0; q < scores.rows(); ++q) {
        std::iota(order.begin(), order.end(), 0);
        const auto row = scores.row(q);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return higher_is_better ? row[x] > row[y] : row[x] < row[y];
        });
        out[q].query_id = query_ids[q];
        out[q].items.reserve(order.size());
        for (std::size_t g : order) out[q].items.push_back({g, gallery_ids[g], row[g]});
    }
    return out;
}

}  // namespace probemb
