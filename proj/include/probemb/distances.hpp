#pragma once

#include <cstdint>
#include <span>
#include <string_view>

#include "probemb/core_types.hpp"
#include "probemb/matrix.hpp"

namespace probemb {

enum class DistanceKind {
    csd,
    wasserstein2,
    kl,
    js_mc,
    bhattacharyya,
    elk,
    pcme_match_prob_mc,
    euclidean_mu_only,
};

std::string_view to_string(DistanceKind kind) noexcept;
DistanceKind parse_distance_kind(std::string_view name);

/// True for kinds whose value requires Monte-Carlo sampling.
bool is_monte_carlo(DistanceKind kind) noexcept;
/// True for kinds with an analytic gradient (usable inside objectives).
bool has_closed_form(DistanceKind kind) noexcept;
/// The PCME matching probability is a similarity; every other kind is a
/// dissimilarity where smaller means closer.
bool higher_is_closer(DistanceKind kind) noexcept;

struct McConfig {
    std::uint32_t num_samples = 8;
    std::uint64_t seed = 0;
};

inline constexpr double kDefaultVarianceFloor = 1e-12;

/// E||Zv - Zt||^2 = ||mu_v - mu_t||^2 + sum(sigma_v^2 + sigma_t^2).
double csd(const GaussianEmbedding& zv, const GaussianEmbedding& zt);
/// ||mu_v - mu_t||^2 + ||sigma_v - sigma_t||^2.
double wasserstein2_sq(const GaussianEmbedding& zv, const GaussianEmbedding& zt);
/// ||mu_v - mu_t||_2 (not squared).
double euclidean_mu_only(const GaussianEmbedding& zv, const GaussianEmbedding& zt);

/// KL(zv || zt) for diagonal Gaussians. Asymmetric.
double kl_gaussian(const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                   double variance_floor = kDefaultVarianceFloor);
double bhattacharyya(const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                     double variance_floor = kDefaultVarianceFloor);
/// Negative log of the expected likelihood kernel, -log N(mu_v; mu_t, Sv + St).
double elk_neglog(const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                  double variance_floor = kDefaultVarianceFloor);
/// Jensen-Shannon divergence estimated with num_samples draws from each side.
double js_mc(const GaussianEmbedding& zv, const GaussianEmbedding& zt, const McConfig& cfg);

/// PCME matching probability (1/J^2) sum_ij sigmoid(-a ||zv_i - zt_j|| + b)
/// with J reparameterized draws per side.
double pcme_match_prob(const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                       const McConfig& cfg, double a, double b);

struct DistanceOptions {
    McConfig mc{};
    double pcme_a = 1.0;
    double pcme_b = 0.0;
    double variance_floor = kDefaultVarianceFloor;
    unsigned threads = 1;
};

/// Scalar dispatch over every kind.
double distance(DistanceKind kind, const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                const DistanceOptions& opts = {});

/// Seed used for entry (row, col) of a Monte-Carlo distance matrix.
std::uint64_t pair_seed(std::uint64_t seed, std::size_t row, std::size_t col) noexcept;

/// Entry (i, j) equals distance(kind, queries[i], gallery[j]) where MC kinds
/// use seed pair_seed(opts.mc.seed, i, j). Rows are processed in parallel
/// with opts.threads workers; results do not depend on the thread count.
Matrix pairwise_distance_matrix(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                DistanceKind kind, const DistanceOptions& opts = {});

/// Batched form on raw (mu, log_var) rows; closed-form kinds only.
Matrix pairwise_distance_matrix(const GaussianBatch& queries, const GaussianBatch& gallery,
                                DistanceKind kind, double variance_floor = kDefaultVarianceFloor,
                                unsigned threads = 1);

namespace kernels {

/// Closed-form distance between two (mu, log_var) rows.
double pair_distance(DistanceKind kind, std::span<const double> mu_v, std::span<const double> lv_v,
                     std::span<const double> mu_t, std::span<const double> lv_t,
                     double variance_floor);

/// Adds scale * d(distance)/d(param) into the four gradient rows.
void accumulate_pair_grad(DistanceKind kind, std::span<const double> mu_v,
                          std::span<const double> lv_v, std::span<const double> mu_t,
                          std::span<const double> lv_t, double scale, std::span<double> d_mu_v,
                          std::span<double> d_lv_v, std::span<double> d_mu_t,
                          std::span<double> d_lv_t, double variance_floor);

}  // namespace kernels

}  // namespace probemb
