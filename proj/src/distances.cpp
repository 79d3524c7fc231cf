#include "probemb/distances.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "probemb/parallel.hpp"
#include "probemb/random.hpp"

namespace probemb {

std::string_view to_string(DistanceKind kind) noexcept {
    switch (kind) {
        case DistanceKind::csd: return "csd";
        case DistanceKind::wasserstein2: return "wasserstein2";
        case DistanceKind::kl: return "kl";
        case DistanceKind::js_mc: return "js_mc";
        case DistanceKind::bhattacharyya: return "bhattacharyya";
        case DistanceKind::elk: return "elk";
        case DistanceKind::pcme_match_prob_mc: return "pcme_match_prob_mc";
        case DistanceKind::euclidean_mu_only: return "euclidean_mu_only";
    }
    return "unknown";
}

DistanceKind parse_distance_kind(std::string_view name) {
    for (auto k : {DistanceKind::csd, DistanceKind::wasserstein2, DistanceKind::kl,
                   DistanceKind::js_mc, DistanceKind::bhattacharyya, DistanceKind::elk,
                   DistanceKind::pcme_match_prob_mc, DistanceKind::euclidean_mu_only}) {
        if (to_string(k) == name) return k;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown distance kind '" + std::string(name) + "'");
}

bool is_monte_carlo(DistanceKind kind) noexcept {
    return kind == DistanceKind::js_mc || kind == DistanceKind::pcme_match_prob_mc;
}

bool has_closed_form(DistanceKind kind) noexcept { return !is_monte_carlo(kind); }

bool higher_is_closer(DistanceKind kind) noexcept {
    return kind == DistanceKind::pcme_match_prob_mc;
}

namespace {

void require_same_dim(std::size_t a, std::size_t b) {
    if (a != b) {
        throw Error(ErrorCode::DimensionMismatch,
                    "dimensions " + std::to_string(a) + " and " + std::to_string(b));
    }
}

double floored_variance(double log_var, double floor) {
    const double v = std::exp(log_var);
    if (v < floor) {
        throw Error(ErrorCode::VarianceUnderflow,
                    "variance " + std::to_string(v) + " below floor " + std::to_string(floor));
    }
    return v;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_normal_pdf(std::span<const double> x, std::span<const double> mu,
                      std::span<const double> lv) {
    constexpr double kLog2Pi = 1.8378770664093454835606594728112;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = x[i] - mu[i];
        s += kLog2Pi + lv[i] + diff * diff * std::exp(-lv[i]);
    }
    return -0.5 * s;
}

// log(0.5 e^a + 0.5 e^b)
double log_mixture(double a, double b) {
    const double hi = std::max(a, b);
    return hi + std::log(0.5 * std::exp(a - hi) + 0.5 * std::exp(b - hi));
}

void draw(Rng& rng, std::normal_distribution<double>& normal, std::span<const double> mu,
          std::span<const double> sigma, std::span<double> out) {
    for (std::size_t i = 0; i < mu.size(); ++i) out[i] = mu[i] + sigma[i] * normal(rng);
}

}  // namespace

namespace kernels {

double pair_distance(DistanceKind kind, std::span<const double> mu_v, std::span<const double> lv_v,
                     std::span<const double> mu_t, std::span<const double> lv_t,
                     double variance_floor) {
    const std::size_t d = mu_v.size();
    double s = 0.0;
    switch (kind) {
        case DistanceKind::csd:
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = mu_v[i] - mu_t[i];
                s += diff * diff + (std::exp(lv_v[i]) + std::exp(lv_t[i]));
            }
            return s;
        case DistanceKind::wasserstein2:
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = mu_v[i] - mu_t[i];
                const double ds = std::exp(0.5 * lv_v[i]) - std::exp(0.5 * lv_t[i]);
                s += diff * diff + ds * ds;
            }
            return s;
        case DistanceKind::euclidean_mu_only:
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = mu_v[i] - mu_t[i];
                s += diff * diff;
            }
            return std::sqrt(s);
        case DistanceKind::kl:
            for (std::size_t i = 0; i < d; ++i) {
                const double sv = floored_variance(lv_v[i], variance_floor);
                const double st = floored_variance(lv_t[i], variance_floor);
                const double diff = mu_v[i] - mu_t[i];
                s += std::log(st / sv) + (sv + diff * diff) / st - 1.0;
            }
            return 0.5 * s;
        case DistanceKind::bhattacharyya:
            for (std::size_t i = 0; i < d; ++i) {
                const double sv = floored_variance(lv_v[i], variance_floor);
                const double st = floored_variance(lv_t[i], variance_floor);
                const double mean_var = 0.5 * (sv + st);
                const double diff = mu_v[i] - mu_t[i];
                s += 0.125 * diff * diff / mean_var + 0.5 * std::log(mean_var / std::sqrt(sv * st));
            }
            return s;
        case DistanceKind::elk:
            for (std::size_t i = 0; i < d; ++i) {
                const double sum_var = floored_variance(lv_v[i], variance_floor) +
                                       floored_variance(lv_t[i], variance_floor);
                const double diff = mu_v[i] - mu_t[i];
                s += std::log(2.0 * std::numbers::pi * sum_var) + diff * diff / sum_var;
            }
            return 0.5 * s;
        case DistanceKind::js_mc:
        case DistanceKind::pcme_match_prob_mc:
            break;
    }
    throw Error(ErrorCode::InvalidArgument,
                std::string(to_string(kind)) + " has no closed form");
}

void accumulate_pair_grad(DistanceKind kind, std::span<const double> mu_v,
                          std::span<const double> lv_v, std::span<const double> mu_t,
                          std::span<const double> lv_t, double scale, std::span<double> d_mu_v,
                          std::span<double> d_lv_v, std::span<double> d_mu_t,
                          std::span<double> d_lv_t, double variance_floor) {
    const std::size_t d = mu_v.size();
    switch (kind) {
        case DistanceKind::csd:
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = mu_v[i] - mu_t[i];
                d_mu_v[i] += scale * 2.0 * diff;
                d_mu_t[i] -= scale * 2.0 * diff;
                d_lv_v[i] += scale * std::exp(lv_v[i]);
                d_lv_t[i] += scale * std::exp(lv_t[i]);
            }
            return;
        case DistanceKind::wasserstein2:
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = mu_v[i] - mu_t[i];
                const double sig_v = std::exp(0.5 * lv_v[i]);
                const double sig_t = std::exp(0.5 * lv_t[i]);
                const double ds = sig_v - sig_t;
                d_mu_v[i] += scale * 2.0 * diff;
                d_mu_t[i] -= scale * 2.0 * diff;
                d_lv_v[i] += scale * ds * sig_v;
                d_lv_t[i] -= scale * ds * sig_t;
            }
            return;
        case DistanceKind::euclidean_mu_only: {
            double sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) sq += (mu_v[i] - mu_t[i]) * (mu_v[i] - mu_t[i]);
            const double norm = std::sqrt(sq);
            if (norm == 0.0) return;
            for (std::size_t i = 0; i < d; ++i) {
                const double g = scale * (mu_v[i] - mu_t[i]) / norm;
                d_mu_v[i] += g;
                d_mu_t[i] -= g;
            }
            return;
        }
        case DistanceKind::kl:
            for (std::size_t i = 0; i < d; ++i) {
                const double sv = floored_variance(lv_v[i], variance_floor);
                const double st = floored_variance(lv_t[i], variance_floor);
                const double diff = mu_v[i] - mu_t[i];
                d_mu_v[i] += scale * diff / st;
                d_mu_t[i] -= scale * diff / st;
                d_lv_v[i] += scale * 0.5 * (sv / st - 1.0);
                d_lv_t[i] += scale * 0.5 * (1.0 - (sv + diff * diff) / st);
            }
            return;
        case DistanceKind::bhattacharyya:
            for (std::size_t i = 0; i < d; ++i) {
                const double sv = floored_variance(lv_v[i], variance_floor);
                const double st = floored_variance(lv_t[i], variance_floor);
                const double mean_var = 0.5 * (sv + st);
                const double diff = mu_v[i] - mu_t[i];
                d_mu_v[i] += scale * 0.25 * diff / mean_var;
                d_mu_t[i] -= scale * 0.25 * diff / mean_var;
                // d/d(mean_var) of the per-dimension term
                const double dm = -0.125 * diff * diff / (mean_var * mean_var) + 0.5 / mean_var;
                d_lv_v[i] += scale * (dm * 0.5 * sv - 0.25);
                d_lv_t[i] += scale * (dm * 0.5 * st - 0.25);
            }
            return;
        case DistanceKind::elk:
            for (std::size_t i = 0; i < d; ++i) {
                const double sv = floored_variance(lv_v[i], variance_floor);
                const double st = floored_variance(lv_t[i], variance_floor);
                const double sum_var = sv + st;
                const double diff = mu_v[i] - mu_t[i];
                d_mu_v[i] += scale * diff / sum_var;
                d_mu_t[i] -= scale * diff / sum_var;
                const double ds = 0.5 / sum_var - 0.5 * diff * diff / (sum_var * sum_var);
                d_lv_v[i] += scale * ds * sv;
                d_lv_t[i] += scale * ds * st;
            }
            return;
        case DistanceKind::js_mc:
        case DistanceKind::pcme_match_prob_mc:
            break;
    }
    throw Error(ErrorCode::InvalidArgument,
                std::string(to_string(kind)) + " has no analytic gradient");
}

}  // namespace kernels

namespace {

double closed_form(DistanceKind kind, const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                   double floor) {
    require_same_dim(zv.dim(), zt.dim());
    return kernels::pair_distance(kind, zv.mu(), zv.log_var(), zt.mu(), zt.log_var(), floor);
}

}  // namespace

double csd(const GaussianEmbedding& zv, const GaussianEmbedding& zt) {
    return closed_form(DistanceKind::csd, zv, zt, 0.0);
}

double wasserstein2_sq(const GaussianEmbedding& zv, const GaussianEmbedding& zt) {
    return closed_form(DistanceKind::wasserstein2, zv, zt, 0.0);
}

double euclidean_mu_only(const GaussianEmbedding& zv, const GaussianEmbedding& zt) {
    return closed_form(DistanceKind::euclidean_mu_only, zv, zt, 0.0);
}

double kl_gaussian(const GaussianEmbedding& zv, const GaussianEmbedding& zt, double variance_floor) {
    return closed_form(DistanceKind::kl, zv, zt, variance_floor);
}

double bhattacharyya(const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                     double variance_floor) {
    return closed_form(DistanceKind::bhattacharyya, zv, zt, variance_floor);
}

double elk_neglog(const GaussianEmbedding& zv, const GaussianEmbedding& zt, double variance_floor) {
    return closed_form(DistanceKind::elk, zv, zt, variance_floor);
}

double js_mc(const GaussianEmbedding& zv, const GaussianEmbedding& zt, const McConfig& cfg) {
    require_same_dim(zv.dim(), zt.dim());
    if (cfg.num_samples == 0) throw Error(ErrorCode::InvalidArgument, "num_samples must be >= 1");
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto sig_v = zv.sigmas();
    const auto sig_t = zt.sigmas();
    std::vector<double> x(zv.dim());
    double kl_p = 0.0;
    double kl_q = 0.0;
    for (std::uint32_t s = 0; s < cfg.num_samples; ++s) {
        draw(rng, normal, zv.mu(), sig_v, x);
        const double lp = log_normal_pdf(x, zv.mu(), zv.log_var());
        kl_p += lp - log_mixture(lp, log_normal_pdf(x, zt.mu(), zt.log_var()));
        draw(rng, normal, zt.mu(), sig_t, x);
        const double lq = log_normal_pdf(x, zt.mu(), zt.log_var());
        kl_q += lq - log_mixture(log_normal_pdf(x, zv.mu(), zv.log_var()), lq);
    }
    return 0.5 * (kl_p + kl_q) / cfg.num_samples;
}

double pcme_match_prob(const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                       const McConfig& cfg, double a, double b) {
    require_same_dim(zv.dim(), zt.dim());
    if (cfg.num_samples == 0) throw Error(ErrorCode::InvalidArgument, "num_samples must be >= 1");
    const std::size_t d = zv.dim();
    const std::size_t j = cfg.num_samples;
    Rng rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto sig_v = zv.sigmas();
    const auto sig_t = zt.sigmas();
    std::vector<double> samples_v(j * d);
    std::vector<double> samples_t(j * d);
    for (std::size_t s = 0; s < j; ++s) {
        draw(rng, normal, zv.mu(), sig_v, std::span<double>(samples_v).subspan(s * d, d));
    }
    for (std::size_t s = 0; s < j; ++s) {
        draw(rng, normal, zt.mu(), sig_t, std::span<double>(samples_t).subspan(s * d, d));
    }
    double total = 0.0;
    for (std::size_t p = 0; p < j; ++p) {
        double row = 0.0;
        for (std::size_t q = 0; q < j; ++q) {
            double sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double diff = samples_v[p * d + i] - samples_t[q * d + i];
                sq += diff * diff;
            }
            row += sigmoid(-a * std::sqrt(sq) + b);
        }
        total += row;
    }
    return total / static_cast<double>(j * j);
}

double distance(DistanceKind kind, const GaussianEmbedding& zv, const GaussianEmbedding& zt,
                const DistanceOptions& opts) {
    switch (kind) {
        case DistanceKind::js_mc: return js_mc(zv, zt, opts.mc);
        case DistanceKind::pcme_match_prob_mc:
            return pcme_match_prob(zv, zt, opts.mc, opts.pcme_a, opts.pcme_b);
        case DistanceKind::csd:
        case DistanceKind::wasserstein2:
        case DistanceKind::euclidean_mu_only:
            return closed_form(kind, zv, zt, 0.0);
        default:
            return closed_form(kind, zv, zt, opts.variance_floor);
    }
}

std::uint64_t pair_seed(std::uint64_t seed, std::size_t row, std::size_t col) noexcept {
    return mix_seed(mix_seed(seed, row), col);
}

Matrix pairwise_distance_matrix(const EmbeddingSet& queries, const EmbeddingSet& gallery,
                                DistanceKind kind, const DistanceOptions& opts) {
    require_same_dim(queries.dim(), gallery.dim());
    if (!is_monte_carlo(kind)) {
        return pairwise_distance_matrix(to_batch(queries), to_batch(gallery), kind,
                                        opts.variance_floor, opts.threads);
    }
    Matrix out(queries.size(), gallery.size());
    parallel_for(queries.size(), opts.threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < gallery.size(); ++j) {
            DistanceOptions local = opts;
            local.mc.seed = pair_seed(opts.mc.seed, i, j);
            out(i, j) = distance(kind, queries[i], gallery[j], local);
        }
    });
    return out;
}

Matrix pairwise_distance_matrix(const GaussianBatch& queries, const GaussianBatch& gallery,
                                DistanceKind kind, double variance_floor, unsigned threads) {
    require_same_dim(queries.dim(), gallery.dim());
    const std::size_t n = queries.size();
    const std::size_t m = gallery.size();
    const std::size_t d = queries.dim();
    Matrix out(n, m);
    if (kind == DistanceKind::csd) {
        // ||mu_q||^2 + ||mu_g||^2 - 2 mu_q.mu_g + mass(q) + mass(g)
        std::vector<double> q_norm(n, 0.0), q_mass(n, 0.0), g_norm(m, 0.0), g_mass(m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < d; ++k) {
                q_norm[i] += queries.mu(i, k) * queries.mu(i, k);
                q_mass[i] += std::exp(queries.log_var(i, k));
            }
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t k = 0; k < d; ++k) {
                g_norm[j] += gallery.mu(j, k) * gallery.mu(j, k);
                g_mass[j] += std::exp(gallery.log_var(j, k));
            }
        }
        parallel_for(n, threads, [&](std::size_t i) {
            const auto qi = queries.mu.row(i);
            for (std::size_t j = 0; j < m; ++j) {
                const auto gj = gallery.mu.row(j);
                double dot = 0.0;
                for (std::size_t k = 0; k < d; ++k) dot += qi[k] * gj[k];
                const double sq = std::max(0.0, q_norm[i] + g_norm[j] - 2.0 * dot);
                out(i, j) = sq + q_mass[i] + g_mass[j];
            }
        });
        return out;
    }
    parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < m; ++j) {
            out(i, j) = kernels::pair_distance(kind, queries.mu.row(i), queries.log_var.row(i),
                                               gallery.mu.row(j), gallery.log_var.row(j),
                                               variance_floor);
        }
    });
    return out;
}

}  // namespace probemb
