#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "probemb/core_types.hpp"
#include "probemb/matrix.hpp"

namespace testing {

using probemb::EmbeddingSet;
using probemb::GaussianBatch;
using probemb::GaussianEmbedding;
using probemb::Matrix;

inline std::vector<double> uniform_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

inline GaussianEmbedding random_embedding(std::mt19937_64& rng, std::size_t dim, double lv_lo = -2.0,
                                          double lv_hi = 1.0) {
    return probemb::make_embedding(uniform_vector(rng, dim, -1.5, 1.5), uniform_vector(rng, dim, lv_lo, lv_hi));
}

inline EmbeddingSet random_set(std::mt19937_64& rng, std::size_t n, std::size_t dim, const std::string& prefix,
                               double lv_lo = -2.0, double lv_hi = 1.0) {
    std::vector<std::string> ids;
    std::vector<GaussianEmbedding> embs;
    for (std::size_t i = 0; i < n; ++i) {
        ids.push_back(prefix + std::to_string(i));
        embs.push_back(random_embedding(rng, dim, lv_lo, lv_hi));
    }
    return EmbeddingSet(std::move(ids), std::move(embs), probemb::Modality::untagged, true, dim);
}

inline GaussianBatch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t dim, double lv_lo = -1.0,
                                  double lv_hi = 0.5) {
    GaussianBatch b{Matrix(n, dim), Matrix(n, dim)};
    std::uniform_real_distribution<double> mu(-1.0, 1.0);
    std::uniform_real_distribution<double> lv(lv_lo, lv_hi);
    for (double& x : b.mu.flat()) x = mu(rng);
    for (double& x : b.log_var.flat()) x = lv(rng);
    return b;
}

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(1.0, std::abs(want)); }

// Direct definitions used as oracles across tests.
inline double oracle_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double oracle_csd(const GaussianEmbedding& a, const GaussianEmbedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a.mu()[i] - b.mu()[i];
        s += d * d + std::exp(a.log_var()[i]) + std::exp(b.log_var()[i]);
    }
    return s;
}

}  // namespace testing
