#include "probemb/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace probemb {

namespace {

constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

double weight_at(const Matrix* mask, std::size_t i, std::size_t j) {
    return mask == nullptr ? 1.0 : (*mask)(i, j);
}

void check_labels(const Matrix& dist, const Matrix& labels, const Matrix* mask) {
    require_same_shape(dist, labels, "labels do not match distance matrix");
    if (mask != nullptr) require_same_shape(dist, *mask, "mask does not match distance matrix");
}

}  // namespace

double softplus(double x) noexcept {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) noexcept {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

DistanceLoss match_loss_with_grad(const Matrix& dist, const Matrix& labels, double a, double b,
                                  const Matrix* mask) {
    check_labels(dist, labels, mask);
    DistanceLoss out{0.0, Matrix(dist.rows(), dist.cols()), 0.0, 0.0};
    double total_weight = 0.0;
    for (std::size_t i = 0; i < dist.rows(); ++i) {
        for (std::size_t j = 0; j < dist.cols(); ++j) {
            const double w = weight_at(mask, i, j);
            if (w == 0.0) continue;
            const double m = labels(i, j);
            const double logit = -a * dist(i, j) + b;
            out.value += w * (m * softplus(-logit) + (1.0 - m) * softplus(logit));
            const double dlogit = w * (sigmoid(logit) - m);
            out.d_dist(i, j) = -a * dlogit;
            out.d_a += -dist(i, j) * dlogit;
            out.d_b += dlogit;
            total_weight += w;
        }
    }
    if (total_weight == 0.0) throw Error(ErrorCode::EmptyBatch, "no pairs to score");
    const double inv = 1.0 / total_weight;
    out.value *= inv;
    out.d_a *= inv;
    out.d_b *= inv;
    for (double& g : out.d_dist.flat()) g *= inv;
    return out;
}

double match_loss(const Matrix& dist, const Matrix& labels, double a, double b, const Matrix* mask) {
    return match_loss_with_grad(dist, labels, a, b, mask).value;
}

std::size_t anchor_column(std::span<const double> labels, const double* mask_row) {
    std::size_t best = npos;
    double best_value = 0.0;
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (mask_row != nullptr && mask_row[j] == 0.0) continue;
        if (labels[j] > best_value) {
            best_value = labels[j];
            best = j;
        }
    }
    return best;
}

Matrix find_pseudo_positives(const Matrix& dist, const Matrix& labels, const Matrix* mask) {
    check_labels(dist, labels, mask);
    Matrix pp(dist.rows(), dist.cols());
    for (std::size_t i = 0; i < dist.rows(); ++i) {
        const double* mask_row = mask == nullptr ? nullptr : mask->row(i).data();
        const std::size_t anchor = anchor_column(labels.row(i), mask_row);
        if (anchor == npos) continue;
        const double anchor_dist = dist(i, anchor);
        for (std::size_t j = 0; j < dist.cols(); ++j) {
            if (weight_at(mask, i, j) == 0.0) continue;
            if (dist(i, j) <= anchor_dist) pp(i, j) = 1.0;
        }
    }
    return pp;
}

Matrix apply_pseudo_positives(const Matrix& labels, const Matrix& pp_mask, const Matrix* mask) {
    require_same_shape(labels, pp_mask, "pseudo-positive mask does not match labels");
    Matrix out = labels;
    for (std::size_t i = 0; i < labels.rows(); ++i) {
        const double* mask_row = mask == nullptr ? nullptr : mask->row(i).data();
        const std::size_t anchor = anchor_column(labels.row(i), mask_row);
        if (anchor == npos) continue;
        const double anchor_value = labels(i, anchor);
        for (std::size_t j = 0; j < labels.cols(); ++j) {
            if (pp_mask(i, j) != 0.0) out(i, j) = anchor_value;
        }
    }
    return out;
}

double vib_loss(const GaussianBatch& batch) {
    if (batch.size() == 0 || batch.dim() == 0) throw Error(ErrorCode::EmptyBatch, "vib_loss on empty batch");
    double s = 0.0;
    for (std::size_t i = 0; i < batch.mu.size(); ++i) {
        const double mu = batch.mu.flat()[i];
        const double lv = batch.log_var.flat()[i];
        s += -0.5 * (1.0 + lv - mu * mu - std::exp(lv));
    }
    return s / static_cast<double>(batch.mu.size());
}

double vib_loss(const EmbeddingSet& batch) {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "vib_loss on empty batch");
    return vib_loss(to_batch(batch));
}

void accumulate_vib_grad(const GaussianBatch& batch, double scale, Matrix& d_mu, Matrix& d_logvar) {
    const double inv = scale / static_cast<double>(batch.mu.size());
    for (std::size_t i = 0; i < batch.mu.size(); ++i) {
        d_mu.flat()[i] += inv * batch.mu.flat()[i];
        d_logvar.flat()[i] += inv * -0.5 * (1.0 - std::exp(batch.log_var.flat()[i]));
    }
}

void backprop_distances(DistanceKind kind, const GaussianBatch& visual,
                        const GaussianBatch& textual, const Matrix& d_dist, Matrix& d_mu_v,
                        Matrix& d_logvar_v, Matrix& d_mu_t, Matrix& d_logvar_t,
                        double variance_floor) {
    for (std::size_t i = 0; i < visual.size(); ++i) {
        for (std::size_t j = 0; j < textual.size(); ++j) {
            const double g = d_dist(i, j);
            if (g == 0.0) continue;
            kernels::accumulate_pair_grad(kind, visual.mu.row(i), visual.log_var.row(i),
                                          textual.mu.row(j), textual.log_var.row(j), g,
                                          d_mu_v.row(i), d_logvar_v.row(i), d_mu_t.row(j),
                                          d_logvar_t.row(j), variance_floor);
        }
    }
}

std::pair<LossReport, GradientBundle> total_objective(const GaussianBatch& visual,
                                                      const GaussianBatch& textual,
                                                      const Matrix& labels,
                                                      const ObjectiveParams& params,
                                                      const Matrix* mask) {
    if (!has_closed_form(params.distance)) {
        throw Error(ErrorCode::InvalidArgument,
                    std::string(to_string(params.distance)) + " cannot be used as a training distance");
    }
    if (visual.dim() != textual.dim()) throw Error(ErrorCode::DimensionMismatch, "visual/textual dims differ");
    const Matrix dist = pairwise_distance_matrix(visual, textual, params.distance, params.variance_floor);

    LossReport report;
    DistanceLoss match = match_loss_with_grad(dist, labels, params.a, params.b, mask);
    report.match_loss = match.value;

    Matrix d_dist = match.d_dist;
    double d_a = match.d_a;
    double d_b = match.d_b;

    if (params.alpha != 0.0) {
        const Matrix pp_mask = find_pseudo_positives(dist, labels, mask);
        for (std::size_t i = 0; i < pp_mask.rows(); ++i) {
            const double* mask_row = mask == nullptr ? nullptr : mask->row(i).data();
            const std::size_t anchor = anchor_column(labels.row(i), mask_row);
            for (std::size_t j = 0; j < pp_mask.cols(); ++j) {
                if (pp_mask(i, j) != 0.0 && j != anchor) ++report.num_pseudo_positives;
            }
        }
        const Matrix pp_labels = apply_pseudo_positives(labels, pp_mask, mask);
        DistanceLoss pp = match_loss_with_grad(dist, pp_labels, params.a, params.b, mask);
        report.pp_loss = pp.value;
        for (std::size_t k = 0; k < d_dist.size(); ++k) d_dist.flat()[k] += params.alpha * pp.d_dist.flat()[k];
        d_a += params.alpha * pp.d_a;
        d_b += params.alpha * pp.d_b;
    }

    GradientBundle grads{Matrix(visual.size(), visual.dim()), Matrix(visual.size(), visual.dim()),
                         Matrix(textual.size(), textual.dim()), Matrix(textual.size(), textual.dim()),
                         d_a, d_b};
    backprop_distances(params.distance, visual, textual, d_dist, grads.d_mu_v, grads.d_logvar_v,
                       grads.d_mu_t, grads.d_logvar_t, params.variance_floor);

    if (params.beta != 0.0) {
        report.vib_loss = vib_loss(visual) + vib_loss(textual);
        accumulate_vib_grad(visual, params.beta, grads.d_mu_v, grads.d_logvar_v);
        accumulate_vib_grad(textual, params.beta, grads.d_mu_t, grads.d_logvar_t);
    }

    report.total = report.match_loss + params.alpha * report.pp_loss + params.beta * report.vib_loss;
    for (const Matrix* m : {&grads.d_mu_v, &grads.d_logvar_v, &grads.d_mu_t, &grads.d_logvar_t}) {
        for (double g : m->flat()) {
            if (!std::isfinite(g)) throw Error(ErrorCode::NonFiniteGradient, "non-finite objective gradient");
        }
    }
    return {report, std::move(grads)};
}

std::pair<LossReport, GradientBundle> total_objective(const EmbeddingSet& visual,
                                                      const EmbeddingSet& textual,
                                                      const Matrix& labels,
                                                      const ObjectiveParams& params) {
    return total_objective(to_batch(visual), to_batch(textual), labels, params);
}

DistanceLoss triplet_loss_with_grad(const Matrix& dist, const Matrix& labels, double margin,
                                    TripletMode mode, const Matrix* mask) {
    check_labels(dist, labels, mask);
    if (!(margin > 0.0)) throw Error(ErrorCode::InvalidArgument, "triplet margin must be positive");
    const std::size_t rows = dist.rows();
    const std::size_t cols = dist.cols();
    auto valid = [&](std::size_t i, std::size_t j) { return weight_at(mask, i, j) != 0.0; };
    auto positive = [&](std::size_t i, std::size_t j) { return valid(i, j) && labels(i, j) >= 0.5; };
    auto negative = [&](std::size_t i, std::size_t j) { return valid(i, j) && labels(i, j) < 0.5; };

    DistanceLoss out{0.0, Matrix(rows, cols), 0.0, 0.0};
    std::size_t num_positives = 0;

    // Hardest (closest) negative per row and per column, first index on ties.
    std::vector<std::size_t> row_hardest(rows, npos);
    std::vector<std::size_t> col_hardest(cols, npos);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (!negative(i, j)) continue;
            if (row_hardest[i] == npos || dist(i, j) < dist(i, row_hardest[i])) row_hardest[i] = j;
            if (col_hardest[j] == npos || dist(i, j) < dist(col_hardest[j], j)) col_hardest[j] = i;
        }
    }

    auto hinge = [&](std::size_t pi, std::size_t pj, std::size_t ni, std::size_t nj) {
        const double h = margin + dist(pi, pj) - dist(ni, nj);
        if (h <= 0.0) return;
        out.value += h;
        out.d_dist(pi, pj) += 1.0;
        out.d_dist(ni, nj) -= 1.0;
    };

    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            if (!positive(i, j)) continue;
            ++num_positives;
            if (row_hardest[i] == npos) {
                throw Error(ErrorCode::NoNegative, "row " + std::to_string(i) + " has no negative");
            }
            if (mode == TripletMode::hardest_negative) {
                hinge(i, j, i, row_hardest[i]);
                if (col_hardest[j] != npos) hinge(i, j, col_hardest[j], j);
            } else {
                for (std::size_t k = 0; k < cols; ++k) {
                    if (negative(i, k)) hinge(i, j, i, k);
                }
                for (std::size_t k = 0; k < rows; ++k) {
                    if (negative(k, j)) hinge(i, j, k, j);
                }
            }
        }
    }
    if (num_positives == 0) return out;
    const double inv = 1.0 / static_cast<double>(num_positives);
    out.value *= inv;
    for (double& g : out.d_dist.flat()) g *= inv;
    return out;
}

double triplet_loss(const Matrix& dist, const Matrix& labels, double margin, TripletMode mode,
                    const Matrix* mask) {
    return triplet_loss_with_grad(dist, labels, margin, mode, mask).value;
}

DistanceLoss infonce_loss_with_grad(const Matrix& dist, const Matrix& labels, double temperature) {
    require_same_shape(dist, labels, "labels do not match distance matrix");
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
    const std::size_t rows = dist.rows();
    const std::size_t cols = dist.cols();
    if (rows == 0 || cols == 0) throw Error(ErrorCode::EmptyBatch, "infonce on empty matrix");

    auto single_positive = [](auto get, std::size_t n, const char* what) {
        std::size_t found = npos;
        for (std::size_t k = 0; k < n; ++k) {
            if (get(k) >= 0.5) {
                if (found != npos) throw Error(ErrorCode::InvalidArgument, std::string("multiple positives in ") + what);
                found = k;
            }
        }
        if (found == npos) throw Error(ErrorCode::NoPositives, std::string("no positive in ") + what);
        return found;
    };

    DistanceLoss out{0.0, Matrix(rows, cols), 0.0, 0.0};
    std::vector<double> logits;
    // One softmax cross-entropy over `n` entries addressed by (r(k), c(k)).
    auto direction = [&](std::size_t n, auto at, std::size_t target, double weight) {
        logits.assign(n, 0.0);
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            const auto [r, c] = at(k);
            logits[k] = -dist(r, c) / temperature;
            hi = std::max(hi, logits[k]);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l - hi);
        const double log_z = hi + std::log(z);
        out.value += weight * (log_z - logits[target]);
        for (std::size_t k = 0; k < n; ++k) {
            const double p = std::exp(logits[k] - log_z);
            const double dl = weight * (p - (k == target ? 1.0 : 0.0));
            const auto [r, c] = at(k);
            out.d_dist(r, c) += -dl / temperature;
        }
    };

    const double row_weight = 0.5 / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t t = single_positive([&](std::size_t k) { return labels(i, k); }, cols, "row");
        direction(cols, [&](std::size_t k) { return std::pair{i, k}; }, t, row_weight);
    }
    const double col_weight = 0.5 / static_cast<double>(cols);
    for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t t = single_positive([&](std::size_t k) { return labels(k, j); }, rows, "column");
        direction(rows, [&](std::size_t k) { return std::pair{k, j}; }, t, col_weight);
    }
    return out;
}

double infonce_loss(const Matrix& dist, const Matrix& labels, double temperature) {
    return infonce_loss_with_grad(dist, labels, temperature).value;
}

MixedLabels mix_labels(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw Error(ErrorCode::OutOfRange, "mixing intensity " + std::to_string(lambda) + " outside [0, 1]");
    }
    return {lambda, 1.0 - lambda};
}

std::vector<double> mix_label_rows(double lambda, std::span<const double> row_a,
                                   std::span<const double> row_b) {
    const MixedLabels w = mix_labels(lambda);
    if (row_a.size() != row_b.size()) throw Error(ErrorCode::ShapeMismatch, "label rows differ in length");
    std::vector<double> out(row_a.size());
    for (std::size_t j = 0; j < row_a.size(); ++j) out[j] = w.first * row_a[j] + w.second * row_b[j];
    return out;
}

}  // namespace probemb
