#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "probemb/core_types.hpp"
#include "probemb/distances.hpp"
#include "probemb/matrix.hpp"

namespace probemb {

/// Learnable calibration (a, b) plus loss weights. a is kept strictly
/// positive by callers clamping at kMinScale after each update.
struct ObjectiveParams {
    double a = 5.0;
    double b = 5.0;
    double alpha = 0.1;
    double beta = 1e-4;
    DistanceKind distance = DistanceKind::csd;
    double variance_floor = kDefaultVarianceFloor;
};

inline constexpr double kMinScale = 1e-6;

struct LossReport {
    double match_loss = 0.0;
    double pp_loss = 0.0;
    double vib_loss = 0.0;
    double total = 0.0;
    /// Relabeled entries, not counting each row's own anchor column.
    std::size_t num_pseudo_positives = 0;
};

struct GradientBundle {
    Matrix d_mu_v;
    Matrix d_logvar_v;
    Matrix d_mu_t;
    Matrix d_logvar_t;
    double d_a = 0.0;
    double d_b = 0.0;
};

/// A loss value with its gradient with respect to the distance matrix.
struct DistanceLoss {
    double value = 0.0;
    Matrix d_dist;
    double d_a = 0.0;
    double d_b = 0.0;
};

/// Numerically stable log(1 + exp(x)).
double softplus(double x) noexcept;
double sigmoid(double x) noexcept;

/// Mean over pairs of -m log s(-a d + b) - (1 - m) log s(a d - b). `mask`,
/// when given, holds per-pair weights (0 excludes a pair) and the mean is
/// taken over the total weight.
DistanceLoss match_loss_with_grad(const Matrix& dist, const Matrix& labels, double a, double b,
                                  const Matrix* mask = nullptr);
double match_loss(const Matrix& dist, const Matrix& labels, double a, double b,
                  const Matrix* mask = nullptr);

/// Column of the largest label in a row (lowest index on ties), or npos
/// when the row has no label above zero.
std::size_t anchor_column(std::span<const double> labels, const double* mask_row = nullptr);

/// 0/1 matrix marking, for every row with a positive anchor t*, each column
/// j with d(v, j) <= d(v, t*). The anchor itself is included.
Matrix find_pseudo_positives(const Matrix& dist, const Matrix& labels, const Matrix* mask = nullptr);

/// Ground-truth labels with every pseudo-positive entry overwritten by its
/// row's anchor label value.
Matrix apply_pseudo_positives(const Matrix& labels, const Matrix& pp_mask,
                              const Matrix* mask = nullptr);

/// Mean over items and dimensions of -0.5 (1 + log s^2 - mu^2 - s^2).
double vib_loss(const GaussianBatch& batch);
double vib_loss(const EmbeddingSet& batch);
/// Adds scale * d(vib)/d(mu, log_var) into the gradient blocks.
void accumulate_vib_grad(const GaussianBatch& batch, double scale, Matrix& d_mu, Matrix& d_logvar);

/// match + alpha * pseudo-match + beta * (vib_v + vib_t) with exact analytic
/// gradients. The pseudo-positive mask is recomputed from the current
/// distances and held constant under differentiation. Requires a
/// closed-form distance kind.
std::pair<LossReport, GradientBundle> total_objective(const GaussianBatch& visual,
                                                      const GaussianBatch& textual,
                                                      const Matrix& labels,
                                                      const ObjectiveParams& params,
                                                      const Matrix* mask = nullptr);
std::pair<LossReport, GradientBundle> total_objective(const EmbeddingSet& visual,
                                                      const EmbeddingSet& textual,
                                                      const Matrix& labels,
                                                      const ObjectiveParams& params);

enum class TripletMode { hardest_negative, sum };

inline constexpr double kDefaultTripletMargin = 0.2;

/// Hinge triplet loss over both directions. For every positive entry
/// (label >= 0.5) the row term compares against that row's negatives and the
/// column term against that column's negatives, using the hardest negative
/// or the sum over all of them. Terms are averaged over positive entries.
/// Throws NoNegative when a row holding a positive has no negative.
DistanceLoss triplet_loss_with_grad(const Matrix& dist, const Matrix& labels, double margin,
                                    TripletMode mode, const Matrix* mask = nullptr);
double triplet_loss(const Matrix& dist, const Matrix& labels, double margin, TripletMode mode,
                    const Matrix* mask = nullptr);

/// Symmetric InfoNCE on logits -d / temperature; each row and column must
/// hold exactly one positive (label >= 0.5).
DistanceLoss infonce_loss_with_grad(const Matrix& dist, const Matrix& labels, double temperature);
double infonce_loss(const Matrix& dist, const Matrix& labels, double temperature);

/// Smooth match labels carried by a mixed sample lambda * x_a + (1 - lambda) * x_b.
struct MixedLabels {
    double first;
    double second;
};

MixedLabels mix_labels(double lambda);
/// Row of labels for a mixed item, lambda * row_a + (1 - lambda) * row_b.
std::vector<double> mix_label_rows(double lambda, std::span<const double> row_a,
                                   std::span<const double> row_b);

/// Backpropagates dL/d(dist) into (mu, log_var) gradient blocks.
void backprop_distances(DistanceKind kind, const GaussianBatch& visual,
                        const GaussianBatch& textual, const Matrix& d_dist, Matrix& d_mu_v,
                        Matrix& d_logvar_v, Matrix& d_mu_t, Matrix& d_logvar_t,
                        double variance_floor = kDefaultVarianceFloor);

}  // namespace probemb
