#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace probemb {

enum class ToyObjective { csd, wasserstein2, triplet_hnm, triplet_sum };

/// How a confusing point's class is resolved when pairs are labeled.
/// stochastic: every step draws one of its two classes uniformly, so a pair
/// with a confusing point is positive on some steps and negative on others.
/// multi_label: the point carries both classes and matches either, always.
enum class ToyLabelMode { stochastic, multi_label };

std::string_view to_string(ToyObjective objective) noexcept;
ToyObjective parse_toy_objective(std::string_view name);
std::string_view to_string(ToyLabelMode mode) noexcept;
ToyLabelMode parse_toy_label_mode(std::string_view name);

/// Vector-space Mixup on a fraction of each batch, lambda ~ Beta(p, p).
struct MixConfig {
    double mix_ratio = 0.25;
    double beta_param = 2.0;
};

struct ToyConfig {
    int num_classes = 3;
    int samples_per_class = 500;
    int confusing_per_pair = 150;
    double centroid_noise_scale = 0.1;
    double log_sigma_min = -1.5;
    double log_sigma_max = 1.5;
    /// Centroids are drawn in [-1, 1]^2 and redrawn until pairwise apart by this much.
    double centroid_min_separation = 0.5;
    int epochs = 500;
    int batch_size = 128;
    double lr = 0.02;
    double triplet_margin = 0.2;
    std::uint64_t seed = 0;
    ToyObjective objective = ToyObjective::csd;
    ToyLabelMode label_mode = ToyLabelMode::stochastic;
    std::optional<MixConfig> mix;
    /// Record per-sample frames every this many epochs (0 disables).
    int snapshot_every = 0;

    void validate() const;
};

/// A 2-D point. Confusing points carry a second class and match either.
struct ToyPoint {
    std::array<double, 2> mu{};
    std::array<double, 2> log_var{};
    int primary_class = 0;
    int secondary_class = -1;

    [[nodiscard]] bool confusing() const noexcept { return secondary_class >= 0; }
    [[nodiscard]] bool matches(const ToyPoint& other) const noexcept;
};

struct ToyDataset {
    std::vector<std::array<double, 2>> centroids;
    std::vector<ToyPoint> points;

    [[nodiscard]] std::size_t num_certain() const noexcept;
    [[nodiscard]] std::size_t num_confusing() const noexcept;
};

/// Deterministic per seed. log sigma ~ U(min, max) is stored as log sigma^2 = 2 log sigma.
ToyDataset generate_toy(const ToyConfig& cfg);

struct ToyEpochStats {
    int epoch = 0;
    double mean_var_certain = 0.0;
    double mean_var_uncertain = 0.0;
    double loss = 0.0;
};

struct ToyFrame {
    int epoch = 0;
    std::vector<ToyPoint> points;
};

struct ToyReport {
    double mean_var_certain = 0.0;
    double mean_var_uncertain = 0.0;
    double ratio = 0.0;
    double final_loss = 0.0;
    double initial_mean_var_certain = 0.0;
    double initial_mean_var_uncertain = 0.0;
    double a = 0.0;
    double b = 0.0;
    std::vector<ToyPoint> points;
    std::vector<ToyEpochStats> history;
    std::vector<ToyFrame> frames;
};

/// Mean sigma^2 over the certain and the confusing points (all dimensions).
std::pair<double, double> mean_variances(const std::vector<ToyPoint>& points);

/// Optimizes every point's (mu, log sigma) directly with lazy Adam on the
/// pair-wise objective selected in cfg.
ToyReport run_toy(const ToyConfig& cfg);

}  // namespace probemb
