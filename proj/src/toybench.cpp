#include "probemb/toybench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "probemb/distances.hpp"
#include "probemb/error.hpp"
#include "probemb/objectives.hpp"
#include "probemb/optim.hpp"
#include "probemb/random.hpp"

namespace probemb {

std::string_view to_string(ToyObjective objective) noexcept {
    switch (objective) {
        case ToyObjective::csd: return "csd";
        case ToyObjective::wasserstein2: return "wasserstein2";
        case ToyObjective::triplet_hnm: return "triplet_hnm";
        case ToyObjective::triplet_sum: return "triplet_sum";
    }
    return "unknown";
}

ToyObjective parse_toy_objective(std::string_view name) {
    for (auto o : {ToyObjective::csd, ToyObjective::wasserstein2, ToyObjective::triplet_hnm,
                   ToyObjective::triplet_sum}) {
        if (to_string(o) == name) return o;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown toy objective '" + std::string(name) + "'");
}

std::string_view to_string(ToyLabelMode mode) noexcept {
    return mode == ToyLabelMode::stochastic ? "stochastic" : "multi_label";
}

ToyLabelMode parse_toy_label_mode(std::string_view name) {
    if (name == "stochastic") return ToyLabelMode::stochastic;
    if (name == "multi_label") return ToyLabelMode::multi_label;
    throw Error(ErrorCode::InvalidArgument, "unknown label mode '" + std::string(name) + "'");
}

void ToyConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
    if (num_classes < 2) fail("num_classes must be >= 2");
    if (samples_per_class <= 0) fail("samples_per_class must be positive");
    if (confusing_per_pair < 0 || confusing_per_pair > samples_per_class) {
        fail("confusing_per_pair must lie in [0, samples_per_class]");
    }
    if (!(centroid_noise_scale >= 0.0)) fail("centroid_noise_scale must be non-negative");
    if (!(log_sigma_min <= log_sigma_max)) fail("log sigma range is empty");
    if (epochs < 0) fail("epochs must be non-negative");
    if (batch_size < 2) fail("batch_size must be >= 2");
    if (!(lr > 0.0)) fail("lr must be positive");
    if (!(triplet_margin > 0.0)) fail("triplet_margin must be positive");
    if (snapshot_every < 0) fail("snapshot_every must be non-negative");
    if (mix) {
        if (!(mix->mix_ratio >= 0.0 && mix->mix_ratio <= 1.0)) fail("mix_ratio must lie in [0, 1]");
        if (!(mix->beta_param > 0.0)) fail("beta_param must be positive");
        if (objective == ToyObjective::triplet_hnm || objective == ToyObjective::triplet_sum) {
            fail("triplet objectives cannot consume smooth mixed labels");
        }
    }
}

bool ToyPoint::matches(const ToyPoint& other) const noexcept {
    const bool hit = primary_class == other.primary_class ||
                     (other.secondary_class >= 0 && primary_class == other.secondary_class);
    if (hit || secondary_class < 0) return hit;
    return secondary_class == other.primary_class || secondary_class == other.secondary_class;
}

std::size_t ToyDataset::num_certain() const noexcept {
    return static_cast<std::size_t>(
        std::count_if(points.begin(), points.end(), [](const ToyPoint& p) { return !p.confusing(); }));
}

std::size_t ToyDataset::num_confusing() const noexcept { return points.size() - num_certain(); }

ToyDataset generate_toy(const ToyConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng(cfg.seed, 0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> log_sigma(cfg.log_sigma_min, cfg.log_sigma_max);
    std::normal_distribution<double> normal(0.0, 1.0);

    ToyDataset data;
    const double min_sq = cfg.centroid_min_separation * cfg.centroid_min_separation;
    for (int attempt = 0; static_cast<int>(data.centroids.size()) < cfg.num_classes; ++attempt) {
        if (attempt > 100000) throw Error(ErrorCode::InvalidArgument, "cannot place separated centroids");
        const std::array<double, 2> c{unit(rng), unit(rng)};
        const bool far = std::all_of(data.centroids.begin(), data.centroids.end(), [&](const auto& o) {
            return (c[0] - o[0]) * (c[0] - o[0]) + (c[1] - o[1]) * (c[1] - o[1]) >= min_sq;
        });
        if (far) data.centroids.push_back(c);
    }

    std::vector<int> order(static_cast<std::size_t>(cfg.samples_per_class));
    for (int c = 0; c < cfg.num_classes; ++c) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        std::vector<bool> confusing(order.size(), false);
        for (int k = 0; k < cfg.confusing_per_pair; ++k) confusing[static_cast<std::size_t>(order[k])] = true;
        for (int s = 0; s < cfg.samples_per_class; ++s) {
            ToyPoint p;
            p.primary_class = c;
            if (confusing[static_cast<std::size_t>(s)]) p.secondary_class = (c + 1) % cfg.num_classes;
            for (int k = 0; k < 2; ++k) {
                p.mu[k] = data.centroids[c][k] + cfg.centroid_noise_scale * normal(rng);
                p.log_var[k] = 2.0 * log_sigma(rng);
            }
            data.points.push_back(p);
        }
    }
    return data;
}

std::pair<double, double> mean_variances(const std::vector<ToyPoint>& points) {
    double certain = 0.0, uncertain = 0.0;
    std::size_t n_certain = 0, n_uncertain = 0;
    for (const auto& p : points) {
        const double v = std::exp(p.log_var[0]) + std::exp(p.log_var[1]);
        if (p.confusing()) {
            uncertain += v;
            n_uncertain += 2;
        } else {
            certain += v;
            n_certain += 2;
        }
    }
    return {n_certain ? certain / static_cast<double>(n_certain) : 0.0,
            n_uncertain ? uncertain / static_cast<double>(n_uncertain) : 0.0};
}

namespace {

// Per point: mu0, mu1, log_sigma0, log_sigma1. The toy samples and
// optimizes log sigma; ToyPoint stores log sigma^2 = 2 log sigma.
constexpr std::size_t kStride = 4;

struct MixPlan {
    std::size_t partner = 0;
    double lambda = 1.0;
};

void load_points(std::span<const double> params, std::vector<ToyPoint>& points) {
    for (std::size_t i = 0; i < points.size(); ++i) {
        points[i].mu = {params[i * kStride], params[i * kStride + 1]};
        points[i].log_var = {2.0 * params[i * kStride + 2], 2.0 * params[i * kStride + 3]};
    }
}

class ToyTrainer {
public:
    explicit ToyTrainer(const ToyConfig& cfg)
        : cfg_(cfg), data_(generate_toy(cfg)), rng_(make_rng(cfg.seed, 1)) {
        const std::size_t n = data_.points.size();
        params_.resize(n * kStride + 2);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = data_.points[i];
            params_[i * kStride + 0] = p.mu[0];
            params_[i * kStride + 1] = p.mu[1];
            params_[i * kStride + 2] = 0.5 * p.log_var[0];
            params_[i * kStride + 3] = 0.5 * p.log_var[1];
        }
        const ObjectiveParams defaults;
        params_[n * kStride] = defaults.a;
        params_[n * kStride + 1] = defaults.b;
        grads_.assign(params_.size(), 0.0);
        adam_ = AdamState::create(params_.size(), cfg.lr);
    }

    ToyReport run() {
        ToyReport report;
        std::tie(report.initial_mean_var_certain, report.initial_mean_var_uncertain) =
            mean_variances(data_.points);

        const std::size_t n = data_.points.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
        std::vector<ToyPoint> snapshot = data_.points;

        if (cfg_.snapshot_every > 0) report.frames.push_back({0, snapshot});
        for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
            std::shuffle(order.begin(), order.end(), rng_);
            double epoch_loss = 0.0;
            std::size_t num_batches = 0;
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t end = std::min(n, start + bs);
                if (end - start < 2) continue;
                epoch_loss += step(std::span<const std::size_t>(order).subspan(start, end - start));
                ++num_batches;
            }
            ToyEpochStats stats;
            stats.epoch = epoch;
            stats.loss = num_batches ? epoch_loss / static_cast<double>(num_batches) : 0.0;
            load_points(params_, snapshot);
            std::tie(stats.mean_var_certain, stats.mean_var_uncertain) = mean_variances(snapshot);
            report.history.push_back(stats);
            if (cfg_.snapshot_every > 0 && epoch % cfg_.snapshot_every == 0) {
                report.frames.push_back({epoch, snapshot});
            }
        }

        load_points(params_, snapshot);
        report.points = snapshot;
        std::tie(report.mean_var_certain, report.mean_var_uncertain) = mean_variances(snapshot);
        report.ratio = report.mean_var_uncertain / report.mean_var_certain;
        report.final_loss = report.history.empty() ? 0.0 : report.history.back().loss;
        report.a = params_[n * kStride];
        report.b = params_[n * kStride + 1];
        return report;
    }

private:
    double step(std::span<const std::size_t> batch) {
        const std::size_t b = batch.size();
        const std::size_t n = data_.points.size();
        std::vector<MixPlan> plan(b);
        std::vector<bool> mixed(b, false);
        if (cfg_.mix) {
            const auto n_mix = static_cast<std::size_t>(std::floor(cfg_.mix->mix_ratio * static_cast<double>(b) + 0.5));
            std::uniform_int_distribution<std::size_t> pick(0, b - 2);
            for (std::size_t r = 0; r < n_mix; ++r) {
                std::size_t partner = pick(rng_);
                if (partner >= r) ++partner;
                plan[r] = {partner, sample_beta(rng_, cfg_.mix->beta_param, cfg_.mix->beta_param)};
                mixed[r] = true;
            }
        }

        GaussianBatch cols{Matrix(b, 2), Matrix(b, 2)};
        for (std::size_t j = 0; j < b; ++j) {
            const double* p = &params_[batch[j] * kStride];
            cols.mu(j, 0) = p[0];
            cols.mu(j, 1) = p[1];
            cols.log_var(j, 0) = 2.0 * p[2];
            cols.log_var(j, 1) = 2.0 * p[3];
        }
        GaussianBatch rows = cols;
        Matrix labels(b, b);
        Matrix mask(b, b);
        if (cfg_.label_mode == ToyLabelMode::stochastic) {
            std::bernoulli_distribution coin(0.5);
            std::vector<int> drawn(b);
            for (std::size_t i = 0; i < b; ++i) {
                const ToyPoint& p = data_.points[batch[i]];
                drawn[i] = (p.confusing() && coin(rng_)) ? p.secondary_class : p.primary_class;
            }
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < b; ++j) labels(i, j) = drawn[i] == drawn[j] ? 1.0 : 0.0;
            }
        } else {
            for (std::size_t i = 0; i < b; ++i) {
                for (std::size_t j = 0; j < b; ++j) {
                    labels(i, j) = data_.points[batch[i]].matches(data_.points[batch[j]]) ? 1.0 : 0.0;
                }
            }
        }
        const bool triplet = cfg_.objective == ToyObjective::triplet_hnm ||
                             cfg_.objective == ToyObjective::triplet_sum;
        for (std::size_t i = 0; i < b; ++i) {
            for (std::size_t j = 0; j < b; ++j) {
                // Each unordered pair once; mixed rows see every other column.
                if (triplet || mixed[i]) {
                    mask(i, j) = i != j ? 1.0 : 0.0;
                } else {
                    mask(i, j) = j > i ? 1.0 : 0.0;
                }
            }
        }
        if (cfg_.mix) {
            const Matrix base_labels = labels;
            for (std::size_t i = 0; i < b; ++i) {
                if (!mixed[i]) continue;
                const auto& mp = plan[i];
                const auto row = mix_label_rows(mp.lambda, base_labels.row(i), base_labels.row(mp.partner));
                std::copy(row.begin(), row.end(), labels.row(i).begin());
                for (std::size_t k = 0; k < 2; ++k) {
                    rows.mu(i, k) = mp.lambda * cols.mu(i, k) + (1.0 - mp.lambda) * cols.mu(mp.partner, k);
                    rows.log_var(i, k) =
                        mp.lambda * cols.log_var(i, k) + (1.0 - mp.lambda) * cols.log_var(mp.partner, k);
                }
            }
        }

        std::fill(grads_.begin(), grads_.end(), 0.0);
        const double a = params_[n * kStride];
        const double bias = params_[n * kStride + 1];
        DistanceKind kind = DistanceKind::csd;
        DistanceLoss loss;
        switch (cfg_.objective) {
            case ToyObjective::csd:
            case ToyObjective::wasserstein2: {
                kind = cfg_.objective == ToyObjective::csd ? DistanceKind::csd : DistanceKind::wasserstein2;
                const Matrix dist = pairwise_distance_matrix(rows, cols, kind);
                loss = match_loss_with_grad(dist, labels, a, bias, &mask);
                grads_[n * kStride] = loss.d_a;
                grads_[n * kStride + 1] = loss.d_b;
                break;
            }
            case ToyObjective::triplet_hnm:
            case ToyObjective::triplet_sum: {
                kind = DistanceKind::euclidean_mu_only;
                const Matrix dist = pairwise_distance_matrix(rows, cols, kind);
                const auto mode = cfg_.objective == ToyObjective::triplet_hnm ? TripletMode::hardest_negative
                                                                              : TripletMode::sum;
                loss = triplet_loss_with_grad(dist, labels, cfg_.triplet_margin, mode, &mask);
                break;
            }
        }

        Matrix d_mu_r(b, 2), d_lv_r(b, 2), d_mu_c(b, 2), d_lv_c(b, 2);
        backprop_distances(kind, rows, cols, loss.d_dist, d_mu_r, d_lv_r, d_mu_c, d_lv_c);
        auto scatter = [&](std::size_t pos, const Matrix& d_mu, const Matrix& d_lv, std::size_t src, double w) {
            double* g = &grads_[batch[pos] * kStride];
            g[0] += w * d_mu(src, 0);
            g[1] += w * d_mu(src, 1);
            // d/d(log sigma) = 2 d/d(log sigma^2)
            g[2] += 2.0 * w * d_lv(src, 0);
            g[3] += 2.0 * w * d_lv(src, 1);
        };
        for (std::size_t i = 0; i < b; ++i) {
            scatter(i, d_mu_c, d_lv_c, i, 1.0);
            if (mixed[i]) {
                scatter(i, d_mu_r, d_lv_r, i, plan[i].lambda);
                scatter(plan[i].partner, d_mu_r, d_lv_r, i, 1.0 - plan[i].lambda);
            } else {
                scatter(i, d_mu_r, d_lv_r, i, 1.0);
            }
        }

        // Only points present in this batch (and a, b) are stepped.
        active_.clear();
        for (std::size_t idx : batch) {
            for (std::size_t c = 0; c < kStride; ++c) active_.push_back(idx * kStride + c);
        }
        active_.push_back(n * kStride);
        active_.push_back(n * kStride + 1);
        adam_update_lazy(adam_, params_, grads_, active_);
        params_[n * kStride] = std::max(params_[n * kStride], kMinScale);
        return loss.value;
    }

    ToyConfig cfg_;
    ToyDataset data_;
    Rng rng_;
    std::vector<double> params_;
    std::vector<double> grads_;
    std::vector<std::size_t> active_;
    AdamState adam_;
};

}  // namespace

ToyReport run_toy(const ToyConfig& cfg) {
    cfg.validate();
    return ToyTrainer(cfg).run();
}

}  // namespace probemb
