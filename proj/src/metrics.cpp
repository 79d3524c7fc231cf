#include "probemb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace probemb {

namespace {

QueryDiagnostics score_query(const RankedList& list, const MatchTable& truth, double threshold) {
    const auto q = truth.query_index(list.query_id);
    if (!q) throw Error(ErrorCode::UnknownId, "ranked query '" + list.query_id + "' not in relevance table");
    QueryDiagnostics diag;
    diag.query_id = list.query_id;
    const auto positives = truth.positives(*q, threshold);
    diag.num_positives = positives.size();
    if (positives.empty()) {
        diag.skipped = true;
        return diag;
    }
    std::vector<bool> is_positive(truth.num_gallery(), false);
    for (std::size_t g : positives) is_positive[g] = true;

    const std::size_t r = positives.size();
    std::size_t hits = 0;
    double precision_sum = 0.0;
    for (std::size_t rank = 1; rank <= list.items.size(); ++rank) {
        const auto& item = list.items[rank - 1];
        const auto g = truth.gallery_index(item.id);
        if (!g) throw Error(ErrorCode::UnknownId, "ranked gallery id '" + item.id + "' not in relevance table");
        if (!is_positive[*g]) continue;
        if (diag.first_positive_rank == 0) diag.first_positive_rank = rank;
        if (rank <= r) {
            ++hits;
            precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
        }
    }
    diag.average_precision_at_r = precision_sum / static_cast<double>(r);
    diag.r_precision = static_cast<double>(hits) / static_cast<double>(r);
    return diag;
}

double score_against(const std::vector<double>& image_mu, double image_norm, const std::vector<double>& rep_mu,
                     double rep_mass, ClassifyBy by) {
    if (by == ClassifyBy::mu_cosine) {
        double dot = 0.0;
        double norm = 0.0;
        for (std::size_t d = 0; d < rep_mu.size(); ++d) {
            dot += image_mu[d] * rep_mu[d];
            norm += rep_mu[d] * rep_mu[d];
        }
        const double denom = image_norm * std::sqrt(norm);
        return denom > 0.0 ? dot / denom : 0.0;
    }
    // The image's own mass is a constant per image and does not change the argmax.
    double sq = 0.0;
    for (std::size_t d = 0; d < rep_mu.size(); ++d) {
        const double diff = image_mu[d] - rep_mu[d];
        sq += diff * diff;
    }
    return -(sq + rep_mass);
}

struct ClassPrompts {
    const EmbeddingSet* prompts = nullptr;
    std::vector<std::size_t> by_uncertainty;
};

struct Representative {
    std::vector<double> mu;
    double mass = 0.0;
};

Representative make_representative(const ClassPrompts& cls, std::size_t k, bool first_only) {
    const EmbeddingSet& set = *cls.prompts;
    std::vector<bool> kept(set.size(), false);
    if (first_only) {
        kept[0] = true;
        k = 1;
    } else {
        for (std::size_t i = 0; i < k; ++i) kept[cls.by_uncertainty[i]] = true;
    }
    Representative rep;
    rep.mu.assign(set.dim(), 0.0);
    std::vector<double> var(set.dim(), 0.0);
    for (std::size_t p = 0; p < set.size(); ++p) {
        if (!kept[p]) continue;
        const auto mu = set[p].mu();
        for (std::size_t d = 0; d < set.dim(); ++d) {
            rep.mu[d] += mu[d];
            var[d] += set[p].variance(d);
        }
    }
    const double inv = 1.0 / static_cast<double>(k);
    for (std::size_t d = 0; d < set.dim(); ++d) {
        rep.mu[d] *= inv;
        rep.mass += var[d] * inv;
    }
    return rep;
}

std::size_t argmax_row(const std::vector<double>& row) {
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

MetricReport evaluate(const std::vector<RankedList>& ranked, const MatchTable& truth, const MetricOptions& opts) {
    MetricReport report;
    for (std::size_t k : opts.ks) report.recall_at[k] = 0.0;
    report.per_query.reserve(ranked.size());
    for (const auto& list : ranked) {
        auto diag = score_query(list, truth, opts.threshold);
        if (diag.skipped) {
            ++report.skipped_queries;
        } else {
            ++report.num_queries;
            for (std::size_t k : opts.ks) {
                if (diag.first_positive_rank != 0 && diag.first_positive_rank <= k) report.recall_at[k] += 1.0;
            }
            report.map_at_r += diag.average_precision_at_r;
            report.r_precision += diag.r_precision;
        }
        report.per_query.push_back(std::move(diag));
    }
    if (report.num_queries == 0) throw Error(ErrorCode::NoPositives, "no query has a positive");
    const double n = static_cast<double>(report.num_queries);
    for (auto& [k, value] : report.recall_at) {
        value /= n;
        report.rsum += 100.0 * value;
    }
    report.map_at_r /= n;
    report.r_precision /= n;
    return report;
}

double recall_at_k(const std::vector<RankedList>& ranked, const MatchTable& truth, std::size_t k, double threshold) {
    return evaluate(ranked, truth, MetricOptions{{k}, threshold}).recall_at.at(k);
}

double map_at_r(const std::vector<RankedList>& ranked, const MatchTable& truth, double threshold) {
    return evaluate(ranked, truth, MetricOptions{{}, threshold}).map_at_r;
}

double r_precision(const std::vector<RankedList>& ranked, const MatchTable& truth, double threshold) {
    return evaluate(ranked, truth, MetricOptions{{}, threshold}).r_precision;
}

double rsum(const MetricReport& i2t, const MetricReport& t2i) {
    double total = 0.0;
    for (const MetricReport* r : {&i2t, &t2i}) {
        for (std::size_t k : {1, 5, 10}) {
            const auto it = r->recall_at.find(k);
            if (it == r->recall_at.end()) {
                throw Error(ErrorCode::InvalidArgument, "report lacks R@" + std::to_string(k));
            }
            total += it->second;
        }
    }
    return 100.0 * total;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "pearson inputs differ in length");
    if (x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

UncertaintyProfile uncertainty_profile(const EmbeddingSet& queries, const std::vector<RankedList>& ranked,
                                       const MatchTable& truth, std::size_t num_bins, double threshold) {
    if (num_bins == 0) throw Error(ErrorCode::InvalidArgument, "num_bins must be positive");
    std::vector<double> masses;
    std::vector<double> hits;
    for (const auto& list : ranked) {
        const auto diag = score_query(list, truth, threshold);
        if (diag.skipped) continue;
        const auto qi = queries.find(list.query_id);
        if (!qi) throw Error(ErrorCode::UnknownId, "query '" + list.query_id + "' has no embedding");
        masses.push_back(uncertainty_mass(queries[*qi]));
        hits.push_back(diag.first_positive_rank == 1 ? 1.0 : 0.0);
    }
    if (masses.size() < num_bins) {
        throw Error(ErrorCode::InvalidArgument, "need at least as many evaluated queries as bins");
    }
    const auto [lo_it, hi_it] = std::minmax_element(masses.begin(), masses.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) throw Error(ErrorCode::DegenerateRange, "all query masses are equal");

    UncertaintyProfile profile;
    profile.num_queries = masses.size();
    profile.edges.resize(num_bins + 1);
    for (std::size_t i = 0; i <= num_bins; ++i) {
        profile.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(num_bins);
    }
    profile.edges.back() = hi;
    profile.bins.resize(num_bins);
    std::vector<double> hit_sum(num_bins, 0.0);
    std::vector<double> mass_sum(num_bins, 0.0);
    for (std::size_t i = 0; i < masses.size(); ++i) {
        // Half-open bins except the last, which is closed at the maximum.
        const auto inner_begin = profile.edges.begin() + 1;
        const auto inner_end = profile.edges.end() - 1;
        const auto b = static_cast<std::size_t>(std::upper_bound(inner_begin, inner_end, masses[i]) - inner_begin);
        ++profile.bins[b].count;
        hit_sum[b] += hits[i];
        mass_sum[b] += masses[i];
    }
    std::vector<double> bin_mass;
    std::vector<double> bin_recall;
    for (std::size_t b = 0; b < num_bins; ++b) {
        auto& bin = profile.bins[b];
        bin.lower = profile.edges[b];
        bin.upper = profile.edges[b + 1];
        if (bin.count == 0) continue;
        const double c = static_cast<double>(bin.count);
        bin.mean_mass = mass_sum[b] / c;
        bin.mean_recall_at_1 = hit_sum[b] / c;
        bin_mass.push_back(bin.mean_mass);
        bin_recall.push_back(*bin.mean_recall_at_1);
    }
    profile.pearson_query = pearson(masses, hits);
    profile.pearson_bin = pearson(bin_mass, bin_recall);
    return profile;
}

std::string_view to_string(PromptStrategy s) noexcept {
    switch (s) {
        case PromptStrategy::single: return "single";
        case PromptStrategy::all: return "all";
        case PromptStrategy::topk_uniform: return "topk_uniform";
        case PromptStrategy::best_topk_per_class: return "best_topk_per_class";
    }
    return "unknown";
}

std::string_view to_string(UncertaintyScalar s) noexcept {
    return s == UncertaintyScalar::sigma_l1 ? "sigma_l1" : "sigma_sq_l1";
}

std::string_view to_string(ClassifyBy c) noexcept { return c == ClassifyBy::mu_cosine ? "mu_cosine" : "csd"; }

PromptStrategy parse_prompt_strategy(std::string_view name) {
    for (auto s : {PromptStrategy::single, PromptStrategy::all, PromptStrategy::topk_uniform,
                   PromptStrategy::best_topk_per_class}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown prompt strategy '" + std::string(name) + "'");
}

UncertaintyScalar parse_uncertainty_scalar(std::string_view name) {
    for (auto s : {UncertaintyScalar::sigma_l1, UncertaintyScalar::sigma_sq_l1}) {
        if (to_string(s) == name) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown uncertainty scalar '" + std::string(name) + "'");
}

ClassifyBy parse_classify_by(std::string_view name) {
    for (auto c : {ClassifyBy::mu_cosine, ClassifyBy::csd}) {
        if (to_string(c) == name) return c;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown classifier '" + std::string(name) + "'");
}

PromptFilterResult prompt_filter_eval(const std::map<std::string, EmbeddingSet>& class_prompts,
                                      const EmbeddingSet& images, const std::vector<std::string>& image_labels,
                                      const PromptFilterOptions& opts) {
    if (class_prompts.empty()) throw Error(ErrorCode::EmptyClass, "no classes given");
    if (image_labels.size() != images.size()) {
        throw Error(ErrorCode::LengthMismatch, "one label per image required");
    }
    if (opts.strategy == PromptStrategy::topk_uniform && opts.top_k == 0) {
        throw Error(ErrorCode::InvalidArgument, "top_k must be positive");
    }

    PromptFilterResult result;
    std::vector<ClassPrompts> classes;
    std::map<std::string, std::size_t, std::less<>> class_index;
    for (const auto& [name, prompts] : class_prompts) {
        if (prompts.empty()) throw Error(ErrorCode::EmptyClass, "class '" + name + "' has no prompts");
        if (!images.empty() && prompts.dim() != images.dim()) {
            throw Error(ErrorCode::DimensionMismatch, "prompt and image dimensions differ for '" + name + "'");
        }
        if (!classes.empty() && prompts.dim() != classes.front().prompts->dim()) {
            throw Error(ErrorCode::DimensionMismatch, "prompt dimensions differ across classes");
        }
        ClassPrompts cls;
        cls.prompts = &prompts;
        std::vector<double> unc(prompts.size());
        for (std::size_t p = 0; p < prompts.size(); ++p) {
            unc[p] = opts.uncertainty == UncertaintyScalar::sigma_l1 ? sigma_l1(prompts[p])
                                                                    : uncertainty_mass(prompts[p]);
        }
        cls.by_uncertainty.resize(prompts.size());
        std::iota(cls.by_uncertainty.begin(), cls.by_uncertainty.end(), 0);
        std::stable_sort(cls.by_uncertainty.begin(), cls.by_uncertainty.end(),
                         [&](std::size_t x, std::size_t y) { return unc[x] < unc[y]; });
        class_index.emplace(name, classes.size());
        result.classes.push_back(name);
        result.num_prompts.push_back(prompts.size());
        classes.push_back(std::move(cls));
    }
    const std::size_t num_classes = classes.size();

    std::vector<std::size_t> truth(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto it = class_index.find(image_labels[i]);
        if (it == class_index.end()) throw Error(ErrorCode::UnknownId, "unknown class label '" + image_labels[i] + "'");
        truth[i] = it->second;
    }

    std::vector<std::vector<double>> image_mu(images.size());
    std::vector<double> image_norm(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto mu = images[i].mu();
        image_mu[i].assign(mu.begin(), mu.end());
        double sq = 0.0;
        for (double v : mu) sq += v * v;
        image_norm[i] = std::sqrt(sq);
    }
    auto score_column = [&](const Representative& rep) {
        std::vector<double> col(images.size());
        for (std::size_t i = 0; i < images.size(); ++i) {
            col[i] = score_against(image_mu[i], image_norm[i], rep.mu, rep.mass, opts.classify_by);
        }
        return col;
    };

    std::vector<std::size_t> chosen(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t p = classes[c].prompts->size();
        switch (opts.strategy) {
            case PromptStrategy::single: chosen[c] = 1; break;
            case PromptStrategy::topk_uniform: chosen[c] = std::min(opts.top_k, p); break;
            case PromptStrategy::all:
            case PromptStrategy::best_topk_per_class: chosen[c] = p; break;
        }
    }
    const bool first_only = opts.strategy == PromptStrategy::single;
    std::vector<std::vector<double>> scores(images.size(), std::vector<double>(num_classes));
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto col = score_column(make_representative(classes[c], chosen[c], first_only));
        for (std::size_t i = 0; i < images.size(); ++i) scores[i][c] = col[i];
    }
    auto count_correct = [&](std::size_t c, const std::vector<double>* replacement) {
        std::size_t correct = 0;
        std::vector<double> row(num_classes);
        for (std::size_t i = 0; i < images.size(); ++i) {
            row = scores[i];
            if (replacement) row[c] = (*replacement)[i];
            if (argmax_row(row) == truth[i]) ++correct;
        }
        return correct;
    };

    std::size_t correct = count_correct(0, nullptr);
    if (opts.strategy == PromptStrategy::best_topk_per_class) {
        for (std::size_t pass = 0; pass < opts.max_passes; ++pass) {
            bool changed = false;
            for (std::size_t c = 0; c < num_classes; ++c) {
                std::size_t best_k = chosen[c];
                std::size_t best_correct = correct;
                std::vector<double> best_col;
                for (std::size_t k = 1; k <= classes[c].prompts->size(); ++k) {
                    if (k == chosen[c]) continue;
                    auto col = score_column(make_representative(classes[c], k, false));
                    const std::size_t n = count_correct(c, &col);
                    if (n > best_correct) {
                        best_correct = n;
                        best_k = k;
                        best_col = std::move(col);
                    }
                }
                if (best_k != chosen[c]) {
                    chosen[c] = best_k;
                    correct = best_correct;
                    for (std::size_t i = 0; i < images.size(); ++i) scores[i][c] = best_col[i];
                    changed = true;
                }
            }
            if (!changed) break;
        }
    }

    std::vector<std::size_t> class_total(num_classes, 0);
    std::vector<std::size_t> class_correct(num_classes, 0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        ++class_total[truth[i]];
        if (argmax_row(scores[i]) == truth[i]) ++class_correct[truth[i]];
    }
    result.num_images = images.size();
    result.num_correct = correct;
    result.accuracy = images.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(images.size());
    result.chosen_k = chosen;
    result.per_class_accuracy.resize(num_classes, 0.0);
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (class_total[c] > 0) {
            result.per_class_accuracy[c] = static_cast<double>(class_correct[c]) / static_cast<double>(class_total[c]);
        }
    }
    return result;
}

}  // namespace probemb
