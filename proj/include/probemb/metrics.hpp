#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "probemb/core_types.hpp"
#include "probemb/retrieval.hpp"

namespace probemb {

struct MetricOptions {
    std::vector<std::size_t> ks{1, 5, 10};
    /// Graded relevance at or above this counts as a positive.
    double threshold = 0.5;
};

struct QueryDiagnostics {
    std::string query_id;
    std::size_t num_positives = 0;
    /// 1-based rank of the first positive in the list; 0 when none appears.
    std::size_t first_positive_rank = 0;
    double average_precision_at_r = 0.0;
    double r_precision = 0.0;
    bool skipped = false;  ///< query had no positives
};

struct MetricReport {
    std::map<std::size_t, double> recall_at;
    /// 100 * sum of recall_at over this direction.
    double rsum = 0.0;
    double map_at_r = 0.0;
    double r_precision = 0.0;
    std::size_t num_queries = 0;
    std::size_t skipped_queries = 0;
    std::vector<QueryDiagnostics> per_query;
};

/// Scores every ranked list against the relevance table. Queries without
/// positives are skipped and counted; NoPositives if all are. Ranked ids
/// missing from the table raise UnknownId.
MetricReport evaluate(const std::vector<RankedList>& ranked, const MatchTable& truth,
                      const MetricOptions& opts = {});

double recall_at_k(const std::vector<RankedList>& ranked, const MatchTable& truth, std::size_t k,
                   double threshold = 0.5);
double map_at_r(const std::vector<RankedList>& ranked, const MatchTable& truth, double threshold = 0.5);
double r_precision(const std::vector<RankedList>& ranked, const MatchTable& truth, double threshold = 0.5);

/// 100 * (R@1 + R@5 + R@10) summed over both directions.
double rsum(const MetricReport& i2t, const MetricReport& t2i);

/// Pearson correlation; empty when either side has zero variance.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct UncertaintyBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    double mean_mass = 0.0;
    std::optional<double> mean_recall_at_1;  ///< empty for an empty bin
};

struct UncertaintyProfile {
    std::vector<double> edges;  ///< num_bins + 1 equal-width edges
    std::vector<UncertaintyBin> bins;
    std::size_t num_queries = 0;
    /// Over queries: (mass, R@1 hit indicator).
    std::optional<double> pearson_query;
    /// Over non-empty bins: (mean mass, mean R@1).
    std::optional<double> pearson_bin;
};

/// Bins queries by ||sigma^2||_1 and reports R@1 per bin. Throws
/// DegenerateRange when every evaluated query has the same mass.
UncertaintyProfile uncertainty_profile(const EmbeddingSet& queries, const std::vector<RankedList>& ranked,
                                       const MatchTable& truth, std::size_t num_bins = 10,
                                       double threshold = 0.5);

enum class PromptStrategy { single, all, topk_uniform, best_topk_per_class };
enum class UncertaintyScalar { sigma_l1, sigma_sq_l1 };
enum class ClassifyBy { mu_cosine, csd };

std::string_view to_string(PromptStrategy s) noexcept;
std::string_view to_string(UncertaintyScalar s) noexcept;
std::string_view to_string(ClassifyBy c) noexcept;
PromptStrategy parse_prompt_strategy(std::string_view name);
UncertaintyScalar parse_uncertainty_scalar(std::string_view name);
ClassifyBy parse_classify_by(std::string_view name);

struct PromptFilterOptions {
    PromptStrategy strategy = PromptStrategy::all;
    std::size_t top_k = 1;  ///< used by topk_uniform; clipped to each class's prompt count
    UncertaintyScalar uncertainty = UncertaintyScalar::sigma_sq_l1;
    ClassifyBy classify_by = ClassifyBy::mu_cosine;
    std::size_t max_passes = 50;  ///< sweep limit for best_topk_per_class
};

struct PromptFilterResult {
    double accuracy = 0.0;
    std::size_t num_correct = 0;
    std::size_t num_images = 0;
    std::vector<std::string> classes;
    std::vector<std::size_t> chosen_k;
    std::vector<std::size_t> num_prompts;
    std::vector<double> per_class_accuracy;  ///< 0 for classes without images
};

/// Zero-shot classification with each class represented by the mean of its
/// K least uncertain prompts (mean mu, plus mean sigma^2 under csd).
/// best_topk_per_class sweeps classes in order, moving one class's K at a
/// time to the value with the most correct images, starting from all
/// prompts; ties keep the current K. Throws EmptyClass for a class without
/// prompts and UnknownId for an image label that names no class.
PromptFilterResult prompt_filter_eval(const std::map<std::string, EmbeddingSet>& class_prompts,
                                      const EmbeddingSet& images, const std::vector<std::string>& image_labels,
                                      const PromptFilterOptions& opts);

}  // namespace probemb
