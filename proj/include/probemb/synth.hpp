#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "probemb/core_types.hpp"

namespace probemb {

/// Class-clustered cross-modal data. Queries match every gallery item of
/// their class; a query's mean is perturbed in proportion to its own sigma,
/// so uncertain queries retrieve worse.
struct SynthRetrievalConfig {
    std::size_t num_classes = 10;
    std::size_t num_queries = 100;
    std::size_t gallery_per_class = 5;
    std::size_t dim = 16;
    double centroid_scale = 1.0;
    double noise = 0.3;
    double log_var_min = -4.0;
    double log_var_max = 0.0;
    std::uint64_t seed = 0;
};

struct SynthRetrieval {
    EmbeddingSet queries;
    EmbeddingSet gallery;
    MatchTable truth;
};

SynthRetrieval generate_retrieval(const SynthRetrievalConfig& cfg);

/// Zero-shot fixture: clean prompts sit near their class centroid with low
/// variance; corrupted prompts point elsewhere with high variance. The
/// first prompt of every class is clean.
struct SynthPromptConfig {
    std::size_t num_classes = 5;
    std::size_t prompts_per_class = 8;
    std::size_t corrupted_per_class = 4;
    std::size_t images_per_class = 20;
    std::size_t dim = 16;
    double prompt_noise = 0.3;
    double image_noise = 1.0;
    std::uint64_t seed = 0;
};

struct SynthPrompts {
    std::map<std::string, EmbeddingSet> class_prompts;
    EmbeddingSet images;
    std::vector<std::string> image_labels;
};

SynthPrompts generate_prompts(const SynthPromptConfig& cfg);

}  // namespace probemb
