#include "probemb/synth.hpp"

#include <cmath>
#include <random>

#include "probemb/random.hpp"

namespace probemb {

namespace {

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double scale) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(dim);
    for (double& x : v) x = scale * normal(rng);
    return v;
}

std::vector<double> around(Rng& rng, const std::vector<double>& center, double scale) {
    auto v = gaussian_vector(rng, center.size(), scale);
    for (std::size_t d = 0; d < v.size(); ++d) v[d] += center[d];
    return v;
}

std::string class_name(std::size_t c) { return "class" + std::to_string(c); }

}  // namespace

SynthRetrieval generate_retrieval(const SynthRetrievalConfig& cfg) {
    if (cfg.num_classes == 0 || cfg.num_queries == 0 || cfg.gallery_per_class == 0 || cfg.dim == 0) {
        throw Error(ErrorCode::InvalidArgument, "synthetic sizes must be positive");
    }
    if (!(cfg.log_var_max >= cfg.log_var_min)) throw Error(ErrorCode::InvalidArgument, "empty log-variance range");
    Rng rng = make_rng(cfg.seed, 0x7379);
    std::uniform_real_distribution<double> log_var(cfg.log_var_min, cfg.log_var_max);
    std::uniform_int_distribution<std::size_t> pick_class(0, cfg.num_classes - 1);

    std::vector<std::vector<double>> centroids;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) centroids.push_back(gaussian_vector(rng, cfg.dim, cfg.centroid_scale));

    std::vector<std::string> gallery_ids;
    std::vector<GaussianEmbedding> gallery;
    std::vector<std::size_t> gallery_class;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        for (std::size_t j = 0; j < cfg.gallery_per_class; ++j) {
            gallery_ids.push_back("g" + std::to_string(gallery.size()));
            auto mu = around(rng, centroids[c], cfg.noise);
            std::vector<double> lv(cfg.dim, log_var(rng));
            gallery.push_back(make_embedding(std::move(mu), std::move(lv)));
            gallery_class.push_back(c);
        }
    }

    std::vector<std::string> query_ids;
    std::vector<GaussianEmbedding> queries;
    std::vector<MatchEntry> entries;
    for (std::size_t q = 0; q < cfg.num_queries; ++q) {
        const std::size_t c = pick_class(rng);
        const double lv = log_var(rng);
        auto mu = around(rng, centroids[c], cfg.noise + std::exp(0.5 * lv));
        query_ids.push_back("q" + std::to_string(q));
        queries.push_back(make_embedding(std::move(mu), std::vector<double>(cfg.dim, lv)));
        for (std::size_t g = 0; g < gallery.size(); ++g) {
            if (gallery_class[g] == c) entries.push_back({query_ids.back(), gallery_ids[g], 1.0});
        }
    }

    SynthRetrieval out;
    out.truth = MatchTable(query_ids, gallery_ids, entries);
    out.queries = EmbeddingSet(std::move(query_ids), std::move(queries), Modality::visual);
    out.gallery = EmbeddingSet(std::move(gallery_ids), std::move(gallery), Modality::textual);
    return out;
}

SynthPrompts generate_prompts(const SynthPromptConfig& cfg) {
    if (cfg.num_classes < 2 || cfg.prompts_per_class == 0 || cfg.dim == 0) {
        throw Error(ErrorCode::InvalidArgument, "need at least two classes, one prompt and one dimension");
    }
    if (cfg.corrupted_per_class >= cfg.prompts_per_class) {
        throw Error(ErrorCode::InvalidArgument, "every class needs at least one clean prompt");
    }
    Rng rng = make_rng(cfg.seed, 0x7072);
    std::uniform_real_distribution<double> clean_lv(-3.0, -2.0);
    std::uniform_real_distribution<double> corrupt_lv(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> other(1, cfg.num_classes - 1);

    std::vector<std::vector<double>> centroids;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) centroids.push_back(gaussian_vector(rng, cfg.dim, 1.0));

    SynthPrompts out;
    const std::size_t clean = cfg.prompts_per_class - cfg.corrupted_per_class;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        std::vector<std::string> ids;
        std::vector<GaussianEmbedding> prompts;
        for (std::size_t p = 0; p < cfg.prompts_per_class; ++p) {
            ids.push_back(class_name(c) + "_p" + std::to_string(p));
            if (p < clean) {
                prompts.push_back(make_embedding(around(rng, centroids[c], cfg.prompt_noise),
                                                 std::vector<double>(cfg.dim, clean_lv(rng))));
            } else {
                // Describes a different class entirely.
                const std::size_t wrong = (c + other(rng)) % cfg.num_classes;
                prompts.push_back(make_embedding(around(rng, centroids[wrong], cfg.prompt_noise),
                                                 std::vector<double>(cfg.dim, corrupt_lv(rng))));
            }
        }
        out.class_prompts.emplace(class_name(c),
                                  EmbeddingSet(std::move(ids), std::move(prompts), Modality::textual));
    }

    std::vector<std::string> image_ids;
    std::vector<GaussianEmbedding> images;
    for (std::size_t c = 0; c < cfg.num_classes; ++c) {
        for (std::size_t i = 0; i < cfg.images_per_class; ++i) {
            image_ids.push_back("img" + std::to_string(images.size()));
            images.push_back(make_embedding(around(rng, centroids[c], cfg.image_noise),
                                            std::vector<double>(cfg.dim, -2.0)));
            out.image_labels.push_back(class_name(c));
        }
    }
    out.images = EmbeddingSet(std::move(image_ids), std::move(images), Modality::visual);
    return out;
}

}  // namespace probemb
