#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "probemb/error.hpp"
#include "probemb/metrics.hpp"
#include "probemb/retrieval.hpp"
#include "probemb/synth.hpp"
#include "oracles.hpp"

using namespace probemb;
using testing::names;
using testing::table_from;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

RankedList list_of(const std::string& q, const std::vector<std::string>& ids) {
    RankedList r{q, {}};
    for (std::size_t i = 0; i < ids.size(); ++i) r.items.push_back({i, ids[i], static_cast<double>(i)});
    return r;
}

}  // namespace

TEST_CASE("recall at k counts the first positive") {
    const MatchTable t({"q"}, {"a", "b", "c"}, {{"q", "c", 1.0}});
    const std::vector<RankedList> r{list_of("q", {"a", "b", "c"})};
    CHECK(recall_at_k(r, t, 1) == 0.0);
    CHECK(recall_at_k(r, t, 5) == 1.0);
    const std::vector<RankedList> first{list_of("q", {"c", "a", "b"})};
    CHECK(recall_at_k(first, t, 1) == 1.0);
}

TEST_CASE("five queries with known ranks") {
    const auto gs = names("g", 12);
    std::vector<MatchEntry> e;
    std::vector<RankedList> lists;
    // first positive at ranks 1, 2, 5, 7, 11
    const std::size_t ranks[5] = {1, 2, 5, 7, 11};
    for (std::size_t q = 0; q < 5; ++q) {
        e.push_back({"q" + std::to_string(q), gs[ranks[q] - 1], 1.0});
        lists.push_back(list_of("q" + std::to_string(q), gs));
    }
    const MatchTable t(names("q", 5), gs, e);
    const auto rep = evaluate(lists, t);
    CHECK(rep.recall_at.at(1) == doctest::Approx(0.2));
    CHECK(rep.recall_at.at(5) == doctest::Approx(0.6));
    CHECK(rep.recall_at.at(10) == doctest::Approx(0.8));
    CHECK(rep.per_query[3].first_positive_rank == 7);
    CHECK(rep.rsum == doctest::Approx(160));
}

TEST_CASE("mAP@R follows the truncated definition") {
    // Positives at ranks 1 and 3, R = 2: only rank 1 lies inside the top R.
    const MatchTable t({"q"}, {"a", "b", "c"}, {{"q", "a", 1.0}, {"q", "c", 1.0}});
    const std::vector<RankedList> r{list_of("q", {"a", "b", "c"})};
    CHECK(map_at_r(r, t) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(r_precision(r, t) == doctest::Approx(0.5).epsilon(1e-15));

    const std::vector<RankedList> perfect{list_of("q", {"c", "a", "b"})};
    CHECK(map_at_r(perfect, t) == 1.0);
    CHECK(r_precision(perfect, t) == 1.0);
    const std::vector<RankedList> worst{list_of("q", {"b", "a", "c"})};
    CHECK(r_precision(worst, t) == 0.5);
    const MatchTable one({"q"}, {"a", "b", "c"}, {{"q", "c", 1.0}});
    CHECK(map_at_r(r, one) == 0.0);
    CHECK(r_precision(r, one) == 0.0);
}

TEST_CASE("rank metrics match a full-sort oracle") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<std::size_t> sz(1, 64);
    for (int t = 0; t < 60; ++t) {
        const std::size_t nq = sz(rng), ng = 4 * sz(rng);
        Matrix dist(nq, ng), rel(nq, ng);
        for (double& x : dist.flat()) x = std::floor(u(rng) * 50) / 50;  // plenty of ties
        for (double& x : rel.flat()) x = u(rng) < 0.05 ? (u(rng) < 0.8 ? 1.0 : 0.3) : 0.0;
        for (std::size_t q = 0; q < nq; ++q) {
            if (q % 3 == 0) rel(q, q % ng) = 1.0;
        }
        const auto qs = names("q", nq), gs = names("g", ng);
        const auto table = table_from(rel, qs, gs);
        const auto ranked = rank_from_matrix(dist, qs, gs);
        const auto want = testing::rank_metrics_oracle(dist, rel);
        const auto got = evaluate(ranked, table);
        CHECK(got.num_queries == want.evaluated);
        CHECK(got.skipped_queries == nq - want.evaluated);
        for (std::size_t k : {1, 5, 10}) CHECK(got.recall_at.at(k) == doctest::Approx(want.recall.at(k)).epsilon(1e-14));
        CHECK(got.map_at_r == doctest::Approx(want.map_r).epsilon(1e-14));
        CHECK(got.r_precision == doctest::Approx(want.rp).epsilon(1e-14));
        CHECK(got.map_at_r >= 0.0);
        CHECK(got.map_at_r <= 1.0);

        // Gallery permutation invariance when distances have no ties.
        Matrix distinct(nq, ng);
        for (double& x : distinct.flat()) x = u(rng);
        std::vector<std::size_t> perm(ng);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix pd(nq, ng), pr(nq, ng);
        std::vector<std::string> pgs(ng);
        for (std::size_t g = 0; g < ng; ++g) {
            pgs[g] = gs[perm[g]];
            for (std::size_t q = 0; q < nq; ++q) {
                pd(q, g) = distinct(q, perm[g]);
                pr(q, g) = rel(q, perm[g]);
            }
        }
        const auto a = evaluate(rank_from_matrix(distinct, qs, gs), table);
        const auto b = evaluate(rank_from_matrix(pd, qs, pgs), table_from(pr, qs, pgs));
        CHECK(a.map_at_r == doctest::Approx(b.map_at_r).epsilon(1e-14));
        CHECK(a.recall_at == b.recall_at);
    }
}

TEST_CASE("metric errors") {
    const MatchTable none({"q"}, {"a"}, {});
    const std::vector<RankedList> r{list_of("q", {"a"})};
    CHECK(code_of([&] { evaluate(r, none); }) == ErrorCode::NoPositives);
    const MatchTable t({"q"}, {"a"}, {{"q", "a", 1.0}});
    CHECK(code_of([&] { evaluate({list_of("x", {"a"})}, t); }) == ErrorCode::UnknownId);
    CHECK(code_of([&] { evaluate({list_of("q", {"zz"})}, t); }) == ErrorCode::UnknownId);
}

TEST_CASE("rsum") {
    MetricReport i2t, t2i;
    i2t.recall_at = {{1, .5}, {5, .6}, {10, .7}};
    t2i.recall_at = {{1, .4}, {5, .5}, {10, .6}};
    CHECK(rsum(i2t, t2i) == doctest::Approx(330));
    i2t.recall_at = {{1, 1}, {5, 1}, {10, 1}};
    CHECK(rsum(i2t, i2t) == 600);
    i2t.recall_at = {{1, 0}, {5, 0}, {10, 0}};
    CHECK(rsum(i2t, i2t) == 0);
    i2t.recall_at.erase(5);
    CHECK(code_of([&] { rsum(i2t, t2i); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("pearson") {
    CHECK(*pearson({1, 2, 3}, {2, 4, 6}) == doctest::Approx(1.0));
    CHECK(*pearson({1, 2, 3}, {3, 2, 1}) == doctest::Approx(-1.0));
    CHECK_FALSE(pearson({1, 1, 1}, {1, 2, 3}).has_value());
    CHECK_FALSE(pearson({1}, {1}).has_value());
}

TEST_CASE("uncertainty profile") {
    // 12 queries: six with mass 2 hit at rank 1, six with mass 8 miss.
    std::vector<std::string> qs = names("q", 12);
    std::vector<GaussianEmbedding> embs;
    std::vector<MatchEntry> e;
    std::vector<RankedList> lists;
    for (std::size_t i = 0; i < 12; ++i) {
        const double lv = std::log(i < 6 ? 1.0 : 4.0);
        embs.push_back(make_embedding({0, 0}, {lv, lv}));
        e.push_back({qs[i], "a", 1.0});
        lists.push_back(list_of(qs[i], i < 6 ? std::vector<std::string>{"a", "b"} : std::vector<std::string>{"b", "a"}));
    }
    const EmbeddingSet queries(qs, embs);
    const MatchTable t(qs, {"a", "b"}, e);
    const auto p = uncertainty_profile(queries, lists, t, 10);
    CHECK(p.edges.size() == 11);
    CHECK(p.edges.front() == doctest::Approx(2.0));
    CHECK(p.edges.back() == doctest::Approx(8.0));
    std::size_t total = 0;
    for (const auto& b : p.bins) total += b.count;
    CHECK(total == 12);
    CHECK(p.bins.front().count == 6);
    CHECK(p.bins.back().count == 6);
    CHECK(*p.bins.front().mean_recall_at_1 == 1.0);
    CHECK(*p.bins.back().mean_recall_at_1 == 0.0);
    CHECK_FALSE(p.bins[4].mean_recall_at_1.has_value());
    CHECK(*p.pearson_query == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(*p.pearson_bin == doctest::Approx(-1.0).epsilon(1e-12));

    std::vector<GaussianEmbedding> flat(12, make_embedding({0, 0}, {0, 0}));
    CHECK(code_of([&] { uncertainty_profile(EmbeddingSet(qs, flat), lists, t, 10); }) == ErrorCode::DegenerateRange);
    CHECK(code_of([&] { uncertainty_profile(queries, lists, t, 13); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("uncertainty profile partitions synthetic queries") {
    const auto data = generate_retrieval(SynthRetrievalConfig{});
    SearchOptions opts;
    opts.k = data.gallery.size();
    const auto ranked = search_batch(build_index(data.gallery), data.queries, opts);
    const auto p = uncertainty_profile(data.queries, ranked, data.truth);
    std::size_t total = 0;
    for (const auto& b : p.bins) total += b.count;
    CHECK(total == p.num_queries);
    CHECK(p.num_queries == 100);
    REQUIRE(p.pearson_query.has_value());
    CHECK(*p.pearson_query < 0.0);
}

TEST_CASE("prompt filter identities") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SynthPromptConfig cfg;
        cfg.num_classes = 3;
        cfg.prompts_per_class = 4;
        cfg.corrupted_per_class = 1;
        cfg.images_per_class = 10;
        cfg.seed = seed;
        const auto d = generate_prompts(cfg);
        PromptFilterOptions all;
        const auto base = prompt_filter_eval(d.class_prompts, d.images, d.image_labels, all);
        CHECK(base.num_correct == testing::prompt_oracle_correct(d.class_prompts, d.images, d.image_labels, {4, 4, 4}));

        PromptFilterOptions topk;
        topk.strategy = PromptStrategy::topk_uniform;
        topk.top_k = 4;
        const auto full = prompt_filter_eval(d.class_prompts, d.images, d.image_labels, topk);
        CHECK(full.accuracy == base.accuracy);
        CHECK(full.num_correct == base.num_correct);
        topk.top_k = 2;
        CHECK(prompt_filter_eval(d.class_prompts, d.images, d.image_labels, topk).num_correct ==
              testing::prompt_oracle_correct(d.class_prompts, d.images, d.image_labels, {2, 2, 2}));

        PromptFilterOptions best;
        best.strategy = PromptStrategy::best_topk_per_class;
        const auto b = prompt_filter_eval(d.class_prompts, d.images, d.image_labels, best);
        CHECK(b.accuracy >= base.accuracy);
        CHECK(b.num_correct == testing::prompt_oracle_correct(d.class_prompts, d.images, d.image_labels, b.chosen_k));
        std::size_t brute = 0;
        for (std::size_t k0 = 1; k0 <= 4; ++k0) {
            for (std::size_t k1 = 1; k1 <= 4; ++k1) {
                for (std::size_t k2 = 1; k2 <= 4; ++k2) {
                    brute = std::max(brute, testing::prompt_oracle_correct(d.class_prompts, d.images, d.image_labels, {k0, k1, k2}));
                }
            }
        }
        CHECK(b.num_correct <= brute);
    }
}

TEST_CASE("single-prompt classes make every strategy agree") {
    SynthPromptConfig cfg;
    cfg.prompts_per_class = 1;
    cfg.corrupted_per_class = 0;
    const auto d = generate_prompts(cfg);
    std::optional<std::size_t> first;
    for (auto s : {PromptStrategy::single, PromptStrategy::all, PromptStrategy::topk_uniform,
                   PromptStrategy::best_topk_per_class}) {
        for (auto by : {ClassifyBy::mu_cosine, ClassifyBy::csd}) {
            PromptFilterOptions o;
            o.strategy = s;
            o.classify_by = by;
            const auto r = prompt_filter_eval(d.class_prompts, d.images, d.image_labels, o);
            if (by == ClassifyBy::csd) continue;
            if (!first) first = r.num_correct;
            CHECK(r.num_correct == *first);
        }
    }
}

TEST_CASE("filtering out corrupted prompts helps") {
    const auto d = generate_prompts(SynthPromptConfig{});
    for (auto by : {ClassifyBy::mu_cosine, ClassifyBy::csd}) {
        PromptFilterOptions all;
        all.classify_by = by;
        PromptFilterOptions best = all;
        best.strategy = PromptStrategy::best_topk_per_class;
        const double a = prompt_filter_eval(d.class_prompts, d.images, d.image_labels, all).accuracy;
        const double b = prompt_filter_eval(d.class_prompts, d.images, d.image_labels, best).accuracy;
        CHECK(b > a);
    }
}

TEST_CASE("prompt filter errors and names") {
    const auto d = generate_prompts(SynthPromptConfig{});
    auto prompts = d.class_prompts;
    prompts["empty"] = EmbeddingSet({}, {}, Modality::textual, true, 16);
    CHECK(code_of([&] { prompt_filter_eval(prompts, d.images, d.image_labels, {}); }) == ErrorCode::EmptyClass);
    auto labels = d.image_labels;
    labels[0] = "nope";
    CHECK(code_of([&] { prompt_filter_eval(d.class_prompts, d.images, labels, {}); }) == ErrorCode::UnknownId);
    labels.pop_back();
    CHECK(code_of([&] { prompt_filter_eval(d.class_prompts, d.images, labels, {}); }) == ErrorCode::LengthMismatch);
    CHECK(parse_prompt_strategy("best_topk_per_class") == PromptStrategy::best_topk_per_class);
    CHECK(parse_uncertainty_scalar(to_string(UncertaintyScalar::sigma_l1)) == UncertaintyScalar::sigma_l1);
    CHECK(parse_classify_by("csd") == ClassifyBy::csd);
    CHECK_THROWS_AS(parse_prompt_strategy("x"), Error);
}
