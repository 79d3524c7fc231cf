#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "probemb/error.hpp"
#include "probemb/retrieval.hpp"
#include "support.hpp"

using namespace probemb;

namespace {

std::vector<std::string> ids_of(const RankedList& r) {
    std::vector<std::string> out;
    for (const auto& it : r.items) out.push_back(it.id);
    return out;
}

// Brute-force scalar csd sort, ties by gallery order.
std::vector<std::string> oracle_ranking(const EmbeddingSet& gallery, const GaussianEmbedding& q) {
    std::vector<std::size_t> order(gallery.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> d(gallery.size());
    for (std::size_t i = 0; i < gallery.size(); ++i) d[i] = testing::oracle_csd(q, gallery[i]);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    std::vector<std::string> out;
    for (std::size_t i : order) out.push_back(gallery.ids()[i]);
    return out;
}

EmbeddingSet from_rows(const std::vector<std::vector<double>>& mu, const std::vector<std::vector<double>>& lv) {
    std::vector<std::string> ids;
    std::vector<GaussianEmbedding> embs;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        ids.push_back("g" + std::to_string(i));
        embs.push_back(make_embedding(mu[i], lv[i]));
    }
    return EmbeddingSet(ids, embs);
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("index stores per-item mass") {
    std::mt19937_64 rng(1);
    const auto g = testing::random_set(rng, 10, 4, "g");
    const auto idx = build_index(g);
    for (std::size_t i = 0; i < 10; ++i) CHECK(idx.mass()[i] == doctest::Approx(uncertainty_mass(g[i])).epsilon(1e-15));
    CHECK_FALSE(idx.ivf().has_value());
}

TEST_CASE("IVF posting lists partition the gallery") {
    std::mt19937_64 rng(2);
    const auto g = testing::random_set(rng, 100, 3, "g");
    auto one = build_index(g, CoarseConfig{1, 25, 0});
    REQUIRE(one.ivf());
    CHECK(one.ivf()->lists.size() == 1);
    CHECK(one.ivf()->lists[0].size() == 100);
    const auto four = build_index(g, CoarseConfig{4, 25, 7});
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (const auto& l : four.ivf()->lists) {
        total += l.size();
        seen.insert(l.begin(), l.end());
    }
    CHECK(total == 100);
    CHECK(seen.size() == 100);
    CHECK(build_index(g, CoarseConfig{4, 25, 7}) == four);
}

TEST_CASE("index errors") {
    std::mt19937_64 rng(3);
    const auto g = testing::random_set(rng, 5, 2, "g");
    CHECK(code_of([&] { build_index(g, CoarseConfig{6, 25, 0}); }) == ErrorCode::BadNlist);
    CHECK(code_of([&] { build_index(g, CoarseConfig{0, 25, 0}); }) == ErrorCode::BadNlist);
    CHECK(code_of([] { build_index(EmbeddingSet{}); }) == ErrorCode::EmptyGallery);
    const auto idx = build_index(g);
    CHECK(code_of([&] { search_two_stage(idx, g[0], 3, 2); }) == ErrorCode::ShortlistTooSmall);
    CHECK(code_of([&] { search_exact(idx, g[0], 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("exact search equals brute-force csd sort") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 30; ++t) {
        const auto g = testing::random_set(rng, 40, 5, "g");
        const auto q = testing::random_embedding(rng, 5);
        const auto idx = build_index(g);
        const auto r = search_exact(idx, q, 40, "q");
        CHECK(ids_of(r) == oracle_ranking(g, q));
        CHECK(r.query_id == "q");
        for (std::size_t i = 0; i < r.items.size(); ++i) {
            CHECK(r.items[i].score == doctest::Approx(testing::oracle_csd(q, g[r.items[i].index])).epsilon(1e-12));
            if (i > 0) CHECK(r.items[i - 1].score <= r.items[i].score);
        }
        CHECK(search_exact(idx, q, 7).items.size() == 7);
    }
}

TEST_CASE("equal variances reduce to mean ordering, and mass decides equal means") {
    std::mt19937_64 rng(5);
    const auto g = testing::random_set(rng, 30, 3, "g", -1, -1);
    const auto q = testing::random_embedding(rng, 3);
    const auto r = search_exact(build_index(g), q, 30);
    for (std::size_t i = 1; i < r.items.size(); ++i) {
        double a = 0, b = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            a += std::pow(q.mu()[k] - g[r.items[i - 1].index].mu()[k], 2);
            b += std::pow(q.mu()[k] - g[r.items[i].index].mu()[k], 2);
        }
        CHECK(a <= b);
    }

    const auto pair = from_rows({{0, 0}, {0, 0}}, {{std::log(1.0), -60}, {std::log(2.0), -60}});
    const auto rr = search_exact(build_index(pair), make_embedding({1, 1}, {0, 0}), 2);
    CHECK(rr.items[0].id == "g0");
    const auto swapped = from_rows({{0, 0}, {0, 0}}, {{std::log(2.0), -60}, {std::log(1.0), -60}});
    CHECK(search_exact(build_index(swapped), make_embedding({1, 1}, {0, 0}), 2).items[0].id == "g1");
}

TEST_CASE("ties keep insertion order") {
    const auto g = from_rows({{1, 0}, {0, 1}, {-1, 0}}, {{0, 0}, {0, 0}, {0, 0}});
    const auto r = search_exact(build_index(g), make_embedding({0, 0}, {0, 0}), 3);
    CHECK(ids_of(r) == std::vector<std::string>{"g0", "g1", "g2"});
    CHECK(ids_of(search_two_stage(build_index(g), make_embedding({0, 0}, {0, 0}), 3, 3)) == ids_of(r));
}

TEST_CASE("two-stage with the full shortlist equals exact") {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
        const auto g = testing::random_set(rng, 64, 4, "g");
        const auto idx = build_index(g, CoarseConfig{8, 25, 1});
        for (int qn = 0; qn < 5; ++qn) {
            const auto q = testing::random_embedding(rng, 4);
            const auto exact = search_exact(idx, q, 10);
            CHECK(ids_of(search_two_stage(idx, q, 10, 64)) == ids_of(exact));
            CHECK(ids_of(search_two_stage(idx, q, 10, 64, 8)) == ids_of(exact));
            CHECK(search_two_stage(idx, q, 10, 64).items == exact.items);
        }
    }
}

TEST_CASE("a short shortlist can miss a low-mass item") {
    // g0 is nearest in mean but carries a large mass.
    const auto g = from_rows({{0.1, 0}, {0.4, 0}, {0.6, 0}}, {{std::log(5.0), std::log(5.0)}, {-5, -5}, {-5, -5}});
    const auto idx = build_index(g);
    const auto q = make_embedding({0, 0}, {0, 0});
    CHECK(search_exact(idx, q, 1).items[0].id == "g1");
    CHECK(search_two_stage(idx, q, 1, 1).items[0].id == "g0");
    CHECK(search_two_stage(idx, q, 1, 2).items[0].id == "g1");
}

TEST_CASE("query mass does not change the ranking") {
    std::mt19937_64 rng(8);
    const auto g = testing::random_set(rng, 50, 6, "g");
    const auto idx = build_index(g);
    for (int t = 0; t < 20; ++t) {
        const auto q = testing::random_embedding(rng, 6);
        const auto q2 = make_embedding(std::vector<double>(q.mu().begin(), q.mu().end()),
                                       testing::uniform_vector(rng, 6, -4, 2));
        CHECK(ids_of(search_exact(idx, q, 50)) == ids_of(search_exact(idx, q2, 50)));
    }
}

TEST_CASE("batch search is independent of the thread count") {
    std::mt19937_64 rng(9);
    const auto g = testing::random_set(rng, 200, 8, "g");
    const auto qs = testing::random_set(rng, 37, 8, "q");
    const auto idx = build_index(g, CoarseConfig{10, 25, 3});
    for (auto mode : {SearchMode::exact, SearchMode::two_stage}) {
        SearchOptions one{mode, 10, 50, 3, 1};
        SearchOptions many = one;
        many.threads = 4;
        const auto a = search_batch(idx, qs, one);
        CHECK(a == search_batch(idx, qs, many));
        REQUIRE(a.size() == 37);
        CHECK(a[5].query_id == "q5");
        if (mode == SearchMode::exact) CHECK(a[5] == search_exact(idx, qs[5], 10, "q5"));
    }
}

TEST_CASE("kmeans is deterministic and returns nlist centroids") {
    std::mt19937_64 rng(10);
    Matrix pts(60, 2);
    for (double& x : pts.flat()) x = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto c1 = train_kmeans(pts, CoarseConfig{5, 25, 2});
    CHECK(c1.rows() == 5);
    CHECK(c1 == train_kmeans(pts, CoarseConfig{5, 25, 2}));
}

TEST_CASE("rank_from_matrix orders each row") {
    Matrix s(2, 3);
    s(0, 0) = 3;
    s(0, 1) = 1;
    s(0, 2) = 2;
    s(1, 0) = 1;
    s(1, 1) = 1;
    s(1, 2) = 0;
    const auto r = rank_from_matrix(s, {"a", "b"}, {"x", "y", "z"});
    CHECK(ids_of(r[0]) == std::vector<std::string>{"y", "z", "x"});
    CHECK(ids_of(r[1]) == std::vector<std::string>{"z", "x", "y"});
    const auto hi = rank_from_matrix(s, {"a", "b"}, {"x", "y", "z"}, true);
    CHECK(ids_of(hi[0]) == std::vector<std::string>{"x", "z", "y"});
    CHECK_THROWS_AS(rank_from_matrix(s, {"a"}, {"x", "y", "z"}), Error);
}
