#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "probemb/error.hpp"
#include "probemb/json_io.hpp"
#include "probemb/pemb_io.hpp"
#include "support.hpp"

using namespace probemb;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

EmbeddingSet jsonl_round_trip(const EmbeddingSet& set) {
    std::stringstream s;
    write_embeddings_jsonl(set, s);
    return read_embeddings_jsonl(s);
}

}  // namespace

TEST_CASE("embedding JSONL round trip matches 32-bit storage") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 30; ++t) {
        auto set = testing::random_set(rng, static_cast<std::size_t>(t), 1 + t % 7, "i");
        set = EmbeddingSet(set.ids(), set.embeddings(), static_cast<Modality>(t % 3), t % 5 != 0, set.dim());
        const auto back = jsonl_round_trip(set);
        CHECK(back == round_to_storage(set));
        CHECK(jsonl_round_trip(back) == back);
    }
}

TEST_CASE("convert between PEMB and JSONL is lossless") {
    std::mt19937_64 rng(13);
    const auto set = round_to_storage(testing::random_set(rng, 40, 16, "q"));
    std::stringstream pemb;
    write_pemb(set, pemb);
    const auto from_pemb = read_pemb(pemb);
    const auto via_jsonl = jsonl_round_trip(from_pemb);
    std::stringstream again;
    write_pemb(via_jsonl, again);
    std::stringstream first;
    write_pemb(set, first);
    CHECK(again.str() == first.str());
}

TEST_CASE("embedding JSONL errors") {
    std::istringstream empty("");
    CHECK(code_of([&] { read_embeddings_jsonl(empty); }) == ErrorCode::TruncatedFile);
    std::istringstream magic(R"({"format":"other","version":1,"dim":1,"modality":"visual","has_log_var":true})");
    CHECK(code_of([&] { read_embeddings_jsonl(magic); }) == ErrorCode::BadMagic);
    std::istringstream version(R"({"format":"pemb-jsonl","version":9,"dim":1,"modality":"visual","has_log_var":true})");
    CHECK(code_of([&] { read_embeddings_jsonl(version); }) == ErrorCode::VersionUnsupported);
    std::istringstream bad_line(
        "{\"format\":\"pemb-jsonl\",\"version\":1,\"dim\":1,\"modality\":\"visual\",\"has_log_var\":true}\n"
        "{\"id\":\"a\",\"mu\":[1,2],\"log_var\":[0]}\n");
    try {
        read_embeddings_jsonl(bad_line);
        CHECK(false);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MalformedFile);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::istringstream dup(
        "{\"format\":\"pemb-jsonl\",\"version\":1,\"dim\":1,\"modality\":\"visual\",\"has_log_var\":false}\n"
        "{\"id\":\"a\",\"mu\":[1]}\n{\"id\":\"a\",\"mu\":[2]}\n");
    CHECK(code_of([&] { read_embeddings_jsonl(dup); }) == ErrorCode::DuplicateId);
}

TEST_CASE("annotations in both forms") {
    std::istringstream in(
        "{\"query\":\"q0\",\"positives\":[\"g1\",\"g2\"]}\n"
        "\n"
        "{\"query\":\"q1\",\"relevance\":{\"g0\":0.25,\"g2\":1}}\n");
    const auto t = read_annotations(in, {"q0", "q1"}, {"g0", "g1", "g2"});
    CHECK(t.relevance(0, 1) == 1.0);
    CHECK(t.relevance(0, 0) == 0.0);
    CHECK(t.relevance(1, 0) == 0.25);
    CHECK(t.positives(1) == std::vector<std::size_t>{2});

    std::stringstream out;
    write_annotations(t, out);
    const auto text = out.str();
    CHECK(text.find("\"positives\"") != std::string::npos);
    CHECK(text.find("\"relevance\"") != std::string::npos);
    const auto back = read_annotations(out, {"q0", "q1"}, {"g0", "g1", "g2"});
    CHECK(back.dense() == t.dense());

    std::istringstream unknown("{\"query\":\"q9\",\"positives\":[\"g0\"]}\n");
    CHECK(code_of([&] { read_annotations(unknown, {"q0"}, {"g0"}); }) == ErrorCode::UnknownId);
    std::istringstream range("{\"query\":\"q0\",\"relevance\":{\"g0\":1.5}}\n");
    CHECK(code_of([&] { read_annotations(range, {"q0"}, {"g0"}); }) == ErrorCode::OutOfRange);
    std::istringstream junk("{\"query\":\"q0\"\n");
    CHECK(code_of([&] { read_annotations(junk, {"q0"}, {"g0"}); }) == ErrorCode::MalformedFile);
}

TEST_CASE("labels round trip through a file") {
    const auto dir = std::filesystem::temp_directory_path() / "probemb_labels_test";
    std::filesystem::create_directories(dir);
    const LabelList labels{{"img0", "cat"}, {"img1", "dog"}, {"img2", "cat"}};
    write_labels(labels, dir / "l.jsonl");
    CHECK(read_labels(dir / "l.jsonl") == labels);
    std::filesystem::remove_all(dir);
}

TEST_CASE("report serialization") {
    MetricReport r;
    r.recall_at = {{1, 0.5}, {5, 0.75}, {10, 1.0}};
    r.rsum = 225;
    r.num_queries = 4;
    r.per_query.push_back({"q0", 1, 1, 1.0, 1.0, false});
    const auto j = to_json(r, true);
    CHECK(j["recall"]["R@5"] == 0.75);
    CHECK(j["per_query"].size() == 1);
    CHECK_FALSE(to_json(r).contains("per_query"));

    const auto text = dump(j);
    CHECK(text.back() == '\n');
    CHECK(text == dump(Json::parse(text)));
    CHECK(metrics_csv(r).find("R@10") != std::string::npos);

    std::vector<RankedList> lists{{"q,1", {{0, "g\"x", 0.1}}}};
    CHECK(ranked_csv(lists).find("\"q,1\"") != std::string::npos);
    CHECK(ranked_csv(lists).find("\"g\"\"x\"") != std::string::npos);
    CHECK(to_json(lists)[0]["results"][0]["score"] == 0.1);
}

TEST_CASE("format_number is the shortest round-trip form") {
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1.0) == "1");
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}
