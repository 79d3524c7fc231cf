#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "probemb/error.hpp"
#include "probemb/pemb_io.hpp"
#include "support.hpp"

using namespace probemb;

namespace {

// Independent little-endian encoder, written the way an external producer would.
struct Bytes {
    std::string s;
    template <class T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) s.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
    }
    void f32(float f) { le(std::bit_cast<std::uint32_t>(f)); }
};

std::string encode(const std::vector<std::string>& ids, const std::vector<std::vector<float>>& mu,
                   const std::vector<std::vector<float>>* lv, std::uint32_t modality, std::uint32_t dim,
                   std::uint32_t version = 1) {
    Bytes b;
    b.s = "PEMB";
    b.le<std::uint32_t>(version);
    b.le<std::uint32_t>((lv ? 1u : 0u) | (modality << 1));
    b.le<std::uint64_t>(ids.size());
    b.le<std::uint32_t>(dim);
    for (const auto& id : ids) {
        b.le<std::uint16_t>(static_cast<std::uint16_t>(id.size()));
        b.s += id;
    }
    for (const auto& row : mu) {
        for (float f : row) b.f32(f);
    }
    if (lv) {
        for (const auto& row : *lv) {
            for (float f : row) b.f32(f);
        }
    }
    return b.s;
}

EmbeddingSet decode(const std::string& bytes) {
    std::istringstream in(bytes);
    return read_pemb(in);
}

std::string encode(const EmbeddingSet& set) {
    std::ostringstream out;
    write_pemb(set, out);
    return out.str();
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

TEST_CASE("empty set is header only") {
    const EmbeddingSet empty({}, {}, Modality::untagged, true, 4);
    const auto bytes = encode(empty);
    CHECK(bytes.size() == kPembHeaderBytes);
    CHECK(bytes.size() == 24);
    CHECK(bytes == encode({}, {}, nullptr, 0, 4).substr(0, 8) + std::string("\x01\0\0\0", 4) + bytes.substr(12));
    const auto back = decode(bytes);
    CHECK(back.empty());
    CHECK(back.dim() == 4);
}

TEST_CASE("byte layout of a single item") {
    const EmbeddingSet one({"cap7"}, {make_embedding({0.5, -1.25}, {-2.0, 0.75})}, Modality::textual);
    const auto bytes = encode(one);
    CHECK(bytes.size() == 24 + (2 + 4) + 8 + 8);
    CHECK(bytes.size() == pemb_size(one));
    const std::vector<std::vector<float>> mu{{0.5f, -1.25f}}, lv{{-2.0f, 0.75f}};
    CHECK(bytes == encode({"cap7"}, mu, &lv, 2, 2));
}

TEST_CASE("reads files produced by an external encoder") {
    const std::vector<std::vector<float>> mu{{1.5f, 2.0f, -3.0f}, {0.1f, 0.2f, 0.3f}};
    const std::vector<std::vector<float>> lv{{-1.0f, -2.0f, -3.0f}, {0.0f, 0.5f, 1.0f}};
    const auto with_var = decode(encode({"a", "bé"}, mu, &lv, 1, 3));
    CHECK(with_var.modality() == Modality::visual);
    CHECK(with_var.has_log_var());
    CHECK(with_var.id(1) == "bé");
    CHECK(with_var[0].mu()[2] == -3.0);
    CHECK(with_var[1].mu()[0] == static_cast<double>(0.1f));
    CHECK(with_var[1].log_var()[1] == 0.5);

    const auto mean_only = decode(encode({"x"}, {{0.25f}}, nullptr, 2, 1));
    CHECK_FALSE(mean_only.has_log_var());
    CHECK(mean_only.modality() == Modality::textual);
    CHECK(mean_only[0].mu()[0] == 0.25);
    CHECK(mean_only[0].log_var()[0] == kMuOnlyLogVar);
    CHECK(encode(mean_only) == encode({"x"}, {{0.25f}}, nullptr, 2, 1));
}

TEST_CASE("malformed files") {
    const std::vector<std::vector<float>> mu{{1.0f}}, lv{{0.0f}};
    const auto good = encode({"a"}, mu, &lv, 0, 1);
    auto bad = good;
    bad[0] = 'X';
    CHECK(code_of([&] { decode(bad); }) == ErrorCode::BadMagic);
    CHECK(code_of([&] { decode(encode({"a"}, mu, &lv, 0, 1, 2)); }) == ErrorCode::VersionUnsupported);
    for (std::size_t cut : {0ul, 3ul, 10ul, 23ul, 25ul, good.size() - 1}) {
        CHECK(code_of([&] { decode(good.substr(0, cut)); }) == ErrorCode::TruncatedFile);
    }
    CHECK(code_of([&] { decode(good + "x"); }) == ErrorCode::MalformedFile);
    CHECK(code_of([&] { decode(encode({"a", "a"}, {{1.0f}, {2.0f}}, nullptr, 0, 1)); }) == ErrorCode::DuplicateId);
    CHECK(code_of([&] { decode(encode({"a"}, mu, nullptr, 3, 1)); }) == ErrorCode::MalformedFile);
    CHECK(code_of([&] { decode(encode({"\xff"}, mu, nullptr, 0, 1)); }) == ErrorCode::MalformedFile);
    auto flagged = good;
    flagged[8] = static_cast<char>(0x10);
    CHECK(code_of([&] { decode(flagged); }) == ErrorCode::MalformedFile);
    // A huge declared count must fail on the short body, not on allocation.
    auto huge = good;
    for (int i = 12; i < 20; ++i) huge[static_cast<std::size_t>(i)] = static_cast<char>(0x7f);
    const auto huge_code = code_of([&] { decode(huge); });
    CHECK((huge_code == ErrorCode::TruncatedFile || huge_code == ErrorCode::MalformedFile));
}

TEST_CASE("write rejects values that overflow 32-bit floats") {
    const EmbeddingSet big({"a"}, {make_embedding({1e300}, {0})});
    std::ostringstream out;
    CHECK(code_of([&] { write_pemb(big, out); }) == ErrorCode::OutOfRange);
}

TEST_CASE("randomized round trips are lossless at 32-bit") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> n_dist(0, 60), d_dist(1, 64);
    for (int t = 0; t < 100; ++t) {
        const std::size_t n = n_dist(rng), d = d_dist(rng);
        auto set = testing::random_set(rng, n, d, "id-" + std::to_string(t) + "-");
        set = EmbeddingSet(set.ids(), set.embeddings(), static_cast<Modality>(t % 3), t % 4 != 0, d);
        const auto stored = round_to_storage(set);
        const auto bytes = encode(set);
        CHECK(bytes.size() == pemb_size(set));
        const auto back = decode(bytes);
        CHECK(back == stored);
        CHECK(encode(back) == bytes);
        CHECK(round_to_storage(stored) == stored);
    }
}

TEST_CASE("file paths") {
    const auto dir = std::filesystem::temp_directory_path() / "probemb_pemb_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(5);
    const auto set = testing::random_set(rng, 20, 8, "g");
    write_pemb(set, dir / "s.pemb");
    CHECK(read_pemb(dir / "s.pemb") == round_to_storage(set));
    CHECK(code_of([&] { read_pemb(dir / "missing.pemb"); }) == ErrorCode::IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("index save and load") {
    const auto dir = std::filesystem::temp_directory_path() / "probemb_index_test";
    std::filesystem::create_directories(dir);
    std::mt19937_64 rng(6);
    const auto g = testing::random_set(rng, 50, 6, "g");
    for (bool ivf : {false, true}) {
        const auto idx = ivf ? build_index(g, CoarseConfig{5, 25, 1}) : build_index(g);
        save_index(idx, dir / "i.pidx");
        CHECK(load_index(dir / "i.pidx") == idx);
    }
    {
        std::ofstream f(dir / "bad.pidx", std::ios::binary);
        f << "PEMB";
    }
    CHECK(code_of([&] { load_index(dir / "bad.pidx"); }) == ErrorCode::BadMagic);
    save_index(build_index(g, CoarseConfig{5, 25, 1}), dir / "i.pidx");
    std::filesystem::resize_file(dir / "i.pidx", std::filesystem::file_size(dir / "i.pidx") - 3);
    CHECK(code_of([&] { load_index(dir / "i.pidx"); }) == ErrorCode::TruncatedFile);
    std::filesystem::remove_all(dir);
}
