#include "probemb/pemb_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

namespace probemb {

namespace {

constexpr std::array<char, 4> kPembMagic{'P', 'E', 'M', 'B'};
constexpr std::array<char, 4> kIndexMagic{'P', 'I', 'D', 'X'};
constexpr std::uint32_t kIndexFlagIvf = 1u;

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw Error(ErrorCode::IoError, "write failed");
    }
    template <typename U>
    void uint(U value) {
        std::array<unsigned char, sizeof(U)> buf{};
        for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(value >> (8 * i));
        bytes(buf.data(), buf.size());
    }
    void f32(double value) {
        const auto f = static_cast<float>(value);
        if (!std::isfinite(f)) throw Error(ErrorCode::OutOfRange, "value does not fit in 32-bit float");
        uint(std::bit_cast<std::uint32_t>(f));
    }
    void f64(double value) { uint(std::bit_cast<std::uint64_t>(value)); }
    void id(const std::string& s) {
        if (s.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw Error(ErrorCode::InvalidArgument, "id longer than 65535 bytes");
        }
        uint(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }

private:
    std::ostream& out_;
};

class Reader {
public:
    explicit Reader(std::istream& in) : in_(in) {}

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw Error(ErrorCode::TruncatedFile, "unexpected end of file");
    }
    template <typename U>
    U uint() {
        std::array<unsigned char, sizeof(U)> buf{};
        bytes(buf.data(), buf.size());
        U value = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
        return value;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(uint<std::uint32_t>())); }
    double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
    std::string id() {
        const auto len = uint<std::uint16_t>();
        std::string s(len, '\0');
        bytes(s.data(), len);
        return s;
    }
    void expect_end() {
        if (in_.peek() != std::char_traits<char>::eof()) {
            throw Error(ErrorCode::MalformedFile, "trailing bytes after declared content");
        }
    }

private:
    std::istream& in_;
};

bool valid_utf8(const std::string& s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        std::uint32_t cp = 0;
        if (c < 0x80) {
            ++i;
            continue;
        } else if ((c & 0xE0) == 0xC0) {
            extra = 1;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            extra = 2;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            extra = 3;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + extra >= s.size()) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xC0) != 0x80) return false;
            cp = (cp << 6) | (cc & 0x3F);
        }
        static constexpr std::uint32_t kMin[] = {0, 0x80, 0x800, 0x10000};
        if (cp < kMin[extra] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
        i += extra + 1;
    }
    return true;
}

void check_magic(Reader& r, const std::array<char, 4>& magic) {
    std::array<char, 4> got{};
    r.bytes(got.data(), got.size());
    if (got != magic) throw Error(ErrorCode::BadMagic, "bad magic bytes");
}

std::vector<std::string> read_ids(Reader& r, std::uint64_t count) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
    for (std::uint64_t i = 0; i < count; ++i) {
        auto s = r.id();
        if (s.empty()) throw Error(ErrorCode::MalformedFile, "empty id at record " + std::to_string(i));
        if (!valid_utf8(s)) throw Error(ErrorCode::MalformedFile, "id is not valid UTF-8 at record " + std::to_string(i));
        ids.push_back(std::move(s));
    }
    return ids;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    return in;
}

}  // namespace

EmbeddingSet read_pemb(std::istream& in) {
    Reader r(in);
    check_magic(r, kPembMagic);
    const auto version = r.uint<std::uint32_t>();
    if (version != kPembVersion) throw Error(ErrorCode::VersionUnsupported, "PEMB version " + std::to_string(version));
    const auto flags = r.uint<std::uint32_t>();
    if (flags & ~0x7u) throw Error(ErrorCode::MalformedFile, "unknown flag bits set");
    const auto modality_bits = (flags >> 1) & 0x3u;
    if (modality_bits > 2) throw Error(ErrorCode::MalformedFile, "unknown modality code");
    const bool has_log_var = (flags & kPembFlagLogVar) != 0;
    const auto count = r.uint<std::uint64_t>();
    const auto dim = r.uint<std::uint32_t>();
    if (count > 0 && dim == 0) throw Error(ErrorCode::MalformedFile, "zero dimension with records present");

    auto ids = read_ids(r, count);
    const std::size_t n = ids.size();
    // Rows grow as bytes arrive so a corrupt header cannot force a huge allocation.
    auto read_section = [&] {
        std::vector<std::vector<double>> rows(n);
        for (auto& row : rows) {
            row.reserve(std::min<std::size_t>(dim, 4096));
            for (std::uint32_t d = 0; d < dim; ++d) row.push_back(r.f32());
        }
        return rows;
    };
    auto mu = read_section();
    auto lv = has_log_var ? read_section()
                          : std::vector<std::vector<double>>(n, std::vector<double>(dim, kMuOnlyLogVar));
    r.expect_end();

    std::vector<GaussianEmbedding> embeddings;
    embeddings.reserve(n);
    for (std::size_t i = 0; i < n; ++i) embeddings.push_back(make_embedding(std::move(mu[i]), std::move(lv[i])));
    return EmbeddingSet(std::move(ids), std::move(embeddings), static_cast<Modality>(modality_bits), has_log_var,
                        dim);
}

EmbeddingSet read_pemb(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_pemb(in);
}

void write_pemb(const EmbeddingSet& set, std::ostream& out) {
    if (set.dim() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::InvalidArgument, "dimension too large for PEMB");
    }
    Writer w(out);
    w.bytes(kPembMagic.data(), kPembMagic.size());
    w.uint(kPembVersion);
    std::uint32_t flags = static_cast<std::uint32_t>(set.modality()) << 1;
    if (set.has_log_var()) flags |= kPembFlagLogVar;
    w.uint(flags);
    w.uint(static_cast<std::uint64_t>(set.size()));
    w.uint(static_cast<std::uint32_t>(set.dim()));
    for (const auto& id : set.ids()) w.id(id);
    for (const auto& e : set.embeddings()) {
        for (double v : e.mu()) w.f32(v);
    }
    if (set.has_log_var()) {
        for (const auto& e : set.embeddings()) {
            for (double v : e.log_var()) w.f32(v);
        }
    }
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

void write_pemb(const EmbeddingSet& set, const std::filesystem::path& path) {
    auto out = open_out(path);
    write_pemb(set, out);
}

std::size_t pemb_size(const EmbeddingSet& set) {
    std::size_t bytes = kPembHeaderBytes;
    for (const auto& id : set.ids()) bytes += 2 + id.size();
    const std::size_t sections = set.has_log_var() ? 2 : 1;
    return bytes + sections * set.size() * set.dim() * sizeof(float);
}

EmbeddingSet round_to_storage(const EmbeddingSet& set) {
    std::vector<GaussianEmbedding> rounded;
    rounded.reserve(set.size());
    auto round = [](std::span<const double> xs) {
        std::vector<double> out(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) out[i] = static_cast<double>(static_cast<float>(xs[i]));
        return out;
    };
    for (const auto& e : set.embeddings()) {
        auto lv = set.has_log_var() ? round(e.log_var()) : std::vector<double>(e.dim(), kMuOnlyLogVar);
        rounded.push_back(make_embedding(round(e.mu()), std::move(lv)));
    }
    return EmbeddingSet(set.ids(), std::move(rounded), set.modality(), set.has_log_var(), set.dim());
}

void save_index(const ProbIndex& index, const std::filesystem::path& path) {
    auto out = open_out(path);
    Writer w(out);
    w.bytes(kIndexMagic.data(), kIndexMagic.size());
    w.uint(kIndexVersion);
    w.uint(index.ivf() ? kIndexFlagIvf : 0u);
    w.uint(static_cast<std::uint64_t>(index.size()));
    w.uint(static_cast<std::uint32_t>(index.dim()));
    for (const auto& id : index.ids()) w.id(id);
    for (double v : index.mu().flat()) w.f64(v);
    for (double m : index.mass()) w.f64(m);
    if (const auto& ivf = index.ivf()) {
        w.uint(static_cast<std::uint32_t>(ivf->lists.size()));
        for (double v : ivf->centroids.flat()) w.f64(v);
        for (const auto& list : ivf->lists) {
            w.uint(static_cast<std::uint64_t>(list.size()));
            for (std::size_t item : list) w.uint(static_cast<std::uint64_t>(item));
        }
    }
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

ProbIndex load_index(const std::filesystem::path& path) {
    auto in = open_in(path);
    Reader r(in);
    check_magic(r, kIndexMagic);
    const auto version = r.uint<std::uint32_t>();
    if (version != kIndexVersion) throw Error(ErrorCode::VersionUnsupported, "index version " + std::to_string(version));
    const auto flags = r.uint<std::uint32_t>();
    if (flags & ~kIndexFlagIvf) throw Error(ErrorCode::MalformedFile, "unknown flag bits set");
    const auto count = r.uint<std::uint64_t>();
    const auto dim = r.uint<std::uint32_t>();
    auto ids = read_ids(r, count);
    const std::size_t n = ids.size();
    const auto remaining = std::filesystem::file_size(path) - static_cast<std::uintmax_t>(in.tellg());
    if (remaining / sizeof(double) < static_cast<std::uintmax_t>(n) * (static_cast<std::uintmax_t>(dim) + 1)) {
        throw Error(ErrorCode::TruncatedFile, "index shorter than its header declares");
    }
    Matrix mu(n, dim);
    for (double& v : mu.flat()) v = r.f64();
    std::vector<double> mass(n);
    for (double& m : mass) m = r.f64();
    std::optional<IvfIndex> ivf;
    if (flags & kIndexFlagIvf) {
        const auto nlist = r.uint<std::uint32_t>();
        if (nlist > n) throw Error(ErrorCode::MalformedFile, "more lists than gallery items");
        IvfIndex coarse{Matrix(nlist, dim), {}};
        for (double& v : coarse.centroids.flat()) v = r.f64();
        coarse.lists.resize(nlist);
        for (auto& list : coarse.lists) {
            const auto len = r.uint<std::uint64_t>();
            if (len > n) throw Error(ErrorCode::MalformedFile, "posting list longer than the gallery");
            list.resize(static_cast<std::size_t>(len));
            for (auto& item : list) item = static_cast<std::size_t>(r.uint<std::uint64_t>());
        }
        ivf = std::move(coarse);
    }
    r.expect_end();
    try {
        return ProbIndex(std::move(ids), std::move(mu), std::move(mass), std::move(ivf));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::DuplicateId) throw;
        throw Error(ErrorCode::MalformedFile, std::string("inconsistent index: ") + e.what());
    }
}

}  // namespace probemb
