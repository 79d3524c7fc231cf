#include "probemb/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace probemb {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::VarianceUnderflow: return "VarianceUnderflow";
        case ErrorCode::EmptyBatch: return "EmptyBatch";
        case ErrorCode::NoNegative: return "NoNegative";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::EmptyGallery: return "EmptyGallery";
        case ErrorCode::BadNlist: return "BadNlist";
        case ErrorCode::ShortlistTooSmall: return "ShortlistTooSmall";
        case ErrorCode::NoPositives: return "NoPositives";
        case ErrorCode::DegenerateRange: return "DegenerateRange";
        case ErrorCode::EmptyClass: return "EmptyClass";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionUnsupported: return "VersionUnsupported";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::MalformedFile: return "MalformedFile";
        case ErrorCode::UnknownId: return "UnknownId";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

GaussianEmbedding::GaussianEmbedding(std::vector<double> mu, std::vector<double> log_var)
    : mu_(std::move(mu)), log_var_(std::move(log_var)) {
    if (mu_.size() != log_var_.size() || mu_.empty()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "mu has " + std::to_string(mu_.size()) + " entries, log_var has " +
                        std::to_string(log_var_.size()));
    }
    auto finite = [](double x) { return std::isfinite(x); };
    if (!std::all_of(mu_.begin(), mu_.end(), finite) ||
        !std::all_of(log_var_.begin(), log_var_.end(), finite)) {
        throw Error(ErrorCode::NonFiniteValue, "embedding contains NaN or Inf");
    }
}

double GaussianEmbedding::variance(std::size_t i) const { return std::exp(log_var_.at(i)); }

std::vector<double> GaussianEmbedding::variances() const {
    std::vector<double> out(log_var_.size());
    std::transform(log_var_.begin(), log_var_.end(), out.begin(), [](double lv) { return std::exp(lv); });
    return out;
}

std::vector<double> GaussianEmbedding::sigmas() const {
    std::vector<double> out(log_var_.size());
    std::transform(log_var_.begin(), log_var_.end(), out.begin(),
                   [](double lv) { return std::exp(0.5 * lv); });
    return out;
}

GaussianEmbedding make_embedding(std::vector<double> mu, std::vector<double> log_var) {
    return GaussianEmbedding(std::move(mu), std::move(log_var));
}

double uncertainty_mass(const GaussianEmbedding& e) {
    double s = 0.0;
    for (double lv : e.log_var()) s += std::exp(lv);
    return s;
}

double sigma_l1(const GaussianEmbedding& e) {
    double s = 0.0;
    for (double lv : e.log_var()) s += std::exp(0.5 * lv);
    return s;
}

std::string_view to_string(Modality m) noexcept {
    switch (m) {
        case Modality::visual: return "visual";
        case Modality::textual: return "textual";
        case Modality::untagged: break;
    }
    return "untagged";
}

Modality parse_modality(std::string_view name) {
    if (name == "visual") return Modality::visual;
    if (name == "textual") return Modality::textual;
    if (name == "untagged") return Modality::untagged;
    throw Error(ErrorCode::InvalidArgument, "unknown modality '" + std::string(name) + "'");
}

EmbeddingSet::EmbeddingSet(std::vector<std::string> ids, std::vector<GaussianEmbedding> embeddings,
                           Modality modality, bool has_log_var, std::size_t dim)
    : ids_(std::move(ids)),
      embeddings_(std::move(embeddings)),
      modality_(modality),
      has_log_var_(has_log_var),
      dim_(dim) {
    if (ids_.size() != embeddings_.size()) {
        throw Error(ErrorCode::InvalidArgument, "ids and embeddings differ in length");
    }
    if (!embeddings_.empty()) dim_ = embeddings_.front().dim();
    index_.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        if (ids_[i].empty()) throw Error(ErrorCode::InvalidArgument, "empty id at position " + std::to_string(i));
        if (embeddings_[i].dim() != dim_) {
            throw Error(ErrorCode::DimensionMismatch, "item '" + ids_[i] + "' has dimension " +
                                                          std::to_string(embeddings_[i].dim()) +
                                                          ", expected " + std::to_string(dim_));
        }
        if (!index_.emplace(ids_[i], i).second) throw Error(ErrorCode::DuplicateId, ids_[i]);
    }
}

std::optional<std::size_t> EmbeddingSet::find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

GaussianBatch to_batch(std::span<const GaussianEmbedding> items) {
    const std::size_t d = items.empty() ? 0 : items.front().dim();
    GaussianBatch batch{Matrix(items.size(), d), Matrix(items.size(), d)};
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].dim() != d) throw Error(ErrorCode::DimensionMismatch, "ragged batch");
        std::copy(items[i].mu().begin(), items[i].mu().end(), batch.mu.row(i).begin());
        std::copy(items[i].log_var().begin(), items[i].log_var().end(), batch.log_var.row(i).begin());
    }
    return batch;
}

GaussianBatch to_batch(const EmbeddingSet& set) {
    GaussianBatch batch = to_batch(std::span<const GaussianEmbedding>(set.embeddings()));
    if (set.empty()) batch = GaussianBatch{Matrix(0, set.dim()), Matrix(0, set.dim())};
    return batch;
}

namespace {

std::unordered_map<std::string, std::size_t> index_ids(const std::vector<std::string>& ids) {
    std::unordered_map<std::string, std::size_t> out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!out.emplace(ids[i], i).second) throw Error(ErrorCode::DuplicateId, ids[i]);
    }
    return out;
}

}  // namespace

MatchTable::MatchTable(std::vector<std::string> query_ids, std::vector<std::string> gallery_ids,
                       const std::vector<MatchEntry>& entries)
    : query_ids_(std::move(query_ids)),
      gallery_ids_(std::move(gallery_ids)),
      query_index_(index_ids(query_ids_)),
      gallery_index_(index_ids(gallery_ids_)),
      rows_(query_ids_.size()) {
    for (const auto& e : entries) {
        auto q = query_index_.find(e.query);
        if (q == query_index_.end()) throw Error(ErrorCode::UnknownId, "query '" + e.query + "'");
        auto g = gallery_index_.find(e.gallery);
        if (g == gallery_index_.end()) throw Error(ErrorCode::UnknownId, "gallery '" + e.gallery + "'");
        if (!(e.relevance >= 0.0 && e.relevance <= 1.0)) {
            throw Error(ErrorCode::OutOfRange, "relevance " + std::to_string(e.relevance) + " for (" +
                                                   e.query + ", " + e.gallery + ")");
        }
        auto& row = rows_[q->second];
        auto it = std::lower_bound(row.begin(), row.end(), g->second,
                                   [](const auto& p, std::size_t idx) { return p.first < idx; });
        if (it != row.end() && it->first == g->second) {
            it->second = e.relevance;
        } else {
            row.insert(it, {g->second, e.relevance});
        }
    }
}

std::optional<std::size_t> MatchTable::query_index(std::string_view id) const {
    auto it = query_index_.find(std::string(id));
    if (it == query_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> MatchTable::gallery_index(std::string_view id) const {
    auto it = gallery_index_.find(std::string(id));
    if (it == gallery_index_.end()) return std::nullopt;
    return it->second;
}

double MatchTable::relevance(std::size_t q, std::size_t g) const {
    const auto& row = rows_.at(q);
    auto it = std::lower_bound(row.begin(), row.end(), g,
                               [](const auto& p, std::size_t idx) { return p.first < idx; });
    return (it != row.end() && it->first == g) ? it->second : 0.0;
}

std::vector<std::size_t> MatchTable::positives(std::size_t q, double threshold) const {
    std::vector<std::size_t> out;
    for (const auto& [g, v] : rows_.at(q)) {
        if (v >= threshold) out.push_back(g);
    }
    return out;
}

Matrix MatchTable::dense() const {
    Matrix m(num_queries(), num_gallery());
    for (std::size_t q = 0; q < rows_.size(); ++q) {
        for (const auto& [g, v] : rows_[q]) m(q, g) = v;
    }
    return m;
}

std::vector<MatchEntry> MatchTable::entries() const {
    std::vector<MatchEntry> out;
    for (std::size_t q = 0; q < rows_.size(); ++q) {
        for (const auto& [g, v] : rows_[q]) out.push_back({query_ids_[q], gallery_ids_[g], v});
    }
    return out;
}

MatchTable MatchTable::transposed() const {
    std::vector<MatchEntry> flipped;
    for (const auto& e : entries()) flipped.push_back({e.gallery, e.query, e.relevance});
    return MatchTable(gallery_ids_, query_ids_, flipped);
}

}  // namespace probemb
