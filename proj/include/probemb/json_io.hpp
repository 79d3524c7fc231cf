#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "probemb/core_types.hpp"
#include "probemb/metrics.hpp"
#include "probemb/retrieval.hpp"
#include "probemb/toybench.hpp"

namespace probemb {

using Json = nlohmann::json;

// Embedding JSONL: a header line
//   {"format":"pemb-jsonl","version":1,"dim":D,"modality":"visual","has_log_var":true}
// then one {"id":..., "mu":[...], "log_var":[...]} per item ("log_var" absent
// for mean-only sets). Values are written as 32-bit floats.
void write_embeddings_jsonl(const EmbeddingSet& set, std::ostream& out);
void write_embeddings_jsonl(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embeddings_jsonl(std::istream& in);
EmbeddingSet read_embeddings_jsonl(const std::filesystem::path& path);

/// Annotation JSONL: {"query": q, "positives": [g, ...]} or
/// {"query": q, "relevance": {g: value, ...}} per line. Blank lines are
/// skipped; MalformedFile names the offending line.
MatchTable read_annotations(std::istream& in, std::vector<std::string> query_ids,
                            std::vector<std::string> gallery_ids);
MatchTable read_annotations(const std::filesystem::path& path, std::vector<std::string> query_ids,
                            std::vector<std::string> gallery_ids);
/// Rows whose listed values are all 1 use the "positives" form.
void write_annotations(const MatchTable& table, std::ostream& out);
void write_annotations(const MatchTable& table, const std::filesystem::path& path);

/// Class labels as {"id": ..., "class": ...} lines, in file order.
using LabelList = std::vector<std::pair<std::string, std::string>>;
LabelList read_labels(const std::filesystem::path& path);
void write_labels(const LabelList& labels, const std::filesystem::path& path);

Json to_json(const ToyReport& report, bool include_points = false);
Json to_json(const MetricReport& report, bool include_per_query = false);
Json to_json(const UncertaintyProfile& profile);
Json to_json(const PromptFilterResult& result);
Json to_json(const std::vector<RankedList>& ranked);

/// Shortest round-trip decimal form of a double.
std::string format_number(double value);

std::string toy_history_csv(const ToyReport& report);
/// One row per point per recorded frame (plus the final state).
std::string toy_snapshot_csv(const ToyReport& report);
std::string metrics_csv(const MetricReport& report);
std::string uncertainty_csv(const UncertaintyProfile& profile);
std::string prompt_filter_csv(const PromptFilterResult& result);
std::string ranked_csv(const std::vector<RankedList>& ranked);

/// Pretty-printed with sorted keys and a trailing newline.
std::string dump(const Json& j);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace probemb
