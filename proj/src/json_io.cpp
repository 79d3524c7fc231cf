#include "probemb/json_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace probemb {

namespace {

std::ofstream open_text_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
    return out;
}

std::ifstream open_text_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
    return in;
}

Json parse_line(const std::string& line, std::size_t line_no) {
    try {
        return Json::parse(line);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": " + e.what());
    }
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

Json storage_values(std::span<const double> xs) {
    Json arr = Json::array();
    for (double v : xs) {
        const auto f = static_cast<float>(v);
        if (!std::isfinite(f)) throw Error(ErrorCode::OutOfRange, "value does not fit in 32-bit float");
        arr.push_back(static_cast<double>(f));
    }
    return arr;
}

std::vector<double> read_values(const Json& j, const char* key, std::size_t line_no) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_array()) {
        throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": missing array '" + key + "'");
    }
    std::vector<double> out;
    out.reserve(it->size());
    for (const auto& v : *it) {
        if (!v.is_number()) {
            throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": non-numeric value in '" + key + "'");
        }
        out.push_back(v.get<double>());
    }
    return out;
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + "\"";
}

std::string optional_csv(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

}  // namespace

void write_embeddings_jsonl(const EmbeddingSet& set, std::ostream& out) {
    Json header = {{"format", "pemb-jsonl"},
                   {"version", 1},
                   {"dim", set.dim()},
                   {"modality", std::string(to_string(set.modality()))},
                   {"has_log_var", set.has_log_var()}};
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < set.size(); ++i) {
        Json line = {{"id", set.id(i)}, {"mu", storage_values(set[i].mu())}};
        if (set.has_log_var()) line["log_var"] = storage_values(set[i].log_var());
        out << line.dump() << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

void write_embeddings_jsonl(const EmbeddingSet& set, const std::filesystem::path& path) {
    auto out = open_text_out(path);
    write_embeddings_jsonl(set, out);
}

EmbeddingSet read_embeddings_jsonl(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::optional<Json> header;
    std::vector<std::string> ids;
    std::vector<GaussianEmbedding> embeddings;
    std::size_t dim = 0;
    bool has_log_var = true;
    Modality modality = Modality::untagged;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        Json j = parse_line(line, line_no);
        if (!j.is_object()) throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": not an object");
        if (!header) {
            if (j.value("format", std::string()) != "pemb-jsonl") {
                throw Error(ErrorCode::BadMagic, "first line is not a pemb-jsonl header");
            }
            if (j.value("version", 0) != 1) throw Error(ErrorCode::VersionUnsupported, "unsupported pemb-jsonl version");
            try {
                dim = j.at("dim").get<std::size_t>();
                has_log_var = j.value("has_log_var", true);
                modality = parse_modality(j.value("modality", std::string("untagged")));
            } catch (const Json::exception& e) {
                throw Error(ErrorCode::MalformedFile, std::string("bad header: ") + e.what());
            }
            header = std::move(j);
            continue;
        }
        const auto id_it = j.find("id");
        if (id_it == j.end() || !id_it->is_string()) {
            throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": missing string 'id'");
        }
        auto mu = read_values(j, "mu", line_no);
        auto lv = has_log_var ? read_values(j, "log_var", line_no) : std::vector<double>(mu.size(), kMuOnlyLogVar);
        if (mu.size() != dim || lv.size() != dim) {
            throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": expected " +
                                                      std::to_string(dim) + " values per vector");
        }
        ids.push_back(id_it->get<std::string>());
        embeddings.push_back(make_embedding(std::move(mu), std::move(lv)));
    }
    if (!header) throw Error(ErrorCode::TruncatedFile, "missing pemb-jsonl header");
    return EmbeddingSet(std::move(ids), std::move(embeddings), modality, has_log_var, dim);
}

EmbeddingSet read_embeddings_jsonl(const std::filesystem::path& path) {
    auto in = open_text_in(path);
    return read_embeddings_jsonl(in);
}

MatchTable read_annotations(std::istream& in, std::vector<std::string> query_ids,
                            std::vector<std::string> gallery_ids) {
    std::vector<MatchEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const Json j = parse_line(line, line_no);
        const std::string where = "line " + std::to_string(line_no) + ": ";
        if (!j.is_object() || !j.contains("query") || !j["query"].is_string()) {
            throw Error(ErrorCode::MalformedFile, where + "missing string 'query'");
        }
        const auto query = j["query"].get<std::string>();
        if (const auto pos = j.find("positives"); pos != j.end()) {
            if (!pos->is_array()) throw Error(ErrorCode::MalformedFile, where + "'positives' must be an array");
            for (const auto& g : *pos) {
                if (!g.is_string()) throw Error(ErrorCode::MalformedFile, where + "positive ids must be strings");
                entries.push_back({query, g.get<std::string>(), 1.0});
            }
        } else if (const auto rel = j.find("relevance"); rel != j.end()) {
            if (!rel->is_object()) throw Error(ErrorCode::MalformedFile, where + "'relevance' must be an object");
            for (const auto& [g, v] : rel->items()) {
                if (!v.is_number()) throw Error(ErrorCode::MalformedFile, where + "relevance values must be numbers");
                entries.push_back({query, g, v.get<double>()});
            }
        } else {
            throw Error(ErrorCode::MalformedFile, where + "needs 'positives' or 'relevance'");
        }
    }
    return MatchTable(std::move(query_ids), std::move(gallery_ids), entries);
}

MatchTable read_annotations(const std::filesystem::path& path, std::vector<std::string> query_ids,
                            std::vector<std::string> gallery_ids) {
    auto in = open_text_in(path);
    return read_annotations(in, std::move(query_ids), std::move(gallery_ids));
}

void write_annotations(const MatchTable& table, std::ostream& out) {
    for (std::size_t q = 0; q < table.num_queries(); ++q) {
        const auto& row = table.row(q);
        if (row.empty()) continue;
        bool binary = true;
        for (const auto& [g, v] : row) binary = binary && v == 1.0;
        Json line = {{"query", table.query_ids()[q]}};
        if (binary) {
            Json ids = Json::array();
            for (const auto& [g, v] : row) ids.push_back(table.gallery_ids()[g]);
            line["positives"] = std::move(ids);
        } else {
            Json rel = Json::object();
            for (const auto& [g, v] : row) rel[table.gallery_ids()[g]] = v;
            line["relevance"] = std::move(rel);
        }
        out << line.dump() << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

void write_annotations(const MatchTable& table, const std::filesystem::path& path) {
    auto out = open_text_out(path);
    write_annotations(table, out);
}

LabelList read_labels(const std::filesystem::path& path) {
    auto in = open_text_in(path);
    LabelList labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (blank(line)) continue;
        const Json j = parse_line(line, line_no);
        if (!j.is_object() || !j.contains("id") || !j.contains("class") || !j["id"].is_string() ||
            !j["class"].is_string()) {
            throw Error(ErrorCode::MalformedFile, "line " + std::to_string(line_no) + ": needs string 'id' and 'class'");
        }
        labels.emplace_back(j["id"].get<std::string>(), j["class"].get<std::string>());
    }
    return labels;
}

void write_labels(const LabelList& labels, const std::filesystem::path& path) {
    auto out = open_text_out(path);
    for (const auto& [id, cls] : labels) out << Json{{"id", id}, {"class", cls}}.dump() << '\n';
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

Json to_json(const ToyReport& report, bool include_points) {
    Json j = {{"mean_var_certain", report.mean_var_certain},
              {"mean_var_uncertain", report.mean_var_uncertain},
              {"ratio", report.ratio},
              {"final_loss", report.final_loss},
              {"initial_mean_var_certain", report.initial_mean_var_certain},
              {"initial_mean_var_uncertain", report.initial_mean_var_uncertain},
              {"a", report.a},
              {"b", report.b}};
    Json history = Json::array();
    for (const auto& h : report.history) {
        history.push_back({{"epoch", h.epoch},
                           {"loss", h.loss},
                           {"mean_var_certain", h.mean_var_certain},
                           {"mean_var_uncertain", h.mean_var_uncertain}});
    }
    j["history"] = std::move(history);
    if (include_points) {
        Json points = Json::array();
        for (const auto& p : report.points) {
            points.push_back({{"mu", {p.mu[0], p.mu[1]}},
                              {"var", {std::exp(p.log_var[0]), std::exp(p.log_var[1])}},
                              {"primary_class", p.primary_class},
                              {"secondary_class", p.secondary_class}});
        }
        j["points"] = std::move(points);
    }
    return j;
}

Json to_json(const MetricReport& report, bool include_per_query) {
    Json recall = Json::object();
    for (const auto& [k, v] : report.recall_at) recall["R@" + std::to_string(k)] = v;
    Json j = {{"recall", std::move(recall)},
              {"rsum", report.rsum},
              {"map_at_r", report.map_at_r},
              {"r_precision", report.r_precision},
              {"num_queries", report.num_queries},
              {"skipped_queries", report.skipped_queries}};
    if (include_per_query) {
        Json rows = Json::array();
        for (const auto& q : report.per_query) {
            rows.push_back({{"query", q.query_id},
                            {"num_positives", q.num_positives},
                            {"first_positive_rank", q.first_positive_rank},
                            {"average_precision_at_r", q.average_precision_at_r},
                            {"r_precision", q.r_precision},
                            {"skipped", q.skipped}});
        }
        j["per_query"] = std::move(rows);
    }
    return j;
}

Json to_json(const UncertaintyProfile& profile) {
    Json bins = Json::array();
    for (const auto& b : profile.bins) {
        bins.push_back({{"lower", b.lower},
                        {"upper", b.upper},
                        {"count", b.count},
                        {"mean_mass", b.mean_mass},
                        {"mean_recall_at_1", optional_number(b.mean_recall_at_1)}});
    }
    return {{"edges", profile.edges},
            {"bins", std::move(bins)},
            {"num_queries", profile.num_queries},
            {"pearson_query_level", optional_number(profile.pearson_query)},
            {"pearson_bin_level", optional_number(profile.pearson_bin)}};
}

Json to_json(const PromptFilterResult& result) {
    Json classes = Json::array();
    for (std::size_t c = 0; c < result.classes.size(); ++c) {
        classes.push_back({{"class", result.classes[c]},
                           {"num_prompts", result.num_prompts[c]},
                           {"chosen_k", result.chosen_k[c]},
                           {"accuracy", result.per_class_accuracy[c]}});
    }
    return {{"accuracy", result.accuracy},
            {"num_correct", result.num_correct},
            {"num_images", result.num_images},
            {"classes", std::move(classes)}};
}

Json to_json(const std::vector<RankedList>& ranked) {
    Json lists = Json::array();
    for (const auto& list : ranked) {
        Json items = Json::array();
        for (const auto& item : list.items) items.push_back({{"id", item.id}, {"score", item.score}});
        lists.push_back({{"query", list.query_id}, {"results", std::move(items)}});
    }
    return lists;
}

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

std::string toy_history_csv(const ToyReport& report) {
    std::ostringstream out;
    out << "epoch,loss,mean_var_certain,mean_var_uncertain\n";
    for (const auto& h : report.history) {
        out << h.epoch << ',' << format_number(h.loss) << ',' << format_number(h.mean_var_certain) << ','
            << format_number(h.mean_var_uncertain) << '\n';
    }
    return out.str();
}

std::string toy_snapshot_csv(const ToyReport& report) {
    std::ostringstream out;
    out << "epoch,index,primary_class,secondary_class,mu0,mu1,var0,var1\n";
    auto emit = [&](int epoch, const std::vector<ToyPoint>& points) {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const auto& p = points[i];
            out << epoch << ',' << i << ',' << p.primary_class << ',' << p.secondary_class << ','
                << format_number(p.mu[0]) << ',' << format_number(p.mu[1]) << ','
                << format_number(std::exp(p.log_var[0])) << ',' << format_number(std::exp(p.log_var[1])) << '\n';
        }
    };
    for (const auto& f : report.frames) emit(f.epoch, f.points);
    const int last = report.history.empty() ? 0 : report.history.back().epoch;
    if (report.frames.empty() || report.frames.back().epoch != last) emit(last, report.points);
    return out.str();
}

std::string metrics_csv(const MetricReport& report) {
    std::ostringstream out;
    out << "metric,value\n";
    for (const auto& [k, v] : report.recall_at) out << "R@" << k << ',' << format_number(v) << '\n';
    out << "rsum," << format_number(report.rsum) << '\n';
    out << "map_at_r," << format_number(report.map_at_r) << '\n';
    out << "r_precision," << format_number(report.r_precision) << '\n';
    out << "num_queries," << report.num_queries << '\n';
    out << "skipped_queries," << report.skipped_queries << '\n';
    return out.str();
}

std::string uncertainty_csv(const UncertaintyProfile& profile) {
    std::ostringstream out;
    out << "bin,lower,upper,count,mean_mass,mean_recall_at_1\n";
    for (std::size_t b = 0; b < profile.bins.size(); ++b) {
        const auto& bin = profile.bins[b];
        out << b << ',' << format_number(bin.lower) << ',' << format_number(bin.upper) << ',' << bin.count << ','
            << format_number(bin.mean_mass) << ',' << optional_csv(bin.mean_recall_at_1) << '\n';
    }
    return out.str();
}

std::string prompt_filter_csv(const PromptFilterResult& result) {
    std::ostringstream out;
    out << "class,num_prompts,chosen_k,accuracy\n";
    for (std::size_t c = 0; c < result.classes.size(); ++c) {
        out << csv_field(result.classes[c]) << ',' << result.num_prompts[c] << ',' << result.chosen_k[c] << ','
            << format_number(result.per_class_accuracy[c]) << '\n';
    }
    return out.str();
}

std::string ranked_csv(const std::vector<RankedList>& ranked) {
    std::ostringstream out;
    out << "query,rank,gallery,score\n";
    for (const auto& list : ranked) {
        for (std::size_t r = 0; r < list.items.size(); ++r) {
            out << csv_field(list.query_id) << ',' << r + 1 << ',' << csv_field(list.items[r].id) << ',' << format_number(list.items[r].score)
                << '\n';
        }
    }
    return out.str();
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto out = open_text_out(path);
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed");
}

}  // namespace probemb
