#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "probemb/distances.hpp"
#include "probemb/json_io.hpp"
#include "probemb/metrics.hpp"
#include "probemb/pemb_io.hpp"
#include "probemb/retrieval.hpp"
#include "probemb/synth.hpp"
#include "probemb/toybench.hpp"

namespace fs = std::filesystem;
using namespace probemb;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Common {
    std::uint64_t seed = 0;
    std::string output = "json";
    unsigned threads = 1;
    std::string out;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "Seed for every random draw")->capture_default_str();
    app->add_option("--output", c.output, "Output format")
        ->check(CLI::IsMember({"json", "csv"}))
        ->capture_default_str();
    app->add_option("--threads", c.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--out", c.out, "Write to this file instead of stdout");
}

void emit(const Common& c, const std::string& text) {
    if (c.out.empty()) {
        std::cout << text;
        std::cout.flush();
    } else {
        write_text(c.out, text);
    }
}

void emit(const Common& c, const Json& j, const std::string& csv) { emit(c, c.output == "json" ? dump(j) : csv); }

EmbeddingSet read_embeddings(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    char magic[4] = {};
    probe.read(magic, 4);
    if (probe.gcount() == 4 && std::string(magic, 4) == "PEMB") return read_pemb(fs::path(path));
    return read_embeddings_jsonl(fs::path(path));
}

DistanceOptions distance_options(const Common& c, std::uint32_t mc_samples, double pcme_a, double pcme_b) {
    DistanceOptions opts;
    opts.mc = McConfig{mc_samples, c.seed};
    opts.pcme_a = pcme_a;
    opts.pcme_b = pcme_b;
    opts.threads = c.threads;
    return opts;
}

std::vector<RankedList> rank_all(const EmbeddingSet& queries, const EmbeddingSet& gallery, DistanceKind kind,
                                 const DistanceOptions& opts) {
    const Matrix scores = pairwise_distance_matrix(queries, gallery, kind, opts);
    return rank_from_matrix(scores, queries.ids(), gallery.ids(), higher_is_closer(kind));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

// ---- toy ----

struct ToyArgs {
    Common common;
    std::string objective = "csd";
    std::string label_mode = "stochastic";
    int epochs = 500;
    int batch_size = 128;
    double lr = 0.02;
    double margin = 0.2;
    bool mix = false;
    double mix_ratio = 0.25;
    double mix_beta = 2.0;
    int snapshot_every = 0;
    std::string snapshot_csv;
    bool include_points = false;
};

int run_toy_cmd(const ToyArgs& a) {
    ToyConfig cfg;
    cfg.seed = a.common.seed;
    cfg.objective = parse_toy_objective(a.objective);
    cfg.label_mode = parse_toy_label_mode(a.label_mode);
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch_size;
    cfg.lr = a.lr;
    cfg.triplet_margin = a.margin;
    if (a.mix) cfg.mix = MixConfig{a.mix_ratio, a.mix_beta};
    cfg.snapshot_every = a.snapshot_every;
    cfg.validate();
    const ToyReport report = run_toy(cfg);
    Json j = to_json(report, a.include_points);
    j["objective"] = std::string(to_string(cfg.objective));
    j["label_mode"] = std::string(to_string(cfg.label_mode));
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.epochs;
    if (!a.snapshot_csv.empty()) write_text(a.snapshot_csv, toy_snapshot_csv(report));
    emit(a.common, j, toy_history_csv(report));
    return 0;
}

// ---- distcmp ----

struct DistcmpArgs {
    Common common;
    std::string queries, gallery, ann;
    std::string kinds = "csd,wasserstein2,kl,bhattacharyya,elk,euclidean_mu_only";
    std::uint32_t mc_samples = 8;
    double pcme_a = 1.0;
    double pcme_b = 0.0;
};

int run_distcmp_cmd(const DistcmpArgs& a) {
    std::vector<DistanceKind> kinds;
    for (const auto& name : split_list(a.kinds)) kinds.push_back(parse_distance_kind(name));
    if (kinds.empty()) throw UsageError("--kinds is empty");

    EmbeddingSet queries, gallery;
    std::optional<MatchTable> truth;
    if (a.queries.empty() != a.gallery.empty()) throw UsageError("--queries and --gallery go together");
    if (a.queries.empty()) {
        SynthRetrievalConfig cfg;
        cfg.seed = a.common.seed;
        auto data = generate_retrieval(cfg);
        queries = std::move(data.queries);
        gallery = std::move(data.gallery);
        truth = std::move(data.truth);
    } else {
        queries = read_embeddings(a.queries);
        gallery = read_embeddings(a.gallery);
        if (!a.ann.empty()) truth = read_annotations(fs::path(a.ann), queries.ids(), gallery.ids());
    }
    const auto opts = distance_options(a.common, a.mc_samples, a.pcme_a, a.pcme_b);

    Json j = Json::object();
    std::ostringstream csv;
    csv << (truth ? "kind,metric,value\n" : "kind,query,gallery,value\n");
    for (DistanceKind kind : kinds) {
        const std::string name(to_string(kind));
        if (truth) {
            const auto report = evaluate(rank_all(queries, gallery, kind, opts), *truth);
            j[name] = to_json(report);
            std::istringstream rows(metrics_csv(report));
            std::string row;
            std::getline(rows, row);
            while (std::getline(rows, row)) csv << name << ',' << row << '\n';
        } else {
            const Matrix m = pairwise_distance_matrix(queries, gallery, kind, opts);
            Json rows = Json::array();
            for (std::size_t q = 0; q < m.rows(); ++q) {
                rows.push_back(std::vector<double>(m.row(q).begin(), m.row(q).end()));
                for (std::size_t g = 0; g < m.cols(); ++g) {
                    csv << name << ',' << queries.id(q) << ',' << gallery.id(g) << ',' << format_number(m(q, g)) << '\n';
                }
            }
            j[name] = std::move(rows);
        }
    }
    emit(a.common, Json{{"kinds", std::move(j)}}, csv.str());
    return 0;
}

// ---- retrieve ----

struct RetrieveArgs {
    Common common;
    std::string queries, gallery, load_index, save_index;
    std::string mode = "exact";
    std::size_t k = 10;
    std::size_t shortlist_k = 100;
    std::size_t nlist = 0;
    std::size_t nprobe = 0;
    int kmeans_iters = 25;
};

int run_retrieve_cmd(const RetrieveArgs& a) {
    if (a.gallery.empty() == a.load_index.empty()) throw UsageError("give exactly one of --gallery or --load-index");
    if (a.k == 0) throw UsageError("--k must be positive");
    const EmbeddingSet queries = read_embeddings(a.queries);
    std::optional<ProbIndex> index;
    if (!a.load_index.empty()) {
        index = load_index(a.load_index);
    } else {
        std::optional<CoarseConfig> coarse;
        if (a.nlist > 0) coarse = CoarseConfig{a.nlist, a.kmeans_iters, a.common.seed};
        index = build_index(read_embeddings(a.gallery), coarse);
    }
    if (!a.save_index.empty()) save_index(*index, a.save_index);

    SearchOptions opts;
    opts.mode = a.mode == "exact" ? SearchMode::exact : SearchMode::two_stage;
    opts.k = a.k;
    opts.shortlist_k = a.shortlist_k;
    opts.nprobe = a.nprobe;
    opts.threads = a.common.threads;
    const auto ranked = search_batch(*index, queries, opts);
    emit(a.common, Json{{"k", a.k}, {"num_queries", ranked.size()}, {"results", to_json(ranked)}},
         ranked_csv(ranked));
    return 0;
}

// ---- eval / uncertainty ----

struct EvalArgs {
    Common common;
    std::string queries, gallery, ann;
    std::string distance = "csd";
    std::uint32_t mc_samples = 8;
    double threshold = 0.5;
    bool both_directions = false;
    bool per_query = false;
    std::size_t bins = 10;
};

int run_eval_cmd(const EvalArgs& a) {
    const EmbeddingSet queries = read_embeddings(a.queries);
    const EmbeddingSet gallery = read_embeddings(a.gallery);
    const MatchTable truth = read_annotations(fs::path(a.ann), queries.ids(), gallery.ids());
    const DistanceKind kind = parse_distance_kind(a.distance);
    const auto opts = distance_options(a.common, a.mc_samples, 1.0, 0.0);
    const MetricOptions mopts{{1, 5, 10}, a.threshold};

    const auto forward = evaluate(rank_all(queries, gallery, kind, opts), truth, mopts);
    Json j = {{"distance", a.distance}, {"forward", to_json(forward, a.per_query)}};
    std::string csv = metrics_csv(forward);
    if (a.both_directions) {
        const auto backward = evaluate(rank_all(gallery, queries, kind, opts), truth.transposed(), mopts);
        j["backward"] = to_json(backward, a.per_query);
        j["rsum"] = rsum(forward, backward);
        csv = "direction,metric,value\n";
        for (const auto& [dir, rep] : {std::pair{"forward", &forward}, std::pair{"backward", &backward}}) {
            std::istringstream rows(metrics_csv(*rep));
            std::string row;
            std::getline(rows, row);
            while (std::getline(rows, row)) csv += std::string(dir) + "," + row + "\n";
        }
        csv += "total,rsum," + format_number(rsum(forward, backward)) + "\n";
    }
    emit(a.common, j, csv);
    return 0;
}

int run_uncertainty_cmd(const EvalArgs& a) {
    const EmbeddingSet queries = read_embeddings(a.queries);
    const EmbeddingSet gallery = read_embeddings(a.gallery);
    const MatchTable truth = read_annotations(fs::path(a.ann), queries.ids(), gallery.ids());
    const DistanceKind kind = parse_distance_kind(a.distance);
    const auto opts = distance_options(a.common, a.mc_samples, 1.0, 0.0);
    const auto profile =
        uncertainty_profile(queries, rank_all(queries, gallery, kind, opts), truth, a.bins, a.threshold);
    emit(a.common, to_json(profile), uncertainty_csv(profile));
    return 0;
}

// ---- prompt-filter ----

struct PromptArgs {
    Common common;
    std::string prompts, prompt_labels, images, image_labels;
    std::string strategy = "all";
    std::size_t top_k = 1;
    std::string uncertainty = "sigma_sq_l1";
    std::string classify_by = "mu_cosine";
};

std::map<std::string, EmbeddingSet> group_prompts(const EmbeddingSet& prompts, const LabelList& labels) {
    std::map<std::string, std::string> class_of;
    for (const auto& [id, cls] : labels) class_of[id] = cls;
    std::map<std::string, std::pair<std::vector<std::string>, std::vector<GaussianEmbedding>>> grouped;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        const auto it = class_of.find(prompts.id(i));
        if (it == class_of.end()) throw Error(ErrorCode::UnknownId, "prompt '" + prompts.id(i) + "' has no class");
        auto& [ids, embs] = grouped[it->second];
        ids.push_back(prompts.id(i));
        embs.push_back(prompts[i]);
    }
    std::map<std::string, EmbeddingSet> out;
    for (auto& [cls, group] : grouped) {
        out.emplace(cls, EmbeddingSet(std::move(group.first), std::move(group.second), prompts.modality(),
                                      prompts.has_log_var(), prompts.dim()));
    }
    return out;
}

int run_prompt_cmd(const PromptArgs& a) {
    const EmbeddingSet prompts = read_embeddings(a.prompts);
    const EmbeddingSet images = read_embeddings(a.images);
    const auto class_prompts = group_prompts(prompts, read_labels(a.prompt_labels));
    std::map<std::string, std::string> image_class;
    for (const auto& [id, cls] : read_labels(a.image_labels)) image_class[id] = cls;
    std::vector<std::string> labels;
    for (const auto& id : images.ids()) {
        const auto it = image_class.find(id);
        if (it == image_class.end()) throw Error(ErrorCode::UnknownId, "image '" + id + "' has no class");
        labels.push_back(it->second);
    }
    PromptFilterOptions opts;
    opts.strategy = parse_prompt_strategy(a.strategy);
    opts.top_k = a.top_k;
    opts.uncertainty = parse_uncertainty_scalar(a.uncertainty);
    opts.classify_by = parse_classify_by(a.classify_by);
    const auto result = prompt_filter_eval(class_prompts, images, labels, opts);
    Json j = to_json(result);
    j["strategy"] = a.strategy;
    emit(a.common, j, prompt_filter_csv(result));
    return 0;
}

// ---- gen-synth ----

struct SynthArgs {
    Common common;
    std::string kind = "retrieval";
    std::string out_dir = ".";
    std::string format = "pemb";
    std::size_t num_classes = 10;
    std::size_t num_queries = 100;
    std::size_t gallery_per_class = 5;
    std::size_t dim = 16;
    std::size_t prompts_per_class = 8;
    std::size_t corrupted_per_class = 4;
    std::size_t images_per_class = 20;
};

int run_synth_cmd(const SynthArgs& a) {
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);
    const std::string ext = a.format == "pemb" ? ".pemb" : ".jsonl";
    auto save = [&](const EmbeddingSet& set, const std::string& stem) {
        const fs::path p = dir / (stem + ext);
        if (a.format == "pemb") {
            write_pemb(set, p);
        } else {
            write_embeddings_jsonl(set, p);
        }
        return p.filename().string();
    };
    Json files = Json::array();
    if (a.kind == "retrieval") {
        SynthRetrievalConfig cfg;
        cfg.num_classes = a.num_classes;
        cfg.num_queries = a.num_queries;
        cfg.gallery_per_class = a.gallery_per_class;
        cfg.dim = a.dim;
        cfg.seed = a.common.seed;
        const auto data = generate_retrieval(cfg);
        files.push_back(save(data.queries, "queries"));
        files.push_back(save(data.gallery, "gallery"));
        write_annotations(data.truth, dir / "annotations.jsonl");
        files.push_back("annotations.jsonl");
    } else {
        SynthPromptConfig cfg;
        cfg.num_classes = a.num_classes;
        cfg.prompts_per_class = a.prompts_per_class;
        cfg.corrupted_per_class = a.corrupted_per_class;
        cfg.images_per_class = a.images_per_class;
        cfg.dim = a.dim;
        cfg.seed = a.common.seed;
        const auto data = generate_prompts(cfg);
        std::vector<std::string> ids;
        std::vector<GaussianEmbedding> embs;
        LabelList prompt_labels;
        for (const auto& [cls, set] : data.class_prompts) {
            for (std::size_t i = 0; i < set.size(); ++i) {
                ids.push_back(set.id(i));
                embs.push_back(set[i]);
                prompt_labels.emplace_back(set.id(i), cls);
            }
        }
        files.push_back(save(EmbeddingSet(ids, embs, Modality::textual), "prompts"));
        write_labels(prompt_labels, dir / "prompt_labels.jsonl");
        files.push_back("prompt_labels.jsonl");
        files.push_back(save(data.images, "images"));
        LabelList image_labels;
        for (std::size_t i = 0; i < data.images.size(); ++i) image_labels.emplace_back(data.images.id(i), data.image_labels[i]);
        write_labels(image_labels, dir / "image_labels.jsonl");
        files.push_back("image_labels.jsonl");
    }
    std::string csv = "file\n";
    for (const auto& f : files) csv += f.get<std::string>() + "\n";
    emit(a.common, Json{{"kind", a.kind}, {"files", files}}, csv);
    return 0;
}

// ---- convert ----

struct ConvertArgs {
    Common common;
    std::string input, to, dest;
};

int run_convert_cmd(const ConvertArgs& a) {
    const EmbeddingSet set = read_embeddings(a.input);
    if (a.to == "pemb") {
        write_pemb(set, fs::path(a.dest));
    } else {
        write_embeddings_jsonl(set, fs::path(a.dest));
    }
    const Json j = {{"items", set.size()}, {"dim", set.dim()}, {"format", a.to}, {"has_log_var", set.has_log_var()}};
    emit(a.common, j, "items,dim,format\n" + std::to_string(set.size()) + "," + std::to_string(set.dim()) + "," + a.to + "\n");
    return 0;
}

bool is_validation(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::OutOfRange:
        case ErrorCode::BadNlist:
        case ErrorCode::ShortlistTooSmall: return true;
        default: return false;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic embedding toolkit"};
    app.require_subcommand(1);

    ToyArgs toy;
    auto* toy_cmd = app.add_subcommand("toy", "Run the 2-D direct-optimization toy experiment");
    add_common(toy_cmd, toy.common);
    toy_cmd->add_option("--objective", toy.objective)
        ->check(CLI::IsMember({"csd", "wasserstein2", "triplet_hnm", "triplet_sum"}))
        ->capture_default_str();
    toy_cmd->add_option("--label-mode", toy.label_mode)
        ->check(CLI::IsMember({"stochastic", "multi_label"}))
        ->capture_default_str();
    toy_cmd->add_option("--epochs", toy.epochs)->capture_default_str();
    toy_cmd->add_option("--batch-size", toy.batch_size)->capture_default_str();
    toy_cmd->add_option("--lr", toy.lr)->capture_default_str();
    toy_cmd->add_option("--margin", toy.margin, "Triplet margin")->capture_default_str();
    toy_cmd->add_flag("--mix", toy.mix, "Mixup a fraction of each batch");
    toy_cmd->add_option("--mix-ratio", toy.mix_ratio)->capture_default_str();
    toy_cmd->add_option("--mix-beta", toy.mix_beta)->capture_default_str();
    toy_cmd->add_option("--snapshot-every", toy.snapshot_every, "Record points every N epochs")->capture_default_str();
    toy_cmd->add_option("--snapshot-csv", toy.snapshot_csv, "Write recorded points as CSV");
    toy_cmd->add_flag("--include-points", toy.include_points, "Add final points to the JSON report");

    DistcmpArgs dc;
    auto* dc_cmd = app.add_subcommand("distcmp", "Compare distance kinds on a query and gallery set");
    add_common(dc_cmd, dc.common);
    dc_cmd->add_option("--queries", dc.queries);
    dc_cmd->add_option("--gallery", dc.gallery);
    dc_cmd->add_option("--ann", dc.ann, "Annotations; scores each kind as a retrieval metric");
    dc_cmd->add_option("--kinds", dc.kinds, "Comma-separated distance kinds")->capture_default_str();
    dc_cmd->add_option("--mc-samples", dc.mc_samples)->check(CLI::PositiveNumber)->capture_default_str();
    dc_cmd->add_option("--pcme-a", dc.pcme_a)->capture_default_str();
    dc_cmd->add_option("--pcme-b", dc.pcme_b)->capture_default_str();

    RetrieveArgs rt;
    auto* rt_cmd = app.add_subcommand("retrieve", "Top-k csd retrieval");
    add_common(rt_cmd, rt.common);
    rt_cmd->add_option("--queries", rt.queries)->required();
    rt_cmd->add_option("--gallery", rt.gallery);
    rt_cmd->add_option("--load-index", rt.load_index);
    rt_cmd->add_option("--save-index", rt.save_index);
    rt_cmd->add_option("--index", rt.mode)->check(CLI::IsMember({"exact", "two-stage"}))->capture_default_str();
    rt_cmd->add_option("--k", rt.k)->capture_default_str();
    rt_cmd->add_option("--shortlist-k", rt.shortlist_k)->capture_default_str();
    rt_cmd->add_option("--nlist", rt.nlist, "IVF lists (0 = no coarse index)")->capture_default_str();
    rt_cmd->add_option("--nprobe", rt.nprobe, "IVF lists probed (0 = exhaustive)")->capture_default_str();
    rt_cmd->add_option("--kmeans-iters", rt.kmeans_iters)->capture_default_str();

    EvalArgs ev;
    auto* ev_cmd = app.add_subcommand("eval", "Recall@K, RSUM, mAP@R and R-Precision");
    add_common(ev_cmd, ev.common);
    EvalArgs un;
    auto* un_cmd = app.add_subcommand("uncertainty", "R@1 per uncertainty bin");
    add_common(un_cmd, un.common);
    for (auto [cmd, args] : {std::pair{ev_cmd, &ev}, std::pair{un_cmd, &un}}) {
        cmd->add_option("--queries", args->queries)->required();
        cmd->add_option("--gallery", args->gallery)->required();
        cmd->add_option("--ann", args->ann)->required();
        cmd->add_option("--distance", args->distance)->capture_default_str();
        cmd->add_option("--mc-samples", args->mc_samples)->check(CLI::PositiveNumber)->capture_default_str();
        cmd->add_option("--threshold", args->threshold, "Relevance counted as positive")->capture_default_str();
    }
    ev_cmd->add_flag("--both-directions", ev.both_directions, "Also rank queries for each gallery item");
    ev_cmd->add_flag("--per-query", ev.per_query);
    un_cmd->add_option("--bins", un.bins)->check(CLI::PositiveNumber)->capture_default_str();

    PromptArgs pf;
    auto* pf_cmd = app.add_subcommand("prompt-filter", "Uncertainty-based prompt filtering for zero-shot classification");
    add_common(pf_cmd, pf.common);
    pf_cmd->add_option("--prompts", pf.prompts)->required();
    pf_cmd->add_option("--prompt-labels", pf.prompt_labels)->required();
    pf_cmd->add_option("--images", pf.images)->required();
    pf_cmd->add_option("--image-labels", pf.image_labels)->required();
    pf_cmd->add_option("--strategy", pf.strategy)
        ->check(CLI::IsMember({"single", "all", "topk_uniform", "best_topk_per_class"}))
        ->capture_default_str();
    pf_cmd->add_option("--top-k", pf.top_k)->check(CLI::PositiveNumber)->capture_default_str();
    pf_cmd->add_option("--uncertainty", pf.uncertainty)
        ->check(CLI::IsMember({"sigma_l1", "sigma_sq_l1"}))
        ->capture_default_str();
    pf_cmd->add_option("--classify-by", pf.classify_by)
        ->check(CLI::IsMember({"mu_cosine", "csd"}))
        ->capture_default_str();

    SynthArgs sy;
    auto* sy_cmd = app.add_subcommand("gen-synth", "Write synthetic embeddings and annotations");
    add_common(sy_cmd, sy.common);
    sy_cmd->add_option("--kind", sy.kind)->check(CLI::IsMember({"retrieval", "prompts"}))->capture_default_str();
    sy_cmd->add_option("--out-dir", sy.out_dir)->capture_default_str();
    sy_cmd->add_option("--format", sy.format)->check(CLI::IsMember({"pemb", "jsonl"}))->capture_default_str();
    sy_cmd->add_option("--num-classes", sy.num_classes)->capture_default_str();
    sy_cmd->add_option("--num-queries", sy.num_queries)->capture_default_str();
    sy_cmd->add_option("--gallery-per-class", sy.gallery_per_class)->capture_default_str();
    sy_cmd->add_option("--dim", sy.dim)->capture_default_str();
    sy_cmd->add_option("--prompts-per-class", sy.prompts_per_class)->capture_default_str();
    sy_cmd->add_option("--corrupted-per-class", sy.corrupted_per_class)->capture_default_str();
    sy_cmd->add_option("--images-per-class", sy.images_per_class)->capture_default_str();

    ConvertArgs cv;
    auto* cv_cmd = app.add_subcommand("convert", "Convert between PEMB and JSONL");
    add_common(cv_cmd, cv.common);
    cv_cmd->add_option("--input", cv.input)->required();
    cv_cmd->add_option("--to", cv.to)->check(CLI::IsMember({"pemb", "jsonl"}))->required();
    cv_cmd->add_option("--dest", cv.dest, "Converted file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (toy_cmd->parsed()) return run_toy_cmd(toy);
        if (dc_cmd->parsed()) return run_distcmp_cmd(dc);
        if (rt_cmd->parsed()) return run_retrieve_cmd(rt);
        if (ev_cmd->parsed()) return run_eval_cmd(ev);
        if (un_cmd->parsed()) return run_uncertainty_cmd(un);
        if (pf_cmd->parsed()) return run_prompt_cmd(pf);
        if (sy_cmd->parsed()) return run_synth_cmd(sy);
        if (cv_cmd->parsed()) return run_convert_cmd(cv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return is_validation(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
