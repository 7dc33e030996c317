// tome: corpus clustering, memory construction, ANNS benchmarking, memory
// queries with provenance, entity prediction, and the toy training loop.
//
// Exit codes: 0 success, 2 input error, 3 empty result, 4 internal error.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tome/corpus.hpp"
#include "tome/encoder.hpp"
#include "tome/memtable.hpp"
#include "tome/objectives.hpp"
#include "tome/retrieval.hpp"
#include "tome/tome_model.hpp"
#include "tome/train.hpp"

namespace {

using namespace tome;

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::empty_result:
            return 3;
        case ErrorCode::internal:
            return 4;
        default:
            return 2;
    }
}

// Mirrors every report line to stdout and, when set, to a file. Timing lines
// start with "# " so tests can strip them.
class Report {
public:
    explicit Report(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::trunc);
            require(file_.good(), ErrorCode::io_error, "cannot open for writing: " + path);
        }
    }

    void line(const std::string& s) {
        std::cout << s << '\n';
        if (file_.is_open()) {
            file_ << s << '\n';
            require(file_.good(), ErrorCode::io_error, "report write failed");
        }
    }

private:
    std::ofstream file_;
};

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed << v;
    return os.str();
}

std::vector<int> parse_layer_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        require(!item.empty(), ErrorCode::invalid_input, "empty entry in layer list");
        out.push_back(std::stoi(item));
    }
    require(!out.empty(), ErrorCode::invalid_input, "empty layer list");
    return out;
}

struct ClusterArgs {
    std::string corpus, out;
    int cluster_size = 256;
};

int cmd_cluster(const ClusterArgs& a) {
    Timer timer;
    auto corpus = load_corpus(a.corpus);
    require(!corpus.empty(), ErrorCode::invalid_input, "empty corpus: " + a.corpus);
    auto articles = collect_articles(corpus);
    auto clusters = greedy_cluster(articles, a.cluster_size);
    Report report(a.out);
    report.line("tome-cluster v1");
    report.line("clusters " + std::to_string(clusters.size()) + " articles " +
                std::to_string(articles.size()) + " passages " + std::to_string(corpus.size()));
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        std::string ids;
        for (std::size_t j = 0; j < clusters[i].article_ids.size(); ++j) {
            if (j) ids += ',';
            ids += std::to_string(clusters[i].article_ids[j]);
        }
        report.line("cluster " + std::to_string(i) + " passages " +
                    std::to_string(clusters[i].passage_count) + " articles " + ids);
    }
    report.line("# elapsed_ms " + format_double(timer.elapsed_ms()));
    return 0;
}

struct BuildMemoryArgs {
    std::string corpus, params, out;
    bool include_unlinked = false;
    int threads = 1;
};

int cmd_build_memory(const BuildMemoryArgs& a) {
    Timer timer;
    auto [cfg, params] = load_params(a.params);
    auto corpus = load_corpus(a.corpus);
    MentionMemory memory = build_memory(corpus, params, cfg, a.include_unlinked, a.threads);
    save_memory(a.out, memory);
    std::cout << "tome-build-memory v1\n";
    std::cout << "rows " << memory.size() << " key_dim " << memory.keys.cols << " value_dim "
              << memory.values.cols << '\n';
    std::cout << "# elapsed_ms " << format_double(timer.elapsed_ms()) << '\n';
    return 0;
}

struct BenchArgs {
    std::string memory, queries, mode = "exact", report;
    int shards = 1;
    int local_k = 2;
    int global_k = 128;
    int n_probe = 16;
    int clusters = 256;
    int iters = 10;
    std::uint64_t seed = 0;
    int threads = 1;
};

int cmd_bench_ann(const BenchArgs& a) {
    require(a.mode == "exact" || a.mode == "ivf", ErrorCode::invalid_input,
            "mode must be exact or ivf, got " + a.mode);
    Timer total;
    MentionMemory memory = load_memory(a.memory);
    require(memory.size() > 0, ErrorCode::empty_result, "memory is empty");
    Mat<float> queries = load_queries(a.queries);
    require(queries.cols == memory.keys.cols, ErrorCode::dimension_mismatch,
            "query dimension does not match memory keys");
    auto shards = shard(memory, a.shards);

    SearchParams params;
    params.local_k = a.local_k;
    params.global_k = std::max(a.global_k, a.local_k);
    params.n_probe = a.n_probe;
    SearchMode mode = a.mode == "exact" ? SearchMode::exact : SearchMode::ivf;

    std::vector<IvfIndex> indices;
    double build_ms = 0.0;
    if (mode == SearchMode::ivf) {
        Timer build;
        for (std::size_t s = 0; s < shards.size(); ++s) {
            int clusters = std::min<int>(a.clusters, static_cast<int>(shards[s].size()));
            indices.push_back(build_ivf(memory, shards[s], clusters, a.iters, a.seed + s));
        }
        build_ms = build.elapsed_ms();
    }

    Timer search;
    auto approx = batched_search(queries, memory, shards, mode, params,
                                 mode == SearchMode::ivf ? &indices : nullptr, a.threads);
    const double search_ms = search.elapsed_ms();

    // Exact oracle over the whole memory, one shard.
    const std::vector<int> ks = {1, 10, 128};
    int max_k = params.global_k;
    for (int k : ks) max_k = std::max(max_k, k);
    max_k = std::min<int>(max_k, static_cast<int>(memory.size()));
    std::vector<MemoryShard> whole = {MemoryShard{0, memory.size(), 0}};
    SearchParams oracle_params;
    oracle_params.local_k = max_k;
    oracle_params.global_k = max_k;
    auto exact = batched_search(queries, memory, whole, SearchMode::exact, oracle_params, nullptr,
                                a.threads);

    Report report(a.report);
    report.line("tome-bench-ann v1");
    report.line("mode " + a.mode);
    report.line("rows " + std::to_string(memory.size()));
    report.line("queries " + std::to_string(queries.rows));
    report.line("shards " + std::to_string(a.shards));
    report.line("local_k " + std::to_string(params.local_k));
    report.line("global_k " + std::to_string(params.global_k));
    if (mode == SearchMode::ivf) {
        report.line("n_probe " + std::to_string(params.n_probe));
        report.line("clusters " + std::to_string(a.clusters));
    }
    for (int k : ks) {
        if (k > max_k) continue;
        double acc = 0.0;
        for (int q = 0; q < queries.rows; ++q) acc += recall_at_k(approx[q], exact[q], k);
        report.line("recall@" + std::to_string(k) + " " + format_double(acc / queries.rows));
    }
    if (mode == SearchMode::ivf) report.line("# build_ms " + format_double(build_ms));
    report.line("# mean_query_us " + format_double(search_ms * 1000.0 / queries.rows));
    report.line("# elapsed_ms " + format_double(total.elapsed_ms()));
    return 0;
}

struct QueryArgs {
    std::string memory, params, passage, trace;
    int shards = 1;
    int local_k = 128;
    int global_k = 128;
};

int cmd_query(const QueryArgs& a) {
    Timer timer;
    auto [cfg, params] = load_params(a.params);
    MentionMemory memory = load_memory(a.memory);
    require(memory.size() > 0, ErrorCode::empty_result, "memory is empty");
    require(memory.keys.cols == cfg.key_dim && memory.values.cols == cfg.value_dim,
            ErrorCode::dimension_mismatch, "memory dimensions do not match checkpoint config");
    auto passages = load_corpus(a.passage);
    require(passages.size() == 1, ErrorCode::invalid_input,
            "passage file must hold exactly one passage, got " + std::to_string(passages.size()));
    const AnnotatedPassage& passage = passages[0];
    require(!passage.mentions.empty(), ErrorCode::empty_result, "passage has no mentions to query with");

    auto shards = shard(memory, a.shards);
    MemorySource src;
    src.snapshot = &memory;
    src.shards = &shards;
    src.search.local_k = a.local_k;
    src.search.global_k = std::max(a.global_k, a.local_k);

    Tape<float> tape;
    ParamIds ids = register_params(tape, params, false);
    AttentionTrace trace;
    tome_forward(tape, ids, passage, cfg, src, &trace);

    std::cout << "tome-query v1\n";
    std::cout << "passage " << passage.passage_id << " mentions " << passage.mentions.size() << " blocks "
              << trace.blocks.size() << '\n';
    for (std::size_t b = 0; b < trace.blocks.size(); ++b) {
        for (std::size_t m = 0; m < trace.blocks[b].size(); ++m) {
            const MentionTraceEntry& e = trace.blocks[b][m];
            std::cout << "block " << b << " mention " << m << " retrieved " << e.rows.size() << " skipped "
                      << (e.skipped ? 1 : 0) << '\n';
            for (std::size_t r = 0; r < e.rows.size(); ++r) {
                std::cout << "  row " << e.rows[r] << " passage " << e.passages[r] << " entity "
                          << e.entities[r] << " weight " << format_double(e.weights[r]) << '\n';
            }
        }
    }
    if (!a.trace.empty()) {
        nlohmann::json j;
        j["passage_id"] = passage.passage_id;
        j["blocks"] = nlohmann::json::array();
        for (const auto& block : trace.blocks) {
            nlohmann::json jb = nlohmann::json::array();
            for (const auto& e : block) {
                nlohmann::json je;
                je["rows"] = e.rows;
                je["weights"] = e.weights;
                je["entities"] = e.entities;
                je["passages"] = e.passages;
                je["query"] = e.query;
                je["skipped"] = e.skipped;
                jb.push_back(std::move(je));
            }
            j["blocks"].push_back(std::move(jb));
        }
        std::ofstream out(a.trace, std::ios::trunc);
        require(out.good(), ErrorCode::io_error, "cannot open for writing: " + a.trace);
        out << j.dump(2) << '\n';
        require(out.good(), ErrorCode::io_error, "trace write failed");
    }
    std::cout << "# elapsed_ms " << format_double(timer.elapsed_ms()) << '\n';
    return 0;
}

struct PredictArgs {
    std::string memory, params, questions, report;
    int top = 5;
    int shards = 1;
    int local_k = 128;
    int global_k = 128;
    int entity_local_k = 32;
};

int cmd_predict(const PredictArgs& a) {
    Timer timer;
    auto [cfg, params] = load_params(a.params);
    MentionMemory memory = load_memory(a.memory);
    require(memory.size() > 0, ErrorCode::empty_result, "memory is empty");
    require(memory.keys.cols == cfg.key_dim && memory.values.cols == cfg.value_dim,
            ErrorCode::dimension_mismatch, "memory dimensions do not match checkpoint config");
    auto questions = load_corpus(a.questions);
    require(!questions.empty(), ErrorCode::invalid_input, "no questions in " + a.questions);

    auto shards = shard(memory, a.shards);
    MemorySource src;
    src.snapshot = &memory;
    src.shards = &shards;
    src.search.local_k = a.local_k;
    src.search.global_k = std::max(a.global_k, a.local_k);
    SearchParams entity_params;
    entity_params.entity_local_k = a.entity_local_k;

    Report report(a.report);
    report.line("tome-predict v1");
    bool any_empty = false;
    Tape<float> tape;
    ParamIds ids = register_params(tape, params, false);
    const std::size_t base = tape.size();
    for (const AnnotatedPassage& q : questions) {
        require(!q.mentions.empty(), ErrorCode::invalid_input,
                "question passage " + std::to_string(q.passage_id) + " has no mention");
        tape.truncate(base);
        int h = tome_forward(tape, ids, q, cfg, src, nullptr);
        // The question mention is the final one (the appended masked mention).
        const Mention& qm = q.mentions.back();
        int z = span_encoding_rows(tape, h, {{qm.start, qm.end}}, ids.entity_head);
        Mat<float> zf = tape.value(z);
        EntityDistribution dist = entity_prob(zf.row(0), zf.cols, memory, shards, entity_params);
        if (dist.empty()) {
            report.line("question " + std::to_string(q.passage_id) + " empty");
            any_empty = true;
            continue;
        }
        // Rank entities by probability, ties toward the lower id.
        std::vector<std::size_t> order(dist.entities.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&dist](std::size_t x, std::size_t y) {
            if (dist.probs[x] != dist.probs[y]) return dist.probs[x] > dist.probs[y];
            return dist.entities[x] < dist.entities[y];
        });
        report.line("question " + std::to_string(q.passage_id) + " entities " +
                    std::to_string(dist.entities.size()));
        const std::size_t top = std::min<std::size_t>(a.top, order.size());
        for (std::size_t r = 0; r < top; ++r) {
            const std::uint32_t entity = dist.entities[order[r]];
            // Supporting provenance: strongest memory rows for this entity.
            std::vector<std::size_t> support;
            for (std::size_t i = 0; i < dist.rows.size(); ++i)
                if (memory.entities[dist.rows[i]] == entity) support.push_back(i);
            std::sort(support.begin(), support.end(), [&dist](std::size_t x, std::size_t y) {
                if (dist.weights[x] != dist.weights[y]) return dist.weights[x] > dist.weights[y];
                return dist.rows[x] < dist.rows[y];
            });
            std::string prov;
            for (std::size_t i = 0; i < std::min<std::size_t>(3, support.size()); ++i) {
                if (i) prov += ',';
                prov += std::to_string(memory.passages[dist.rows[support[i]]]);
            }
            report.line("rank " + std::to_string(r + 1) + " entity " + std::to_string(entity) + " prob " +
                        format_double(dist.probs[order[r]]) + " support " + prov);
        }
    }
    report.line("# elapsed_ms " + format_double(timer.elapsed_ms()));
    if (any_empty) fail(ErrorCode::empty_result, "at least one question retrieved nothing");
    return 0;
}

struct TrainArgs {
    std::string corpus, report, out, params, memory;
    int stage = 1;
    int steps = 50;
    std::uint64_t seed = 0;
    double lr = 1e-3;
    int warmup = 0;
    int batch_passages = 32;
    int max_mentions = 24;
    int coref_min_freq = 0;
    std::string coref_variant = "prose";
    int hidden_dim = 64;
    int num_heads = 4;
    int ff_dim = 256;
    int initial_layers = 4;
    std::string block_layers = "4";
    int key_dim = 64;
    int value_dim = 64;
    int coref_dim = 64;
    int max_length = 128;
    int local_k = 128;
    int global_k = 128;
    int entity_local_k = 32;
    int shards = 1;
};

int cmd_train_toy(const TrainArgs& a) {
    require(a.stage == 1 || a.stage == 2, ErrorCode::invalid_input, "stage must be 1 or 2");
    require(a.coref_variant == "prose" || a.coref_variant == "formula", ErrorCode::invalid_input,
            "coref variant must be prose or formula");
    Timer timer;
    auto corpus = load_corpus(a.corpus);
    require(!corpus.empty(), ErrorCode::invalid_input, "empty corpus: " + a.corpus);

    TrainOptions opt;
    opt.steps = a.steps;
    opt.batch_passages = a.batch_passages;
    opt.max_mentions = a.max_mentions;
    opt.seed = a.seed;
    opt.optimizer.lr = a.lr;
    opt.optimizer.warmup_steps = a.warmup;
    opt.coref_min_entity_freq = a.coref_min_freq;
    opt.memory_shards = a.shards;
    opt.pretrain.search.local_k = a.local_k;
    opt.pretrain.search.global_k = std::max(a.global_k, a.local_k);
    opt.pretrain.search.entity_local_k = a.entity_local_k;
    opt.pretrain.coref_variant =
        a.coref_variant == "prose" ? CorefVariant::prose_mean : CorefVariant::formula_log_sum;

    std::vector<StepLog> logs;
    if (a.stage == 1) {
        std::int32_t max_token = 0;
        for (const auto& p : corpus)
            for (std::int32_t t : p.tokens) max_token = std::max(max_token, t);
        EncoderConfig cfg = EncoderConfig::toy(max_token + 1);
        cfg.hidden_dim = a.hidden_dim;
        cfg.num_heads = a.num_heads;
        cfg.ff_dim = a.ff_dim;
        cfg.initial_layers = a.initial_layers;
        cfg.block_layers = parse_layer_list(a.block_layers);
        cfg.key_dim = a.key_dim;
        cfg.value_dim = a.value_dim;
        cfg.coref_dim = a.coref_dim;
        cfg.max_length = a.max_length;
        cfg.seed = a.seed;
        cfg.validate();
        EncoderParams<float> params = init_params<float>(cfg);
        logs = train_stage1(params, cfg, corpus, opt);
        if (!a.out.empty()) save_params(a.out, cfg, params);
        if (!a.report.empty()) write_step_log(a.report, logs, false);
    } else {
        require(!a.params.empty(), ErrorCode::invalid_input, "--params is required for stage 2");
        require(!a.memory.empty(), ErrorCode::invalid_input, "--memory is required for stage 2");
        auto [cfg, params] = load_params(a.params);
        MentionMemory memory = load_memory(a.memory);
        logs = train_stage2(params, cfg, corpus, memory, opt);
        if (!a.out.empty()) save_params(a.out, cfg, params);
        if (!a.report.empty()) write_step_log(a.report, logs, true);
    }
    std::cout << "tome-train-toy v1\n";
    std::cout << "stage " << a.stage << " steps " << logs.size() << '\n';
    if (!logs.empty()) {
        std::cout << "first_combined " << format_double(logs.front().report.combined) << '\n';
        std::cout << "last_combined " << format_double(logs.back().report.combined) << '\n';
    }
    std::cout << "# elapsed_ms " << format_double(timer.elapsed_ms()) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tome: mention-memory toolbox"};
    app.require_subcommand(1);

    ClusterArgs cluster_args;
    auto* cluster = app.add_subcommand("cluster", "greedy entity-overlap clustering of corpus articles");
    cluster->add_option("--corpus", cluster_args.corpus, "corpus JSONL")->required();
    cluster->add_option("--out", cluster_args.out, "manifest output path");
    cluster->add_option("--cluster-size", cluster_args.cluster_size, "target passages per cluster");

    BuildMemoryArgs build_args;
    auto* build = app.add_subcommand("build-memory", "encode every linked mention into a memory table");
    build->add_option("--corpus", build_args.corpus, "corpus JSONL")->required();
    build->add_option("--params", build_args.params, "parameter checkpoint")->required();
    build->add_option("--out", build_args.out, "memory output path")->required();
    build->add_flag("--include-unlinked", build_args.include_unlinked, "also store unlinked mentions");
    build->add_option("--threads", build_args.threads, "worker threads");

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench-ann", "recall/latency benchmark of memory search");
    bench->add_option("--memory", bench_args.memory, "memory file")->required();
    bench->add_option("--queries", bench_args.queries, "query file")->required();
    bench->add_option("--mode", bench_args.mode, "exact or ivf");
    bench->add_option("--shards", bench_args.shards, "number of memory shards");
    bench->add_option("--local-k", bench_args.local_k, "per-shard top-k");
    bench->add_option("--global-k", bench_args.global_k, "global top-k after merge");
    bench->add_option("--n-probe", bench_args.n_probe, "ivf clusters probed");
    bench->add_option("--clusters", bench_args.clusters, "ivf clusters per shard");
    bench->add_option("--iters", bench_args.iters, "k-means iterations");
    bench->add_option("--seed", bench_args.seed, "k-means seed");
    bench->add_option("--report", bench_args.report, "report output path");
    bench->add_option("--threads", bench_args.threads, "worker threads");

    QueryArgs query_args;
    auto* query = app.add_subcommand("query", "run one passage against the memory and show provenance");
    query->add_option("--memory", query_args.memory, "memory file")->required();
    query->add_option("--params", query_args.params, "parameter checkpoint")->required();
    query->add_option("--passage", query_args.passage, "single-passage JSONL file")->required();
    query->add_option("--trace", query_args.trace, "attention trace JSON output");
    query->add_option("--shards", query_args.shards, "number of memory shards");
    query->add_option("--local-k", query_args.local_k, "per-shard top-k");
    query->add_option("--global-k", query_args.global_k, "global top-k after merge");

    PredictArgs predict_args;
    auto* predict = app.add_subcommand("predict", "entity prediction for masked question mentions");
    predict->add_option("--memory", predict_args.memory, "memory file")->required();
    predict->add_option("--params", predict_args.params, "parameter checkpoint")->required();
    predict->add_option("--questions", predict_args.questions, "question passages JSONL")->required();
    predict->add_option("--top", predict_args.top, "entities printed per question");
    predict->add_option("--report", predict_args.report, "report output path");
    predict->add_option("--shards", predict_args.shards, "number of memory shards");
    predict->add_option("--local-k", predict_args.local_k, "memory attention per-shard top-k");
    predict->add_option("--global-k", predict_args.global_k, "memory attention global top-k");
    predict->add_option("--entity-local-k", predict_args.entity_local_k, "entity head per-shard top-k");

    TrainArgs train_args;
    auto* train = app.add_subcommand("train-toy", "two-stage pre-training smoke loop");
    train->add_option("--corpus", train_args.corpus, "corpus JSONL")->required();
    train->add_option("--stage", train_args.stage, "1 (batch memory) or 2 (external memory)")->required();
    train->add_option("--steps", train_args.steps, "training steps");
    train->add_option("--report", train_args.report, "per-step loss TSV");
    train->add_option("--out", train_args.out, "checkpoint output path");
    train->add_option("--params", train_args.params, "input checkpoint (stage 2)");
    train->add_option("--memory", train_args.memory, "external memory (stage 2)");
    train->add_option("--seed", train_args.seed, "run seed");
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--warmup", train_args.warmup, "linear warmup steps");
    train->add_option("--batch-passages", train_args.batch_passages, "passages per batch");
    train->add_option("--max-mentions", train_args.max_mentions, "mention subsampling threshold");
    train->add_option("--coref-min-freq", train_args.coref_min_freq,
                      "minimum corpus frequency for coref entities");
    train->add_option("--coref-variant", train_args.coref_variant, "prose or formula");
    train->add_option("--hidden-dim", train_args.hidden_dim, "model width (stage 1)");
    train->add_option("--num-heads", train_args.num_heads, "attention heads (stage 1)");
    train->add_option("--ff-dim", train_args.ff_dim, "feed-forward width (stage 1)");
    train->add_option("--initial-layers", train_args.initial_layers, "layers before the first block");
    train->add_option("--block-layers", train_args.block_layers, "comma list of per-block layer counts");
    train->add_option("--key-dim", train_args.key_dim, "key encoding dimension (stage 1)");
    train->add_option("--value-dim", train_args.value_dim, "value encoding dimension (stage 1)");
    train->add_option("--coref-dim", train_args.coref_dim, "coref encoding dimension (stage 1)");
    train->add_option("--max-length", train_args.max_length, "maximum passage length (stage 1)");
    train->add_option("--local-k", train_args.local_k, "memory attention per-shard top-k");
    train->add_option("--global-k", train_args.global_k, "memory attention global top-k");
    train->add_option("--entity-local-k", train_args.entity_local_k, "entity head per-shard top-k");
    train->add_option("--shards", train_args.shards, "memory shards (stage 2)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (cluster->parsed()) return cmd_cluster(cluster_args);
        if (build->parsed()) return cmd_build_memory(build_args);
        if (bench->parsed()) return cmd_bench_ann(bench_args);
        if (query->parsed()) return cmd_query(query_args);
        if (predict->parsed()) return cmd_predict(predict_args);
        if (train->parsed()) return cmd_train_toy(train_args);
    } catch (const TomeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 4;
    }
    return 4;  // unreachable: a subcommand is required
}
