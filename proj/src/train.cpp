#include "tome/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace tome {

AdamW::AdamW(const EncoderConfig& cfg, OptimizerConfig opt) : opt_(std::move(opt)) {
    m_ = init_params<float>(cfg);
    v_ = init_params<float>(cfg);
    visit_params(m_, [](const std::string&, Mat<float>& t, bool) { t.fill(0.0f); });
    visit_params(v_, [](const std::string&, Mat<float>& t, bool) { t.fill(0.0f); });
}

void AdamW::step(EncoderParams<float>& params, const EncoderParams<float>& grads) {
    ++t_;
    double lr = opt_.lr;
    if (opt_.warmup_steps > 0 && t_ <= opt_.warmup_steps) {
        lr *= static_cast<double>(t_) / opt_.warmup_steps;
    } else if (opt_.total_steps > opt_.warmup_steps) {
        const double progress = static_cast<double>(t_ - opt_.warmup_steps) /
                                (opt_.total_steps - opt_.warmup_steps);
        lr *= std::max(0.0, 1.0 - progress);
    }
    last_lr_ = lr;

    std::vector<const Mat<float>*> g_flat;
    visit_params(grads, [&g_flat](const std::string&, const Mat<float>& g, bool) { g_flat.push_back(&g); });
    double norm_sq = 0.0;
    for (const auto* g : g_flat)
        for (float v : g->a) norm_sq += static_cast<double>(v) * v;
    last_grad_norm_ = std::sqrt(norm_sq);
    require(std::isfinite(last_grad_norm_), ErrorCode::non_finite, "gradient norm is not finite");
    const double clip = last_grad_norm_ > opt_.clip_norm && last_grad_norm_ > 0.0
                            ? opt_.clip_norm / last_grad_norm_
                            : 1.0;

    const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
    const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
    std::size_t slot = 0;
    std::vector<Mat<float>*> m_flat, v_flat;
    visit_params(m_, [&m_flat](const std::string&, Mat<float>& t, bool) { m_flat.push_back(&t); });
    visit_params(v_, [&v_flat](const std::string&, Mat<float>& t, bool) { v_flat.push_back(&t); });
    visit_params(params, [&](const std::string&, Mat<float>& p, bool decay) {
        const Mat<float>& g = *g_flat[slot];
        Mat<float>& m = *m_flat[slot];
        Mat<float>& v = *v_flat[slot];
        ++slot;
        for (std::size_t i = 0; i < p.a.size(); ++i) {
            const double gi = static_cast<double>(g.a[i]) * clip;
            const double mi = opt_.beta1 * m.a[i] + (1.0 - opt_.beta1) * gi;
            const double vi = opt_.beta2 * v.a[i] + (1.0 - opt_.beta2) * gi * gi;
            m.a[i] = static_cast<float>(mi);
            v.a[i] = static_cast<float>(vi);
            double update = (mi / bc1) / (std::sqrt(vi / bc2) + opt_.eps);
            if (decay) update += opt_.weight_decay * p.a[i];
            p.a[i] = static_cast<float>(p.a[i] - lr * update);
        }
    });
}

namespace {

// Batches for stage 1: greedy clusters of entity-overlapping articles,
// trimmed to the batch size, sorted by passage_id so batch memory rows align
// with build_memory order.
std::vector<std::vector<AnnotatedPassage>> cluster_batches(const std::vector<AnnotatedPassage>& corpus,
                                                           int batch_passages) {
    std::map<std::uint32_t, std::vector<const AnnotatedPassage*>> by_article;
    std::map<std::uint32_t, const AnnotatedPassage*> by_id;
    for (const auto& p : corpus) {
        by_article[p.article_id].push_back(&p);
        by_id[p.passage_id] = &p;
    }
    auto articles = collect_articles(corpus);
    auto clusters = greedy_cluster(articles, batch_passages);
    std::vector<std::vector<AnnotatedPassage>> batches;
    for (const auto& c : clusters) {
        std::vector<AnnotatedPassage> batch;
        for (std::uint32_t article : c.article_ids)
            for (const AnnotatedPassage* p : by_article[article]) batch.push_back(*p);
        std::sort(batch.begin(), batch.end(),
                  [](const AnnotatedPassage& a, const AnnotatedPassage& b) {
                      return a.passage_id < b.passage_id;
                  });
        if (static_cast<int>(batch.size()) > batch_passages) batch.resize(batch_passages);
        if (!batch.empty()) batches.push_back(std::move(batch));
    }
    require(!batches.empty(), ErrorCode::invalid_input, "corpus produced no batches");
    return batches;
}

std::set<std::uint32_t> frequent_entities(const std::vector<AnnotatedPassage>& corpus, int min_freq) {
    std::map<std::uint32_t, int> counts;
    for (const auto& p : corpus)
        for (const auto& m : p.mentions)
            if (m.linked()) ++counts[*m.entity];
    std::set<std::uint32_t> keep;
    for (const auto& [entity, count] : counts)
        if (count >= min_freq) keep.insert(entity);
    return keep;
}

}  // namespace

std::vector<StepLog> train_stage1(EncoderParams<float>& params, const EncoderConfig& cfg,
                                  const std::vector<AnnotatedPassage>& corpus, const TrainOptions& opt) {
    require(opt.steps >= 1, ErrorCode::invalid_input, "steps must be at least 1");
    auto batches = cluster_batches(corpus, opt.batch_passages);

    PretrainOptions pretrain = opt.pretrain;
    std::set<std::uint32_t> allowed;
    if (opt.coref_min_entity_freq > 0) {
        allowed = frequent_entities(corpus, opt.coref_min_entity_freq);
        pretrain.coref_entities = &allowed;
    }

    OptimizerConfig optcfg = opt.optimizer;
    if (optcfg.total_steps == 0) optcfg.total_steps = opt.steps;
    AdamW optimizer(cfg, optcfg);
    std::vector<StepLog> logs;
    for (int step = 0; step < opt.steps; ++step) {
        auto batch = batches[step % batches.size()];
        batch = subsample_mentions(std::move(batch), opt.max_mentions,
                                   opt.seed ^ (0x9e3779b97f4a7c15ull * (step + 1)));
        Tape<float> tape;
        ParamIds ids = register_params(tape, params, true);
        auto [loss, report] = combined_pretrain_loss(tape, ids, cfg, batch,
                                                     opt.seed + 0x51ed2701u + step, MemoryMode::batch,
                                                     nullptr, nullptr, pretrain);
        tape.backward(loss);
        EncoderParams<float> grads = collect_gradients(tape, ids, cfg);
        optimizer.step(params, grads);
        logs.push_back({step, report});
    }
    return logs;
}

std::vector<StepLog> train_stage2(EncoderParams<float>& params, const EncoderConfig& cfg,
                                  const std::vector<AnnotatedPassage>& corpus, const MentionMemory& memory,
                                  const TrainOptions& opt) {
    require(opt.steps >= 1, ErrorCode::invalid_input, "steps must be at least 1");
    require(!corpus.empty(), ErrorCode::invalid_input, "empty corpus");

    if (opt.init_entity_head_from_key) {
        params.entity_head.w = params.key_head.w;
        params.entity_head.b = params.key_head.b;
    }

    const int n_shards = std::min<std::size_t>(opt.memory_shards, memory.size());
    auto shards = shard(memory, std::max(1, n_shards));

    OptimizerConfig optcfg = opt.optimizer;
    if (optcfg.total_steps == 0) optcfg.total_steps = opt.steps;
    AdamW optimizer(cfg, optcfg);
    Rng rng(opt.seed ^ 0xa02bdbf7bb3c0a7ull);
    std::vector<std::size_t> pool(corpus.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;

    std::vector<StepLog> logs;
    for (int step = 0; step < opt.steps; ++step) {
        // Random batch without replacement within a step.
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t take = std::min<std::size_t>(opt.batch_passages, pool.size());
        std::vector<AnnotatedPassage> batch;
        batch.reserve(take);
        for (std::size_t i = 0; i < take; ++i) batch.push_back(corpus[pool[i]]);
        std::sort(batch.begin(), batch.end(),
                  [](const AnnotatedPassage& a, const AnnotatedPassage& b) {
                      return a.passage_id < b.passage_id;
                  });
        batch = subsample_mentions(std::move(batch), opt.max_mentions,
                                   opt.seed ^ (0x9e3779b97f4a7c15ull * (step + 1)));
        Tape<float> tape;
        ParamIds ids = register_params(tape, params, true);
        auto [loss, report] = combined_pretrain_loss(tape, ids, cfg, batch,
                                                     opt.seed + 0x51ed2701u + step, MemoryMode::external,
                                                     &memory, &shards, opt.pretrain);
        tape.backward(loss);
        EncoderParams<float> grads = collect_gradients(tape, ids, cfg);
        optimizer.step(params, grads);
        logs.push_back({step, report});
    }
    return logs;
}

void write_step_log(const std::string& path, const std::vector<StepLog>& logs, bool entity_term) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorCode::io_error, "cannot open for writing: " + path);
    out << "step\tmlm\t" << (entity_term ? "ep" : "coref") << "\tcombined\n";
    for (const auto& l : logs)
        out << l.step << '\t' << l.report.mlm << '\t' << l.report.coref << '\t' << l.report.combined
            << '\n';
    require(out.good(), ErrorCode::io_error, "write failed: " + path);
}

}  // namespace tome
