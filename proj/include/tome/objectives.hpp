#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "tome/corpus.hpp"
#include "tome/encoder.hpp"
#include "tome/tome_model.hpp"

namespace tome {

// Appendix B.1 shows a displayed formula with the log outside the sum over
// positives while the prose says "average of cross-entropy losses"; the prose
// reading is the default, the formula reading stays available.
enum class CorefVariant { prose_mean, formula_log_sum };

enum class MemoryMode { batch, external };

struct LossWeights {
    double mlm = 0.85;
    double coref = 0.15;
};

struct LossReport {
    double mlm = 0.0;
    double coref = 0.0;  // stage 1: in-batch coreference; stage 2: entity prediction
    double combined = 0.0;
    std::size_t mlm_labels = 0;
    std::size_t coref_mentions = 0;     // mentions with at least one positive
    std::size_t eligible_mentions = 0;  // stage 2: mentions with gold retrieved
};

// Batch-wide memory: rows on tape (differentiable) plus a float snapshot for
// retrieval and provenance. source[i] = (batch index, mention index) of row i.
template <typename T>
struct BatchMemory {
    MentionMemory snapshot;
    std::vector<MemoryShard> shards;
    int keys_node = -1;
    int values_node = -1;
    std::vector<std::pair<std::size_t, std::size_t>> source;

    MemorySource as_source(const SearchParams& search) const {
        MemorySource src;
        src.snapshot = &snapshot;
        src.shards = &shards;
        src.search = search;
        src.keys_node = keys_node;
        src.values_node = values_node;
        return src;
    }
};

// First read: every batch passage goes through the plain encoder (unmasked)
// and the key/value heads encode its linked mentions. Row order matches
// build_memory on the same passages: ascending passage_id, then span start.
template <typename T>
BatchMemory<T> build_batch_memory(Tape<T>& tape, const ParamIds& ids, const EncoderConfig& cfg,
                                  const std::vector<AnnotatedPassage>& batch) {
    require(!batch.empty(), ErrorCode::invalid_input, "empty batch");
    std::vector<std::size_t> order(batch.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&batch](std::size_t a, std::size_t b) {
        return batch[a].passage_id < batch[b].passage_id;
    });

    BatchMemory<T> mem;
    std::vector<int> key_parts, value_parts;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
        const auto& p = batch[order[oi]];
        std::vector<std::pair<int, int>> spans;
        for (std::size_t mi = 0; mi < p.mentions.size(); ++mi) {
            const Mention& m = p.mentions[mi];
            if (!m.linked()) continue;
            spans.emplace_back(m.start, m.end);
            mem.snapshot.entities.push_back(*m.entity);
            mem.snapshot.passages.push_back(p.passage_id);
            mem.source.emplace_back(order[oi], mi);
        }
        if (spans.empty()) continue;
        int h = encode(tape, ids, p.tokens, cfg);
        key_parts.push_back(span_encoding_rows(tape, h, spans, ids.key_head));
        value_parts.push_back(span_encoding_rows(tape, h, spans, ids.value_head));
    }
    require(!mem.source.empty(), ErrorCode::invalid_input, "batch has zero linked mentions");
    mem.keys_node = key_parts.size() == 1 ? key_parts[0] : tape.concat_rows(key_parts);
    mem.values_node = value_parts.size() == 1 ? value_parts[0] : tape.concat_rows(value_parts);
    mem.snapshot.keys = tape.value(mem.keys_node).template cast<float>();
    mem.snapshot.values = tape.value(mem.values_node).template cast<float>();
    mem.shards = {MemoryShard{0, mem.snapshot.size(), 0}};
    return mem;
}

// Mean cross-entropy over every masked label position in the batch, through
// the output vocabulary projection.
template <typename T>
int mlm_loss(Tape<T>& tape, const ParamIds& ids, const std::vector<int>& h_finals,
             const std::vector<const std::vector<MlmLabel>*>& labels) {
    require(h_finals.size() == labels.size(), ErrorCode::invalid_input,
            "one label set per passage required");
    std::vector<int> parts;
    std::vector<int> targets;
    for (std::size_t i = 0; i < h_finals.size(); ++i) {
        if (labels[i]->empty()) continue;
        std::vector<int> positions;
        for (const MlmLabel& l : *labels[i]) {
            positions.push_back(l.position);
            targets.push_back(l.token);
        }
        parts.push_back(tape.gather_rows(h_finals[i], std::move(positions)));
    }
    require(!targets.empty(), ErrorCode::invalid_input, "no masked labels in batch");
    int rows = parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
    int logits = dense(tape, rows, ids.mlm_head);
    return tape.cross_entropy_rows(logits, std::move(targets));
}

// In-batch entity coreference over coreference encodings z (one row per
// participating linked mention). Mentions from the same sample are neither
// positives nor negatives for each other; mentions without a positive are
// excluded from the mean (their rows still serve as negatives). Returns the
// loss node and the number of contributing mentions.
template <typename T>
std::pair<int, std::size_t> batch_coref_loss(Tape<T>& tape, int z_id,
                                             const std::vector<std::uint32_t>& entities,
                                             const std::vector<std::uint32_t>& samples,
                                             CorefVariant variant = CorefVariant::prose_mean) {
    const Mat<T>& z = tape.value(z_id);
    const std::size_t n = entities.size();
    require(static_cast<std::size_t>(z.rows) == n && samples.size() == n, ErrorCode::invalid_input,
            "coreference inputs disagree on mention count");

    // Dense double-precision score matrix; n is at most a few hundred.
    Mat<double> s(static_cast<int>(n), static_cast<int>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int c = 0; c < z.cols; ++c)
                acc += static_cast<double>(z.at(static_cast<int>(i), c)) *
                       static_cast<double>(z.at(static_cast<int>(j), c));
            s.at(static_cast<int>(i), static_cast<int>(j)) = acc;
        }

    auto pair_grads = std::make_shared<Mat<double>>(static_cast<int>(n), static_cast<int>(n));
    double total = 0.0;
    std::size_t contributing = 0;
    for (std::size_t m = 0; m < n; ++m) {
        std::vector<std::size_t> pos, neg;
        for (std::size_t o = 0; o < n; ++o) {
            if (samples[o] == samples[m]) continue;
            (entities[o] == entities[m] ? pos : neg).push_back(o);
        }
        if (pos.empty()) continue;
        ++contributing;
        double c = -1e300;
        for (std::size_t o : pos) c = std::max(c, s.at(static_cast<int>(m), static_cast<int>(o)));
        for (std::size_t o : neg) c = std::max(c, s.at(static_cast<int>(m), static_cast<int>(o)));
        double neg_sum = 0.0;
        for (std::size_t o : neg) neg_sum += std::exp(s.at(static_cast<int>(m), static_cast<int>(o)) - c);
        const double inv_pos = 1.0 / static_cast<double>(pos.size());
        if (variant == CorefVariant::prose_mean) {
            double a_neg = 0.0;  // sum over positives of 1/denom_p
            for (std::size_t p : pos) {
                double ep = std::exp(s.at(static_cast<int>(m), static_cast<int>(p)) - c);
                double denom = ep + neg_sum;
                total += -inv_pos * std::log(ep / denom);
                pair_grads->at(static_cast<int>(m), static_cast<int>(p)) += inv_pos * (ep / denom - 1.0);
                a_neg += 1.0 / denom;
            }
            for (std::size_t o : neg)
                pair_grads->at(static_cast<int>(m), static_cast<int>(o)) +=
                    inv_pos * std::exp(s.at(static_cast<int>(m), static_cast<int>(o)) - c) * a_neg;
        } else {
            double big_r = 0.0, weighted = 0.0;  // weighted = sum_p r_p / denom_p
            std::vector<double> r(pos.size());
            for (std::size_t pi = 0; pi < pos.size(); ++pi) {
                double ep = std::exp(s.at(static_cast<int>(m), static_cast<int>(pos[pi])) - c);
                double denom = ep + neg_sum;
                r[pi] = ep / denom;
                big_r += r[pi];
                weighted += r[pi] / denom;
            }
            total += -inv_pos * std::log(big_r);
            for (std::size_t pi = 0; pi < pos.size(); ++pi)
                pair_grads->at(static_cast<int>(m), static_cast<int>(pos[pi])) +=
                    -inv_pos * r[pi] * (1.0 - r[pi]) / big_r;
            for (std::size_t o : neg)
                pair_grads->at(static_cast<int>(m), static_cast<int>(o)) +=
                    inv_pos * std::exp(s.at(static_cast<int>(m), static_cast<int>(o)) - c) * weighted / big_r;
        }
    }

    Mat<T> value(1, 1);
    if (contributing == 0) {
        return {tape.constant(std::move(value)), 0};  // defined as 0 with zero count
    }
    const double scale = 1.0 / static_cast<double>(contributing);
    value.at(0, 0) = static_cast<T>(total * scale);
    int loss = tape.custom(std::move(value), {z_id}, [z_id, pair_grads, scale](Tape<T>& t, int self) {
        if (!t.needs_grad(z_id)) return;
        const T g = t.grad(self).at(0, 0);
        const Mat<T>& zv = t.value(z_id);
        Mat<T>& gz = t.mutable_grad(z_id);
        const int nn = zv.rows;
        for (int m = 0; m < nn; ++m) {
            for (int o = 0; o < nn; ++o) {
                double w = pair_grads->at(m, o);
                if (w == 0.0) continue;
                const T coef = g * static_cast<T>(w * scale);
                for (int c = 0; c < zv.cols; ++c) {
                    gz.at(m, c) += coef * zv.at(o, c);
                    gz.at(o, c) += coef * zv.at(m, c);
                }
            }
        }
    });
    return {loss, contributing};
}

// Memory entity-coreference (entity prediction) loss: mean over linked
// mentions whose gold entity appears among the retained TopMem rows of
// -log EntProb(m, gold). Gradients flow into the query rows only; the memory
// must stay alive until backward runs.
template <typename T>
std::pair<int, std::size_t> entity_prediction_loss(Tape<T>& tape, int z_id,
                                                   const std::vector<std::uint32_t>& gold,
                                                   const std::vector<std::uint32_t>& mention_passages,
                                                   const MentionMemory& memory,
                                                   const std::vector<MemoryShard>& shards,
                                                   const SearchParams& params,
                                                   bool exclude_same_passage = true) {
    const Mat<T>& z = tape.value(z_id);
    const std::size_t n = gold.size();
    require(static_cast<std::size_t>(z.rows) == n && mention_passages.size() == n,
            ErrorCode::invalid_input, "entity loss inputs disagree on mention count");
    Mat<float> zf = z.template cast<float>();

    struct MentionGrad {
        int mention;
        std::vector<std::size_t> rows;
        std::vector<double> coef;  // dL_m/ds_j before the 1/eligible factor
    };
    auto grads = std::make_shared<std::vector<MentionGrad>>();
    double total = 0.0;
    for (std::size_t m = 0; m < n; ++m) {
        std::optional<std::uint32_t> exclude;
        if (exclude_same_passage) exclude = mention_passages[m];
        EntityDistribution dist =
            entity_prob(zf.row(static_cast<int>(m)), zf.cols, memory, shards, params, exclude);
        if (dist.empty()) continue;
        double p_gold = 0.0;
        for (std::size_t i = 0; i < dist.rows.size(); ++i)
            if (memory.entities[dist.rows[i]] == gold[m]) p_gold += dist.weights[i];
        if (p_gold <= 0.0) continue;  // gold not retrieved: mention ineligible
        total += -std::log(p_gold);
        MentionGrad mg;
        mg.mention = static_cast<int>(m);
        mg.rows = dist.rows;
        mg.coef.resize(dist.rows.size());
        for (std::size_t i = 0; i < dist.rows.size(); ++i) {
            const bool in_gold = memory.entities[dist.rows[i]] == gold[m];
            mg.coef[i] = dist.weights[i] - (in_gold ? dist.weights[i] / p_gold : 0.0);
        }
        grads->push_back(std::move(mg));
    }

    Mat<T> value(1, 1);
    if (grads->empty()) return {tape.constant(std::move(value)), 0};
    const std::size_t eligible = grads->size();
    const double scale = 1.0 / static_cast<double>(eligible);
    value.at(0, 0) = static_cast<T>(total * scale);
    const MentionMemory* mem = &memory;
    int loss = tape.custom(std::move(value), {z_id}, [z_id, grads, scale, mem](Tape<T>& t, int self) {
        if (!t.needs_grad(z_id)) return;
        const T g = t.grad(self).at(0, 0);
        Mat<T>& gz = t.mutable_grad(z_id);
        for (const auto& mg : *grads) {
            for (std::size_t i = 0; i < mg.rows.size(); ++i) {
                const float* key = mem->keys.row(static_cast<int>(mg.rows[i]));
                const T coef = g * static_cast<T>(mg.coef[i] * scale);
                for (int c = 0; c < gz.cols; ++c) gz.at(mg.mention, c) += coef * static_cast<T>(key[c]);
            }
        }
    });
    return {loss, eligible};
}

struct PretrainOptions {
    MaskingPolicy masking;
    LossWeights weights;
    SearchParams search;
    CorefVariant coref_variant = CorefVariant::prose_mean;
    // When set, only mentions of these entities join the coreference loss
    // (the frequency-capped vocabulary at desk scale).
    const std::set<std::uint32_t>* coref_entities = nullptr;
    bool exclude_same_passage = true;  // stage-2 entity loss provenance masking
};

// One pre-training step's objective over a batch of marked, subsampled,
// unmasked passages. Stage 1 (MemoryMode::batch): first read builds the batch
// memory, second read is batch-TOME over the masked passages, coref term is
// in-batch coreference. Stage 2 (MemoryMode::external): frozen external
// memory, entity prediction replaces coreference.
template <typename T>
std::pair<int, LossReport> combined_pretrain_loss(Tape<T>& tape, const ParamIds& ids,
                                                  const EncoderConfig& cfg,
                                                  const std::vector<AnnotatedPassage>& batch,
                                                  std::uint64_t mask_seed, MemoryMode mode,
                                                  const MentionMemory* external_memory,
                                                  const std::vector<MemoryShard>* external_shards,
                                                  const PretrainOptions& opt) {
    require(!batch.empty(), ErrorCode::invalid_input, "empty batch");

    BatchMemory<T> batch_mem;
    MemorySource src;
    if (mode == MemoryMode::batch) {
        batch_mem = build_batch_memory(tape, ids, cfg, batch);
        src = batch_mem.as_source(opt.search);
    } else {
        require(external_memory != nullptr && external_shards != nullptr, ErrorCode::invalid_input,
                "stage 2 needs an external memory");
        src.snapshot = external_memory;
        src.shards = external_shards;
        src.search = opt.search;
    }

    // Second read over the masked batch.
    std::vector<MaskedPassage> masked(batch.size());
    std::vector<int> h_finals(batch.size());
    std::vector<const std::vector<MlmLabel>*> labels(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        masked[i] = mask_for_mlm(batch[i], opt.masking, mask_seed + batch[i].passage_id);
        h_finals[i] = tome_forward(tape, ids, masked[i].passage, cfg, src, nullptr);
        labels[i] = &masked[i].labels;
    }
    int mlm = mlm_loss(tape, ids, h_finals, labels);

    // Mention-level encodings from the second-read output.
    std::vector<int> z_parts;
    std::vector<std::uint32_t> entities, samples;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        std::vector<std::pair<int, int>> spans;
        for (const Mention& m : batch[i].mentions) {
            if (!m.linked()) continue;
            if (mode == MemoryMode::batch && opt.coref_entities &&
                !opt.coref_entities->count(*m.entity))
                continue;
            spans.emplace_back(m.start, m.end);
            entities.push_back(*m.entity);
            samples.push_back(batch[i].passage_id);
        }
        if (spans.empty()) continue;
        const DenseHeadG<int>& head = mode == MemoryMode::batch ? ids.coref_head : ids.entity_head;
        z_parts.push_back(span_encoding_rows(tape, h_finals[i], spans, head));
    }

    int coref;
    std::size_t coref_mentions = 0, eligible = 0;
    if (z_parts.empty()) {
        coref = tape.constant(Mat<T>(1, 1));
    } else {
        int z = z_parts.size() == 1 ? z_parts[0] : tape.concat_rows(z_parts);
        if (mode == MemoryMode::batch) {
            std::tie(coref, coref_mentions) =
                batch_coref_loss(tape, z, entities, samples, opt.coref_variant);
        } else {
            std::tie(coref, eligible) =
                entity_prediction_loss(tape, z, entities, samples, *external_memory, *external_shards,
                                       opt.search, opt.exclude_same_passage);
            coref_mentions = eligible;
        }
    }

    int combined = tape.add(tape.scale(mlm, static_cast<T>(opt.weights.mlm)),
                            tape.scale(coref, static_cast<T>(opt.weights.coref)));
    LossReport report;
    report.mlm = static_cast<double>(tape.value(mlm).at(0, 0));
    report.coref = static_cast<double>(tape.value(coref).at(0, 0));
    report.combined = static_cast<double>(tape.value(combined).at(0, 0));
    for (const auto* l : labels) report.mlm_labels += l->size();
    report.coref_mentions = coref_mentions;
    report.eligible_mentions = eligible;
    return {combined, report};
}

}  // namespace tome
