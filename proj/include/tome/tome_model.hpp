#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tome/corpus.hpp"
#include "tome/encoder.hpp"
#include "tome/memtable.hpp"
#include "tome/retrieval.hpp"

namespace tome {

// Where memory attention reads from. The float snapshot always backs top-K
// selection and provenance; when keys_node/values_node are set (stage-1 batch
// memory) the attended rows are tape-resident and gradients flow into them,
// otherwise rows enter the graph as constants (frozen external memory).
struct MemorySource {
    const MentionMemory* snapshot = nullptr;
    const std::vector<MemoryShard>* shards = nullptr;
    SearchMode mode = SearchMode::exact;
    const std::vector<IvfIndex>* ivf = nullptr;  // one per shard when mode == ivf
    SearchParams search;
    int keys_node = -1;
    int values_node = -1;

    bool tape_resident() const { return keys_node >= 0; }
};

struct MentionTraceEntry {
    std::vector<std::size_t> rows;          // retrieved global memory rows
    std::vector<float> weights;             // attention, exactly 0 for masked rows
    std::vector<std::uint32_t> entities;    // MemEnt per retrieved row
    std::vector<std::uint32_t> passages;    // MemPassage per retrieved row
    std::vector<float> query;               // the d_K query vector
    bool skipped = false;                   // nothing attendable after masking
};

// blocks[b][i]: trace for mention i at the b-th memory attention layer.
struct AttentionTrace {
    std::vector<std::vector<MentionTraceEntry>> blocks;
};

// One memory attention layer: every mention queries the memory, attends over
// the retrieved rows (same-passage rows forced to weight 0), and the fused
// result replaces H at the mention start position only.
template <typename T>
int memory_attention(Tape<T>& tape, int h, const AnnotatedPassage& passage, const MemorySource& src,
                     const BlockHeadG<int>& head, std::vector<MentionTraceEntry>* trace) {
    require(src.snapshot != nullptr && src.shards != nullptr, ErrorCode::invalid_input,
            "memory attention needs a memory source");
    if (passage.mentions.empty()) return h;
    const int d_k = src.snapshot->keys.cols;

    std::vector<std::pair<int, int>> spans;
    std::vector<int> starts;
    spans.reserve(passage.mentions.size());
    for (const auto& m : passage.mentions) {
        spans.emplace_back(m.start, m.end);
        starts.push_back(m.start);
    }
    int queries = span_encoding_rows(tape, h, spans, head.query_head);
    require(tape.value(queries).cols == d_k, ErrorCode::dimension_mismatch,
            "query head output does not match memory key dimension");
    Mat<float> qf = tape.value(queries).template cast<float>();

    std::vector<int> fused_rows;
    fused_rows.reserve(spans.size());
    for (std::size_t i = 0; i < spans.size(); ++i) {
        RetrievalResult r = sharded_search(qf.row(static_cast<int>(i)), d_k, *src.snapshot, *src.shards,
                                           src.mode, src.search, src.ivf);
        std::vector<int> kept;  // positions within r that survive masking
        for (std::size_t j = 0; j < r.size(); ++j)
            if (src.snapshot->passages[r.indices[j]] != passage.passage_id) kept.push_back(static_cast<int>(j));

        MentionTraceEntry entry;
        if (trace) {
            entry.rows = r.indices;
            entry.weights.assign(r.size(), 0.0f);
            entry.entities.reserve(r.size());
            entry.passages.reserve(r.size());
            for (std::size_t j = 0; j < r.size(); ++j) {
                entry.entities.push_back(src.snapshot->entities[r.indices[j]]);
                entry.passages.push_back(src.snapshot->passages[r.indices[j]]);
            }
            entry.query.assign(qf.row(static_cast<int>(i)), qf.row(static_cast<int>(i)) + d_k);
        }

        int h_s = tape.gather_rows(h, {starts[i]});
        int fused;
        if (kept.empty()) {
            // Skip contract: no attendable memory, M_s = LayerNorm(H_s).
            fused = tape.layer_norm(h_s, head.fuse_ln_g, head.fuse_ln_b);
            if (trace) entry.skipped = true;
        } else {
            int sel_keys, sel_vals;
            if (src.tape_resident()) {
                std::vector<int> locals(kept.size());
                for (std::size_t j = 0; j < kept.size(); ++j)
                    locals[j] = static_cast<int>(r.indices[kept[j]]);
                sel_keys = tape.gather_rows(src.keys_node, locals);
                sel_vals = tape.gather_rows(src.values_node, locals);
            } else {
                Mat<float> k(static_cast<int>(kept.size()), d_k);
                Mat<float> v(static_cast<int>(kept.size()), src.snapshot->values.cols);
                for (std::size_t j = 0; j < kept.size(); ++j) {
                    const auto row = static_cast<int>(r.indices[kept[j]]);
                    std::copy(src.snapshot->keys.row(row), src.snapshot->keys.row(row) + d_k,
                              k.row(static_cast<int>(j)));
                    std::copy(src.snapshot->values.row(row), src.snapshot->values.row(row) + v.cols,
                              v.row(static_cast<int>(j)));
                }
                sel_keys = tape.constant(k.template cast<T>());
                sel_vals = tape.constant(v.template cast<T>());
            }
            int q_i = tape.gather_rows(queries, {static_cast<int>(i)});
            int alpha = tape.softmax_rows(tape.matmul(q_i, sel_keys, false, true));
            int value = tape.matmul(alpha, sel_vals);
            int up = tape.matmul(value, head.w_u, false, true);
            fused = tape.layer_norm(tape.add(h_s, up), head.fuse_ln_g, head.fuse_ln_b);
            if (trace) {
                const Mat<T>& a = tape.value(alpha);
                for (std::size_t j = 0; j < kept.size(); ++j)
                    entry.weights[kept[j]] = static_cast<float>(a.at(0, static_cast<int>(j)));
            }
        }
        fused_rows.push_back(fused);
        if (trace) trace->push_back(std::move(entry));
    }
    return tape.replace_rows(h, starts, tape.concat_rows(fused_rows));
}

// Full TOME read: initial transformer layers, then per block a memory
// attention layer followed by the block's transformer layers.
template <typename T>
int tome_forward(Tape<T>& tape, const ParamIds& ids, const AnnotatedPassage& passage,
                 const EncoderConfig& cfg, const MemorySource& src, AttentionTrace* trace) {
    int h = embed(tape, ids, passage.tokens, cfg);
    h = run_layers(tape, h, ids, cfg, 0, cfg.initial_layers);
    int cursor = cfg.initial_layers;
    for (std::size_t b = 0; b < cfg.block_layers.size(); ++b) {
        std::vector<MentionTraceEntry>* entries = nullptr;
        if (trace) {
            trace->blocks.emplace_back();
            entries = &trace->blocks.back();
        }
        h = memory_attention(tape, h, passage, src, ids.blocks[b], entries);
        h = run_layers(tape, h, ids, cfg, cursor, cfg.block_layers[b]);
        cursor += cfg.block_layers[b];
    }
    return h;
}

// Sparse EntProb distribution for one mention query. Rows/weights keep the
// retained TopMem rows and their softmax weights for loss bookkeeping.
struct EntityDistribution {
    std::vector<std::uint32_t> entities;  // ascending entity id
    std::vector<double> probs;
    std::vector<std::size_t> rows;
    std::vector<double> weights;

    bool empty() const { return entities.empty(); }
};

// Per-shard exact top entity_local_k, aggregated across shards with no global
// cap; softmax over the retained rows, then weights grouped by entity.
// Unlinked rows and rows from exclude_passage are dropped before the softmax.
EntityDistribution entity_prob(const float* z, int dim, const MentionMemory& memory,
                               const std::vector<MemoryShard>& shards, const SearchParams& params,
                               std::optional<std::uint32_t> exclude_passage = std::nullopt);

// argmax_j EntProb(m, j); ties to the lowest entity id.
std::uint32_t predict_entity(const EntityDistribution& dist);

}  // namespace tome
