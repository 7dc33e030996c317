#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tome/autograd.hpp"
#include "tome/corpus.hpp"
#include "tome/mat.hpp"

namespace tome {

struct EncoderConfig {
    int vocab_size = 0;
    int max_length = 128;
    int hidden_dim = 64;
    int num_heads = 4;
    int ff_dim = 256;
    int initial_layers = 4;
    std::vector<int> block_layers = {4};
    int key_dim = 128;
    int value_dim = 512;
    int coref_dim = 512;
    std::uint64_t seed = 0;

    int total_layers() const {
        int n = initial_layers;
        for (int b : block_layers) n += b;
        return n;
    }

    void validate() const;
    std::string to_json() const;
    static EncoderConfig from_json(const std::string& text);
    std::uint64_t digest() const;

    // Desk-scale default used by the CLI.
    static EncoderConfig toy(int vocab_size);
    // Reference values matching the published architecture; too large for tests.
    static EncoderConfig bert_base(int vocab_size);
};

// Parameter containers are generic over the tensor handle so the same layout
// serves Mat<T> storage and tape leaf ids.
template <typename M>
struct DenseHeadG {
    M w;  // out x in, applied as y = x * w^T + b
    M b;  // 1 x out
};

template <typename M>
struct TransformerLayerG {
    M wq, bq, wk, bk, wv, bv;  // d x d projections
    M wo, bo;
    M ln1_g, ln1_b;
    M w1, b1;  // ff x d
    M w2, b2;  // d x ff
    M ln2_g, ln2_b;
};

template <typename M>
struct BlockHeadG {
    DenseHeadG<M> query_head;  // d_K x 2d
    M w_u;                     // d x d_V
    M fuse_ln_g, fuse_ln_b;
};

template <typename M>
struct EncoderParamsG {
    M token_embedding;  // V x d
    M pos_embedding;    // L x d
    std::vector<TransformerLayerG<M>> layers;
    DenseHeadG<M> key_head;     // d_K x 2d
    DenseHeadG<M> value_head;   // d_V x 2d
    DenseHeadG<M> coref_head;   // d_C x 2d
    DenseHeadG<M> entity_head;  // d_K x 2d
    std::vector<BlockHeadG<M>> blocks;
    DenseHeadG<M> mlm_head;  // V x d
};

template <typename T>
using EncoderParams = EncoderParamsG<Mat<T>>;
using ParamIds = EncoderParamsG<int>;

// Visits every tensor with f(name, tensor, weight_decay). Visit order is fixed
// and defines both the checkpoint layout and the init draw order.
template <typename M, typename F>
void visit_params(EncoderParamsG<M>& p, F&& f) {
    f("token_embedding", p.token_embedding, true);
    f("pos_embedding", p.pos_embedding, true);
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        auto& L = p.layers[i];
        const std::string prefix = "layers." + std::to_string(i) + ".";
        f(prefix + "wq", L.wq, true);
        f(prefix + "bq", L.bq, false);
        f(prefix + "wk", L.wk, true);
        f(prefix + "bk", L.bk, false);
        f(prefix + "wv", L.wv, true);
        f(prefix + "bv", L.bv, false);
        f(prefix + "wo", L.wo, true);
        f(prefix + "bo", L.bo, false);
        f(prefix + "ln1_g", L.ln1_g, false);
        f(prefix + "ln1_b", L.ln1_b, false);
        f(prefix + "w1", L.w1, true);
        f(prefix + "b1", L.b1, false);
        f(prefix + "w2", L.w2, true);
        f(prefix + "b2", L.b2, false);
        f(prefix + "ln2_g", L.ln2_g, false);
        f(prefix + "ln2_b", L.ln2_b, false);
    }
    auto head = [&f](const std::string& name, DenseHeadG<M>& h) {
        f(name + ".w", h.w, true);
        f(name + ".b", h.b, false);
    };
    head("key_head", p.key_head);
    head("value_head", p.value_head);
    head("coref_head", p.coref_head);
    head("entity_head", p.entity_head);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& B = p.blocks[i];
        const std::string prefix = "blocks." + std::to_string(i) + ".";
        head(prefix + "query_head", B.query_head);
        f(prefix + "w_u", B.w_u, true);
        f(prefix + "fuse_ln_g", B.fuse_ln_g, false);
        f(prefix + "fuse_ln_b", B.fuse_ln_b, false);
    }
    head("mlm_head", p.mlm_head);
}

template <typename M, typename F>
void visit_params(const EncoderParamsG<M>& p, F&& f) {
    visit_params(const_cast<EncoderParamsG<M>&>(p),
                 [&f](const std::string& name, M& m, bool decay) { f(name, const_cast<const M&>(m), decay); });
}

// Allocates all tensors with the shapes implied by the config; weights are
// truncated normal (std 0.02), biases zero, layer norm gains one.
template <typename T>
EncoderParams<T> init_params(const EncoderConfig& cfg) {
    cfg.validate();
    const int d = cfg.hidden_dim;
    EncoderParams<T> p;
    p.token_embedding = Mat<T>(cfg.vocab_size, d);
    p.pos_embedding = Mat<T>(cfg.max_length, d);
    p.layers.resize(cfg.total_layers());
    for (auto& L : p.layers) {
        L.wq = L.wk = L.wv = L.wo = Mat<T>(d, d);
        L.bq = L.bk = L.bv = L.bo = Mat<T>(1, d);
        L.ln1_g = L.ln1_b = L.ln2_g = L.ln2_b = Mat<T>(1, d);
        L.w1 = Mat<T>(cfg.ff_dim, d);
        L.b1 = Mat<T>(1, cfg.ff_dim);
        L.w2 = Mat<T>(d, cfg.ff_dim);
        L.b2 = Mat<T>(1, d);
    }
    auto make_head = [d](DenseHeadG<Mat<T>>& h, int out, int in) {
        h.w = Mat<T>(out, in);
        h.b = Mat<T>(1, out);
        (void)d;
    };
    make_head(p.key_head, cfg.key_dim, 2 * d);
    make_head(p.value_head, cfg.value_dim, 2 * d);
    make_head(p.coref_head, cfg.coref_dim, 2 * d);
    make_head(p.entity_head, cfg.key_dim, 2 * d);
    p.blocks.resize(cfg.block_layers.size());
    for (auto& B : p.blocks) {
        make_head(B.query_head, cfg.key_dim, 2 * d);
        B.w_u = Mat<T>(d, cfg.value_dim);
        B.fuse_ln_g = B.fuse_ln_b = Mat<T>(1, d);
    }
    make_head(p.mlm_head, cfg.vocab_size, d);

    Rng rng(cfg.seed);
    visit_params(p, [&rng](const std::string& name, Mat<T>& m, bool decay) {
        if (decay) {
            for (auto& v : m.a) v = truncated_normal(rng, T(0.02));
        } else {
            m.fill(name.ends_with("_g") ? T(1) : T(0));  // layer norm gains vs biases
        }
    });
    return p;
}

template <typename T, typename U>
EncoderParams<U> cast_params(const EncoderParams<T>& p) {
    EncoderParams<U> out;
    out.layers.resize(p.layers.size());
    out.blocks.resize(p.blocks.size());
    auto src = std::vector<const Mat<T>*>();
    visit_params(p, [&src](const std::string&, const Mat<T>& m, bool) { src.push_back(&m); });
    std::size_t i = 0;
    visit_params(out, [&](const std::string&, Mat<U>& m, bool) { m = src[i++]->template cast<U>(); });
    return out;
}

// Registers every parameter tensor as a tape leaf.
template <typename T>
ParamIds register_params(Tape<T>& tape, const EncoderParams<T>& params, bool trainable) {
    ParamIds ids;
    ids.layers.resize(params.layers.size());
    ids.blocks.resize(params.blocks.size());
    auto src = std::vector<const Mat<T>*>();
    visit_params(params, [&src](const std::string&, const Mat<T>& m, bool) { src.push_back(&m); });
    std::size_t i = 0;
    visit_params(ids, [&](const std::string&, int& id, bool) { id = tape.leaf(*src[i++], trainable); });
    return ids;
}

// Collects gradients back out of the tape in visit order.
template <typename T>
EncoderParams<T> collect_gradients(const Tape<T>& tape, const ParamIds& ids, const EncoderConfig& cfg) {
    EncoderParams<T> grads = init_params<T>(cfg);  // shapes only; values overwritten
    std::vector<int> flat;
    visit_params(ids, [&flat](const std::string&, const int& id, bool) { flat.push_back(id); });
    std::size_t i = 0;
    visit_params(grads, [&](const std::string&, Mat<T>& m, bool) { m = tape.grad(flat[i++]); });
    return grads;
}

// y = x * W^T + b
template <typename T>
int dense(Tape<T>& tape, int x, const DenseHeadG<int>& head) {
    return tape.add(tape.matmul(x, head.w, false, true), head.b);
}

template <typename T>
int transformer_layer(Tape<T>& tape, int h, const TransformerLayerG<int>& L, const EncoderConfig& cfg) {
    const int d = cfg.hidden_dim;
    const int dh = d / cfg.num_heads;
    int q = tape.add(tape.matmul(h, L.wq, false, true), L.bq);
    int k = tape.add(tape.matmul(h, L.wk, false, true), L.bk);
    int v = tape.add(tape.matmul(h, L.wv, false, true), L.bv);
    std::vector<int> ctx;
    ctx.reserve(cfg.num_heads);
    const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(dh));
    for (int head = 0; head < cfg.num_heads; ++head) {
        int qh = tape.slice_cols(q, head * dh, dh);
        int kh = tape.slice_cols(k, head * dh, dh);
        int vh = tape.slice_cols(v, head * dh, dh);
        int scores = tape.scale(tape.matmul(qh, kh, false, true), inv_sqrt_dh);
        int attn = tape.softmax_rows(scores);
        ctx.push_back(tape.matmul(attn, vh));
    }
    int merged = cfg.num_heads == 1 ? ctx[0] : tape.concat_cols(ctx);
    int attn_out = tape.add(tape.matmul(merged, L.wo, false, true), L.bo);
    int h1 = tape.layer_norm(tape.add(h, attn_out), L.ln1_g, L.ln1_b);
    int ff = tape.add(tape.matmul(tape.gelu(tape.add(tape.matmul(h1, L.w1, false, true), L.b1)), L.w2, false, true),
                      L.b2);
    return tape.layer_norm(tape.add(h1, ff), L.ln2_g, L.ln2_b);
}

// Token + position embeddings. Rejects empty, over-length and out-of-vocab input.
template <typename T>
int embed(Tape<T>& tape, const ParamIds& ids, const std::vector<std::int32_t>& tokens,
          const EncoderConfig& cfg) {
    require(!tokens.empty(), ErrorCode::invalid_input, "empty passage");
    require(static_cast<int>(tokens.size()) <= cfg.max_length, ErrorCode::invalid_input,
            "passage length " + std::to_string(tokens.size()) + " exceeds max_length " +
                std::to_string(cfg.max_length));
    std::vector<int> tok_idx(tokens.size()), pos_idx(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        require(tokens[i] >= 0 && tokens[i] < cfg.vocab_size, ErrorCode::invalid_input,
                "token id " + std::to_string(tokens[i]) + " outside vocabulary");
        tok_idx[i] = tokens[i];
        pos_idx[i] = static_cast<int>(i);
    }
    return tape.add(tape.gather_rows(ids.token_embedding, std::move(tok_idx)),
                    tape.gather_rows(ids.pos_embedding, std::move(pos_idx)));
}

template <typename T>
int run_layers(Tape<T>& tape, int h, const ParamIds& ids, const EncoderConfig& cfg, int first, int count) {
    for (int i = 0; i < count; ++i) h = transformer_layer(tape, h, ids.layers[first + i], cfg);
    return h;
}

// Plain forward through every layer; the mention-encoder read.
template <typename T>
int encode(Tape<T>& tape, const ParamIds& ids, const std::vector<std::int32_t>& tokens,
           const EncoderConfig& cfg) {
    int h = embed(tape, ids, tokens, cfg);
    return run_layers(tape, h, ids, cfg, 0, cfg.total_layers());
}

// Stacked span encodings W[H_s; H_e] + b, one row per span.
template <typename T>
int span_encoding_rows(Tape<T>& tape, int h, const std::vector<std::pair<int, int>>& spans,
                       const DenseHeadG<int>& head) {
    const int rows = tape.value(h).rows;
    std::vector<int> starts, ends;
    starts.reserve(spans.size());
    ends.reserve(spans.size());
    for (auto [s, e] : spans) {
        require(s >= 0 && s < e && e < rows, ErrorCode::invalid_input,
                "span (" + std::to_string(s) + ", " + std::to_string(e) + ") out of range");
        starts.push_back(s);
        ends.push_back(e);
    }
    int cat = tape.concat_cols({tape.gather_rows(h, std::move(starts)), tape.gather_rows(h, std::move(ends))});
    return dense(tape, cat, head);
}

// Parameter checkpoints: "TOMEPARM" magic, version, config digest + embedded
// config, then named row-major float32 tensors.
void save_params(const std::string& path, const EncoderConfig& cfg, const EncoderParams<float>& params);
std::pair<EncoderConfig, EncoderParams<float>> load_params(const std::string& path);

}  // namespace tome
