#include "tome/memtable.hpp"

#include <algorithm>
#include <numeric>

#include "tome/binio.hpp"

namespace tome {

void MentionMemory::validate() const {
    const std::size_t n = entities.size();
    require(static_cast<std::size_t>(keys.rows) == n && static_cast<std::size_t>(values.rows) == n &&
                passages.size() == n,
            ErrorCode::dimension_mismatch, "memory columns disagree on row count");
    require(keys.finite() && values.finite(), ErrorCode::non_finite, "memory contains non-finite values");
}

MentionMemory build_memory(const std::vector<AnnotatedPassage>& corpus, const EncoderParams<float>& params,
                           const EncoderConfig& cfg, bool include_unlinked, int threads) {
    cfg.validate();
    require(!corpus.empty(), ErrorCode::invalid_input, "empty corpus");

    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&corpus](std::size_t a, std::size_t b) {
        return corpus[a].passage_id < corpus[b].passage_id;
    });
    for (std::size_t i = 1; i < order.size(); ++i)
        require(corpus[order[i - 1]].passage_id != corpus[order[i]].passage_id, ErrorCode::invalid_input,
                "duplicate passage_id " + std::to_string(corpus[order[i]].passage_id));

    SpecialTokens special;
    auto keep = [include_unlinked](const Mention& m) { return include_unlinked || m.linked(); };

    // Row layout is fixed up front so parallel encoding can scatter directly.
    std::vector<std::size_t> row_start(order.size() + 1, 0);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& p = corpus[order[i]];
        std::size_t rows = 0;
        for (const auto& m : p.mentions) {
            require(m.start >= 0 && m.end < static_cast<std::int32_t>(p.tokens.size()) && m.start < m.end &&
                        p.tokens[m.start] == special.e_start && p.tokens[m.end] == special.e_end,
                    ErrorCode::invalid_input,
                    "passage " + std::to_string(p.passage_id) + " lacks entity markers at mention spans");
            if (keep(m)) ++rows;
        }
        row_start[i + 1] = row_start[i] + rows;
    }
    const std::size_t n = row_start.back();
    require(n > 0, ErrorCode::invalid_input, include_unlinked ? "corpus has zero mentions"
                                                              : "corpus has zero linked mentions");

    MentionMemory mem;
    mem.keys = Mat<float>(static_cast<int>(n), cfg.key_dim);
    mem.values = Mat<float>(static_cast<int>(n), cfg.value_dim);
    mem.entities.resize(n);
    mem.passages.resize(n);

    parallel_for(order.size(), threads, [&](std::size_t begin, std::size_t end) {
        Tape<float> tape;
        ParamIds ids = register_params(tape, params, false);
        const std::size_t base = tape.size();
        for (std::size_t i = begin; i < end; ++i) {
            tape.truncate(base);
            const auto& p = corpus[order[i]];
            std::vector<std::pair<int, int>> spans;
            std::size_t row = row_start[i];
            for (const auto& m : p.mentions) {
                if (!keep(m)) continue;
                spans.emplace_back(m.start, m.end);
                mem.entities[row] = m.linked() ? *m.entity : kUnlinkedEntity;
                mem.passages[row] = p.passage_id;
                ++row;
            }
            if (spans.empty()) continue;
            int h = encode(tape, ids, p.tokens, cfg);
            int key_id = span_encoding_rows(tape, h, spans, ids.key_head);
            int value_id = span_encoding_rows(tape, h, spans, ids.value_head);
            const Mat<float>& k = tape.value(key_id);
            const Mat<float>& v = tape.value(value_id);
            for (std::size_t j = 0; j < spans.size(); ++j) {
                std::copy(k.row(static_cast<int>(j)), k.row(static_cast<int>(j)) + k.cols,
                          mem.keys.row(static_cast<int>(row_start[i] + j)));
                std::copy(v.row(static_cast<int>(j)), v.row(static_cast<int>(j)) + v.cols,
                          mem.values.row(static_cast<int>(row_start[i] + j)));
            }
        }
    });

    mem.validate();
    return mem;
}

namespace {
constexpr char kMemoryMagic[9] = "TOMEMEM1";
constexpr std::uint32_t kMemoryVersion = 1;
constexpr std::size_t kHeaderBytes = 8 + 4 + 8 + 4 + 4;

struct MemoryHeader {
    std::uint64_t n = 0;
    std::uint32_t d_k = 0;
    std::uint32_t d_v = 0;
};

MemoryHeader read_header(BinReader& r) {
    r.magic(kMemoryMagic);
    auto version = r.pod<std::uint32_t>();
    require(version == kMemoryVersion, ErrorCode::bad_version,
            r.path() + ": unsupported memory version " + std::to_string(version));
    MemoryHeader h;
    h.n = r.pod<std::uint64_t>();
    h.d_k = r.pod<std::uint32_t>();
    h.d_v = r.pod<std::uint32_t>();
    require(h.d_k >= 1 && h.d_v >= 1, ErrorCode::dimension_mismatch,
            r.path() + ": key/value dimensions must be at least 1");
    return h;
}
}  // namespace

void save_memory(const std::string& path, const MentionMemory& m) {
    m.validate();
    BinWriter w(path);
    w.magic(kMemoryMagic);
    w.pod<std::uint32_t>(kMemoryVersion);
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(m.size()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.keys.cols));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(m.values.cols));
    w.array(m.keys.a.data(), m.keys.a.size());
    w.array(m.values.a.data(), m.values.a.size());
    w.array(m.entities.data(), m.entities.size());
    w.array(m.passages.data(), m.passages.size());
    w.close();
}

MentionMemory load_memory(const std::string& path) {
    BinReader r(path);
    MemoryHeader h = read_header(r);
    MentionMemory m;
    m.keys = Mat<float>(static_cast<int>(h.n), static_cast<int>(h.d_k));
    m.values = Mat<float>(static_cast<int>(h.n), static_cast<int>(h.d_v));
    m.entities.resize(h.n);
    m.passages.resize(h.n);
    r.array(m.keys.a.data(), m.keys.a.size());
    r.array(m.values.a.data(), m.values.a.size());
    r.array(m.entities.data(), m.entities.size());
    r.array(m.passages.data(), m.passages.size());
    r.expect_eof();
    m.validate();
    return m;
}

MentionMemory load_memory_range(const std::string& path, std::size_t lo, std::size_t hi) {
    BinReader r(path);
    MemoryHeader h = read_header(r);
    require(lo <= hi && hi <= h.n, ErrorCode::invalid_input,
            path + ": row range [" + std::to_string(lo) + ", " + std::to_string(hi) + ") outside [0, " +
                std::to_string(h.n) + ")");
    const std::size_t n = hi - lo;
    MentionMemory m;
    m.keys = Mat<float>(static_cast<int>(n), static_cast<int>(h.d_k));
    m.values = Mat<float>(static_cast<int>(n), static_cast<int>(h.d_v));
    m.entities.resize(n);
    m.passages.resize(n);
    const std::size_t keys_at = kHeaderBytes;
    const std::size_t values_at = keys_at + h.n * h.d_k * 4;
    const std::size_t ents_at = values_at + h.n * h.d_v * 4;
    const std::size_t pass_at = ents_at + h.n * 4;
    r.seek(keys_at + lo * h.d_k * 4);
    r.array(m.keys.a.data(), m.keys.a.size());
    r.seek(values_at + lo * h.d_v * 4);
    r.array(m.values.a.data(), m.values.a.size());
    r.seek(ents_at + lo * 4);
    r.array(m.entities.data(), m.entities.size());
    r.seek(pass_at + lo * 4);
    r.array(m.passages.data(), m.passages.size());
    m.validate();
    return m;
}

std::vector<MemoryShard> shard(const MentionMemory& m, int n_shards) {
    const std::size_t n = m.size();
    require(n_shards >= 1 && static_cast<std::size_t>(n_shards) <= n, ErrorCode::invalid_input,
            "n_shards must be in [1, " + std::to_string(n) + "], got " + std::to_string(n_shards));
    std::vector<MemoryShard> shards(n_shards);
    const std::size_t base = n / n_shards;
    const std::size_t rem = n % n_shards;
    std::size_t lo = 0;
    for (int i = 0; i < n_shards; ++i) {
        const std::size_t len = base + (static_cast<std::size_t>(i) < rem ? 1 : 0);
        shards[i] = {lo, lo + len, lo};
        lo += len;
    }
    return shards;
}

}  // namespace tome
