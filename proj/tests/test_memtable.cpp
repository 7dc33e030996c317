#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "synth.hpp"
#include "tome/common.hpp"
#include "tome/encoder.hpp"
#include "tome/memtable.hpp"

using namespace tome;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const TomeError& e) {
        return e.code();
    }
    return ErrorCode::internal;
}

EncoderConfig small_config(int vocab) {
    EncoderConfig cfg;
    cfg.vocab_size = vocab;
    cfg.max_length = 64;
    cfg.hidden_dim = 16;
    cfg.num_heads = 2;
    cfg.ff_dim = 24;
    cfg.initial_layers = 1;
    cfg.block_layers = {1};
    cfg.key_dim = 6;
    cfg.value_dim = 5;
    cfg.coref_dim = 4;
    cfg.seed = 5;
    return cfg;
}

// Mixed corpus: shuffled passage ids, one unlinked mention.
std::vector<AnnotatedPassage> mixed_corpus(int vocab) {
    std::vector<AnnotatedPassage> out;
    for (std::uint32_t pid : {30u, 10u, 20u}) {
        AnnotatedPassage raw = synth::random_raw_passage(pid, pid / 10, 18, 3, vocab, pid);
        if (pid == 10) raw.mentions[1].entity.reset();
        out.push_back(insert_entity_markers(raw.passage_id, raw.article_id, raw.tokens, raw.mentions));
    }
    return out;
}

// Reference build: sequential loop over passages sorted by id, fresh tape per
// passage, rows appended in span order.
MentionMemory ref_build(const std::vector<AnnotatedPassage>& corpus, const EncoderParams<float>& params,
                        const EncoderConfig& cfg, bool include_unlinked) {
    std::vector<AnnotatedPassage> sorted = corpus;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) { return a.passage_id < b.passage_id; });
    std::vector<std::vector<float>> key_rows, value_rows;
    MentionMemory mem;
    for (const auto& p : sorted) {
        std::vector<std::pair<int, int>> spans;
        for (const auto& m : p.mentions) {
            if (!include_unlinked && !m.linked()) continue;
            spans.emplace_back(m.start, m.end);
            mem.entities.push_back(m.linked() ? *m.entity : kUnlinkedEntity);
            mem.passages.push_back(p.passage_id);
        }
        if (spans.empty()) continue;
        Tape<float> tape;
        ParamIds ids = register_params(tape, params, false);
        int h = encode(tape, ids, p.tokens, cfg);
        int k = span_encoding_rows(tape, h, spans, ids.key_head);
        int v = span_encoding_rows(tape, h, spans, ids.value_head);
        for (std::size_t j = 0; j < spans.size(); ++j) {
            const int jj = static_cast<int>(j);
            key_rows.emplace_back(tape.value(k).row(jj), tape.value(k).row(jj) + cfg.key_dim);
            value_rows.emplace_back(tape.value(v).row(jj), tape.value(v).row(jj) + cfg.value_dim);
        }
    }
    mem.keys = Mat<float>(static_cast<int>(key_rows.size()), cfg.key_dim);
    mem.values = Mat<float>(static_cast<int>(value_rows.size()), cfg.value_dim);
    for (std::size_t i = 0; i < key_rows.size(); ++i) {
        std::copy(key_rows[i].begin(), key_rows[i].end(), mem.keys.row(static_cast<int>(i)));
        std::copy(value_rows[i].begin(), value_rows[i].end(), mem.values.row(static_cast<int>(i)));
    }
    return mem;
}

bool memories_equal(const MentionMemory& a, const MentionMemory& b) {
    return a.keys.same_shape(b.keys) && a.values.same_shape(b.values) && a.keys.a == b.keys.a &&
           a.values.a == b.values.a && a.entities == b.entities && a.passages == b.passages;
}

}  // namespace

TEST_CASE("build_memory matches a sequential per-passage reference bit for bit") {
    EncoderConfig cfg = small_config(90);
    auto params = init_params<float>(cfg);
    auto corpus = mixed_corpus(90);

    MentionMemory got = build_memory(corpus, params, cfg);
    MentionMemory want = ref_build(corpus, params, cfg, false);
    CHECK(memories_equal(got, want));
    CHECK(got.size() == 8);  // 9 mentions, one unlinked

    // Rows are ordered by ascending passage id regardless of corpus order.
    for (std::size_t i = 1; i < got.size(); ++i) CHECK(got.passages[i - 1] <= got.passages[i]);
    CHECK(got.passages.front() == 10);
    CHECK(got.passages.back() == 30);

    MentionMemory with_unlinked = build_memory(corpus, params, cfg, /*include_unlinked=*/true);
    CHECK(with_unlinked.size() == 9);
    CHECK(memories_equal(with_unlinked, ref_build(corpus, params, cfg, true)));
    std::size_t unlinked = 0;
    for (std::uint32_t e : with_unlinked.entities)
        if (e == kUnlinkedEntity) ++unlinked;
    CHECK(unlinked == 1);
}

TEST_CASE("build_memory is thread-count invariant") {
    EncoderConfig cfg = small_config(70);
    auto params = init_params<float>(cfg);
    std::vector<AnnotatedPassage> corpus;
    for (std::uint32_t pid = 1; pid <= 12; ++pid) {
        AnnotatedPassage raw = synth::random_raw_passage(pid * 7 % 13 + pid, pid, 20, 2, 70, pid);
        raw.passage_id = pid * 7 % 13 * 100 + pid;  // scrambled ids
        corpus.push_back(insert_entity_markers(raw.passage_id, raw.article_id, raw.tokens, raw.mentions));
    }
    MentionMemory one = build_memory(corpus, params, cfg, false, 1);
    MentionMemory four = build_memory(corpus, params, cfg, false, 4);
    MentionMemory many = build_memory(corpus, params, cfg, false, 13);
    CHECK(memories_equal(one, four));
    CHECK(memories_equal(one, many));
}

TEST_CASE("build_memory rejects bad corpora with precise codes") {
    EncoderConfig cfg = small_config(90);
    auto params = init_params<float>(cfg);

    CHECK(code_of([&] { build_memory({}, params, cfg); }) == ErrorCode::invalid_input);

    auto corpus = mixed_corpus(90);
    auto dup = corpus;
    dup.push_back(corpus[0]);
    CHECK(code_of([&] { build_memory(dup, params, cfg); }) == ErrorCode::invalid_input);

    // Raw (marker-free) passages are rejected: spans do not point at markers.
    AnnotatedPassage raw = synth::random_raw_passage(1, 1, 18, 2, 90, 3);
    CHECK(code_of([&] { build_memory({raw}, params, cfg); }) == ErrorCode::invalid_input);

    // All mentions unlinked and unlinked excluded: zero rows.
    AnnotatedPassage u = synth::random_raw_passage(2, 1, 18, 2, 90, 4);
    for (auto& m : u.mentions) m.entity.reset();
    auto marked = insert_entity_markers(u.passage_id, u.article_id, u.tokens, u.mentions);
    CHECK(code_of([&] { build_memory({marked}, params, cfg); }) == ErrorCode::invalid_input);
    CHECK(build_memory({marked}, params, cfg, true).size() == 2);
}

TEST_CASE("memory files round-trip bit-exactly") {
    MentionMemory m = synth::gaussian_memory(57, 4, 8, 21);
    const std::string path = "tome_memtable_test_rt.bin";
    save_memory(path, m);
    MentionMemory back = load_memory(path);
    CHECK(memories_equal(m, back));
    std::remove(path.c_str());
}

TEST_CASE("load_memory_range slices rows without reading the whole table") {
    MentionMemory m = synth::gaussian_memory(40, 3, 6, 22);
    const std::string path = "tome_memtable_test_range.bin";
    save_memory(path, m);

    MentionMemory mid = load_memory_range(path, 10, 25);
    REQUIRE(mid.size() == 15);
    for (std::size_t i = 0; i < 15; ++i) {
        CHECK(mid.entities[i] == m.entities[10 + i]);
        CHECK(mid.passages[i] == m.passages[10 + i]);
        for (int j = 0; j < m.keys.cols; ++j)
            CHECK(mid.keys.at(static_cast<int>(i), j) == m.keys.at(static_cast<int>(10 + i), j));
        for (int j = 0; j < m.values.cols; ++j)
            CHECK(mid.values.at(static_cast<int>(i), j) == m.values.at(static_cast<int>(10 + i), j));
    }

    CHECK(memories_equal(load_memory_range(path, 0, 40), m));
    CHECK(load_memory_range(path, 7, 7).size() == 0);
    CHECK(code_of([&] { load_memory_range(path, 5, 41); }) == ErrorCode::invalid_input);
    CHECK(code_of([&] { load_memory_range(path, 20, 10); }) == ErrorCode::invalid_input);
    std::remove(path.c_str());
}

TEST_CASE("memory loading rejects corrupted files with the right codes") {
    MentionMemory m = synth::gaussian_memory(9, 2, 8, 23);
    const std::string path = "tome_memtable_test_corrupt.bin";
    save_memory(path, m);
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();

    auto with_bytes = [&](std::vector<char> data) {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.close();
        return code_of([&] { load_memory(path); });
    };
    auto mutated = [&](std::size_t offset, char value) {
        std::vector<char> data = bytes;
        data[offset] = value;
        return with_bytes(std::move(data));
    };

    CHECK(mutated(0, 'Z') == ErrorCode::bad_magic);
    CHECK(mutated(8, 3) == ErrorCode::bad_version);
    CHECK(mutated(20, 0) == ErrorCode::dimension_mismatch);  // d_K = 0
    std::vector<char> truncated(bytes.begin(), bytes.end() - 5);
    CHECK(with_bytes(truncated) == ErrorCode::truncated_payload);
    std::vector<char> extended = bytes;
    extended.push_back('q');
    CHECK(with_bytes(extended) == ErrorCode::invalid_input);
    CHECK(code_of([] { load_memory("tome_memtable_test_nope.bin"); }) == ErrorCode::io_error);
    std::remove(path.c_str());

    MentionMemory bad = m;
    bad.entities.pop_back();
    CHECK(code_of([&] { save_memory(path, bad); }) == ErrorCode::dimension_mismatch);
    MentionMemory nan_mem = m;
    nan_mem.keys.at(0, 0) = std::numeric_limits<float>::quiet_NaN();
    CHECK(code_of([&] { save_memory(path, nan_mem); }) == ErrorCode::non_finite);
}

TEST_CASE("shard produces the balanced contiguous partition") {
    MentionMemory m = synth::gaussian_memory(10, 2, 4, 24);
    auto s = shard(m, 3);
    REQUIRE(s.size() == 3);
    CHECK(s[0].size() == 4);
    CHECK(s[1].size() == 3);
    CHECK(s[2].size() == 3);
    CHECK(s[0].lo == 0);
    CHECK(s[1].lo == 4);
    CHECK(s[2].lo == 7);
    CHECK(s[2].hi == 10);
    for (const auto& sh : s) CHECK(sh.offset == sh.lo);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s[i].lo == s[i - 1].hi);

    auto whole = shard(m, 1);
    CHECK(whole.size() == 1);
    CHECK(whole[0].lo == 0);
    CHECK(whole[0].hi == 10);

    auto singles = shard(m, 10);
    CHECK(singles.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(singles[i].lo == i);
        CHECK(singles[i].size() == 1);
    }

    CHECK(code_of([&] { shard(m, 0); }) == ErrorCode::invalid_input);
    CHECK(code_of([&] { shard(m, 11); }) == ErrorCode::invalid_input);
}
