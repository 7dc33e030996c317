#pragma once

// Synthetic fixtures shared by the test binaries: a planted relational corpus
// whose questions have known answers, and Gaussian-mixture memories for the
// retrieval suites.

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "tome/common.hpp"
#include "tome/corpus.hpp"
#include "tome/memtable.hpp"

namespace synth {

// World of n_entities facts "X r Y" where Y is X's successor under a cyclic
// shift, each fact written out in `variants` filler variations. Questions ask
// "X r ?" with an unlinked answer slot as the final mention; gold[i] is the
// answer entity of questions[i].
struct RelationalWorld {
    std::vector<tome::AnnotatedPassage> train_raw;      // marker-free
    std::vector<tome::AnnotatedPassage> train;          // markers inserted
    std::vector<tome::AnnotatedPassage> train_core;     // train minus question-subject articles
    std::vector<tome::AnnotatedPassage> questions_raw;  // marker-free
    std::vector<tome::AnnotatedPassage> questions;      // markers inserted
    std::set<std::uint32_t> question_subjects;
    std::vector<std::uint32_t> gold;
    int vocab_size = 0;
    std::size_t n_entities = 0;

    std::uint32_t object_of(std::uint32_t subject) const {
        return static_cast<std::uint32_t>(subject % n_entities + 1);
    }
};

inline RelationalWorld make_relational_world(std::size_t n_entities, int n_relations, int variants,
                                             std::size_t n_questions, std::uint64_t seed = 1) {
    const int n_fillers = variants + 3;
    const auto ent_tok = [&](std::uint32_t e) { return static_cast<std::int32_t>(4 + (e - 1)); };
    const auto rel_tok = [&](int r) { return static_cast<std::int32_t>(4 + n_entities + r); };
    const auto fil_tok = [&](int f) { return static_cast<std::int32_t>(4 + n_entities + n_relations + f); };

    RelationalWorld w;
    w.n_entities = n_entities;
    w.vocab_size = static_cast<int>(4 + n_entities + n_relations + n_fillers);

    tome::SpecialTokens special;

    // Questions cover subjects spread over the whole range, deterministically.
    tome::Rng rng(seed);
    std::vector<std::uint32_t> subjects(n_entities);
    for (std::uint32_t x = 1; x <= n_entities; ++x) subjects[x - 1] = x;
    std::shuffle(subjects.begin(), subjects.end(), rng);
    subjects.resize(std::min(n_questions, subjects.size()));
    w.question_subjects.insert(subjects.begin(), subjects.end());

    std::uint32_t pid = 1;
    for (std::uint32_t x = 1; x <= n_entities; ++x) {
        const std::uint32_t y = w.object_of(x);
        const int r = static_cast<int>((x - 1) % n_relations);
        for (int v = 0; v < variants; ++v) {
            tome::AnnotatedPassage p;
            p.passage_id = pid++;
            p.article_id = x;
            p.tokens = {fil_tok(v), ent_tok(x), rel_tok(r), ent_tok(y),
                        fil_tok(static_cast<int>((v + x) % n_fillers))};
            p.mentions = {{1, 2, x}, {3, 4, y}};
            w.train_raw.push_back(p);
            w.train.push_back(tome::insert_entity_markers(p.passage_id, p.article_id, p.tokens,
                                                          p.mentions, special));
            // Facts about question subjects live in the memory corpus only, so
            // answering about them requires the reader to use the memory.
            if (!w.question_subjects.count(x)) w.train_core.push_back(w.train.back());
        }
    }

    std::uint32_t qid = 900000;
    for (std::uint32_t x : subjects) {
        const int r = static_cast<int>((x - 1) % n_relations);
        // Question = a fact template with the object slot masked, so it sits
        // inside the training distribution produced by whole-mention masking.
        const int v = static_cast<int>(x) % variants;
        tome::AnnotatedPassage p;
        p.passage_id = qid;
        p.article_id = qid;
        ++qid;
        p.tokens = {fil_tok(v), ent_tok(x), rel_tok(r), special.mask,
                    fil_tok(static_cast<int>((v + x) % n_fillers))};
        p.mentions = {{1, 2, x}, {3, 4, std::nullopt}};
        w.questions_raw.push_back(p);
        w.questions.push_back(tome::insert_entity_markers(p.passage_id, p.article_id, p.tokens,
                                                          p.mentions, special));
        w.gold.push_back(w.object_of(x));
    }
    return w;
}

// Redundant-fact world: objects are pseudo-random per (subject, variant) and
// each passage is written out `copies` times under distinct passage ids, the
// way a fact recurs across articles in prose. Per-fact recall from trunk
// weights alone is starved (facts scale with variants while sharing capacity)
// but a context-identical sibling of every masked object sits in memory, so
// reading through memory attention is the dependable way to the answer.
inline RelationalWorld make_redundant_world(std::size_t n_entities, int n_relations, int variants,
                                            int copies, std::size_t n_questions,
                                            std::uint64_t seed = 1) {
    const int n_fillers = variants + 3;
    const auto ent_tok = [&](std::uint32_t e) { return static_cast<std::int32_t>(4 + (e - 1)); };
    const auto rel_tok = [&](int r) { return static_cast<std::int32_t>(4 + n_entities + r); };
    const auto fil_tok = [&](int f) { return static_cast<std::int32_t>(4 + n_entities + n_relations + f); };

    RelationalWorld w;
    w.n_entities = n_entities;
    w.vocab_size = static_cast<int>(4 + n_entities + n_relations + n_fillers);

    tome::SpecialTokens special;
    tome::Rng rng(seed);

    // Object table: obj[(x-1)*variants + v], uniform over entities other than x.
    std::vector<std::uint32_t> obj(n_entities * variants);
    std::uniform_int_distribution<std::uint32_t> draw(1, static_cast<std::uint32_t>(n_entities) - 1);
    for (std::uint32_t x = 1; x <= n_entities; ++x)
        for (int v = 0; v < variants; ++v) {
            std::uint32_t y = draw(rng);
            if (y >= x) ++y;
            obj[(x - 1) * variants + v] = y;
        }

    std::vector<std::uint32_t> subjects(n_entities);
    for (std::uint32_t x = 1; x <= n_entities; ++x) subjects[x - 1] = x;
    std::shuffle(subjects.begin(), subjects.end(), rng);
    subjects.resize(std::min(n_questions, subjects.size()));
    w.question_subjects.insert(subjects.begin(), subjects.end());

    std::uint32_t pid = 1;
    for (std::uint32_t x = 1; x <= n_entities; ++x) {
        const int r = static_cast<int>((x - 1) % n_relations);
        for (int v = 0; v < variants; ++v) {
            const std::uint32_t y = obj[(x - 1) * variants + v];
            for (int c = 0; c < copies; ++c) {
                tome::AnnotatedPassage p;
                p.passage_id = pid++;
                p.article_id = x;
                p.tokens = {fil_tok(v), ent_tok(x), rel_tok(r), ent_tok(y),
                            fil_tok(static_cast<int>((v + x) % n_fillers))};
                p.mentions = {{1, 2, x}, {3, 4, y}};
                w.train_raw.push_back(p);
                w.train.push_back(tome::insert_entity_markers(p.passage_id, p.article_id, p.tokens,
                                                              p.mentions, special));
                if (!w.question_subjects.count(x)) w.train_core.push_back(w.train.back());
            }
        }
    }

    std::uint32_t qid = 900000;
    for (std::uint32_t x : subjects) {
        const int r = static_cast<int>((x - 1) % n_relations);
        const int v = static_cast<int>(x) % variants;
        tome::AnnotatedPassage p;
        p.passage_id = qid;
        p.article_id = qid;
        ++qid;
        p.tokens = {fil_tok(v), ent_tok(x), rel_tok(r), special.mask,
                    fil_tok(static_cast<int>((v + x) % n_fillers))};
        p.mentions = {{1, 2, x}, {3, 4, std::nullopt}};
        w.questions_raw.push_back(p);
        w.questions.push_back(tome::insert_entity_markers(p.passage_id, p.article_id, p.tokens,
                                                          p.mentions, special));
        w.gold.push_back(obj[(x - 1) * variants + v]);
    }
    return w;
}

// Named-entity world: each entity's surface form is a two-token name drawn
// from small shared first/last alphabets, so entity identity is compositional
// the way multi-token names are in prose. Linking heads then must encode name
// tokens rather than one opaque code per entity, which is what lets them rank
// rows of entities whose memory rows were never seen in training.
inline RelationalWorld make_named_world(std::size_t n_entities, int n_relations, int variants,
                                        std::size_t n_questions, std::uint64_t seed = 1) {
    const int n_last = 15;  // name grid must cover the entity set exactly
    const int n_first = static_cast<int>((n_entities + n_last - 1) / n_last);
    const int n_fillers = variants + 3;
    const auto rel_tok = [&](int r) { return static_cast<std::int32_t>(4 + n_first + n_last + r); };
    const auto fil_tok = [&](int f) {
        return static_cast<std::int32_t>(4 + n_first + n_last + n_relations + f);
    };

    RelationalWorld w;
    w.n_entities = n_entities;
    w.vocab_size = static_cast<int>(4 + n_first + n_last + n_relations + n_fillers);

    tome::SpecialTokens special;
    tome::Rng rng(seed);

    // Pseudo-random unique (first, last) pair per entity, decorrelated from the
    // relation cycle.
    std::vector<std::uint32_t> code(n_first * n_last);
    for (std::uint32_t i = 0; i < code.size(); ++i) code[i] = i;
    std::shuffle(code.begin(), code.end(), rng);
    std::vector<std::uint32_t> entity_of(code.size());
    for (std::uint32_t e = 1; e <= n_entities; ++e) entity_of[code[e - 1]] = e;
    const auto first_tok = [&](std::uint32_t e) {
        return static_cast<std::int32_t>(4 + code[e - 1] / n_last);
    };
    const auto last_tok = [&](std::uint32_t e) {
        return static_cast<std::int32_t>(4 + n_first + code[e - 1] % n_last);
    };
    // The single-hop relation is regular in name space (same last name, next
    // first name), so linking an answer needs its surface form, not a stored
    // per-pair association; that is what carries over to entities whose rows
    // never joined the training-time memory.
    const auto next_of = [&](std::uint32_t e) {
        const std::uint32_t c = code[e - 1];
        const std::uint32_t shifted = ((c / n_last + 1) % n_first) * n_last + c % n_last;
        return entity_of[shifted];
    };

    std::vector<std::uint32_t> subjects(n_entities);
    for (std::uint32_t x = 1; x <= n_entities; ++x) subjects[x - 1] = x;
    std::shuffle(subjects.begin(), subjects.end(), rng);
    subjects.resize(std::min(n_questions, subjects.size()));
    w.question_subjects.insert(subjects.begin(), subjects.end());

    std::uint32_t pid = 1;
    for (std::uint32_t x = 1; x <= n_entities; ++x) {
        const std::uint32_t y = next_of(x);
        const int r = static_cast<int>((x - 1) % n_relations);
        for (int v = 0; v < variants; ++v) {
            tome::AnnotatedPassage p;
            p.passage_id = pid++;
            p.article_id = x;
            p.tokens = {fil_tok(v),   first_tok(x), last_tok(x), rel_tok(r),
                        first_tok(y), last_tok(y),  fil_tok(static_cast<int>((v + x) % n_fillers))};
            p.mentions = {{1, 3, x}, {4, 6, y}};
            w.train_raw.push_back(p);
            w.train.push_back(tome::insert_entity_markers(p.passage_id, p.article_id, p.tokens,
                                                          p.mentions, special));
            w.train_core.push_back(w.train.back());
        }
    }

    std::uint32_t qid = 900000;
    for (std::uint32_t x : subjects) {
        const int r = static_cast<int>((x - 1) % n_relations);
        const int v = static_cast<int>(x) % variants;
        tome::AnnotatedPassage p;
        p.passage_id = qid;
        p.article_id = qid;
        ++qid;
        p.tokens = {fil_tok(v),   first_tok(x),  last_tok(x), rel_tok(r),
                    special.mask, special.mask,  fil_tok(static_cast<int>((v + x) % n_fillers))};
        p.mentions = {{1, 3, x}, {4, 6, std::nullopt}};
        w.questions_raw.push_back(p);
        w.questions.push_back(tome::insert_entity_markers(p.passage_id, p.article_id, p.tokens,
                                                          p.mentions, special));
        w.gold.push_back(next_of(x));
    }
    return w;
}

// Splits a memory into (kept, dropped) by entity membership in `held`,
// preserving row order within each part.
inline std::pair<tome::MentionMemory, tome::MentionMemory> split_memory_by_entity(
    const tome::MentionMemory& m, const std::set<std::uint32_t>& held) {
    tome::MentionMemory kept, dropped;
    std::vector<std::size_t> keep_rows, drop_rows;
    for (std::size_t i = 0; i < m.size(); ++i)
        (held.count(m.entities[i]) ? drop_rows : keep_rows).push_back(i);
    auto take = [&](const std::vector<std::size_t>& rows) {
        tome::MentionMemory out;
        out.keys = tome::Mat<float>(static_cast<int>(rows.size()), m.keys.cols);
        out.values = tome::Mat<float>(static_cast<int>(rows.size()), m.values.cols);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t r = rows[i];
            std::copy(m.keys.row(static_cast<int>(r)), m.keys.row(static_cast<int>(r)) + m.keys.cols,
                      out.keys.row(static_cast<int>(i)));
            std::copy(m.values.row(static_cast<int>(r)), m.values.row(static_cast<int>(r)) + m.values.cols,
                      out.values.row(static_cast<int>(i)));
            out.entities.push_back(m.entities[r]);
            out.passages.push_back(m.passages[r]);
        }
        return out;
    };
    return {take(keep_rows), take(drop_rows)};
}

inline tome::MentionMemory concat_memory(const tome::MentionMemory& a, const tome::MentionMemory& b) {
    tome::MentionMemory out;
    out.keys = tome::Mat<float>(a.keys.rows + b.keys.rows, a.keys.cols);
    out.values = tome::Mat<float>(a.values.rows + b.values.rows, a.values.cols);
    std::copy(a.keys.a.begin(), a.keys.a.end(), out.keys.a.begin());
    std::copy(b.keys.a.begin(), b.keys.a.end(), out.keys.a.begin() + a.keys.a.size());
    std::copy(a.values.a.begin(), a.values.a.end(), out.values.a.begin());
    std::copy(b.values.a.begin(), b.values.a.end(), out.values.a.begin() + a.values.a.size());
    out.entities = a.entities;
    out.entities.insert(out.entities.end(), b.entities.begin(), b.entities.end());
    out.passages = a.passages;
    out.passages.insert(out.passages.end(), b.passages.begin(), b.passages.end());
    return out;
}

// Gaussian-mixture memory: keys drawn from n_clusters spherical components.
// Entities cycle over n_entities ids starting at 1; passage ids are distinct
// per row unless rows_per_passage > 1.
inline tome::MentionMemory gaussian_memory(std::size_t n_rows, int n_clusters, int key_dim,
                                           std::uint64_t seed, double noise = 0.15,
                                           int value_dim = 4, std::uint32_t n_entities = 50,
                                           std::size_t rows_per_passage = 1) {
    tome::Rng rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::vector<std::vector<double>> centers(n_clusters, std::vector<double>(key_dim));
    for (auto& c : centers)
        for (double& v : c) v = unit(rng);
    tome::MentionMemory m;
    m.keys = tome::Mat<float>(static_cast<int>(n_rows), key_dim);
    m.values = tome::Mat<float>(static_cast<int>(n_rows), value_dim);
    std::uniform_int_distribution<int> pick(0, n_clusters - 1);
    for (std::size_t i = 0; i < n_rows; ++i) {
        const auto& c = centers[pick(rng)];
        for (int j = 0; j < key_dim; ++j)
            m.keys.at(static_cast<int>(i), j) = static_cast<float>(c[j] + noise * unit(rng));
        for (int j = 0; j < value_dim; ++j)
            m.values.at(static_cast<int>(i), j) = static_cast<float>(0.1 * unit(rng));
        m.entities.push_back(static_cast<std::uint32_t>(i % n_entities) + 1);
        m.passages.push_back(static_cast<std::uint32_t>(i / rows_per_passage));
    }
    return m;
}

// Queries drawn the same way as gaussian_memory keys so that the planted
// cluster structure carries over.
inline tome::Mat<float> gaussian_queries(std::size_t n_queries, const tome::MentionMemory& like,
                                         std::uint64_t seed, double jitter = 0.05) {
    tome::Rng rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, like.size() - 1);
    tome::Mat<float> q(static_cast<int>(n_queries), like.keys.cols);
    for (std::size_t i = 0; i < n_queries; ++i) {
        const std::size_t r = pick(rng);
        for (int j = 0; j < q.cols; ++j)
            q.at(static_cast<int>(i), j) =
                like.keys.at(static_cast<int>(r), j) + static_cast<float>(jitter * unit(rng));
    }
    return q;
}

// Marker-free random passage with non-overlapping linked mentions; handy for
// corpus round-trip and memory-build tests.
inline tome::AnnotatedPassage random_raw_passage(std::uint32_t passage_id, std::uint32_t article_id,
                                                 int n_tokens, int n_mentions, int vocab_size,
                                                 std::uint64_t seed, std::uint32_t entity_lo = 1,
                                                 std::uint32_t entity_hi = 40) {
    tome::Rng rng(seed);
    std::uniform_int_distribution<std::int32_t> tok(4, vocab_size - 1);
    std::uniform_int_distribution<std::uint32_t> ent(entity_lo, entity_hi);
    tome::AnnotatedPassage p;
    p.passage_id = passage_id;
    p.article_id = article_id;
    p.tokens.resize(n_tokens);
    for (auto& t : p.tokens) t = tok(rng);
    // Lay mentions into disjoint slots of width floor(n/n_mentions).
    const int slot = n_tokens / std::max(1, n_mentions);
    for (int i = 0; i < n_mentions; ++i) {
        const int lo = i * slot;
        std::uniform_int_distribution<int> start(lo, lo + slot - 2);
        const int s = start(rng);
        std::uniform_int_distribution<int> len(1, std::min(3, lo + slot - s));
        p.mentions.push_back({s, s + len(rng), ent(rng)});
    }
    return p;
}

}  // namespace synth
