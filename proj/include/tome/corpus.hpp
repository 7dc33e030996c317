#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "tome/common.hpp"

namespace tome {

// Reserved token ids. Raw corpus tokens must not use the marker ids so that
// stripping markers recovers the original sequence.
struct SpecialTokens {
    std::int32_t pad = 0;
    std::int32_t mask = 1;
    std::int32_t e_start = 2;
    std::int32_t e_end = 3;
};

// Before marker insertion: half-open token span [start, end).
// After insertion: start is the index of the E_start token and end the index
// of the E_end token; markers are part of the mention.
struct Mention {
    std::int32_t start = 0;
    std::int32_t end = 0;
    std::optional<std::uint32_t> entity;

    bool linked() const { return entity.has_value(); }
};

struct AnnotatedPassage {
    std::uint32_t passage_id = 0;
    std::uint32_t article_id = 0;
    std::vector<std::int32_t> tokens;
    std::vector<Mention> mentions;
};

struct MaskingPolicy {
    double mention_mask_rate = 0.20;
    double token_mask_rate = 0.10;
    std::int32_t mask_token_id = 1;
};

struct MlmLabel {
    std::int32_t position = 0;
    std::int32_t token = 0;  // original token id
};

struct MaskedPassage {
    AnnotatedPassage passage;
    std::vector<MlmLabel> labels;
};

// Inserts E_start/E_end around each mention and rewrites spans so they point
// at the marker tokens. Mentions must be sorted by start and non-overlapping.
AnnotatedPassage insert_entity_markers(std::uint32_t passage_id, std::uint32_t article_id,
                                       const std::vector<std::int32_t>& tokens,
                                       const std::vector<Mention>& mentions,
                                       const SpecialTokens& special = {});

// Inverse of insert_entity_markers: drops the marker tokens and restores
// half-open spans over the raw sequence.
AnnotatedPassage strip_entity_markers(const AnnotatedPassage& passage, const SpecialTokens& special = {});

// Whole-mention masking at mention_mask_rate (interior tokens only, never the
// markers) plus independent masking of non-mention tokens at token_mask_rate.
// Deterministic given seed; labels are emitted in position order.
MaskedPassage mask_for_mlm(const AnnotatedPassage& passage, const MaskingPolicy& policy, std::uint64_t seed);

// If the batch-average mention count exceeds max_per_sample, reduces every
// passage to at most max_per_sample mentions, uniformly without replacement.
std::vector<AnnotatedPassage> subsample_mentions(std::vector<AnnotatedPassage> batch, int max_per_sample,
                                                 std::uint64_t seed);

struct Article {
    std::uint32_t article_id = 0;
    std::vector<std::uint32_t> passage_ids;
    std::set<std::uint32_t> entities;
};

struct Cluster {
    std::vector<std::uint32_t> article_ids;
    std::size_t passage_count = 0;
};

// Groups passages of the corpus by article_id; entity set is the union over
// linked mentions. Articles are returned sorted by article_id.
std::vector<Article> collect_articles(const std::vector<AnnotatedPassage>& corpus);

double jaccard(const std::set<std::uint32_t>& a, const std::set<std::uint32_t>& b);

// Greedy batching: seed each cluster with the longest unused article (most
// passages, ties to lowest article_id), then repeatedly add the unused article
// whose entity set has maximal Jaccard similarity with the union entity set of
// the cluster (ties to lowest article_id) until the cluster holds at least
// cluster_size_passages passages or articles run out.
std::vector<Cluster> greedy_cluster(const std::vector<Article>& articles, int cluster_size_passages = 256);

// Corpus files are UTF-8 JSON lines with raw (marker-free) token sequences:
//   {"passage_id":..,"article_id":..,"tokens":[..],
//    "mentions":[{"start":..,"end":..,"entity_id":..}, ..]}
// load_corpus validates records and inserts entity markers unless told not to.
std::vector<AnnotatedPassage> load_corpus(const std::string& path, const SpecialTokens& special = {},
                                          bool insert_markers = true);
void save_corpus(const std::string& path, const std::vector<AnnotatedPassage>& raw_passages);

class EntityVocab {
public:
    EntityVocab() = default;

    static EntityVocab load(const std::string& path);
    void save(const std::string& path) const;

    void add(std::uint32_t id, std::string name);
    bool contains(std::uint32_t id) const { return names_.count(id) > 0; }
    const std::string* name(std::uint32_t id) const;
    std::size_t size() const { return names_.size(); }

private:
    std::unordered_map<std::uint32_t, std::string> names_;
};

// Whitespace tokenizer over a fixed word list; fixture plumbing only. Token id
// = 4 + line index, keeping the reserved special ids free.
class Vocabulary {
public:
    static Vocabulary load(const std::string& path);
    explicit Vocabulary(std::vector<std::string> words = {});

    std::int32_t id(const std::string& word) const;  // invalid_input if unknown
    std::vector<std::int32_t> tokenize(const std::string& text) const;
    std::int32_t size() const;  // including the 4 reserved ids

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::int32_t> index_;
};

// Throws invalid_input unless mention spans are sorted, non-overlapping and
// inside the token range, with raw tokens free of marker ids.
void validate_raw_passage(const AnnotatedPassage& passage, const SpecialTokens& special);

}  // namespace tome
