#include "tome/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace tome {

using nlohmann::json;

void validate_raw_passage(const AnnotatedPassage& p, const SpecialTokens& special) {
    const auto T = static_cast<std::int32_t>(p.tokens.size());
    for (std::int32_t tok : p.tokens) {
        require(tok != special.e_start && tok != special.e_end, ErrorCode::invalid_input,
                "raw tokens may not contain entity marker ids (passage " + std::to_string(p.passage_id) + ")");
    }
    std::int32_t prev_end = 0;
    for (const Mention& m : p.mentions) {
        require(m.start < m.end, ErrorCode::invalid_input,
                "mention span must satisfy start < end (passage " + std::to_string(p.passage_id) + ")");
        require(m.start >= 0 && m.end <= T, ErrorCode::invalid_input,
                "mention span out of range (passage " + std::to_string(p.passage_id) + ")");
        require(m.start >= prev_end, ErrorCode::invalid_input,
                "mentions must be sorted and non-overlapping (passage " + std::to_string(p.passage_id) + ")");
        prev_end = m.end;
    }
}

AnnotatedPassage insert_entity_markers(std::uint32_t passage_id, std::uint32_t article_id,
                                       const std::vector<std::int32_t>& tokens,
                                       const std::vector<Mention>& mentions, const SpecialTokens& special) {
    AnnotatedPassage raw{passage_id, article_id, tokens, mentions};
    validate_raw_passage(raw, special);

    AnnotatedPassage out;
    out.passage_id = passage_id;
    out.article_id = article_id;
    out.tokens.reserve(tokens.size() + 2 * mentions.size());
    out.mentions.reserve(mentions.size());

    std::int32_t cursor = 0;
    for (const Mention& m : mentions) {
        out.tokens.insert(out.tokens.end(), tokens.begin() + cursor, tokens.begin() + m.start);
        Mention marked = m;
        marked.start = static_cast<std::int32_t>(out.tokens.size());
        out.tokens.push_back(special.e_start);
        out.tokens.insert(out.tokens.end(), tokens.begin() + m.start, tokens.begin() + m.end);
        marked.end = static_cast<std::int32_t>(out.tokens.size());
        out.tokens.push_back(special.e_end);
        out.mentions.push_back(marked);
        cursor = m.end;
    }
    out.tokens.insert(out.tokens.end(), tokens.begin() + cursor, tokens.end());
    return out;
}

AnnotatedPassage strip_entity_markers(const AnnotatedPassage& passage, const SpecialTokens& special) {
    AnnotatedPassage out;
    out.passage_id = passage.passage_id;
    out.article_id = passage.article_id;
    out.tokens.reserve(passage.tokens.size());

    // raw index of every kept token, by scanning around the known marker slots
    std::vector<std::int32_t> raw_index(passage.tokens.size(), -1);
    std::int32_t raw = 0;
    for (std::size_t i = 0; i < passage.tokens.size(); ++i) {
        if (passage.tokens[i] == special.e_start || passage.tokens[i] == special.e_end) continue;
        raw_index[i] = raw++;
        out.tokens.push_back(passage.tokens[i]);
    }
    for (const Mention& m : passage.mentions) {
        require(m.start >= 0 && m.end < static_cast<std::int32_t>(passage.tokens.size()) && m.start < m.end,
                ErrorCode::invalid_input, "marked mention span out of range");
        require(passage.tokens[m.start] == special.e_start && passage.tokens[m.end] == special.e_end,
                ErrorCode::invalid_input, "mention span does not point at marker tokens");
        Mention rawm = m;
        rawm.start = raw_index[m.start + 1];
        rawm.end = raw_index[m.end - 1] + 1;
        out.mentions.push_back(rawm);
    }
    return out;
}

MaskedPassage mask_for_mlm(const AnnotatedPassage& passage, const MaskingPolicy& policy, std::uint64_t seed) {
    require(policy.mention_mask_rate >= 0.0 && policy.mention_mask_rate <= 1.0, ErrorCode::invalid_input,
            "mention_mask_rate must be in [0,1]");
    require(policy.token_mask_rate >= 0.0 && policy.token_mask_rate <= 1.0, ErrorCode::invalid_input,
            "token_mask_rate must be in [0,1]");

    MaskedPassage out;
    out.passage = passage;
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto T = static_cast<std::int32_t>(passage.tokens.size());
    std::vector<bool> in_mention(T, false);
    for (const Mention& m : passage.mentions)
        for (std::int32_t i = m.start; i <= m.end; ++i) in_mention[i] = true;

    // Draw order is fixed: one decision per mention, then one per non-mention
    // token in position order.
    std::vector<bool> masked(T, false);
    for (const Mention& m : passage.mentions) {
        if (unit(rng) < policy.mention_mask_rate) {
            for (std::int32_t i = m.start + 1; i < m.end; ++i) masked[i] = true;
        }
    }
    for (std::int32_t i = 0; i < T; ++i) {
        if (!in_mention[i] && unit(rng) < policy.token_mask_rate) masked[i] = true;
    }
    for (std::int32_t i = 0; i < T; ++i) {
        if (!masked[i]) continue;
        out.labels.push_back({i, passage.tokens[i]});
        out.passage.tokens[i] = policy.mask_token_id;
    }
    return out;
}

std::vector<AnnotatedPassage> subsample_mentions(std::vector<AnnotatedPassage> batch, int max_per_sample,
                                                 std::uint64_t seed) {
    require(max_per_sample >= 1, ErrorCode::invalid_input, "max_per_sample must be >= 1");
    if (batch.empty()) return batch;

    std::size_t total = 0;
    for (const auto& p : batch) total += p.mentions.size();
    double average = static_cast<double>(total) / static_cast<double>(batch.size());
    if (average <= static_cast<double>(max_per_sample)) return batch;

    Rng rng(seed);
    for (auto& p : batch) {
        const auto n = static_cast<int>(p.mentions.size());
        if (n <= max_per_sample) continue;
        // partial Fisher-Yates, then restore original order
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        for (int i = 0; i < max_per_sample; ++i) {
            std::uniform_int_distribution<int> pick(i, n - 1);
            std::swap(idx[i], idx[pick(rng)]);
        }
        idx.resize(max_per_sample);
        std::sort(idx.begin(), idx.end());
        std::vector<Mention> kept;
        kept.reserve(max_per_sample);
        for (int i : idx) kept.push_back(p.mentions[i]);
        p.mentions = std::move(kept);
    }
    return batch;
}

std::vector<Article> collect_articles(const std::vector<AnnotatedPassage>& corpus) {
    std::unordered_map<std::uint32_t, Article> by_id;
    for (const auto& p : corpus) {
        Article& art = by_id[p.article_id];
        art.article_id = p.article_id;
        art.passage_ids.push_back(p.passage_id);
        for (const Mention& m : p.mentions)
            if (m.linked()) art.entities.insert(*m.entity);
    }
    std::vector<Article> out;
    out.reserve(by_id.size());
    for (auto& [id, art] : by_id) out.push_back(std::move(art));
    std::sort(out.begin(), out.end(),
              [](const Article& a, const Article& b) { return a.article_id < b.article_id; });
    return out;
}

double jaccard(const std::set<std::uint32_t>& a, const std::set<std::uint32_t>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (std::uint32_t x : a) inter += b.count(x);
    std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<Cluster> greedy_cluster(const std::vector<Article>& articles, int cluster_size_passages) {
    require(cluster_size_passages >= 1, ErrorCode::invalid_input, "cluster_size_passages must be >= 1");
    for (const auto& a : articles)
        require(!a.passage_ids.empty(), ErrorCode::invalid_input,
                "article " + std::to_string(a.article_id) + " has no passages");

    std::vector<bool> used(articles.size(), false);
    std::size_t remaining = articles.size();
    std::vector<Cluster> clusters;

    while (remaining > 0) {
        // seed: most passages, ties to lowest article_id (articles are sorted by id)
        std::size_t seed_idx = articles.size();
        for (std::size_t i = 0; i < articles.size(); ++i) {
            if (used[i]) continue;
            if (seed_idx == articles.size() ||
                articles[i].passage_ids.size() > articles[seed_idx].passage_ids.size())
                seed_idx = i;
        }
        Cluster cluster;
        std::set<std::uint32_t> pool = articles[seed_idx].entities;
        cluster.article_ids.push_back(articles[seed_idx].article_id);
        cluster.passage_count = articles[seed_idx].passage_ids.size();
        used[seed_idx] = true;
        --remaining;

        while (remaining > 0 && cluster.passage_count < static_cast<std::size_t>(cluster_size_passages)) {
            std::size_t best = articles.size();
            double best_score = -1.0;
            for (std::size_t i = 0; i < articles.size(); ++i) {
                if (used[i]) continue;
                double score = jaccard(articles[i].entities, pool);
                if (score > best_score) {
                    best_score = score;
                    best = i;
                }
            }
            const Article& add = articles[best];
            cluster.article_ids.push_back(add.article_id);
            cluster.passage_count += add.passage_ids.size();
            pool.insert(add.entities.begin(), add.entities.end());
            used[best] = true;
            --remaining;
        }
        clusters.push_back(std::move(cluster));
    }
    return clusters;
}

std::vector<AnnotatedPassage> load_corpus(const std::string& path, const SpecialTokens& special,
                                          bool insert_markers) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io_error, "cannot open corpus file " + path);

    std::vector<AnnotatedPassage> corpus;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorCode::invalid_input, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        AnnotatedPassage p;
        try {
            p.passage_id = rec.at("passage_id").get<std::uint32_t>();
            p.article_id = rec.at("article_id").get<std::uint32_t>();
            p.tokens = rec.at("tokens").get<std::vector<std::int32_t>>();
            if (rec.contains("mentions")) {
                for (const auto& jm : rec.at("mentions")) {
                    Mention m;
                    m.start = jm.at("start").get<std::int32_t>();
                    m.end = jm.at("end").get<std::int32_t>();
                    if (jm.contains("entity_id") && !jm.at("entity_id").is_null())
                        m.entity = jm.at("entity_id").get<std::uint32_t>();
                    p.mentions.push_back(m);
                }
            }
        } catch (const json::exception& e) {
            fail(ErrorCode::invalid_input, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (insert_markers) {
            corpus.push_back(insert_entity_markers(p.passage_id, p.article_id, p.tokens, p.mentions, special));
        } else {
            validate_raw_passage(p, special);
            corpus.push_back(std::move(p));
        }
    }
    return corpus;
}

void save_corpus(const std::string& path, const std::vector<AnnotatedPassage>& raw_passages) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
    for (const auto& p : raw_passages) {
        json rec;
        rec["passage_id"] = p.passage_id;
        rec["article_id"] = p.article_id;
        rec["tokens"] = p.tokens;
        json mentions = json::array();
        for (const Mention& m : p.mentions) {
            json jm;
            jm["start"] = m.start;
            jm["end"] = m.end;
            if (m.entity) jm["entity_id"] = *m.entity;
            mentions.push_back(jm);
        }
        rec["mentions"] = mentions;
        out << rec.dump() << "\n";
    }
    require(out.good(), ErrorCode::io_error, "write failed for " + path);
}

EntityVocab EntityVocab::load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io_error, "cannot open entity vocabulary " + path);
    EntityVocab vocab;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        require(tab != std::string::npos, ErrorCode::invalid_input,
                path + ":" + std::to_string(lineno) + ": expected '<entity_id>\\t<name>'");
        std::uint32_t id = 0;
        try {
            id = static_cast<std::uint32_t>(std::stoul(line.substr(0, tab)));
        } catch (const std::exception&) {
            fail(ErrorCode::invalid_input, path + ":" + std::to_string(lineno) + ": bad entity id");
        }
        vocab.add(id, line.substr(tab + 1));
    }
    return vocab;
}

void EntityVocab::save(const std::string& path) const {
    std::ofstream out(path);
    require(out.good(), ErrorCode::io_error, "cannot open " + path + " for writing");
    std::vector<std::uint32_t> ids;
    ids.reserve(names_.size());
    for (const auto& [id, name] : names_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (std::uint32_t id : ids) out << id << '\t' << names_.at(id) << '\n';
}

void EntityVocab::add(std::uint32_t id, std::string name) { names_[id] = std::move(name); }

const std::string* EntityVocab::name(std::uint32_t id) const {
    auto it = names_.find(id);
    return it == names_.end() ? nullptr : &it->second;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::io_error, "cannot open vocabulary " + path);
    std::vector<std::string> words;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) words.push_back(line);
    return Vocabulary(std::move(words));
}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    for (std::size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = static_cast<std::int32_t>(4 + i);
}

std::int32_t Vocabulary::id(const std::string& word) const {
    auto it = index_.find(word);
    require(it != index_.end(), ErrorCode::invalid_input, "unknown word: " + word);
    return it->second;
}

std::vector<std::int32_t> Vocabulary::tokenize(const std::string& text) const {
    std::vector<std::int32_t> out;
    std::istringstream ss(text);
    std::string word;
    while (ss >> word) out.push_back(id(word));
    return out;
}

std::int32_t Vocabulary::size() const { return static_cast<std::int32_t>(4 + words_.size()); }

}  // namespace tome
