#include "tome/tome_model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace tome {

EntityDistribution entity_prob(const float* z, int dim, const MentionMemory& memory,
                               const std::vector<MemoryShard>& shards, const SearchParams& params,
                               std::optional<std::uint32_t> exclude_passage) {
    params.validate();
    require(!shards.empty(), ErrorCode::invalid_input, "no shards to search");

    // Per-shard top entity_local_k, aggregated without a global cap.
    std::vector<std::size_t> rows;
    std::vector<float> scores;
    for (const auto& s : shards) {
        if (s.size() == 0) continue;
        RetrievalResult r = exact_topk(z, dim, memory, s, params.entity_local_k);
        for (std::size_t j = 0; j < r.size(); ++j) {
            const std::size_t row = r.indices[j];
            if (memory.entities[row] == kUnlinkedEntity) continue;
            if (exclude_passage && memory.passages[row] == *exclude_passage) continue;
            rows.push_back(row);
            scores.push_back(r.scores[j]);
        }
    }
    EntityDistribution dist;
    if (rows.empty()) return dist;

    double mx = scores[0];
    for (float s : scores) mx = std::max(mx, static_cast<double>(s));
    std::vector<double> w(rows.size());
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        w[i] = std::exp(static_cast<double>(scores[i]) - mx);
        total += w[i];
    }
    std::map<std::uint32_t, double> grouped;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        w[i] /= total;
        grouped[memory.entities[rows[i]]] += w[i];
    }
    dist.rows = std::move(rows);
    dist.weights = std::move(w);
    dist.entities.reserve(grouped.size());
    dist.probs.reserve(grouped.size());
    for (const auto& [entity, p] : grouped) {
        dist.entities.push_back(entity);
        dist.probs.push_back(p);
    }
    return dist;
}

std::uint32_t predict_entity(const EntityDistribution& dist) {
    require(!dist.empty(), ErrorCode::empty_result, "empty entity distribution");
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.entities.size(); ++i)
        if (dist.probs[i] > dist.probs[best]) best = i;  // ties keep the lower entity id
    return dist.entities[best];
}

}  // namespace tome
