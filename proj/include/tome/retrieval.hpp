#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tome/mat.hpp"
#include "tome/memtable.hpp"

namespace tome {

// Top-K result over global memory rows, sorted by descending score with ties
// broken toward the lower index.
struct RetrievalResult {
    std::vector<std::size_t> indices;
    std::vector<float> scores;

    std::size_t size() const { return indices.size(); }
};

struct SearchParams {
    int local_k = 2;
    int global_k = 128;
    int n_probe = 0;  // IVF clusters probed per shard; 0 = all (exact parity)
    int entity_local_k = 32;  // entity-prediction head: per-shard k, no global cap

    void validate() const {
        require(local_k >= 1, ErrorCode::invalid_input, "local_k must be at least 1");
        require(global_k >= local_k, ErrorCode::invalid_input, "global_k must be at least local_k");
        require(n_probe >= 0, ErrorCode::invalid_input, "n_probe must be non-negative");
        require(entity_local_k >= 1, ErrorCode::invalid_input, "entity_local_k must be at least 1");
    }
};

struct IvfIndex {
    Mat<float> centroids;                           // C x d_K
    std::vector<std::vector<std::uint32_t>> lists;  // local row indices per centroid
    int iterations = 0;                             // Lloyd iterations actually run
    double inertia = 0.0;                           // final assignment inertia
    std::vector<double> inertia_history;            // per-iteration, non-increasing

    std::size_t n_clusters() const { return lists.size(); }
    void validate(std::size_t shard_rows) const;
};

enum class SearchMode { exact, ivf };

// True top-k of <query, key_i> over the shard's rows; returns global indices.
RetrievalResult exact_topk(const float* query, int dim, const MentionMemory& memory, const MemoryShard& shard,
                           int k);

// Lloyd k-means over the shard's key rows with k-means++ seeding, run in
// double precision; posting lists hold the final assignment against the
// rounded float centroids.
IvfIndex build_ivf(const MentionMemory& memory, const MemoryShard& shard, int n_clusters, int iters,
                   std::uint64_t seed);

// Exact top-k restricted to the n_probe clusters whose centroids score
// highest against the query.
RetrievalResult ivf_search(const float* query, int dim, const IvfIndex& index, const MentionMemory& memory,
                           const MemoryShard& shard, int n_probe, int k);

// Per-shard local_k search (exact or IVF) merged into a global top-global_k.
// For ivf mode, indices must hold one IvfIndex per shard.
RetrievalResult sharded_search(const float* query, int dim, const MentionMemory& memory,
                               const std::vector<MemoryShard>& shards, SearchMode mode,
                               const SearchParams& params, const std::vector<IvfIndex>* indices = nullptr);

// Same semantics as sharded_search per row of queries; rows processed in
// parallel with deterministic output.
std::vector<RetrievalResult> batched_search(const Mat<float>& queries, const MentionMemory& memory,
                                            const std::vector<MemoryShard>& shards, SearchMode mode,
                                            const SearchParams& params,
                                            const std::vector<IvfIndex>* indices = nullptr, int threads = 1);

// Fraction of the true top-k (exact, truncated to k) recovered anywhere in
// approx.
double recall_at_k(const RetrievalResult& approx, const RetrievalResult& exact, int k);

// IVF index file: magic "TOMEIVF1", n_clusters u32, d_K u32, centroids, then
// per-cluster list length u32 + u32 local indices.
void save_ivf(const std::string& path, const IvfIndex& index);
IvfIndex load_ivf(const std::string& path);

// Query batches for bench-ann: magic "TOMEQRY1", version u32, Q u64, d u32,
// row-major float32 rows.
void save_queries(const std::string& path, const Mat<float>& queries);
Mat<float> load_queries(const std::string& path);

}  // namespace tome
