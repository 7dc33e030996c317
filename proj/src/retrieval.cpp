#include "tome/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "tome/binio.hpp"

namespace tome {

namespace {

// Candidate ordering: higher score first, then lower global index.
inline bool better(float score_a, std::size_t idx_a, float score_b, std::size_t idx_b) {
    if (score_a != score_b) return score_a > score_b;
    return idx_a < idx_b;
}

// Fixed-capacity top-k accumulator over (score, global index) pairs kept as a
// min-heap whose root is the currently weakest kept candidate.
class TopK {
public:
    explicit TopK(int k) : k_(static_cast<std::size_t>(k)) { heap_.reserve(k_); }

    void offer(float score, std::size_t index) {
        if (heap_.size() < k_) {
            heap_.push_back({score, index});
            std::push_heap(heap_.begin(), heap_.end(), cmp);
        } else if (better(score, index, heap_.front().score, heap_.front().index)) {
            std::pop_heap(heap_.begin(), heap_.end(), cmp);
            heap_.back() = {score, index};
            std::push_heap(heap_.begin(), heap_.end(), cmp);
        }
    }

    RetrievalResult take() {
        std::sort(heap_.begin(), heap_.end(),
                  [](const Entry& a, const Entry& b) { return better(a.score, a.index, b.score, b.index); });
        RetrievalResult out;
        out.indices.reserve(heap_.size());
        out.scores.reserve(heap_.size());
        for (const Entry& e : heap_) {
            out.indices.push_back(e.index);
            out.scores.push_back(e.score);
        }
        return out;
    }

private:
    struct Entry {
        float score;
        std::size_t index;
    };
    // std::make_heap keeps the *largest* element by cmp at the root, so cmp
    // must order "better" entries below worse ones.
    static bool cmp(const Entry& a, const Entry& b) {
        return better(a.score, a.index, b.score, b.index);
    }

    std::size_t k_;
    std::vector<Entry> heap_;
};

double sq_dist(const float* x, const double* c, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        double diff = static_cast<double>(x[j]) - c[j];
        acc += diff * diff;
    }
    return acc;
}

double sq_dist_f(const float* x, const float* c, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) {
        double diff = static_cast<double>(x[j]) - static_cast<double>(c[j]);
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

void IvfIndex::validate(std::size_t shard_rows) const {
    require(static_cast<std::size_t>(centroids.rows) == lists.size(), ErrorCode::dimension_mismatch,
            "centroid count does not match posting list count");
    require(centroids.finite(), ErrorCode::non_finite, "centroids contain non-finite values");
    std::size_t total = 0;
    for (const auto& list : lists) total += list.size();
    require(total == shard_rows, ErrorCode::invalid_input, "posting lists do not partition the shard");
}

RetrievalResult exact_topk(const float* query, int dim, const MentionMemory& memory, const MemoryShard& shard,
                           int k) {
    require(k >= 1, ErrorCode::invalid_input, "k must be at least 1");
    require(dim == memory.keys.cols, ErrorCode::dimension_mismatch,
            "query dimension " + std::to_string(dim) + " does not match key dimension " +
                std::to_string(memory.keys.cols));
    require(shard.hi <= memory.size() && shard.lo <= shard.hi, ErrorCode::invalid_input,
            "shard range outside memory");
    TopK top(k);
    for (std::size_t i = shard.lo; i < shard.hi; ++i) {
        float score = dot(query, memory.keys.row(static_cast<int>(i)), dim);
        top.offer(score, shard.offset + (i - shard.lo));
    }
    return top.take();
}

IvfIndex build_ivf(const MentionMemory& memory, const MemoryShard& shard, int n_clusters, int iters,
                   std::uint64_t seed) {
    const std::size_t n = shard.size();
    require(n > 0, ErrorCode::invalid_input, "cannot build an IVF index over an empty shard");
    require(n_clusters >= 1 && static_cast<std::size_t>(n_clusters) <= n, ErrorCode::invalid_input,
            "n_clusters must be in [1, " + std::to_string(n) + "]");
    require(iters >= 0, ErrorCode::invalid_input, "iters must be non-negative");
    const int d = memory.keys.cols;
    auto key_row = [&](std::size_t local) { return memory.keys.row(static_cast<int>(shard.lo + local)); };

    // k-means++ seeding with squared-distance sampling, all in double.
    Rng rng(seed);
    Mat<double> centers(n_clusters, d);
    std::vector<double> dist2(n, 0.0);
    {
        std::uniform_int_distribution<std::size_t> first(0, n - 1);
        std::size_t pick = first(rng);
        for (int j = 0; j < d; ++j) centers.at(0, j) = key_row(pick)[j];
        for (std::size_t i = 0; i < n; ++i) dist2[i] = sq_dist(key_row(i), centers.row(0), d);
        for (int c = 1; c < n_clusters; ++c) {
            double total = 0.0;
            for (double v : dist2) total += v;
            std::size_t chosen;
            if (total <= 0.0) {
                std::uniform_int_distribution<std::size_t> any(0, n - 1);
                chosen = any(rng);
            } else {
                std::uniform_real_distribution<double> u(0.0, total);
                double target = u(rng);
                double acc = 0.0;
                chosen = n - 1;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += dist2[i];
                    if (acc >= target) {
                        chosen = i;
                        break;
                    }
                }
            }
            for (int j = 0; j < d; ++j) centers.at(c, j) = key_row(chosen)[j];
            for (std::size_t i = 0; i < n; ++i)
                dist2[i] = std::min(dist2[i], sq_dist(key_row(i), centers.row(c), d));
        }
    }

    // Lloyd iterations: assign to nearest center (ties to lower cluster id),
    // recompute means; empty clusters keep their previous center.
    std::vector<int> assign(n, -1);
    IvfIndex index;
    auto assign_pass = [&](std::vector<int>& out) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(key_row(i), centers.row(0), d);
            for (int c = 1; c < n_clusters; ++c) {
                double dd = sq_dist(key_row(i), centers.row(c), d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            out[i] = best;
            inertia += best_d;
        }
        return inertia;
    };

    std::vector<int> next(n, -1);
    for (int it = 0; it < iters; ++it) {
        double inertia = assign_pass(next);
        index.inertia_history.push_back(inertia);
        index.iterations = it + 1;
        bool changed = (next != assign);
        assign.swap(next);
        if (!changed) break;  // fixpoint: centers already are the means of assign
        Mat<double> sums(n_clusters, d);
        std::vector<std::size_t> counts(n_clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            double* srow = sums.row(assign[i]);
            const float* x = key_row(i);
            for (int j = 0; j < d; ++j) srow[j] += x[j];
            ++counts[assign[i]];
        }
        for (int c = 0; c < n_clusters; ++c) {
            if (counts[c] == 0) continue;
            for (int j = 0; j < d; ++j) centers.at(c, j) = sums.at(c, j) / static_cast<double>(counts[c]);
        }
    }

    // Final posting lists are the assignment against the rounded float
    // centroids, so the serialized index is self-consistent.
    index.centroids = centers.cast<float>();
    index.lists.assign(n_clusters, {});
    double final_inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int best = 0;
        double best_d = sq_dist_f(key_row(i), index.centroids.row(0), d);
        for (int c = 1; c < n_clusters; ++c) {
            double dd = sq_dist_f(key_row(i), index.centroids.row(c), d);
            if (dd < best_d) {
                best_d = dd;
                best = c;
            }
        }
        index.lists[best].push_back(static_cast<std::uint32_t>(i));
        final_inertia += best_d;
    }
    index.inertia = final_inertia;
    index.validate(n);
    return index;
}

RetrievalResult ivf_search(const float* query, int dim, const IvfIndex& index, const MentionMemory& memory,
                           const MemoryShard& shard, int n_probe, int k) {
    require(k >= 1, ErrorCode::invalid_input, "k must be at least 1");
    require(dim == memory.keys.cols && dim == index.centroids.cols, ErrorCode::dimension_mismatch,
            "query dimension does not match index");
    const int n_clusters = static_cast<int>(index.n_clusters());
    require(n_probe >= 1 && n_probe <= n_clusters, ErrorCode::invalid_input,
            "n_probe must be in [1, " + std::to_string(n_clusters) + "]");

    // Top-n_probe centroids by dot product, ties toward the lower cluster id.
    TopK probes(n_probe);
    for (int c = 0; c < n_clusters; ++c)
        probes.offer(dot(query, index.centroids.row(c), dim), static_cast<std::size_t>(c));
    RetrievalResult chosen = probes.take();

    TopK top(k);
    for (std::size_t ci : chosen.indices) {
        for (std::uint32_t local : index.lists[ci]) {
            float score = dot(query, memory.keys.row(static_cast<int>(shard.lo + local)), dim);
            top.offer(score, shard.offset + local);
        }
    }
    return top.take();
}

RetrievalResult sharded_search(const float* query, int dim, const MentionMemory& memory,
                               const std::vector<MemoryShard>& shards, SearchMode mode,
                               const SearchParams& params, const std::vector<IvfIndex>* indices) {
    params.validate();
    require(!shards.empty(), ErrorCode::invalid_input, "no shards to search");
    if (mode == SearchMode::ivf)
        require(indices && indices->size() == shards.size(), ErrorCode::invalid_input,
                "ivf mode needs one index per shard");
    std::vector<RetrievalResult> locals(shards.size());
    for (std::size_t s = 0; s < shards.size(); ++s) {
        if (mode == SearchMode::exact) {
            locals[s] = exact_topk(query, dim, memory, shards[s], params.local_k);
        } else {
            const IvfIndex& idx = (*indices)[s];
            int n_probe = params.n_probe == 0 ? static_cast<int>(idx.n_clusters())
                                              : std::min<int>(params.n_probe, static_cast<int>(idx.n_clusters()));
            locals[s] = ivf_search(query, dim, idx, memory, shards[s], n_probe, params.local_k);
        }
    }
    TopK merged(params.global_k);
    for (const auto& r : locals)
        for (std::size_t i = 0; i < r.size(); ++i) merged.offer(r.scores[i], r.indices[i]);
    return merged.take();
}

std::vector<RetrievalResult> batched_search(const Mat<float>& queries, const MentionMemory& memory,
                                            const std::vector<MemoryShard>& shards, SearchMode mode,
                                            const SearchParams& params, const std::vector<IvfIndex>* indices,
                                            int threads) {
    std::vector<RetrievalResult> out(queries.rows);
    parallel_for(static_cast<std::size_t>(queries.rows), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i)
            out[i] = sharded_search(queries.row(static_cast<int>(i)), queries.cols, memory, shards, mode,
                                    params, indices);
    });
    return out;
}

double recall_at_k(const RetrievalResult& approx, const RetrievalResult& exact, int k) {
    require(k >= 1, ErrorCode::invalid_input, "k must be at least 1");
    require(static_cast<std::size_t>(k) <= exact.size(), ErrorCode::invalid_input,
            "k exceeds the exact result size");
    std::unordered_set<std::size_t> got(approx.indices.begin(), approx.indices.end());
    int hit = 0;
    for (int i = 0; i < k; ++i) hit += got.count(exact.indices[i]) ? 1 : 0;
    return static_cast<double>(hit) / k;
}

namespace {
constexpr char kIvfMagic[9] = "TOMEIVF1";
}

void save_ivf(const std::string& path, const IvfIndex& index) {
    require(static_cast<std::size_t>(index.centroids.rows) == index.lists.size(),
            ErrorCode::dimension_mismatch, "centroid count does not match posting list count");
    BinWriter w(path);
    w.magic(kIvfMagic);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(index.lists.size()));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(index.centroids.cols));
    w.array(index.centroids.a.data(), index.centroids.a.size());
    for (const auto& list : index.lists) {
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(list.size()));
        w.array(list.data(), list.size());
    }
    w.close();
}

namespace {
constexpr char kQueryMagic[9] = "TOMEQRY1";
constexpr std::uint32_t kQueryVersion = 1;
}  // namespace

void save_queries(const std::string& path, const Mat<float>& queries) {
    require(queries.rows >= 1 && queries.cols >= 1, ErrorCode::invalid_input, "empty query matrix");
    require(queries.finite(), ErrorCode::non_finite, "queries contain non-finite values");
    BinWriter w(path);
    w.magic(kQueryMagic);
    w.pod<std::uint32_t>(kQueryVersion);
    w.pod<std::uint64_t>(static_cast<std::uint64_t>(queries.rows));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(queries.cols));
    w.array(queries.a.data(), queries.a.size());
    w.close();
}

Mat<float> load_queries(const std::string& path) {
    BinReader r(path);
    r.magic(kQueryMagic);
    auto version = r.pod<std::uint32_t>();
    require(version == kQueryVersion, ErrorCode::bad_version,
            path + ": unsupported query file version " + std::to_string(version));
    auto rows = r.pod<std::uint64_t>();
    auto cols = r.pod<std::uint32_t>();
    require(rows >= 1 && cols >= 1, ErrorCode::dimension_mismatch, path + ": empty query matrix");
    Mat<float> q(static_cast<int>(rows), static_cast<int>(cols));
    r.array(q.a.data(), q.a.size());
    r.expect_eof();
    require(q.finite(), ErrorCode::non_finite, path + ": queries contain non-finite values");
    return q;
}

IvfIndex load_ivf(const std::string& path) {
    BinReader r(path);
    r.magic(kIvfMagic);
    auto n_clusters = r.pod<std::uint32_t>();
    auto d = r.pod<std::uint32_t>();
    require(n_clusters >= 1, ErrorCode::invalid_input, path + ": empty index");
    require(d >= 1, ErrorCode::dimension_mismatch, path + ": key dimension must be at least 1");
    IvfIndex index;
    index.centroids = Mat<float>(static_cast<int>(n_clusters), static_cast<int>(d));
    r.array(index.centroids.a.data(), index.centroids.a.size());
    require(index.centroids.finite(), ErrorCode::non_finite, path + ": centroids contain non-finite values");
    index.lists.resize(n_clusters);
    for (auto& list : index.lists) {
        auto len = r.pod<std::uint32_t>();
        list.resize(len);
        if (len) r.array(list.data(), list.size());
    }
    r.expect_eof();
    return index;
}

}  // namespace tome
