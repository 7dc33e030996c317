#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tome/corpus.hpp"
#include "tome/encoder.hpp"
#include "tome/mat.hpp"

namespace tome {

// Entity id stored for unlinked mentions when they are kept in memory.
constexpr std::uint32_t kUnlinkedEntity = 0xffffffffu;

// Immutable table of mention encodings. Row i of every column describes the
// same corpus mention; passage ids provide provenance for same-passage masking.
struct MentionMemory {
    Mat<float> keys;    // N x d_K
    Mat<float> values;  // N x d_V
    std::vector<std::uint32_t> entities;  // N
    std::vector<std::uint32_t> passages;  // N

    std::size_t size() const { return entities.size(); }
    void validate() const;
};

// Contiguous row range [lo, hi) of a memory; offset maps local row 0 back to
// the global index (equal to lo when sharding a whole in-host memory).
struct MemoryShard {
    std::size_t lo = 0;
    std::size_t hi = 0;
    std::size_t offset = 0;

    std::size_t size() const { return hi - lo; }
};

// Encodes every linked mention of the corpus with the key and value span
// heads. Row order is corpus order: ascending passage_id, then span start.
// Unlinked mentions are skipped unless include_unlinked is set, in which case
// they carry kUnlinkedEntity.
MentionMemory build_memory(const std::vector<AnnotatedPassage>& corpus, const EncoderParams<float>& params,
                           const EncoderConfig& cfg, bool include_unlinked = false, int threads = 1);

void save_memory(const std::string& path, const MentionMemory& m);
MentionMemory load_memory(const std::string& path);
// Loads only rows [lo, hi); pair the result with offset = lo for global ids.
MentionMemory load_memory_range(const std::string& path, std::size_t lo, std::size_t hi);

// Balanced contiguous partition of [0, N); sizes differ by at most one, larger
// shards first.
std::vector<MemoryShard> shard(const MentionMemory& m, int n_shards);

}  // namespace tome
