#include "tome/common.hpp"

#include <algorithm>

namespace tome {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::invalid_input: return "invalid input";
        case ErrorCode::bad_magic: return "bad magic";
        case ErrorCode::bad_version: return "bad version";
        case ErrorCode::truncated_payload: return "truncated payload";
        case ErrorCode::dimension_mismatch: return "dimension mismatch";
        case ErrorCode::non_finite: return "non-finite value";
        case ErrorCode::empty_result: return "empty result";
        case ErrorCode::io_error: return "io error";
        case ErrorCode::internal: return "internal error";
    }
    return "unknown error";
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn) {
    if (n == 0) return;
    std::size_t workers = std::max(1, threads);
    workers = std::min(workers, n);
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace tome
