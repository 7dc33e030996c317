#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tome {

enum class ErrorCode {
    invalid_input,
    bad_magic,
    bad_version,
    truncated_payload,
    dimension_mismatch,
    non_finite,
    empty_result,
    io_error,
    internal,
};

const char* error_code_name(ErrorCode code);

class TomeError : public std::runtime_error {
public:
    TomeError(ErrorCode code, const std::string& msg)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + msg), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw TomeError(code, msg);
}

inline void require(bool cond, ErrorCode code, const std::string& msg) {
    if (!cond) fail(code, msg);
}

using Rng = std::mt19937_64;

// Normal(0, stddev) resampled until within two standard deviations.
template <typename T>
T truncated_normal(Rng& rng, T stddev) {
    std::normal_distribution<double> dist(0.0, 1.0);
    double x = dist(rng);
    while (x < -2.0 || x > 2.0) x = dist(rng);
    return static_cast<T>(x) * stddev;
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull);

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries are a
// function of (n, threads) only, so output assembled per-index is identical for
// any thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace tome
