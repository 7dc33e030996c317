#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "tome/common.hpp"

namespace tome {

// Little-endian binary readers/writers for the fixed-layout file formats.
// x86-64 only; byte order is asserted once at file open.

inline void check_little_endian() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    require(b == 1, ErrorCode::internal, "big-endian hosts are not supported");
}

class BinWriter {
public:
    explicit BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        check_little_endian();
        require(out_.good(), ErrorCode::io_error, "cannot open for writing: " + path);
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        require(out_.good(), ErrorCode::io_error, "write failed: " + path_);
    }

    template <typename T>
    void pod(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(&v, sizeof(T));
    }

    void magic(const char (&tag)[9]) { bytes(tag, 8); }

    void str(const std::string& s) {
        pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    template <typename T>
    void array(const T* data, std::size_t n) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(data, n * sizeof(T));
    }

    void close() {
        out_.close();
        require(out_.good(), ErrorCode::io_error, "close failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        check_little_endian();
        require(in_.good(), ErrorCode::io_error, "cannot open for reading: " + path);
    }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        require(static_cast<std::size_t>(in_.gcount()) == n, ErrorCode::truncated_payload,
                "unexpected end of file: " + path_);
    }

    template <typename T>
    T pod() {
        static_assert(std::is_trivially_copyable_v<T>);
        T v;
        bytes(&v, sizeof(T));
        return v;
    }

    // Reads and checks an 8-byte magic tag.
    void magic(const char (&tag)[9]) {
        char got[8];
        bytes(got, 8);
        require(std::memcmp(got, tag, 8) == 0, ErrorCode::bad_magic,
                path_ + ": expected magic " + std::string(tag, 8));
    }

    std::string str(std::size_t max_len = 1u << 20) {
        auto n = pod<std::uint32_t>();
        require(n <= max_len, ErrorCode::truncated_payload, "string length out of range: " + path_);
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }

    template <typename T>
    void array(T* data, std::size_t n) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(data, n * sizeof(T));
    }

    void expect_eof() {
        char extra;
        in_.read(&extra, 1);
        require(in_.eof(), ErrorCode::invalid_input, "trailing bytes after payload: " + path_);
    }

    void seek(std::uint64_t pos) {
        in_.clear();
        in_.seekg(static_cast<std::streamoff>(pos));
        require(in_.good(), ErrorCode::truncated_payload, "seek past end of file: " + path_);
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
};

}  // namespace tome
