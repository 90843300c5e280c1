#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cllmrec {

// 64-bit FNV-1a. Used for cache keys, stub embeddings and manifest hashes.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// 128-bit digest as hex, built from two independent FNV passes.
std::string content_digest(std::string_view s);

std::string to_hex(std::uint64_t x);

// Splits on any run of whitespace; never returns empty tokens.
std::vector<std::string> split_tokens(std::string_view text);

std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view content);

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace cllmrec
