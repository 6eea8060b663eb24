#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace armor {

/// Error with a stable machine-readable code alongside the human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

// 64-bit FNV-1a. The seed is XORed into the offset basis so distinct
// hash roles (fingerprints, RNG keys, scenario keys) do not collide.
inline uint64_t fnv1a64(std::string_view data, uint64_t seed = 0) {
    uint64_t h = 14695981039346656037ull ^ seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Calls fn(line_no, line) for every non-empty line; line_no starts at 1.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(int, const std::string&)>& fn);

std::string to_hex64(uint64_t v);

}  // namespace armor
