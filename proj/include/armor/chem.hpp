#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "armor/domain.hpp"
#include "armor/util.hpp"

namespace armor {

/// Ordered SMILES tokens; concatenating them reproduces the input exactly.
struct TokenStream {
    std::vector<std::string> tokens;

    std::string join() const {
        std::string out;
        for (const auto& t : tokens) out += t;
        return out;
    }
};

/// Greedy longest-match SMILES tokenizer. Bracket atoms come out as single
/// tokens, Cl/Br before C/B, balanced parentheses enforced.
TokenStream tokenize_smiles(std::string_view s);

// Seed for the shingle hash; fixed so fingerprints are stable across runs
// and platforms.
inline constexpr uint64_t kFingerprintSeed = 0x41524d4f52465031ull;

struct FingerprintConfig {
    int width = 2048;
    int n_max = 3;
};

/// Fixed-width bit vector keyed by hashed reaction shingles.
struct Fingerprint {
    int width = 0;
    std::vector<uint64_t> words;

    bool test(int bit) const { return (words[bit >> 6] >> (bit & 63)) & 1u; }
    void set(int bit) { words[bit >> 6] |= (1ull << (bit & 63)); }
    int popcount() const;

    bool operator==(const Fingerprint&) const = default;
};

Fingerprint make_fingerprint(int width);

/// Token n-gram shingles (1..n_max), tagged with n, as the symmetric
/// difference between the reactant-side and product-side shingle sets.
std::set<std::string> reaction_shingles(const Reaction& r, int n_max = 3);

Fingerprint fingerprint(const Reaction& r, const FingerprintConfig& cfg = {});

int hamming_distance(const Fingerprint& a, const Fingerprint& b);

std::string fingerprint_to_hex(const Fingerprint& fp);
Fingerprint fingerprint_from_hex(const std::string& hex, int width);

struct SimilarityIndex {
    int width = 0;
    std::vector<std::pair<long, Fingerprint>> entries;

    void add(long idx, Fingerprint fp);
    bool empty() const { return entries.empty(); }
};

/// The k nearest entries by Hamming distance, ascending; ties broken by
/// ascending idx. Returns the whole index when it has fewer than k entries.
std::vector<std::pair<long, int>> top_k_similar(const SimilarityIndex& index,
                                                const Fingerprint& query, int k);

// Precomputed-fingerprint file: JSONL of {idx, bits} with bits a hex string
// of length width/4.
SimilarityIndex load_fingerprint_file(const std::filesystem::path& path, int width);
void save_fingerprint_file(const SimilarityIndex& index, const std::filesystem::path& path);

}  // namespace armor
