#pragma once

#include <map>
#include <string>
#include <vector>

#include "armor/chem.hpp"
#include "armor/patterns.hpp"

namespace armor {

struct EliminationEntry {
    std::string tool;
    std::string why_not;
};

/// LLM rationale naming the trusted tool, supporting evidence, and why each
/// distrusted tool was passed over.
struct Rationale {
    std::string tool;
    std::vector<std::string> evidence;
    std::vector<EliminationEntry> elimination;
    std::string final_reason;
};

/// One reaction, one trusted tool with its pattern, up to three distrusted
/// tools with theirs, plus the rationale.
struct ContrastiveInstance {
    long idx = 0;
    std::string pos_tool;
    std::string pos_pattern_id;
    std::vector<std::string> neg_tools;       // 1..3 entries
    std::vector<std::string> neg_pattern_ids;
    Rationale rationale;
};

/// Checks every structural invariant against the dataset; returns the first
/// violation or empty string when valid.
std::string validate_instance(const ContrastiveInstance& inst, const Dataset& dataset);

struct ConflictMemory {
    std::map<long, std::vector<ContrastiveInstance>> instances;
    SimilarityIndex index;  // fingerprints of member reactions

    bool empty() const { return instances.empty(); }
};

struct MemoryBuildLog {
    long llm_calls = 0;
    long instances_built = 0;
    long instances_skipped = 0;
    long dropped_on_load = 0;
    std::vector<std::string> warnings;
};

/// Walks the pool; for every correct tool with a covering final pattern,
/// builds one instance against up to 3 incorrect covering tools
/// (highest-conf negatives first). Reactions with no qualifying pair are
/// skipped.
ConflictMemory build_instances(LlmBackend& backend, CoverageCache& cache,
                               const std::vector<long>& pool, const PatternStore& store,
                               const Dataset& dataset, const FingerprintConfig& fp_cfg,
                               MemoryBuildLog* log = nullptr);

/// Top-K member reactions by fingerprint distance; one instance per member
/// chosen by an RNG keyed on (seed, query idx, member idx), so batch order
/// and concurrency never change the result.
std::vector<ContrastiveInstance> retrieve_demonstrations(const ConflictMemory& memory,
                                                         const Reaction& r, int k,
                                                         uint64_t seed,
                                                         const FingerprintConfig& fp_cfg);

/// Instance JSONL plus the sidecar fingerprint file. Loading re-validates
/// and drops corrupt instances, counting them in the log.
void save_memory(const ConflictMemory& memory, const std::filesystem::path& instances_path,
                 const std::filesystem::path& fingerprints_path);
ConflictMemory load_memory(const std::filesystem::path& instances_path,
                           const std::filesystem::path& fingerprints_path,
                           const Dataset& dataset, int width, MemoryBuildLog* log = nullptr);

}  // namespace armor
