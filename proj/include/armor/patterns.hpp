#pragma once

#include <array>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "armor/domain.hpp"
#include "armor/llm.hpp"
#include "armor/tools.hpp"

namespace armor {

enum class PatternStatus { Raw, Refined, Consolidated, Final };

/// A named, explained, example-backed description of when one tool is
/// reliable. Scores attach as the pattern moves through the lifecycle.
struct Pattern {
    std::string pattern_id;
    std::string tool_id;
    std::string name;
    std::string explanation;
    std::vector<long> example_idxs;  // always exactly 5
    std::optional<double> align;
    std::optional<double> cov;
    std::optional<double> conf;
    long covered_count = 0;  // pool reactions covered; conf tie-break key
    PatternStatus status = PatternStatus::Raw;
};

/// Four-cell sample of the disagreement pool for one extraction call.
/// Cells are r11/r10/r01/r00: (gold label, predicted label), NA filed in
/// the wrong-prediction cell for its label.
struct DiagnosticSubset {
    std::string tool_id;
    int subset_no = 0;  // m in [1, M]
    std::array<std::vector<long>, 4> cells;

    std::vector<long> all_idxs_sorted() const;
};

/// Append-only memo of coverage judgments. A cached (pattern, idx) pair is
/// never re-queried.
class CoverageCache {
public:
    struct Entry {
        bool covered = false;
        std::string confidence = "low";
    };

    CoverageCache() = default;
    CoverageCache(CoverageCache&& other) noexcept {
        std::lock_guard<std::mutex> lock(other.mutex_);
        entries_ = std::move(other.entries_);
    }
    CoverageCache& operator=(CoverageCache&& other) noexcept {
        if (this != &other) {
            std::scoped_lock lock(mutex_, other.mutex_);
            entries_ = std::move(other.entries_);
        }
        return *this;
    }

    std::optional<Entry> lookup(const std::string& pattern_id, long idx) const;
    /// First writer wins; returns the stored entry.
    Entry insert(const std::string& pattern_id, long idx, Entry entry);
    size_t size() const;

    void save(const std::filesystem::path& path) const;
    static CoverageCache load(const std::filesystem::path& path);

private:
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, long>, Entry> entries_;
};

struct PatternLog {
    long llm_calls = 0;
    long cache_hits = 0;
    long patterns_dropped = 0;
    long subsets_skipped = 0;
    std::vector<std::string> warnings;
};

/// Validation reactions on which the first-level tools are not unanimous
/// (any NA or disagreement breaks consensus). Sorted ascending.
std::vector<long> disagreement_set(const Dataset& dataset,
                                   const std::vector<std::string>& t1_tools);

/// M subsets; subset m samples N = schedule[(m-1) mod |schedule|] reactions
/// per cell, without replacement within a subset. Subsets whose cells are
/// too small are skipped with a warning.
std::vector<DiagnosticSubset> sample_diagnostic_subsets(
    const std::string& tool_id, const std::vector<long>& pool, const Dataset& dataset,
    int m_subsets, const std::vector<int>& n_schedule, uint64_t seed,
    PatternLog* log = nullptr);

/// Serialization of a subset for the extraction prompt: one JSON line per
/// reaction, sorted by idx, with the tool's prediction inlined.
std::string subset_dataset_text(const DiagnosticSubset& subset, const Dataset& dataset);

std::vector<Pattern> extract_patterns(LlmBackend& backend, const std::string& tool_id,
                                      const DiagnosticSubset& subset, const Dataset& dataset,
                                      PatternLog* log = nullptr);

/// Cache-through coverage judgment; terminal LLM failures record
/// covered=false with low confidence.
bool judge_coverage(LlmBackend& backend, CoverageCache& cache, const Pattern& pattern,
                    const Reaction& r, PatternLog* log = nullptr);

double align_score(const Pattern& pattern, const Dataset& dataset);

double cov_score(LlmBackend& backend, CoverageCache& cache, const Pattern& pattern,
                 const Dataset& dataset, PatternLog* log = nullptr);

/// Keeps patterns with align >= tau1 and cov >= tau2, computing the scores
/// on the way in.
std::vector<Pattern> refine_patterns(LlmBackend& backend, CoverageCache& cache,
                                     std::vector<Pattern> raw, const Dataset& dataset,
                                     double tau1, double tau2, PatternLog* log = nullptr);

/// Groups by exact name; multi-member groups keep the LLM's keep_index
/// choice, falling back to highest align (then lowest pattern_id).
std::vector<Pattern> consolidate_patterns(LlmBackend& backend, std::vector<Pattern> refined,
                                          const std::string& tool_id, PatternLog* log = nullptr);

/// Conf over the pool: correct-when-covered rate. nullopt when the pattern
/// covers nothing (dropped at finalize). Also fills covered_count.
std::optional<double> conf_score(LlmBackend& backend, CoverageCache& cache, Pattern& pattern,
                                 const std::vector<long>& pool, const Dataset& dataset,
                                 PatternLog* log = nullptr);

/// Per tool: conf >= tau3, sorted by conf desc (tie: covered_count desc,
/// then pattern_id asc), at most 5 kept.
std::vector<Pattern> finalize_pattern_set(std::vector<Pattern> consolidated, double tau3);

/// Final pattern sets per tool plus persistence.
struct PatternStore {
    std::map<std::string, std::vector<Pattern>> by_tool;

    void save(const std::filesystem::path& path) const;
    static PatternStore load(const std::filesystem::path& path);
};

struct SelectedTool {
    std::string tool_id;
    Pattern pattern;  // P*_t(r): highest-conf covering final pattern
};

/// Ranks tools by the conf of their best covering pattern (tie: higher
/// val_accuracy, then tool_id) and returns up to L. Empty when nothing
/// covers r.
std::vector<SelectedTool> select_tools(LlmBackend& backend, CoverageCache& cache,
                                       const Reaction& r, const PatternStore& store,
                                       const ToolRegistry& registry, int l_max,
                                       PatternLog* log = nullptr);

/// Candidate row for the cands_section of MemoryBuild / ToolSelect prompts.
struct CandidateLine {
    std::string tool_id;
    Prediction prediction = Prediction::NA;
    std::string rule_name;
    std::string rule_explanation;
    double conf = 0;
};

std::string render_cands_section(const std::vector<CandidateLine>& candidates);

std::string quoted_list(const std::vector<std::string>& items);

std::string make_pattern_id(const std::string& tool_id, const std::string& name,
                            const std::string& explanation, const std::vector<long>& idxs);

}  // namespace armor
