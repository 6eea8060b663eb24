#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "armor/eval.hpp"
#include "armor/memory.hpp"
#include "armor/patterns.hpp"

namespace armor {

/// Two-level tool hierarchy: l1 holds the top rho% by validation accuracy
/// (at least one), l2 the rest; together they partition the registry.
struct Hierarchy {
    std::vector<std::string> l1;
    std::vector<std::string> l2;
    double rho = 25.0;

    void save(const std::filesystem::path& path) const;
    static Hierarchy load(const std::filesystem::path& path);
};

/// Ranks by tool_accuracy on the validation set (tie: tool_id ascending),
/// takes max(1, floor(n*rho/100)) into l1, and writes levels back into the
/// registry records.
Hierarchy build_hierarchy(ToolRegistry& tools, const Dataset& val, double rho);

/// Unanimity check: the shared label iff every prediction is the same
/// non-NA value. Any NA breaks consensus.
std::optional<Label> consensus(const std::vector<Prediction>& predictions);

enum class Ablation { None, WithoutConflict, WithoutUtility, WithoutHierarchy };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct PipelineConfig {
    double rho = 25.0;
    int m_subsets = 100;
    std::vector<int> n_schedule = {5, 10, 25, 45};
    double tau1 = 1.0;
    double tau2 = 1.0;
    double tau3 = 0.5;
    int l_max = 5;
    int k_demos = 8;
    uint64_t seed = 1;
    Ablation ablation = Ablation::None;
    std::string backend = "scripted";  // scripted | oracle | http
    FingerprintConfig fingerprint;
    std::map<std::string, std::string> assets;  // name -> path

    static PipelineConfig from_json(const std::string& text);
    static PipelineConfig load(const std::filesystem::path& path);
    std::string to_json() const;
};

/// Everything inference needs, loaded once; read-only during a batch.
struct PipelineContext {
    PipelineConfig config;
    ToolRegistry* registry = nullptr;
    Hierarchy hierarchy;
    PatternStore store;
    ConflictMemory memory;
    const Dataset* val = nullptr;  // member reactions for demo rendering
    LlmBackend* backend = nullptr;
    CoverageCache* cache = nullptr;
    PatternLog* log = nullptr;
};

/// Few-shot tool selection over conflicting candidates. Returns the chosen
/// tool and its prediction as a label, or nullopt on abstain, schema
/// violation, or an NA-predicting choice (callers fall back).
std::optional<std::pair<std::string, Label>> resolve_conflict(
    const Reaction& r, const std::vector<SelectedTool>& selected,
    const std::vector<ContrastiveInstance>& demos, const PipelineContext& ctx);

/// Three-stage flow with the fallback chain; total — always yields a Label.
DecisionTrace predict_reaction(const Reaction& r, const PipelineContext& ctx);

/// Predicts every reaction in order and assembles metrics, categories, and
/// tool usage. Deterministic for a fixed seed and scripted backend.
RunReport run_batch(const Dataset& dataset, const PipelineContext& ctx,
                    const std::map<std::string, std::string>& asset_digests = {});

// Pinned renderings for the optional ToolSelect prompt sections.
extern const std::string kConfHintLine;
extern const std::string kTiebreakLine;

/// Demo block for the ToolSelect prompt; empty demos render as "".
std::string render_demos_section(const std::vector<ContrastiveInstance>& demos,
                                 const Dataset& val);

}  // namespace armor
