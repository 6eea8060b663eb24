#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "armor/domain.hpp"

namespace armor {

/// Binary confusion counts with Feasible as the positive class.
struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;

    long total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion_counts(const std::vector<std::pair<Label, Label>>& pairs);

/// Class-wise values are absent when their denominator is zero.
struct AccuracyMetrics {
    double overall = 0;
    std::optional<double> feasible;
    std::optional<double> infeasible;
};

AccuracyMetrics accuracy_metrics(const ConfusionCounts& c);

struct F1PerClass {
    std::optional<double> f1_feasible;
    std::optional<double> f1_infeasible;
};

F1PerClass f1_per_class(const ConfusionCounts& c);

/// Zero-denominator convention: 0, with a note appended when `log` is given.
double mcc(const ConfusionCounts& c, std::vector<std::string>* log = nullptr);

/// Fraction of labeled reactions at least one tool predicts correctly.
double oracle_upper_bound(const Dataset& dataset);

/// NA votes are ignored; tie or all-NA falls to Infeasible. Weighted mode
/// sums one weight per prediction (sizes must match).
Label majority_vote(const std::vector<Prediction>& predictions,
                    const std::vector<double>* weights = nullptr);

enum class Stage { T1Consensus, TsConsensus, ConflictResolved, FallbackDirect, FallbackMajority };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct DecisionTrace {
    long idx = 0;
    Stage stage = Stage::T1Consensus;
    std::vector<std::string> selected_tools;
    std::optional<std::string> chosen_tool;  // set iff stage == ConflictResolved
    int demonstrations_used = 0;
    Label final = Label::Infeasible;
};

struct CategoryStats {
    long count = 0;
    double proportion = 0;  // percent of all traces
    std::optional<double> accuracy;
};

struct CategoryBreakdown {
    CategoryStats t1;        // stage T1Consensus
    CategoryStats ts;        // stage TsConsensus
    CategoryStats conflict;  // everything else
};

/// Labels come from the dataset; traces without a labeled reaction count
/// toward sizes but not accuracies.
CategoryBreakdown category_breakdown(const std::vector<DecisionTrace>& traces,
                                     const Dataset& dataset);

struct ToolUsage {
    long selected_count = 0;
    std::optional<double> selected_acc;   // accuracy when chosen at conflict stage
    std::optional<double> full_acc;       // accuracy over the whole labeled set
    std::string trend;                    // "up" | "down" | "flat" | ""
};

/// Per-tool chosen-at-conflict counts plus full-set accuracy; fallback
/// stages are tallied under the pseudo-tools "(direct)" and "(majority)".
std::map<std::string, ToolUsage> tool_usage_report(const std::vector<DecisionTrace>& traces,
                                                   const std::vector<std::string>& tool_ids,
                                                   const Dataset& dataset);

struct RunReport {
    std::vector<DecisionTrace> traces;
    bool has_labels = false;
    ConfusionCounts confusion;
    AccuracyMetrics metrics;
    F1PerClass f1;
    double mcc_value = 0;
    CategoryBreakdown categories;
    std::map<std::string, ToolUsage> tool_usage;
    uint64_t seed = 0;
    std::string config_digest;
    std::map<std::string, std::string> asset_digests;
    std::vector<std::string> notes;
};

std::string serialize_report(const RunReport& report);
void save_report(const RunReport& report, const std::filesystem::path& path);

/// Plain-text tables (overall metrics, category breakdown, tool usage).
std::string render_report_text(const RunReport& report);

}  // namespace armor
