#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "armor/domain.hpp"
#include "armor/llm.hpp"

namespace armor {

enum class ToolLevel { L1, L2, Unassigned };

struct TableProvider {
    std::unordered_map<long, Prediction> table;
};

struct HttpProvider {
    std::string endpoint;
    int timeout_seconds = 30;
};

/// Zero-shot prompting through the configured LLM backend.
struct LlmPromptingProvider {
    LlmBackend* backend = nullptr;
};

struct ScriptedProvider {
    std::string scenario_id;
};

using ProviderBinding =
    std::variant<TableProvider, HttpProvider, LlmPromptingProvider, ScriptedProvider>;

struct ToolRecord {
    std::string tool_id;
    std::string display_name;
    ToolLevel level = ToolLevel::Unassigned;
    std::optional<double> val_accuracy;
    ProviderBinding provider = TableProvider{};
};

class ToolRegistry {
public:
    ToolRecord& add(ToolRecord record);
    ToolRecord& get(const std::string& tool_id);
    const ToolRecord& get(const std::string& tool_id) const;
    bool contains(const std::string& tool_id) const;
    std::vector<std::string> ids() const;  // registration order

    size_t size() const { return tools_.size(); }
    auto begin() { return tools_.begin(); }
    auto end() { return tools_.end(); }
    auto begin() const { return tools_.begin(); }
    auto end() const { return tools_.end(); }

private:
    std::vector<ToolRecord> tools_;
    std::unordered_map<std::string, size_t> by_id_;
};

/// Named deterministic behaviors for Scripted providers; tests register
/// extra scenarios. Built-ins: always-feasible, always-infeasible, always-na.
void register_scripted_scenario(const std::string& scenario_id,
                                std::function<Prediction(const Reaction&)> fn);

// Prediction table file: CSV with header `idx,prediction` or JSONL with
// keys idx and prediction.
std::unordered_map<long, Prediction> load_prediction_table(const std::filesystem::path& path);

/// Never throws; any provider failure maps to NA with a diagnostic line
/// appended to `diagnostics` when given.
Prediction predict(const ToolRecord& tool, const Reaction& r,
                   std::vector<std::string>* diagnostics = nullptr);

/// Fraction of labeled reactions the tool predicts correctly; NA counts
/// as wrong.
double tool_accuracy(const ToolRecord& tool, const Dataset& dataset);

}  // namespace armor
