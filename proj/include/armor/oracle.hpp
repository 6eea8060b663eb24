#pragma once

#include "armor/llm.hpp"
#include "armor/synth.hpp"

namespace armor {

/// Fully offline scripted backend whose answers are derived from the
/// synthetic corpus ground truth: pattern extraction names one pattern per
/// region the tool gets right, coverage judging is region membership, and
/// conflict resolution trusts the highest-Conf candidate whose rule targets
/// the query's region.
class OracleBackend : public LlmBackend {
public:
    explicit OracleBackend(SynthGroundTruth ground_truth);

    std::string complete(const LlmRequest& request) override;
    std::string tag() const override { return "scripted:oracle"; }

    /// Rule name the oracle emits for a region (used by tests and by the
    /// oracle's own coverage judge).
    std::string rule_name_for_region(int region) const;

private:
    SynthGroundTruth gt_;

    std::string handle_extraction(const LlmRequest& request) const;
    std::string handle_match(const LlmRequest& request) const;
    std::string handle_consolidation(const LlmRequest& request) const;
    std::string handle_memory_build(const LlmRequest& request) const;
    std::string handle_tool_select(const LlmRequest& request) const;
    std::string handle_direct_ask(const LlmRequest& request) const;
};

}  // namespace armor
