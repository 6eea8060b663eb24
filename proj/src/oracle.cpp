#include "armor/oracle.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

OracleBackend::OracleBackend(SynthGroundTruth ground_truth) : gt_(std::move(ground_truth)) {}

std::string OracleBackend::rule_name_for_region(int region) const {
    return gt_.markers.at(static_cast<size_t>(region)) + "-marked backbone extension";
}

namespace {

const std::string& binding(const LlmRequest& req, const std::string& name) {
    auto it = req.bindings.find(name);
    if (it == req.bindings.end())
        throw Error("ScenarioMissing", "oracle needs binding " + name);
    return it->second;
}

// Extracts the marker prefix from "X-marked backbone extension".
std::string marker_from_rule_name(const std::string& name) {
    size_t dash = name.find("-marked");
    if (dash == std::string::npos) return "";
    return name.substr(0, dash);
}

}  // namespace

std::string OracleBackend::handle_extraction(const LlmRequest& request) const {
    std::istringstream in(binding(request, "dataset_text"));
    std::string line;
    long total = 0, correct = 0;
    std::map<int, std::vector<long>> correct_by_region;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json row = json::parse(line);
        ++total;
        int label = row.at("label").get<int>();
        bool is_correct = row.at("prediction").is_number_integer() &&
                          row.at("prediction").get<int>() == label;
        if (!is_correct) continue;
        ++correct;
        int region = gt_.region_from_reactants(row.at("reactants").get<std::string>());
        if (region >= 0) correct_by_region[region].push_back(row.at("idx").get<long>());
    }

    ordered_json out;
    char acc[16];
    std::snprintf(acc, sizeof(acc), "%.2f%%",
                  total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0);
    out["tool_acc"] = acc;
    out["often_correct_on"] = json::array();
    for (const auto& [region, idxs] : correct_by_region) {
        if (idxs.size() < 5) continue;
        std::vector<long> sorted(idxs);
        std::sort(sorted.begin(), sorted.end());
        const std::string& marker = gt_.markers.at(static_cast<size_t>(region));
        ordered_json entry;
        entry["name"] = rule_name_for_region(region);
        entry["explanation"] =
            "The tool is reliable when the reactant backbone carries a " + marker +
            " substituent: the reactants must contain exactly one " + marker +
            " atom inside a carbon chain, and the product extends that chain. "
            "Reactions whose reactants carry a different heteroatom marker do not belong "
            "to this pattern.";
        entry["examples_idx"] = std::vector<long>(sorted.begin(), sorted.begin() + 5);
        out["often_correct_on"].push_back(entry);
    }
    return out.dump();
}

std::string OracleBackend::handle_match(const LlmRequest& request) const {
    json name = json::parse(binding(request, "rule_name"));
    json example = json::parse(binding(request, "example_json"));
    std::string marker = marker_from_rule_name(name.get<std::string>());
    int region = gt_.region_from_reactants(example.at("reactants").get<std::string>());
    bool belongs = region >= 0 && static_cast<size_t>(region) < gt_.markers.size() &&
                   gt_.markers[static_cast<size_t>(region)] == marker;
    ordered_json out;
    out["name"] = name;
    out["idx"] = example.contains("idx") ? example["idx"].get<long>() : 0;
    out["belongs_to_rule"] = belongs;
    out["confidence"] = "high";
    out["reason"] = belongs ? "The reactants carry the rule's marker substituent."
                            : "The reactants carry a different marker substituent.";
    return out.dump();
}

std::string OracleBackend::handle_consolidation(const LlmRequest&) const {
    ordered_json out;
    out["keep_index"] = 0;
    out["reason"] = "All candidates describe the same marker region; the first is representative.";
    return out.dump();
}

std::string OracleBackend::handle_memory_build(const LlmRequest& request) const {
    const std::string& gold = binding(request, "gold_tool");
    json negs = json::parse(binding(request, "neg_tools_json"));
    int region = gt_.region_from_reactants(binding(request, "reactants"));
    std::string marker = region >= 0 ? gt_.markers.at(static_cast<size_t>(region)) : "?";

    ordered_json out;
    out["tool"] = gold;
    out["evidence"] = json::array({
        "The reactant backbone carries a " + marker + " substituent, matching the trusted tool's rule.",
        "The product extends the marked chain, which is the transformation the rule describes.",
    });
    out["elimination"] = json::array();
    int count = 0;
    for (const auto& neg : negs) {
        if (count++ == 3) break;
        ordered_json e;
        e["tool"] = neg.get<std::string>();
        e["why_not"] = "Its matched rule targets a different marker region than this reaction.";
        out["elimination"].push_back(e);
    }
    out["final_reason"] = "Only \"" + gold + "\" has a rule aligned with the " + marker +
                          "-marked transformation shown here.";
    return out.dump();
}

std::string OracleBackend::handle_tool_select(const LlmRequest& request) const {
    int region = gt_.region_from_reactants(binding(request, "reactants"));
    std::string marker = region >= 0 ? gt_.markers.at(static_cast<size_t>(region)) : "";

    std::istringstream in(binding(request, "cands_section"));
    std::string line;
    std::string best_tool;
    double best_conf = -1;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] != '{') continue;
        json cand = json::parse(line, nullptr, false);
        if (cand.is_discarded()) continue;
        if (marker_from_rule_name(cand.value("rule_name", "")) != marker || marker.empty()) continue;
        double conf = cand.value("conf", 0.0);
        if (conf > best_conf) {
            best_conf = conf;
            best_tool = cand.value("tool", "");
        }
    }

    ordered_json out;
    if (best_tool.empty()) {
        out["tool"] = "abstain";
        out["reason"] = "No candidate rule addresses the marker region of this reaction.";
    } else {
        out["tool"] = best_tool;
        out["reason"] = "Its rule targets the " + marker +
                        "-marked backbone transformation shown by this reaction.";
    }
    return out.dump();
}

std::string OracleBackend::handle_direct_ask(const LlmRequest& request) const {
    const std::string& reactants = binding(request, "reactants");
    const std::string& product = binding(request, "product");
    // Synthetic feasible products append "O"+marker to the reactants.
    int pred = 0;
    if (product.size() > reactants.size() && product.rfind(reactants, 0) == 0 &&
        product[reactants.size()] == 'O')
        pred = 1;
    ordered_json out;
    out["prediction"] = pred;
    return out.dump();
}

std::string OracleBackend::complete(const LlmRequest& request) {
    switch (request.template_id) {
        case TemplateId::PatternExtraction: return handle_extraction(request);
        case TemplateId::PatternMatch: return handle_match(request);
        case TemplateId::Consolidation: return handle_consolidation(request);
        case TemplateId::MemoryBuild: return handle_memory_build(request);
        case TemplateId::ToolSelect: return handle_tool_select(request);
        case TemplateId::DirectAsk: return handle_direct_ask(request);
    }
    throw Error("ScenarioMissing", "oracle cannot handle this template");
}

}  // namespace armor
