#include "armor/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

void Hierarchy::save(const std::filesystem::path& path) const {
    ordered_json doc;
    doc["rho"] = rho;
    doc["l1"] = l1;
    doc["l2"] = l2;
    write_file_atomic(path, doc.dump(2) + "\n");
}

Hierarchy Hierarchy::load(const std::filesystem::path& path) {
    json doc = json::parse(read_file(path));
    Hierarchy h;
    h.rho = doc.at("rho").get<double>();
    h.l1 = doc.at("l1").get<std::vector<std::string>>();
    h.l2 = doc.at("l2").get<std::vector<std::string>>();
    return h;
}

Hierarchy build_hierarchy(ToolRegistry& tools, const Dataset& val, double rho) {
    if (tools.size() == 0) throw Error("EmptyToolset", "no tools registered");
    struct Ranked {
        std::string tool_id;
        double acc;
    };
    std::vector<Ranked> ranked;
    for (auto& record : tools) {
        double acc = tool_accuracy(record, val);
        record.val_accuracy = acc;
        ranked.push_back({record.tool_id, acc});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.acc != b.acc) return a.acc > b.acc;
        return a.tool_id < b.tool_id;
    });

    size_t l1_size = std::max<size_t>(
        1, static_cast<size_t>(std::floor(static_cast<double>(ranked.size()) * rho / 100.0)));

    Hierarchy h;
    h.rho = rho;
    for (size_t i = 0; i < ranked.size(); ++i) {
        bool top = i < l1_size;
        (top ? h.l1 : h.l2).push_back(ranked[i].tool_id);
        tools.get(ranked[i].tool_id).level = top ? ToolLevel::L1 : ToolLevel::L2;
    }
    return h;
}

std::optional<Label> consensus(const std::vector<Prediction>& predictions) {
    if (predictions.empty()) return std::nullopt;
    Prediction first = predictions.front();
    if (first == Prediction::NA) return std::nullopt;
    for (Prediction p : predictions)
        if (p != first) return std::nullopt;
    return first == Prediction::Pred1 ? Label::Feasible : Label::Infeasible;
}

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::None: return "none";
        case Ablation::WithoutConflict: return "without_conflict";
        case Ablation::WithoutUtility: return "without_utility";
        case Ablation::WithoutHierarchy: return "without_hierarchy";
    }
    throw Error("ValueOutOfDomain", "unknown ablation");
}

Ablation ablation_from_name(const std::string& name) {
    for (Ablation a : {Ablation::None, Ablation::WithoutConflict, Ablation::WithoutUtility,
                       Ablation::WithoutHierarchy})
        if (name == ablation_name(a)) return a;
    throw Error("ValueOutOfDomain", "unknown ablation name " + name);
}

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const std::exception& e) {
        throw Error("ConfigInvalid", std::string("config is not valid JSON: ") + e.what());
    }
    PipelineConfig cfg;
    try {
        if (doc.contains("rho")) cfg.rho = doc["rho"].get<double>();
        if (doc.contains("M")) cfg.m_subsets = doc["M"].get<int>();
        if (doc.contains("N_schedule")) cfg.n_schedule = doc["N_schedule"].get<std::vector<int>>();
        if (doc.contains("tau1")) cfg.tau1 = doc["tau1"].get<double>();
        if (doc.contains("tau2")) cfg.tau2 = doc["tau2"].get<double>();
        if (doc.contains("tau3")) cfg.tau3 = doc["tau3"].get<double>();
        if (doc.contains("L")) cfg.l_max = doc["L"].get<int>();
        if (doc.contains("K")) cfg.k_demos = doc["K"].get<int>();
        if (doc.contains("seed")) cfg.seed = doc["seed"].get<uint64_t>();
        if (doc.contains("ablation")) cfg.ablation = ablation_from_name(doc["ablation"].get<std::string>());
        if (doc.contains("backend")) cfg.backend = doc["backend"].get<std::string>();
        if (doc.contains("fingerprint_width"))
            cfg.fingerprint.width = doc["fingerprint_width"].get<int>();
        if (doc.contains("fingerprint_n_max"))
            cfg.fingerprint.n_max = doc["fingerprint_n_max"].get<int>();
        if (doc.contains("assets"))
            cfg.assets = doc["assets"].get<std::map<std::string, std::string>>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error("ConfigInvalid", std::string("bad config value: ") + e.what());
    }
    if (cfg.rho <= 0 || cfg.rho > 100) throw Error("ConfigInvalid", "rho must be in (0, 100]");
    if (cfg.m_subsets < 1) throw Error("ConfigInvalid", "M must be >= 1");
    if (cfg.n_schedule.empty()) throw Error("ConfigInvalid", "N_schedule must be non-empty");
    for (int n : cfg.n_schedule)
        if (n < 1) throw Error("ConfigInvalid", "N_schedule entries must be >= 1");
    if (cfg.l_max < 1) throw Error("ConfigInvalid", "L must be >= 1");
    if (cfg.k_demos < 0) throw Error("ConfigInvalid", "K must be >= 0");
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    return from_json(read_file(path));
}

std::string PipelineConfig::to_json() const {
    ordered_json doc;
    doc["rho"] = rho;
    doc["M"] = m_subsets;
    doc["N_schedule"] = n_schedule;
    doc["tau1"] = tau1;
    doc["tau2"] = tau2;
    doc["tau3"] = tau3;
    doc["L"] = l_max;
    doc["K"] = k_demos;
    doc["seed"] = seed;
    doc["ablation"] = ablation_name(ablation);
    doc["backend"] = backend;
    doc["fingerprint_width"] = fingerprint.width;
    doc["fingerprint_n_max"] = fingerprint.n_max;
    doc["assets"] = ordered_json::object();
    for (const auto& [name, path] : assets) doc["assets"][name] = path;
    return doc.dump(2) + "\n";
}

const std::string kConfHintLine =
    "- Treat each candidate's conf value as a soft prior on its rule's historical reliability.\n";
const std::string kTiebreakLine =
    "- If two candidates remain equally convincing, prefer the one with the higher conf value.\n";

std::string render_demos_section(const std::vector<ContrastiveInstance>& demos,
                                 const Dataset& val) {
    if (demos.empty()) return "";
    std::string out = "\nDemonstrations of earlier resolutions (reasoning style only):\n";
    for (const auto& demo : demos) {
        const Reaction* r = val.find(demo.idx);
        ordered_json obj;
        obj["reactants"] = r ? r->reactants : "";
        obj["product"] = r ? r->product : "";
        obj["trusted_tool"] = demo.pos_tool;
        obj["not_trusted"] = demo.neg_tools;
        ordered_json rat;
        rat["tool"] = demo.rationale.tool;
        rat["evidence"] = demo.rationale.evidence;
        rat["elimination"] = json::array();
        for (const auto& e : demo.rationale.elimination) {
            ordered_json el;
            el["tool"] = e.tool;
            el["why_not"] = e.why_not;
            rat["elimination"].push_back(el);
        }
        rat["final_reason"] = demo.rationale.final_reason;
        obj["rationale"] = rat;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

namespace {

std::vector<Prediction> predictions_for(const std::vector<std::string>& tool_ids,
                                        const Reaction& r, const ToolRegistry& registry) {
    std::vector<Prediction> preds;
    preds.reserve(tool_ids.size());
    for (const auto& id : tool_ids) preds.push_back(predict(registry.get(id), r));
    return preds;
}

DecisionTrace majority_trace(const Reaction& r, const std::vector<std::string>& tool_ids,
                             const std::vector<Prediction>& preds,
                             const std::vector<std::string>& selected_tools) {
    DecisionTrace t;
    t.idx = r.idx;
    t.stage = Stage::FallbackMajority;
    t.selected_tools = selected_tools.empty() ? tool_ids : selected_tools;
    t.final = majority_vote(preds);
    return t;
}

/// DirectAsk then majority; never throws.
DecisionTrace fallback_chain(const Reaction& r, const PipelineContext& ctx,
                             const std::vector<std::string>& selected_tools,
                             int demos_used) {
    try {
        json out = complete_json(*ctx.backend, TemplateId::DirectAsk,
                                 {{"reactants", r.reactants}, {"product", r.product}});
        int pred = out.at("prediction").get<int>();
        DecisionTrace t;
        t.idx = r.idx;
        t.stage = Stage::FallbackDirect;
        t.selected_tools = selected_tools;
        t.demonstrations_used = demos_used;
        t.final = pred == 1 ? Label::Feasible : Label::Infeasible;
        return t;
    } catch (...) {
        const std::vector<std::string>& pool =
            selected_tools.empty() ? ctx.registry->ids() : selected_tools;
        auto preds = predictions_for(pool, r, *ctx.registry);
        DecisionTrace t = majority_trace(r, pool, preds, selected_tools);
        t.demonstrations_used = demos_used;
        return t;
    }
}

}  // namespace

std::optional<std::pair<std::string, Label>> resolve_conflict(
    const Reaction& r, const std::vector<SelectedTool>& selected,
    const std::vector<ContrastiveInstance>& demos, const PipelineContext& ctx) {
    std::vector<CandidateLine> cands;
    std::vector<std::string> allowed;
    SchemaContext schema;
    for (const auto& s : selected) {
        cands.push_back({s.tool_id, predict(ctx.registry->get(s.tool_id), r), s.pattern.name,
                         s.pattern.explanation, s.pattern.conf.value_or(0.0)});
        allowed.push_back(s.tool_id);
        schema.allowed_tools.insert(s.tool_id);
    }

    Bindings bindings = {
        {"reactants", r.reactants},
        {"product", r.product},
        {"cands_section", render_cands_section(cands)},
        {"conf_hint", kConfHintLine},
        {"tiebreak", kTiebreakLine},
        {"demos_section", render_demos_section(demos, ctx.val ? *ctx.val : Dataset{})},
        {"allowed_str", quoted_list(allowed)},
    };

    try {
        json out = complete_json(*ctx.backend, TemplateId::ToolSelect, bindings, schema);
        std::string tool = out.at("tool").get<std::string>();
        if (tool == "abstain") return std::nullopt;
        Prediction pred = predict(ctx.registry->get(tool), r);
        if (pred == Prediction::NA) return std::nullopt;
        return std::make_pair(tool,
                              pred == Prediction::Pred1 ? Label::Feasible : Label::Infeasible);
    } catch (...) {
        return std::nullopt;
    }
}

DecisionTrace predict_reaction(const Reaction& r, const PipelineContext& ctx) {
    const auto& cfg = ctx.config;

    if (cfg.ablation == Ablation::WithoutHierarchy) {
        auto ids = ctx.registry->ids();
        return majority_trace(r, ids, predictions_for(ids, r, *ctx.registry), {});
    }

    // Stage 1: first-level consensus.
    auto t1_preds = predictions_for(ctx.hierarchy.l1, r, *ctx.registry);
    if (auto label = consensus(t1_preds)) {
        DecisionTrace t;
        t.idx = r.idx;
        t.stage = Stage::T1Consensus;
        t.final = *label;
        return t;
    }

    if (cfg.ablation == Ablation::WithoutUtility) {
        auto ids = ctx.registry->ids();
        return majority_trace(r, ids, predictions_for(ids, r, *ctx.registry), {});
    }

    // Stage 2: pattern-based tool selection.
    std::vector<SelectedTool> selected;
    try {
        selected = select_tools(*ctx.backend, *ctx.cache, r, ctx.store, *ctx.registry,
                                cfg.l_max, ctx.log);
    } catch (...) {
        selected.clear();
    }
    if (selected.empty()) return fallback_chain(r, ctx, {}, 0);

    std::vector<std::string> selected_ids;
    for (const auto& s : selected) selected_ids.push_back(s.tool_id);

    std::vector<Prediction> non_na;
    for (const auto& s : selected) {
        Prediction p = predict(ctx.registry->get(s.tool_id), r);
        if (p != Prediction::NA) non_na.push_back(p);
    }
    if (!non_na.empty()) {
        if (auto label = consensus(non_na)) {
            DecisionTrace t;
            t.idx = r.idx;
            t.stage = Stage::TsConsensus;
            t.selected_tools = selected_ids;
            t.final = *label;
            return t;
        }
    }

    if (cfg.ablation == Ablation::WithoutConflict) {
        auto preds = predictions_for(selected_ids, r, *ctx.registry);
        return majority_trace(r, selected_ids, preds, selected_ids);
    }

    // Stage 3: memory-augmented conflict resolution.
    std::vector<ContrastiveInstance> demos;
    try {
        demos = retrieve_demonstrations(ctx.memory, r, cfg.k_demos, cfg.seed, cfg.fingerprint);
    } catch (...) {
        demos.clear();
    }
    if (auto resolved = resolve_conflict(r, selected, demos, ctx)) {
        DecisionTrace t;
        t.idx = r.idx;
        t.stage = Stage::ConflictResolved;
        t.selected_tools = selected_ids;
        t.chosen_tool = resolved->first;
        t.demonstrations_used = static_cast<int>(demos.size());
        t.final = resolved->second;
        return t;
    }
    return fallback_chain(r, ctx, selected_ids, static_cast<int>(demos.size()));
}

RunReport run_batch(const Dataset& dataset, const PipelineContext& ctx,
                    const std::map<std::string, std::string>& asset_digests) {
    RunReport report;
    report.seed = ctx.config.seed;
    report.config_digest = to_hex64(fnv1a64(ctx.config.to_json()));
    report.asset_digests = asset_digests;

    std::vector<std::pair<Label, Label>> pairs;
    for (const auto& r : dataset.reactions) {
        DecisionTrace t = predict_reaction(r, ctx);
        if (r.label) pairs.emplace_back(*r.label, t.final);
        report.traces.push_back(std::move(t));
    }

    report.has_labels = !pairs.empty();
    if (report.has_labels) {
        report.confusion = confusion_counts(pairs);
        report.metrics = accuracy_metrics(report.confusion);
        report.f1 = f1_per_class(report.confusion);
        report.mcc_value = mcc(report.confusion, &report.notes);
    }
    report.categories = category_breakdown(report.traces, dataset);
    report.tool_usage = tool_usage_report(report.traces, ctx.registry->ids(), dataset);
    return report;
}

}  // namespace armor
