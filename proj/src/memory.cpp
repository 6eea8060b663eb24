#include "armor/memory.hpp"

#include <algorithm>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

std::string validate_instance(const ContrastiveInstance& inst, const Dataset& dataset) {
    const Reaction* r = dataset.find(inst.idx);
    if (!r) return "unknown reaction idx";
    if (!r->label) return "member reaction has no label";
    if (inst.neg_tools.empty() || inst.neg_tools.size() > 3) return "neg_tools must have 1-3 entries";
    if (inst.neg_tools.size() != inst.neg_pattern_ids.size())
        return "neg_tools / neg_pattern_ids size mismatch";
    if (!prediction_matches(dataset.prediction(inst.pos_tool, inst.idx), *r->label))
        return "pos_tool does not predict the label";
    for (const auto& neg : inst.neg_tools)
        if (prediction_matches(dataset.prediction(neg, inst.idx), *r->label))
            return "neg tool '" + neg + "' predicts the label";
    if (inst.rationale.tool != inst.pos_tool) return "rationale names a different tool";
    std::set<std::string> negs(inst.neg_tools.begin(), inst.neg_tools.end());
    for (const auto& e : inst.rationale.elimination)
        if (!negs.count(e.tool)) return "elimination names non-negative tool '" + e.tool + "'";
    return "";
}

namespace {

Rationale parse_rationale(const json& v) {
    Rationale g;
    g.tool = v.at("tool").get<std::string>();
    for (const auto& e : v.at("evidence")) g.evidence.push_back(e.get<std::string>());
    for (const auto& e : v.at("elimination"))
        g.elimination.push_back({e.at("tool").get<std::string>(), e.at("why_not").get<std::string>()});
    g.final_reason = v.at("final_reason").get<std::string>();
    return g;
}

ordered_json rationale_to_json(const Rationale& g) {
    ordered_json v;
    v["tool"] = g.tool;
    v["evidence"] = g.evidence;
    v["elimination"] = json::array();
    for (const auto& e : g.elimination) {
        ordered_json obj;
        obj["tool"] = e.tool;
        obj["why_not"] = e.why_not;
        v["elimination"].push_back(obj);
    }
    v["final_reason"] = g.final_reason;
    return v;
}

}  // namespace

ConflictMemory build_instances(LlmBackend& backend, CoverageCache& cache,
                               const std::vector<long>& pool, const PatternStore& store,
                               const Dataset& dataset, const FingerprintConfig& fp_cfg,
                               MemoryBuildLog* log) {
    ConflictMemory memory;

    for (long idx : pool) {
        const Reaction& r = dataset.at(idx);
        if (!r.label) continue;

        // Tools with a covering final pattern, split by correctness.
        struct Covering {
            std::string tool_id;
            const Pattern* pattern;
        };
        std::vector<Covering> correct, incorrect;
        for (const auto& [tool_id, patterns] : store.by_tool) {
            const Pattern* best = nullptr;
            for (const auto& p : patterns) {
                if (p.status != PatternStatus::Final || !p.conf) continue;
                if (!judge_coverage(backend, cache, p, r)) continue;
                if (!best || *p.conf > *best->conf) best = &p;
            }
            if (!best) continue;
            if (prediction_matches(dataset.prediction(tool_id, idx), *r.label))
                correct.push_back({tool_id, best});
            else
                incorrect.push_back({tool_id, best});
        }
        if (correct.empty() || incorrect.empty()) continue;

        std::sort(incorrect.begin(), incorrect.end(), [](const Covering& a, const Covering& b) {
            if (*a.pattern->conf != *b.pattern->conf) return *a.pattern->conf > *b.pattern->conf;
            return a.tool_id < b.tool_id;
        });
        if (incorrect.size() > 3) incorrect.resize(3);

        for (const auto& pos : correct) {
            ContrastiveInstance inst;
            inst.idx = idx;
            inst.pos_tool = pos.tool_id;
            inst.pos_pattern_id = pos.pattern->pattern_id;
            std::vector<CandidateLine> cands;
            cands.push_back({pos.tool_id, dataset.prediction(pos.tool_id, idx),
                             pos.pattern->name, pos.pattern->explanation, *pos.pattern->conf});
            for (const auto& neg : incorrect) {
                inst.neg_tools.push_back(neg.tool_id);
                inst.neg_pattern_ids.push_back(neg.pattern->pattern_id);
                cands.push_back({neg.tool_id, dataset.prediction(neg.tool_id, idx),
                                 neg.pattern->name, neg.pattern->explanation,
                                 *neg.pattern->conf});
            }

            Bindings bindings = {
                {"reactants", r.reactants},
                {"product", r.product},
                {"cands_section", render_cands_section(cands)},
                {"gold_tool", pos.tool_id},
                {"neg_tools_json", json(inst.neg_tools).dump()},
                {"neg_str", quoted_list(inst.neg_tools)},
            };

            bool stored = false;
            std::string violation;
            // One repair retry when the rationale breaks an invariant.
            for (int attempt = 0; attempt < 2 && !stored; ++attempt) {
                try {
                    if (log) ++log->llm_calls;
                    json response =
                        complete_json(backend, TemplateId::MemoryBuild, bindings);
                    inst.rationale = parse_rationale(response);
                } catch (const Error& e) {
                    violation = e.what();
                    continue;
                }
                violation = validate_instance(inst, dataset);
                if (violation.empty()) stored = true;
            }
            if (!stored) {
                if (log) {
                    ++log->instances_skipped;
                    log->warnings.push_back("instance skipped idx=" + std::to_string(idx) +
                                            " pos=" + pos.tool_id + ": " + violation);
                }
                continue;
            }
            memory.instances[idx].push_back(std::move(inst));
            if (log) ++log->instances_built;
        }
    }

    for (const auto& [idx, _] : memory.instances)
        memory.index.add(idx, fingerprint(dataset.at(idx), fp_cfg));
    return memory;
}

std::vector<ContrastiveInstance> retrieve_demonstrations(const ConflictMemory& memory,
                                                         const Reaction& r, int k,
                                                         uint64_t seed,
                                                         const FingerprintConfig& fp_cfg) {
    if (memory.empty()) return {};
    Fingerprint query = fingerprint(r, fp_cfg);
    auto nearest = top_k_similar(memory.index, query, k);

    std::vector<ContrastiveInstance> out;
    for (const auto& [member_idx, _] : nearest) {
        auto it = memory.instances.find(member_idx);
        if (it == memory.instances.end() || it->second.empty()) continue;
        std::mt19937_64 rng(fnv1a64(std::to_string(r.idx) + "/" + std::to_string(member_idx),
                                    seed ^ 0x44454d4full));
        size_t pick = it->second.size() == 1
                          ? 0
                          : std::uniform_int_distribution<size_t>(0, it->second.size() - 1)(rng);
        out.push_back(it->second[pick]);
    }
    return out;
}

void save_memory(const ConflictMemory& memory, const std::filesystem::path& instances_path,
                 const std::filesystem::path& fingerprints_path) {
    std::string out;
    for (const auto& [idx, instances] : memory.instances) {
        for (const auto& inst : instances) {
            ordered_json obj;
            obj["idx"] = inst.idx;
            obj["pos_tool"] = inst.pos_tool;
            obj["pos_pattern_id"] = inst.pos_pattern_id;
            obj["neg_tools"] = inst.neg_tools;
            obj["neg_pattern_ids"] = inst.neg_pattern_ids;
            obj["rationale"] = rationale_to_json(inst.rationale);
            out += obj.dump();
            out += '\n';
        }
    }
    write_file_atomic(instances_path, out);
    save_fingerprint_file(memory.index, fingerprints_path);
}

ConflictMemory load_memory(const std::filesystem::path& instances_path,
                           const std::filesystem::path& fingerprints_path,
                           const Dataset& dataset, int width, MemoryBuildLog* log) {
    ConflictMemory memory;
    for_each_line(instances_path, [&](int line_no, const std::string& line) {
        ContrastiveInstance inst;
        std::string violation;
        try {
            json obj = json::parse(line);
            inst.idx = obj.at("idx").get<long>();
            inst.pos_tool = obj.at("pos_tool").get<std::string>();
            inst.pos_pattern_id = obj.at("pos_pattern_id").get<std::string>();
            inst.neg_tools = obj.at("neg_tools").get<std::vector<std::string>>();
            inst.neg_pattern_ids = obj.at("neg_pattern_ids").get<std::vector<std::string>>();
            inst.rationale = parse_rationale(obj.at("rationale"));
            violation = validate_instance(inst, dataset);
        } catch (const std::exception& e) {
            violation = e.what();
        }
        if (!violation.empty()) {
            if (log) {
                ++log->dropped_on_load;
                log->warnings.push_back("dropped instance at line " + std::to_string(line_no) +
                                        ": " + violation);
            }
            return;
        }
        memory.instances[inst.idx].push_back(std::move(inst));
    });

    SimilarityIndex index = load_fingerprint_file(fingerprints_path, width);
    for (auto& [idx, fp] : index.entries)
        if (memory.instances.count(idx)) memory.index.add(idx, std::move(fp));
    // Members whose fingerprints went missing are indexed from scratch.
    for (const auto& [idx, _] : memory.instances) {
        bool present = false;
        for (const auto& [existing, __] : memory.index.entries)
            if (existing == idx) present = true;
        if (!present) memory.index.add(idx, fingerprint(dataset.at(idx), {width, 3}));
    }
    return memory;
}

}  // namespace armor
