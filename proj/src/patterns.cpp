#include "armor/patterns.hpp"

#include <algorithm>
#include <random>

#include <nlohmann/json.hpp>

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<long> DiagnosticSubset::all_idxs_sorted() const {
    std::vector<long> out;
    for (const auto& cell : cells) out.insert(out.end(), cell.begin(), cell.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<CoverageCache::Entry> CoverageCache::lookup(const std::string& pattern_id,
                                                          long idx) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find({pattern_id, idx});
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

CoverageCache::Entry CoverageCache::insert(const std::string& pattern_id, long idx, Entry entry) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, _] = entries_.emplace(std::make_pair(pattern_id, idx), std::move(entry));
    return it->second;
}

size_t CoverageCache::size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
}

void CoverageCache::save(const std::filesystem::path& path) const {
    std::lock_guard<std::mutex> lock(mutex_);
    std::string out;
    for (const auto& [key, entry] : entries_) {
        ordered_json obj;
        obj["pattern_id"] = key.first;
        obj["idx"] = key.second;
        obj["covered"] = entry.covered;
        obj["confidence"] = entry.confidence;
        out += obj.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

CoverageCache CoverageCache::load(const std::filesystem::path& path) {
    CoverageCache cache;
    for_each_line(path, [&](int line_no, const std::string& line) {
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded())
            throw Error("MalformedLine", "coverage cache line " + std::to_string(line_no));
        cache.insert(obj.at("pattern_id").get<std::string>(), obj.at("idx").get<long>(),
                     {obj.at("covered").get<bool>(), obj.at("confidence").get<std::string>()});
    });
    return cache;
}

std::vector<long> disagreement_set(const Dataset& dataset,
                                   const std::vector<std::string>& t1_tools) {
    if (t1_tools.empty()) throw Error("EmptyT1", "no first-level tools");
    std::vector<long> out;
    for (const auto& r : dataset.reactions) {
        bool consistent = true;
        Prediction first = dataset.prediction(t1_tools.front(), r.idx);
        if (first == Prediction::NA) consistent = false;
        for (size_t i = 1; consistent && i < t1_tools.size(); ++i) {
            Prediction p = dataset.prediction(t1_tools[i], r.idx);
            if (p == Prediction::NA || p != first) consistent = false;
        }
        if (!consistent) out.push_back(r.idx);
    }
    return out;
}

namespace {

int cell_of(Label label, Prediction pred) {
    // r11, r10, r01, r00; NA goes to the wrong-prediction cell for its label.
    bool gold = label == Label::Feasible;
    bool predicted_feasible;
    if (pred == Prediction::NA) predicted_feasible = !gold;
    else predicted_feasible = pred == Prediction::Pred1;
    if (gold) return predicted_feasible ? 0 : 1;
    return predicted_feasible ? 2 : 3;
}

}  // namespace

std::vector<DiagnosticSubset> sample_diagnostic_subsets(
    const std::string& tool_id, const std::vector<long>& pool, const Dataset& dataset,
    int m_subsets, const std::vector<int>& n_schedule, uint64_t seed, PatternLog* log) {
    if (n_schedule.empty()) throw Error("SpecInvalid", "empty N schedule");

    std::array<std::vector<long>, 4> cell_pool;
    for (long idx : pool) {
        const Reaction& r = dataset.at(idx);
        if (!r.label) continue;
        cell_pool[cell_of(*r.label, dataset.prediction(tool_id, idx))].push_back(idx);
    }
    for (auto& c : cell_pool) std::sort(c.begin(), c.end());

    static const char* cell_names[4] = {"r11", "r10", "r01", "r00"};
    std::vector<DiagnosticSubset> out;
    for (int m = 1; m <= m_subsets; ++m) {
        int n = n_schedule[static_cast<size_t>(m - 1) % n_schedule.size()];
        bool skip = false;
        for (int c = 0; c < 4 && !skip; ++c) {
            if (static_cast<int>(cell_pool[c].size()) < n) {
                if (log) {
                    ++log->subsets_skipped;
                    log->warnings.push_back("InsufficientCell(" + std::string(cell_names[c]) +
                                            ", have=" + std::to_string(cell_pool[c].size()) +
                                            ", need=" + std::to_string(n) + ") tool=" + tool_id +
                                            " m=" + std::to_string(m));
                }
                skip = true;
            }
        }
        if (skip) continue;

        DiagnosticSubset subset;
        subset.tool_id = tool_id;
        subset.subset_no = m;
        std::mt19937_64 rng(fnv1a64(tool_id + "/" + std::to_string(m), seed));
        for (int c = 0; c < 4; ++c) {
            std::vector<long> cell = cell_pool[c];
            std::shuffle(cell.begin(), cell.end(), rng);
            cell.resize(static_cast<size_t>(n));
            subset.cells[c] = std::move(cell);
        }
        out.push_back(std::move(subset));
    }
    return out;
}

std::string subset_dataset_text(const DiagnosticSubset& subset, const Dataset& dataset) {
    std::string out;
    bool first = true;
    for (long idx : subset.all_idxs_sorted()) {
        const Reaction& r = dataset.at(idx);
        ordered_json obj;
        obj["idx"] = r.idx;
        obj["reactants"] = r.reactants;
        obj["product"] = r.product;
        obj["label"] = r.label ? label_to_int(*r.label) : 0;
        Prediction p = dataset.prediction(subset.tool_id, idx);
        if (p == Prediction::NA) obj["prediction"] = "NA";
        else obj["prediction"] = p == Prediction::Pred1 ? 1 : 0;
        if (!first) out += '\n';
        out += obj.dump();
        first = false;
    }
    return out;
}

std::string make_pattern_id(const std::string& tool_id, const std::string& name,
                            const std::string& explanation, const std::vector<long>& idxs) {
    std::string key = name + "\x1f" + explanation;
    for (long i : idxs) key += "\x1f" + std::to_string(i);
    return tool_id + "-" + to_hex64(fnv1a64(key, 0x50415431ull));
}

std::vector<Pattern> extract_patterns(LlmBackend& backend, const std::string& tool_id,
                                      const DiagnosticSubset& subset, const Dataset& dataset,
                                      PatternLog* log) {
    json response;
    try {
        if (log) ++log->llm_calls;
        response = complete_json(backend, TemplateId::PatternExtraction,
                                 {{"dataset_text", subset_dataset_text(subset, dataset)}});
    } catch (const Error& e) {
        if (log) {
            ++log->subsets_skipped;
            log->warnings.push_back("extraction failed for tool=" + tool_id + " m=" +
                                    std::to_string(subset.subset_no) + ": " + e.what());
        }
        return {};
    }

    std::set<long> members;
    for (long idx : subset.all_idxs_sorted()) members.insert(idx);

    std::vector<Pattern> out;
    for (const auto& entry : response.at("often_correct_on")) {
        Pattern p;
        p.tool_id = tool_id;
        p.name = entry.at("name").get<std::string>();
        p.explanation = entry.at("explanation").get<std::string>();
        p.example_idxs = entry.at("examples_idx").get<std::vector<long>>();
        bool foreign = false;
        for (long idx : p.example_idxs)
            if (!members.count(idx)) foreign = true;
        if (foreign) {
            if (log) {
                ++log->patterns_dropped;
                log->warnings.push_back("pattern '" + p.name + "' cites idx outside its subset");
            }
            continue;
        }
        p.pattern_id = make_pattern_id(tool_id, p.name, p.explanation, p.example_idxs);
        p.status = PatternStatus::Raw;
        out.push_back(std::move(p));
    }
    return out;
}

bool judge_coverage(LlmBackend& backend, CoverageCache& cache, const Pattern& pattern,
                    const Reaction& r, PatternLog* log) {
    if (auto hit = cache.lookup(pattern.pattern_id, r.idx)) {
        if (log) ++log->cache_hits;
        return hit->covered;
    }

    ordered_json example;
    example["idx"] = r.idx;
    example["reactants"] = r.reactants;
    example["product"] = r.product;

    CoverageCache::Entry entry;
    try {
        if (log) ++log->llm_calls;
        json response = complete_json(backend, TemplateId::PatternMatch,
                                      {{"rule_name", json(pattern.name).dump()},
                                       {"rule_explanation", json(pattern.explanation).dump()},
                                       {"example_json", example.dump()}});
        entry.covered = response.at("belongs_to_rule").get<bool>();
        entry.confidence = response.at("confidence").get<std::string>();
    } catch (const Error& e) {
        // Fail closed: an unjudgeable pair counts as uncovered.
        entry.covered = false;
        entry.confidence = "low";
        if (log) log->warnings.push_back("coverage judge failed for " + pattern.pattern_id +
                                         " idx=" + std::to_string(r.idx) + ": " + e.what());
    }
    return cache.insert(pattern.pattern_id, r.idx, entry).covered;
}

double align_score(const Pattern& pattern, const Dataset& dataset) {
    if (pattern.example_idxs.empty()) throw Error("MissingExample", "pattern has no examples");
    long correct = 0;
    for (long idx : pattern.example_idxs) {
        const Reaction& r = dataset.at(idx);
        if (!r.label) throw Error("MissingExample", "example idx " + std::to_string(idx) +
                                                        " has no label");
        if (prediction_matches(dataset.prediction(pattern.tool_id, idx), *r.label)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(pattern.example_idxs.size());
}

double cov_score(LlmBackend& backend, CoverageCache& cache, const Pattern& pattern,
                 const Dataset& dataset, PatternLog* log) {
    if (pattern.example_idxs.empty()) throw Error("MissingExample", "pattern has no examples");
    long covered = 0;
    for (long idx : pattern.example_idxs)
        if (judge_coverage(backend, cache, pattern, dataset.at(idx), log)) ++covered;
    return static_cast<double>(covered) / static_cast<double>(pattern.example_idxs.size());
}

std::vector<Pattern> refine_patterns(LlmBackend& backend, CoverageCache& cache,
                                     std::vector<Pattern> raw, const Dataset& dataset,
                                     double tau1, double tau2, PatternLog* log) {
    std::vector<Pattern> out;
    for (auto& p : raw) {
        p.align = align_score(p, dataset);
        p.cov = cov_score(backend, cache, p, dataset, log);
        if (*p.align >= tau1 && *p.cov >= tau2) {
            p.status = PatternStatus::Refined;
            out.push_back(std::move(p));
        } else if (log) {
            ++log->patterns_dropped;
        }
    }
    return out;
}

std::vector<Pattern> consolidate_patterns(LlmBackend& backend, std::vector<Pattern> refined,
                                          const std::string& tool_id, PatternLog* log) {
    std::map<std::string, std::vector<Pattern>> groups;
    for (auto& p : refined) groups[p.name].push_back(std::move(p));

    std::vector<Pattern> out;
    for (auto& [name, group] : groups) {
        std::sort(group.begin(), group.end(),
                  [](const Pattern& a, const Pattern& b) { return a.pattern_id < b.pattern_id; });
        size_t keep = 0;
        if (group.size() > 1) {
            ordered_json candidates = ordered_json::array();
            for (size_t i = 0; i < group.size(); ++i) {
                ordered_json c;
                c["index"] = i;
                c["name"] = group[i].name;
                c["explanation"] = group[i].explanation;
                c["examples_idx"] = group[i].example_idxs;
                candidates.push_back(c);
            }
            bool fallback = true;
            try {
                if (log) ++log->llm_calls;
                json response = complete_json(backend, TemplateId::Consolidation,
                                              {{"n_rules", std::to_string(group.size())},
                                               {"rule_name", name},
                                               {"candidates_json", candidates.dump(2)}});
                long k = response.at("keep_index").get<long>();
                if (k >= 0 && k < static_cast<long>(group.size())) {
                    keep = static_cast<size_t>(k);
                    fallback = false;
                }
            } catch (const Error&) {
                // fall through to deterministic fallback
            }
            if (fallback) {
                // Highest align wins; the pattern_id sort above breaks ties.
                for (size_t i = 1; i < group.size(); ++i)
                    if (group[i].align.value_or(0) > group[keep].align.value_or(0)) keep = i;
                if (log) log->warnings.push_back("consolidation fallback for '" + name +
                                                 "' of tool " + tool_id);
            }
        }
        Pattern survivor = std::move(group[keep]);
        survivor.status = PatternStatus::Consolidated;
        out.push_back(std::move(survivor));
    }
    return out;
}

std::optional<double> conf_score(LlmBackend& backend, CoverageCache& cache, Pattern& pattern,
                                 const std::vector<long>& pool, const Dataset& dataset,
                                 PatternLog* log) {
    long covered = 0, covered_correct = 0;
    for (long idx : pool) {
        const Reaction& r = dataset.at(idx);
        if (!judge_coverage(backend, cache, pattern, r, log)) continue;
        ++covered;
        if (r.label && prediction_matches(dataset.prediction(pattern.tool_id, idx), *r.label))
            ++covered_correct;
    }
    pattern.covered_count = covered;
    if (covered == 0) return std::nullopt;
    double conf = static_cast<double>(covered_correct) / static_cast<double>(covered);
    pattern.conf = conf;
    return conf;
}

std::vector<Pattern> finalize_pattern_set(std::vector<Pattern> consolidated, double tau3) {
    std::vector<Pattern> kept;
    for (auto& p : consolidated)
        if (p.conf && *p.conf >= tau3) kept.push_back(std::move(p));
    std::sort(kept.begin(), kept.end(), [](const Pattern& a, const Pattern& b) {
        if (*a.conf != *b.conf) return *a.conf > *b.conf;
        if (a.covered_count != b.covered_count) return a.covered_count > b.covered_count;
        return a.pattern_id < b.pattern_id;
    });
    if (kept.size() > 5) kept.resize(5);
    for (auto& p : kept) p.status = PatternStatus::Final;
    return kept;
}

namespace {

const char* status_name(PatternStatus s) {
    switch (s) {
        case PatternStatus::Raw: return "Raw";
        case PatternStatus::Refined: return "Refined";
        case PatternStatus::Consolidated: return "Consolidated";
        case PatternStatus::Final: return "Final";
    }
    return "Raw";
}

PatternStatus status_from_name(const std::string& s) {
    if (s == "Raw") return PatternStatus::Raw;
    if (s == "Refined") return PatternStatus::Refined;
    if (s == "Consolidated") return PatternStatus::Consolidated;
    if (s == "Final") return PatternStatus::Final;
    throw Error("MalformedLine", "unknown pattern status: " + s);
}

}  // namespace

void PatternStore::save(const std::filesystem::path& path) const {
    ordered_json doc;
    for (const auto& [tool, patterns] : by_tool) {
        ordered_json list = json::array();
        for (const auto& p : patterns) {
            ordered_json obj;
            obj["pattern_id"] = p.pattern_id;
            obj["tool_id"] = p.tool_id;
            obj["name"] = p.name;
            obj["explanation"] = p.explanation;
            obj["example_idxs"] = p.example_idxs;
            if (p.align) obj["align"] = *p.align;
            if (p.cov) obj["cov"] = *p.cov;
            if (p.conf) obj["conf"] = *p.conf;
            obj["covered_count"] = p.covered_count;
            obj["status"] = status_name(p.status);
            list.push_back(obj);
        }
        doc[tool] = list;
    }
    write_file_atomic(path, doc.dump(2) + "\n");
}

PatternStore PatternStore::load(const std::filesystem::path& path) {
    json doc = json::parse(read_file(path));
    PatternStore store;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        for (const auto& obj : it.value()) {
            Pattern p;
            p.pattern_id = obj.at("pattern_id").get<std::string>();
            p.tool_id = obj.at("tool_id").get<std::string>();
            p.name = obj.at("name").get<std::string>();
            p.explanation = obj.at("explanation").get<std::string>();
            p.example_idxs = obj.at("example_idxs").get<std::vector<long>>();
            if (obj.contains("align")) p.align = obj["align"].get<double>();
            if (obj.contains("cov")) p.cov = obj["cov"].get<double>();
            if (obj.contains("conf")) p.conf = obj["conf"].get<double>();
            p.covered_count = obj.value("covered_count", 0L);
            p.status = status_from_name(obj.at("status").get<std::string>());
            store.by_tool[it.key()].push_back(std::move(p));
        }
    }
    return store;
}

std::vector<SelectedTool> select_tools(LlmBackend& backend, CoverageCache& cache,
                                       const Reaction& r, const PatternStore& store,
                                       const ToolRegistry& registry, int l_max,
                                       PatternLog* log) {
    std::vector<SelectedTool> matched;
    for (const auto& [tool_id, patterns] : store.by_tool) {
        const Pattern* best = nullptr;
        for (const auto& p : patterns) {
            if (p.status != PatternStatus::Final || !p.conf) continue;
            if (!judge_coverage(backend, cache, p, r, log)) continue;
            if (!best || *p.conf > *best->conf) best = &p;
        }
        if (best) matched.push_back({tool_id, *best});
    }
    std::sort(matched.begin(), matched.end(), [&](const SelectedTool& a, const SelectedTool& b) {
        if (*a.pattern.conf != *b.pattern.conf) return *a.pattern.conf > *b.pattern.conf;
        double va = registry.contains(a.tool_id)
                        ? registry.get(a.tool_id).val_accuracy.value_or(0)
                        : 0;
        double vb = registry.contains(b.tool_id)
                        ? registry.get(b.tool_id).val_accuracy.value_or(0)
                        : 0;
        if (va != vb) return va > vb;
        return a.tool_id < b.tool_id;
    });
    if (static_cast<int>(matched.size()) > l_max) matched.resize(static_cast<size_t>(l_max));
    return matched;
}

std::string render_cands_section(const std::vector<CandidateLine>& candidates) {
    std::string out = "Candidate tools and their matched rules:";
    for (const auto& c : candidates) {
        ordered_json obj;
        obj["tool"] = c.tool_id;
        switch (c.prediction) {
            case Prediction::Pred0: obj["tool_prediction"] = 0; break;
            case Prediction::Pred1: obj["tool_prediction"] = 1; break;
            case Prediction::NA: obj["tool_prediction"] = "NA"; break;
        }
        obj["rule_name"] = c.rule_name;
        obj["rule_explanation"] = c.rule_explanation;
        obj["conf"] = c.conf;
        out += '\n';
        out += obj.dump();
    }
    return out;
}

std::string quoted_list(const std::vector<std::string>& items) {
    std::string out;
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += '"';
        out += items[i];
        out += '"';
    }
    return out;
}

}  // namespace armor
