#include "armor/eval.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "armor/util.hpp"

namespace armor {

using nlohmann::ordered_json;

ConfusionCounts confusion_counts(const std::vector<std::pair<Label, Label>>& pairs) {
    if (pairs.empty()) throw Error("EmptyInput", "no (gold, predicted) pairs");
    ConfusionCounts c;
    for (const auto& [gold, pred] : pairs) {
        if (gold == Label::Feasible)
            pred == Label::Feasible ? ++c.tp : ++c.fn;
        else
            pred == Label::Feasible ? ++c.fp : ++c.tn;
    }
    return c;
}

AccuracyMetrics accuracy_metrics(const ConfusionCounts& c) {
    AccuracyMetrics m;
    long total = c.total();
    m.overall = total ? static_cast<double>(c.tp + c.tn) / static_cast<double>(total) : 0.0;
    if (c.tp + c.fn > 0)
        m.feasible = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (c.tn + c.fp > 0)
        m.infeasible = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    return m;
}

F1PerClass f1_per_class(const ConfusionCounts& c) {
    auto f1 = [](long tp, long fp, long fn) -> std::optional<double> {
        if (tp + fp == 0 || tp + fn == 0) return std::nullopt;
        double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
        double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
        if (prec + rec == 0) return std::nullopt;
        return 2 * prec * rec / (prec + rec);
    };
    F1PerClass out;
    out.f1_feasible = f1(c.tp, c.fp, c.fn);
    out.f1_infeasible = f1(c.tn, c.fn, c.fp);  // class swap: tn acts as tp
    return out;
}

double mcc(const ConfusionCounts& c, std::vector<std::string>* log) {
    double denom_sq = static_cast<double>(c.tp + c.fp) * static_cast<double>(c.tp + c.fn) *
                      static_cast<double>(c.tn + c.fp) * static_cast<double>(c.tn + c.fn);
    if (denom_sq <= 0) {
        if (log) log->push_back("mcc denominator is zero; reporting 0 by convention");
        return 0.0;
    }
    double num = static_cast<double>(c.tp) * static_cast<double>(c.tn) -
                 static_cast<double>(c.fp) * static_cast<double>(c.fn);
    return num / std::sqrt(denom_sq);
}

double oracle_upper_bound(const Dataset& dataset) {
    long labeled = 0, covered = 0;
    for (const auto& r : dataset.reactions) {
        if (!r.label) continue;
        ++labeled;
        for (const auto& [tool_id, _] : dataset.predictions) {
            if (prediction_matches(dataset.prediction(tool_id, r.idx), *r.label)) {
                ++covered;
                break;
            }
        }
    }
    if (labeled == 0) throw Error("EmptyDataset", "no labeled reactions");
    return static_cast<double>(covered) / static_cast<double>(labeled);
}

Label majority_vote(const std::vector<Prediction>& predictions,
                    const std::vector<double>* weights) {
    if (predictions.empty()) return Label::Infeasible;
    if (weights && weights->size() != predictions.size())
        throw Error("ValueOutOfDomain", "weights must match predictions in size");
    double votes1 = 0, votes0 = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == Prediction::NA) continue;
        double w = weights ? (*weights)[i] : 1.0;
        (predictions[i] == Prediction::Pred1 ? votes1 : votes0) += w;
    }
    return votes1 > votes0 ? Label::Feasible : Label::Infeasible;
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::T1Consensus: return "T1Consensus";
        case Stage::TsConsensus: return "TsConsensus";
        case Stage::ConflictResolved: return "ConflictResolved";
        case Stage::FallbackDirect: return "FallbackDirect";
        case Stage::FallbackMajority: return "FallbackMajority";
    }
    throw Error("ValueOutOfDomain", "unknown stage");
}

Stage stage_from_name(const std::string& name) {
    for (Stage s : {Stage::T1Consensus, Stage::TsConsensus, Stage::ConflictResolved,
                    Stage::FallbackDirect, Stage::FallbackMajority})
        if (name == stage_name(s)) return s;
    throw Error("ValueOutOfDomain", "unknown stage name " + name);
}

CategoryBreakdown category_breakdown(const std::vector<DecisionTrace>& traces,
                                     const Dataset& dataset) {
    CategoryBreakdown out;
    long correct_t1 = 0, correct_ts = 0, correct_conflict = 0;
    long labeled_t1 = 0, labeled_ts = 0, labeled_conflict = 0;
    for (const auto& t : traces) {
        CategoryStats* cat;
        long* correct;
        long* labeled;
        if (t.stage == Stage::T1Consensus) {
            cat = &out.t1; correct = &correct_t1; labeled = &labeled_t1;
        } else if (t.stage == Stage::TsConsensus) {
            cat = &out.ts; correct = &correct_ts; labeled = &labeled_ts;
        } else {
            cat = &out.conflict; correct = &correct_conflict; labeled = &labeled_conflict;
        }
        ++cat->count;
        const Reaction* r = dataset.find(t.idx);
        if (r && r->label) {
            ++*labeled;
            if (t.final == *r->label) ++*correct;
        }
    }
    long total = static_cast<long>(traces.size());
    auto finish = [total](CategoryStats& cat, long correct, long labeled) {
        cat.proportion = total ? 100.0 * static_cast<double>(cat.count) / static_cast<double>(total) : 0.0;
        if (labeled > 0)
            cat.accuracy = static_cast<double>(correct) / static_cast<double>(labeled);
    };
    finish(out.t1, correct_t1, labeled_t1);
    finish(out.ts, correct_ts, labeled_ts);
    finish(out.conflict, correct_conflict, labeled_conflict);
    return out;
}

std::map<std::string, ToolUsage> tool_usage_report(const std::vector<DecisionTrace>& traces,
                                                   const std::vector<std::string>& tool_ids,
                                                   const Dataset& dataset) {
    std::map<std::string, ToolUsage> out;
    for (const auto& id : tool_ids) out[id];  // unused tools stay at zero
    out["(direct)"];
    out["(majority)"];

    std::map<std::string, std::pair<long, long>> chosen;  // tool -> (correct, labeled)
    for (const auto& t : traces) {
        std::string key;
        if (t.stage == Stage::ConflictResolved && t.chosen_tool)
            key = *t.chosen_tool;
        else if (t.stage == Stage::FallbackDirect)
            key = "(direct)";
        else if (t.stage == Stage::FallbackMajority)
            key = "(majority)";
        else
            continue;
        ++out[key].selected_count;
        const Reaction* r = dataset.find(t.idx);
        if (r && r->label) {
            auto& [correct, labeled] = chosen[key];
            ++labeled;
            if (t.final == *r->label) ++correct;
        }
    }
    for (const auto& [key, counts] : chosen)
        if (counts.second > 0)
            out[key].selected_acc =
                static_cast<double>(counts.first) / static_cast<double>(counts.second);

    for (const auto& id : tool_ids) {
        long correct = 0, labeled = 0;
        for (const auto& r : dataset.reactions) {
            if (!r.label) continue;
            ++labeled;
            if (prediction_matches(dataset.prediction(id, r.idx), *r.label)) ++correct;
        }
        if (labeled > 0)
            out[id].full_acc = static_cast<double>(correct) / static_cast<double>(labeled);
        auto& u = out[id];
        if (u.selected_acc && u.full_acc) {
            double d = *u.selected_acc - *u.full_acc;
            u.trend = d > 1e-9 ? "up" : d < -1e-9 ? "down" : "flat";
        }
    }
    return out;
}

namespace {

ordered_json trace_to_json(const DecisionTrace& t) {
    ordered_json obj;
    obj["idx"] = t.idx;
    obj["stage"] = stage_name(t.stage);
    obj["selected_tools"] = t.selected_tools;
    if (t.chosen_tool)
        obj["chosen_tool"] = *t.chosen_tool;
    else
        obj["chosen_tool"] = nullptr;
    obj["demonstrations_used"] = t.demonstrations_used;
    obj["final"] = label_to_int(t.final);
    return obj;
}

ordered_json opt_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

ordered_json category_to_json(const CategoryStats& c) {
    ordered_json obj;
    obj["count"] = c.count;
    obj["proportion"] = c.proportion;
    obj["accuracy"] = opt_to_json(c.accuracy);
    return obj;
}

}  // namespace

std::string serialize_report(const RunReport& report) {
    ordered_json doc;
    ordered_json prov;
    prov["seed"] = report.seed;
    prov["config_digest"] = report.config_digest;
    prov["asset_digests"] = ordered_json::object();
    for (const auto& [name, digest] : report.asset_digests)
        prov["asset_digests"][name] = digest;
    doc["provenance"] = prov;

    if (report.has_labels) {
        ordered_json metrics;
        metrics["acc_overall"] = report.metrics.overall;
        metrics["acc_feasible"] = opt_to_json(report.metrics.feasible);
        metrics["acc_infeasible"] = opt_to_json(report.metrics.infeasible);
        metrics["f1_feasible"] = opt_to_json(report.f1.f1_feasible);
        metrics["f1_infeasible"] = opt_to_json(report.f1.f1_infeasible);
        metrics["mcc"] = report.mcc_value;
        doc["metrics"] = metrics;

        ordered_json conf;
        conf["tp"] = report.confusion.tp;
        conf["fp"] = report.confusion.fp;
        conf["tn"] = report.confusion.tn;
        conf["fn"] = report.confusion.fn;
        doc["confusion"] = conf;
    } else {
        doc["metrics"] = nullptr;
    }

    ordered_json cats;
    cats["t1"] = category_to_json(report.categories.t1);
    cats["ts"] = category_to_json(report.categories.ts);
    cats["conflict"] = category_to_json(report.categories.conflict);
    doc["categories"] = cats;

    doc["tool_usage"] = ordered_json::object();
    for (const auto& [tool, usage] : report.tool_usage) {
        ordered_json u;
        u["selected_count"] = usage.selected_count;
        u["selected_acc"] = opt_to_json(usage.selected_acc);
        u["full_acc"] = opt_to_json(usage.full_acc);
        u["trend"] = usage.trend;
        doc["tool_usage"][tool] = u;
    }

    doc["notes"] = report.notes;
    doc["traces"] = ordered_json::array();
    for (const auto& t : report.traces) doc["traces"].push_back(trace_to_json(t));
    return doc.dump(2) + "\n";
}

void save_report(const RunReport& report, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_report(report));
}

namespace {

std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

std::string render_report_text(const RunReport& report) {
    std::string out;
    char line[256];

    out += "== Overall metrics ==\n";
    if (report.has_labels) {
        std::snprintf(line, sizeof(line),
                      "acc_overall %s  acc_feasible %s  acc_infeasible %s\n",
                      fmt(report.metrics.overall).c_str(), fmt_opt(report.metrics.feasible).c_str(),
                      fmt_opt(report.metrics.infeasible).c_str());
        out += line;
        std::snprintf(line, sizeof(line), "f1_feasible %s  f1_infeasible %s  mcc %s\n",
                      fmt_opt(report.f1.f1_feasible).c_str(),
                      fmt_opt(report.f1.f1_infeasible).c_str(), fmt(report.mcc_value).c_str());
        out += line;
    } else {
        out += "(no labels; metrics omitted)\n";
    }

    out += "\n== Category breakdown ==\n";
    auto cat_line = [&](const char* name, const CategoryStats& c) {
        std::snprintf(line, sizeof(line), "%-10s count %6ld  proportion %7.2f%%  acc %s\n", name,
                      c.count, c.proportion, fmt_opt(c.accuracy).c_str());
        out += line;
    };
    cat_line("T1", report.categories.t1);
    cat_line("Ts", report.categories.ts);
    cat_line("Conflict", report.categories.conflict);

    out += "\n== Tool usage ==\n";
    for (const auto& [tool, u] : report.tool_usage) {
        std::snprintf(line, sizeof(line),
                      "%-14s selected %5ld  selected_acc %s  full_acc %s  trend %s\n",
                      tool.c_str(), u.selected_count, fmt_opt(u.selected_acc).c_str(),
                      fmt_opt(u.full_acc).c_str(), u.trend.empty() ? "-" : u.trend.c_str());
        out += line;
    }
    return out;
}

}  // namespace armor
