#include "armor/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "armor/oracle.hpp"
#include "armor/pipeline.hpp"

namespace armor {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Advisory per-asset-directory lock; one command at a time.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".armor.lock") {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (fs::exists(path_))
            throw Error("LockHeld", "another command holds " + path_.string());
        std::ofstream out(path_);
        if (!out) throw Error("LockHeld", "cannot create lock file " + path_.string());
        out << "locked\n";
    }
    ~DirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

private:
    fs::path path_;
};

struct CliState {
    fs::path config_path;
    PipelineConfig config;

    fs::path asset_path(const std::string& name, const std::string& default_file) const {
        auto it = config.assets.find(name);
        if (it != config.assets.end()) {
            fs::path p(it->second);
            return p.is_absolute() ? p : config_path.parent_path() / p;
        }
        return config_path.parent_path() / default_file;
    }

    fs::path input_path(const std::string& name, const std::string& default_file) const {
        fs::path p = asset_path(name, default_file);
        if (!fs::exists(p))
            throw Error("AssetMissing", "required asset '" + name + "' not found at " + p.string());
        return p;
    }
};

CliState load_state(const std::string& config_path) {
    CliState st;
    st.config_path = fs::absolute(config_path);
    if (!fs::exists(st.config_path))
        throw Error("ConfigInvalid", "config file not found: " + st.config_path.string());
    st.config = PipelineConfig::load(st.config_path);
    return st;
}

std::unique_ptr<LlmBackend> make_backend(const CliState& st) {
    if (st.config.backend == "oracle") {
        auto gt = SynthGroundTruth::load(st.input_path("ground_truth", "ground_truth.json"));
        return std::make_unique<OracleBackend>(std::move(gt));
    }
    if (st.config.backend == "scripted") {
        auto path = st.input_path("scenario", "scenario.jsonl");
        return std::make_unique<ScriptedBackend>(ScriptedBackend::from_file(path));
    }
    if (st.config.backend == "http") return std::make_unique<HttpLlmBackend>();
    throw Error("ConfigInvalid", "unknown backend '" + st.config.backend + "'");
}

CoverageCache load_cache(const CliState& st) {
    fs::path p = st.asset_path("coverage_cache", "coverage_cache.jsonl");
    if (fs::exists(p)) return CoverageCache::load(p);
    return {};
}

void save_cache(const CoverageCache& cache, const CliState& st) {
    cache.save(st.asset_path("coverage_cache", "coverage_cache.jsonl"));
}

std::string file_digest(const fs::path& p) { return to_hex64(fnv1a64(read_file(p))); }

void emit_log(const std::string& verb, const PatternLog& log,
              const std::map<std::string, long>& extra = {}) {
    ordered_json line;
    line["verb"] = verb;
    line["llm_calls"] = log.llm_calls;
    line["cache_hits"] = log.cache_hits;
    line["patterns_dropped"] = log.patterns_dropped;
    line["subsets_skipped"] = log.subsets_skipped;
    for (const auto& [k, v] : extra) line[k] = v;
    line["warnings"] = static_cast<long>(log.warnings.size());
    std::printf("%s\n", line.dump().c_str());
}

int cmd_synth_gen(const CliState& st, const SynthSpec& spec) {
    SynthOutput out = synth_gen(spec);
    save_dataset(out.validation, st.asset_path("val_dataset", "val.jsonl"));
    save_dataset(out.test, st.asset_path("test_dataset", "test.jsonl"));
    out.ground_truth.save(st.asset_path("ground_truth", "ground_truth.json"));
    ordered_json line;
    line["verb"] = "synth-gen";
    line["tools"] = spec.tools;
    line["regions"] = spec.regions;
    line["size"] = spec.size;
    line["seed"] = spec.seed;
    std::printf("%s\n", line.dump().c_str());
    return kExitOk;
}

int cmd_build_hierarchy(const CliState& st) {
    Dataset val = load_dataset(st.input_path("val_dataset", "val.jsonl"));
    val.split = Split::Validation;
    ToolRegistry registry = registry_from_dataset(val);
    Hierarchy h = build_hierarchy(registry, val, st.config.rho);
    h.save(st.asset_path("hierarchy", "hierarchy.json"));
    ordered_json line;
    line["verb"] = "build-hierarchy";
    line["l1"] = h.l1;
    line["l2_count"] = static_cast<long>(h.l2.size());
    std::printf("%s\n", line.dump().c_str());
    return kExitOk;
}

int cmd_extract_patterns(const CliState& st) {
    Dataset val = load_dataset(st.input_path("val_dataset", "val.jsonl"));
    Hierarchy h = Hierarchy::load(st.input_path("hierarchy", "hierarchy.json"));
    ToolRegistry registry = registry_from_dataset(val);
    auto backend = make_backend(st);
    std::vector<long> pool = disagreement_set(val, h.l1);

    PatternLog log;
    PatternStore store;
    long extracted = 0;
    for (const auto& tool_id : registry.ids()) {
        auto subsets = sample_diagnostic_subsets(tool_id, pool, val, st.config.m_subsets,
                                                 st.config.n_schedule, st.config.seed, &log);
        for (const auto& subset : subsets) {
            auto patterns = extract_patterns(*backend, tool_id, subset, val, &log);
            extracted += static_cast<long>(patterns.size());
            auto& dest = store.by_tool[tool_id];
            dest.insert(dest.end(), patterns.begin(), patterns.end());
        }
    }
    store.save(st.asset_path("patterns_raw", "patterns_raw.json"));
    emit_log("extract-patterns",
             log, {{"pool_size", static_cast<long>(pool.size())}, {"patterns", extracted}});
    return kExitOk;
}

int cmd_refine(const CliState& st) {
    Dataset val = load_dataset(st.input_path("val_dataset", "val.jsonl"));
    PatternStore raw = PatternStore::load(st.input_path("patterns_raw", "patterns_raw.json"));
    auto backend = make_backend(st);
    CoverageCache cache = load_cache(st);

    PatternLog log;
    PatternStore refined;
    long kept = 0;
    for (auto& [tool_id, patterns] : raw.by_tool) {
        auto out = refine_patterns(*backend, cache, std::move(patterns), val, st.config.tau1,
                                   st.config.tau2, &log);
        kept += static_cast<long>(out.size());
        if (!out.empty()) refined.by_tool[tool_id] = std::move(out);
    }
    refined.save(st.asset_path("patterns_refined", "patterns_refined.json"));
    save_cache(cache, st);
    emit_log("refine", log, {{"patterns_kept", kept}});
    return kExitOk;
}

int cmd_consolidate(const CliState& st) {
    Dataset val = load_dataset(st.input_path("val_dataset", "val.jsonl"));
    Hierarchy h = Hierarchy::load(st.input_path("hierarchy", "hierarchy.json"));
    PatternStore refined =
        PatternStore::load(st.input_path("patterns_refined", "patterns_refined.json"));
    auto backend = make_backend(st);
    CoverageCache cache = load_cache(st);
    std::vector<long> pool = disagreement_set(val, h.l1);

    PatternLog log;
    PatternStore final_store;
    long kept = 0;
    for (auto& [tool_id, patterns] : refined.by_tool) {
        auto consolidated = consolidate_patterns(*backend, std::move(patterns), tool_id, &log);
        std::vector<Pattern> scored;
        for (auto& p : consolidated) {
            auto conf = conf_score(*backend, cache, p, pool, val, &log);
            if (conf)
                scored.push_back(std::move(p));
            else
                ++log.patterns_dropped;
        }
        auto finalized = finalize_pattern_set(std::move(scored), st.config.tau3);
        kept += static_cast<long>(finalized.size());
        if (!finalized.empty()) final_store.by_tool[tool_id] = std::move(finalized);
    }
    final_store.save(st.asset_path("patterns", "patterns.json"));
    save_cache(cache, st);
    emit_log("consolidate", log, {{"patterns_final", kept}});
    return kExitOk;
}

int cmd_build_memory(const CliState& st) {
    Dataset val = load_dataset(st.input_path("val_dataset", "val.jsonl"));
    Hierarchy h = Hierarchy::load(st.input_path("hierarchy", "hierarchy.json"));
    PatternStore store = PatternStore::load(st.input_path("patterns", "patterns.json"));
    auto backend = make_backend(st);
    CoverageCache cache = load_cache(st);
    std::vector<long> pool = disagreement_set(val, h.l1);

    MemoryBuildLog log;
    ConflictMemory memory =
        build_instances(*backend, cache, pool, store, val, st.config.fingerprint, &log);
    save_memory(memory, st.asset_path("memory_instances", "memory_instances.jsonl"),
                st.asset_path("memory_fingerprints", "memory_fingerprints.jsonl"));
    save_cache(cache, st);
    ordered_json line;
    line["verb"] = "build-memory";
    line["llm_calls"] = log.llm_calls;
    line["instances_built"] = log.instances_built;
    line["instances_skipped"] = log.instances_skipped;
    line["members"] = static_cast<long>(memory.instances.size());
    std::printf("%s\n", line.dump().c_str());
    return kExitOk;
}

int cmd_predict(const CliState& st) {
    Dataset val = load_dataset(st.input_path("val_dataset", "val.jsonl"));
    Dataset test = load_dataset(st.input_path("test_dataset", "test.jsonl"));
    test.split = Split::Test;
    fs::path hierarchy_path = st.input_path("hierarchy", "hierarchy.json");
    fs::path patterns_path = st.input_path("patterns", "patterns.json");

    ToolRegistry registry = registry_from_dataset(test);
    // Validation accuracies drive tie-breaks in tool selection.
    ToolRegistry val_registry = registry_from_dataset(val);
    Hierarchy h = Hierarchy::load(hierarchy_path);
    for (auto& record : registry) {
        if (val_registry.contains(record.tool_id))
            record.val_accuracy = tool_accuracy(val_registry.get(record.tool_id), val);
        bool in_l1 = std::find(h.l1.begin(), h.l1.end(), record.tool_id) != h.l1.end();
        record.level = in_l1 ? ToolLevel::L1 : ToolLevel::L2;
    }

    auto backend = make_backend(st);
    CoverageCache cache = load_cache(st);
    PatternLog log;

    PipelineContext ctx;
    ctx.config = st.config;
    ctx.registry = &registry;
    ctx.hierarchy = h;
    ctx.store = PatternStore::load(patterns_path);
    ctx.val = &val;
    ctx.backend = backend.get();
    ctx.cache = &cache;
    ctx.log = &log;

    std::map<std::string, std::string> digests;
    digests["hierarchy"] = file_digest(hierarchy_path);
    digests["patterns"] = file_digest(patterns_path);
    fs::path mem_path = st.asset_path("memory_instances", "memory_instances.jsonl");
    fs::path fp_path = st.asset_path("memory_fingerprints", "memory_fingerprints.jsonl");
    if (fs::exists(mem_path)) {
        ctx.memory = load_memory(mem_path, fp_path, val, st.config.fingerprint.width);
        digests["memory_instances"] = file_digest(mem_path);
    }

    RunReport report = run_batch(test, ctx, digests);
    save_report(report, st.asset_path("report", "report.json"));
    save_cache(cache, st);
    emit_log("predict", log, {{"reactions", static_cast<long>(report.traces.size())}});
    return kExitOk;
}

int cmd_evaluate(const CliState& st) {
    Dataset test = load_dataset(st.input_path("test_dataset", "test.jsonl"));

    ordered_json doc;
    doc["oracle_upper_bound"] = oracle_upper_bound(test);

    ordered_json tools = ordered_json::object();
    std::vector<std::string> tool_ids;
    for (const auto& [tool_id, _] : test.predictions) tool_ids.push_back(tool_id);
    double best = 0;
    for (const auto& tool_id : tool_ids) {
        long correct = 0, labeled = 0;
        for (const auto& r : test.reactions) {
            if (!r.label) continue;
            ++labeled;
            if (prediction_matches(test.prediction(tool_id, r.idx), *r.label)) ++correct;
        }
        double acc = labeled ? static_cast<double>(correct) / static_cast<double>(labeled) : 0.0;
        tools[tool_id] = acc;
        best = std::max(best, acc);
    }
    doc["tool_accuracy"] = tools;
    doc["best_single_tool"] = best;

    long majority_correct = 0, labeled = 0;
    for (const auto& r : test.reactions) {
        if (!r.label) continue;
        ++labeled;
        std::vector<Prediction> preds;
        for (const auto& tool_id : tool_ids) preds.push_back(test.prediction(tool_id, r.idx));
        if (majority_vote(preds) == *r.label) ++majority_correct;
    }
    doc["majority_vote"] =
        labeled ? static_cast<double>(majority_correct) / static_cast<double>(labeled) : 0.0;

    std::string text = doc.dump(2) + "\n";
    write_file_atomic(st.asset_path("evaluation", "evaluation.json"), text);
    std::printf("%s", text.c_str());
    return kExitOk;
}

int cmd_report(const CliState& st) {
    fs::path report_path = st.input_path("report", "report.json");
    json doc = json::parse(read_file(report_path));

    RunReport report;
    report.has_labels = !doc.at("metrics").is_null();
    if (report.has_labels) {
        const json& m = doc["metrics"];
        report.metrics.overall = m.at("acc_overall").get<double>();
        if (!m.at("acc_feasible").is_null())
            report.metrics.feasible = m["acc_feasible"].get<double>();
        if (!m.at("acc_infeasible").is_null())
            report.metrics.infeasible = m["acc_infeasible"].get<double>();
        if (!m.at("f1_feasible").is_null()) report.f1.f1_feasible = m["f1_feasible"].get<double>();
        if (!m.at("f1_infeasible").is_null())
            report.f1.f1_infeasible = m["f1_infeasible"].get<double>();
        report.mcc_value = m.at("mcc").get<double>();
    }
    auto read_cat = [](const json& c) {
        CategoryStats out;
        out.count = c.at("count").get<long>();
        out.proportion = c.at("proportion").get<double>();
        if (!c.at("accuracy").is_null()) out.accuracy = c["accuracy"].get<double>();
        return out;
    };
    report.categories.t1 = read_cat(doc.at("categories").at("t1"));
    report.categories.ts = read_cat(doc.at("categories").at("ts"));
    report.categories.conflict = read_cat(doc.at("categories").at("conflict"));
    for (auto it = doc.at("tool_usage").begin(); it != doc.at("tool_usage").end(); ++it) {
        ToolUsage u;
        u.selected_count = it.value().at("selected_count").get<long>();
        if (!it.value().at("selected_acc").is_null())
            u.selected_acc = it.value()["selected_acc"].get<double>();
        if (!it.value().at("full_acc").is_null())
            u.full_acc = it.value()["full_acc"].get<double>();
        u.trend = it.value().at("trend").get<std::string>();
        report.tool_usage[it.key()] = u;
    }

    std::string text = render_report_text(report);
    write_file_atomic(st.asset_path("report_text", "report.txt"), text);
    std::printf("%s", text.c_str());
    return kExitOk;
}

int exit_code_for(const Error& e) {
    const std::string& c = e.code();
    if (c == "ConfigInvalid" || c == "LockHeld") return kExitConfig;
    if (c == "AssetMissing") return kExitAssetMissing;
    if (c == "BackendUnavailable") return kExitBackend;
    return kExitValidation;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Hierarchy-gated multi-tool reaction feasibility pipeline"};
    app.require_subcommand(1);

    std::string config_path = "config.json";

    SynthSpec spec;
    auto* synth = app.add_subcommand("synth-gen", "Generate the synthetic corpus");
    synth->add_option("--config", config_path, "Config file");
    synth->add_option("--tools", spec.tools, "Number of tools");
    synth->add_option("--regions", spec.regions, "Number of latent regions");
    synth->add_option("--size", spec.size, "Reactions per split");
    synth->add_option("--seed", spec.seed, "RNG seed");
    synth->add_option("--noise", spec.noise, "Label-flip probability");

    for (const char* verb : {"build-hierarchy", "extract-patterns", "refine", "consolidate",
                             "build-memory", "predict", "evaluate", "report"}) {
        auto* sub = app.add_subcommand(verb, "");
        sub->add_option("--config", config_path, "Config file");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            std::printf("%s\n", app.help().c_str());
            return kExitOk;
        }
        std::fprintf(stderr, "error ConfigInvalid: %s\n", e.what());
        return kExitConfig;
    }

    try {
        CliState st = load_state(config_path);
        DirLock lock(st.config_path.parent_path());
        std::string verb = app.get_subcommands().front()->get_name();
        if (verb == "synth-gen") {
            if (!synth->count("--seed")) spec.seed = st.config.seed;
            return cmd_synth_gen(st, spec);
        }
        if (verb == "build-hierarchy") return cmd_build_hierarchy(st);
        if (verb == "extract-patterns") return cmd_extract_patterns(st);
        if (verb == "refine") return cmd_refine(st);
        if (verb == "consolidate") return cmd_consolidate(st);
        if (verb == "build-memory") return cmd_build_memory(st);
        if (verb == "predict") return cmd_predict(st);
        if (verb == "evaluate") return cmd_evaluate(st);
        if (verb == "report") return cmd_report(st);
        std::fprintf(stderr, "error ConfigInvalid: unknown verb %s\n", verb.c_str());
        return kExitConfig;
    } catch (const Error& e) {
        std::fprintf(stderr, "error %s: %s\n", e.code().c_str(), e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error Internal: %s\n", e.what());
        return kExitValidation;
    }
}

}  // namespace armor
