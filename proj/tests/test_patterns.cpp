#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>
#include <set>

#include <armor/oracle.hpp>
#include <armor/patterns.hpp>
#include <armor/synth.hpp>

using namespace armor;
using nlohmann::json;

namespace {

SynthOutput small_universe() {
    SynthSpec spec;
    spec.tools = 13;
    spec.regions = 6;
    spec.size = 300;
    spec.seed = 3;
    return synth_gen(spec);
}

}  // namespace

TEST_CASE("disagreement_set flags NA and split votes") {
    Dataset ds = parse_dataset(
        R"({"idx":0,"reactants":"C","product":"CO","label":1,"a":1,"b":1,"c":1})" "\n"
        R"({"idx":1,"reactants":"C","product":"CO","label":1,"a":1,"b":0,"c":1})" "\n"
        R"({"idx":2,"reactants":"C","product":"CO","label":1,"a":1,"b":"NA","c":1})" "\n"
        R"({"idx":3,"reactants":"C","product":"CO","label":0,"a":0,"b":0,"c":0})" "\n");
    auto pool = disagreement_set(ds, {"a", "b", "c"});
    CHECK(pool == std::vector<long>{1, 2});
    CHECK_THROWS_AS(disagreement_set(ds, {}), Error);
}

TEST_CASE("diagnostic subsets follow the N schedule and stay inside cells") {
    SynthOutput out = small_universe();
    Dataset& val = out.validation;
    auto pool = disagreement_set(val, {"gen00", "gen01", "gen02"});
    REQUIRE(pool.size() > 50);

    PatternLog log;
    auto subsets = sample_diagnostic_subsets("spec03", pool, val, 8, {2, 3}, 11, &log);
    REQUIRE_FALSE(subsets.empty());
    std::set<long> pool_set(pool.begin(), pool.end());
    for (const auto& s : subsets) {
        int n = (s.subset_no - 1) % 2 == 0 ? 2 : 3;
        for (const auto& cell : s.cells) {
            CHECK(static_cast<int>(cell.size()) == n);
            for (long idx : cell) CHECK(pool_set.count(idx) == 1);
        }
        // Cells are disjoint within a subset.
        std::set<long> all;
        for (const auto& cell : s.cells)
            for (long idx : cell) CHECK(all.insert(idx).second);
    }

    // Deterministic resampling.
    auto again = sample_diagnostic_subsets("spec03", pool, val, 8, {2, 3}, 11);
    REQUIRE(again.size() == subsets.size());
    for (size_t i = 0; i < again.size(); ++i) CHECK(again[i].cells == subsets[i].cells);

    // Oversized N leads to skips with warnings, not throws.
    PatternLog skip_log;
    auto none = sample_diagnostic_subsets("spec03", pool, val, 2, {100000}, 11, &skip_log);
    CHECK(none.empty());
    CHECK(skip_log.subsets_skipped == 2);
}

TEST_CASE("NA predictions land in the wrong-prediction cell") {
    Dataset ds = parse_dataset(
        R"({"idx":0,"reactants":"C","product":"CO","label":1,"t":"NA"})" "\n"
        R"({"idx":1,"reactants":"C","product":"CN","label":0,"t":"NA"})" "\n"
        R"({"idx":2,"reactants":"C","product":"CO","label":1,"t":1})" "\n"
        R"({"idx":3,"reactants":"C","product":"CN","label":0,"t":0})" "\n");
    auto subsets = sample_diagnostic_subsets("t", {0, 1, 2, 3}, ds, 1, {1}, 1);
    REQUIRE(subsets.size() == 1);
    // r11 = correct feasible, r10 = wrong feasible (incl. NA on label 1),
    // r01 = wrong infeasible (incl. NA on label 0), r00 = correct infeasible.
    CHECK(subsets[0].cells[0] == std::vector<long>{2});
    CHECK(subsets[0].cells[1] == std::vector<long>{0});
    CHECK(subsets[0].cells[2] == std::vector<long>{1});
    CHECK(subsets[0].cells[3] == std::vector<long>{3});
}

TEST_CASE("extraction via the oracle produces in-subset patterns") {
    SynthOutput out = small_universe();
    OracleBackend oracle(out.ground_truth);
    auto pool = disagreement_set(out.validation, {"gen00", "gen01", "gen02"});
    auto subsets = sample_diagnostic_subsets("spec03", pool, out.validation, 8, {5, 10}, 1);
    REQUIRE_FALSE(subsets.empty());

    PatternLog log;
    size_t total = 0;
    for (const auto& subset : subsets) {
        auto patterns = extract_patterns(oracle, "spec03", subset, out.validation, &log);
        total += patterns.size();
        std::set<long> members;
        for (long idx : subset.all_idxs_sorted()) members.insert(idx);
        for (const auto& p : patterns) {
            CHECK(p.tool_id == "spec03");
            CHECK(p.status == PatternStatus::Raw);
            CHECK(p.example_idxs.size() == 5);
            for (long idx : p.example_idxs) CHECK(members.count(idx) == 1);
            CHECK(p.pattern_id ==
                  make_pattern_id("spec03", p.name, p.explanation, p.example_idxs));
        }
    }
    CHECK(total > 0);
}

TEST_CASE("coverage cache is first-writer-wins and survives reload") {
    CoverageCache cache;
    CHECK_FALSE(cache.lookup("p", 1).has_value());
    auto stored = cache.insert("p", 1, {true, "high"});
    CHECK(stored.covered);
    auto second = cache.insert("p", 1, {false, "low"});
    CHECK(second.covered);  // first writer wins
    CHECK(cache.size() == 1);

    auto dir = std::filesystem::temp_directory_path() / "armor_patterns_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "cache.jsonl";
    cache.insert("q", 2, {false, "medium"});
    cache.save(path);
    CoverageCache loaded = CoverageCache::load(path);
    CHECK(loaded.size() == 2);
    CHECK(loaded.lookup("p", 1)->covered);
    CHECK(loaded.lookup("q", 2)->confidence == "medium");
    std::filesystem::remove_all(dir);
}

TEST_CASE("align score is the exact fraction of correct examples") {
    Dataset ds = parse_dataset(
        R"({"idx":0,"reactants":"C","product":"CO","label":1,"t":1})" "\n"
        R"({"idx":1,"reactants":"C","product":"CO","label":1,"t":0})" "\n"
        R"({"idx":2,"reactants":"C","product":"CO","label":1,"t":"NA"})" "\n"
        R"({"idx":3,"reactants":"C","product":"CO","label":1,"t":1})" "\n"
        R"({"idx":4,"reactants":"C","product":"CO","label":1,"t":1})" "\n");
    Pattern p;
    p.tool_id = "t";
    p.example_idxs = {0, 1, 2, 3, 4};
    CHECK(align_score(p, ds) == doctest::Approx(0.6));

    Pattern empty;
    empty.tool_id = "t";
    CHECK_THROWS_AS(align_score(empty, ds), Error);
}

TEST_CASE("refinement gate keeps a pattern iff all examples correct and covered") {
    // Property test with a scripted coverage judge over 1000 random patterns.
    std::mt19937_64 rng(2024);
    Dataset ds;
    for (long i = 0; i < 10; ++i) {
        Reaction r;
        r.idx = i;
        r.reactants = "C";
        r.product = "CO";
        r.label = Label::Feasible;
        ds.reactions.push_back(r);
    }

    for (int trial = 0; trial < 1000; ++trial) {
        // Random correctness of the tool and random coverage per example.
        std::vector<bool> correct(5), covered(5);
        for (int i = 0; i < 5; ++i) {
            correct[i] = rng() % 2;
            covered[i] = rng() % 2;
        }
        for (long i = 0; i < 5; ++i)
            ds.predictions["t"][i] = correct[static_cast<size_t>(i)] ? Prediction::Pred1
                                                                     : Prediction::Pred0;
        Pattern p;
        p.tool_id = "t";
        p.name = "n" + std::to_string(trial);
        p.explanation = "e";
        p.example_idxs = {0, 1, 2, 3, 4};
        p.pattern_id = make_pattern_id("t", p.name, p.explanation, p.example_idxs);

        ScriptedBackend judge;
        judge.set_fallback([&](const LlmRequest& req) -> std::optional<std::string> {
            json ex = json::parse(req.bindings.at("example_json"));
            bool c = covered[ex.at("idx").get<size_t>()];
            return json{{"name", "n"}, {"idx", ex.at("idx")}, {"belongs_to_rule", c},
                        {"confidence", "high"}, {"reason", "scripted"}}
                .dump();
        });

        CoverageCache cache;
        auto out = refine_patterns(judge, cache, {p}, ds, 1.0, 1.0);
        bool all_correct = std::all_of(correct.begin(), correct.end(), [](bool b) { return b; });
        bool all_covered = std::all_of(covered.begin(), covered.end(), [](bool b) { return b; });
        CHECK(out.size() == static_cast<size_t>(all_correct && all_covered ? 1 : 0));
        if (!out.empty()) CHECK(out[0].status == PatternStatus::Refined);
    }
}

TEST_CASE("consolidation keeps one pattern per name") {
    Pattern a;
    a.tool_id = "t";
    a.name = "same";
    a.explanation = "first";
    a.example_idxs = {0, 1, 2, 3, 4};
    a.align = 1.0;
    a.pattern_id = make_pattern_id("t", a.name, a.explanation, a.example_idxs);
    Pattern b = a;
    b.explanation = "second";
    b.pattern_id = make_pattern_id("t", b.name, b.explanation, b.example_idxs);
    Pattern other = a;
    other.name = "different";
    other.pattern_id = make_pattern_id("t", other.name, other.explanation, other.example_idxs);

    // Scripted keep_index selects the second candidate (sorted by pattern_id).
    ScriptedBackend backend;
    backend.set_fallback([](const LlmRequest&) -> std::optional<std::string> {
        return R"({"keep_index":1,"reason":"scripted"})";
    });
    auto out = consolidate_patterns(backend, {a, b, other}, "t");
    REQUIRE(out.size() == 2);
    std::set<std::string> names;
    for (const auto& p : out) {
        names.insert(p.name);
        CHECK(p.status == PatternStatus::Consolidated);
    }
    CHECK(names == std::set<std::string>{"same", "different"});

    // Out-of-range keep_index falls back to highest align.
    ScriptedBackend bad;
    bad.set_fallback([](const LlmRequest&) -> std::optional<std::string> {
        return R"({"keep_index":99,"reason":"scripted"})";
    });
    Pattern low = a;
    low.align = 0.2;
    Pattern high = b;
    high.align = 0.9;
    PatternLog log;
    auto out2 = consolidate_patterns(bad, {low, high}, "t", &log);
    REQUIRE(out2.size() == 1);
    CHECK(out2[0].explanation == high.explanation);
    CHECK_FALSE(log.warnings.empty());
}

TEST_CASE("conf score is correct-when-covered over the pool") {
    Dataset ds = parse_dataset(
        R"({"idx":0,"reactants":"C","product":"CO","label":1,"t":1})" "\n"
        R"({"idx":1,"reactants":"C","product":"CO","label":1,"t":0})" "\n"
        R"({"idx":2,"reactants":"C","product":"CO","label":1,"t":1})" "\n"
        R"({"idx":3,"reactants":"C","product":"CO","label":1,"t":1})" "\n");
    Pattern p;
    p.tool_id = "t";
    p.name = "n";
    p.explanation = "e";
    p.example_idxs = {0};
    p.pattern_id = "t-x";

    // Covers idx 0,1,2 only: correct on 0 and 2 -> conf 2/3.
    ScriptedBackend judge;
    judge.set_fallback([](const LlmRequest& req) -> std::optional<std::string> {
        json ex = json::parse(req.bindings.at("example_json"));
        bool c = ex.at("idx").get<long>() <= 2;
        return json{{"belongs_to_rule", c}, {"confidence", "high"}}.dump();
    });
    CoverageCache cache;
    auto conf = conf_score(judge, cache, p, {0, 1, 2, 3}, ds);
    REQUIRE(conf.has_value());
    CHECK(*conf == doctest::Approx(2.0 / 3.0));
    CHECK(p.covered_count == 3);

    // A pattern covering nothing has no conf.
    ScriptedBackend never;
    never.set_fallback([](const LlmRequest&) -> std::optional<std::string> {
        return R"({"belongs_to_rule":false,"confidence":"low"})";
    });
    Pattern q = p;
    q.pattern_id = "t-y";
    CoverageCache cache2;
    CHECK_FALSE(conf_score(never, cache2, q, {0, 1, 2, 3}, ds).has_value());
    CHECK(q.covered_count == 0);
}

TEST_CASE("finalize keeps at most five above tau3, ordered by conf") {
    std::vector<Pattern> pats;
    for (int i = 0; i < 8; ++i) {
        Pattern p;
        p.tool_id = "t";
        p.pattern_id = "t-" + std::to_string(i);
        p.conf = 0.3 + 0.1 * i;  // 0.3 .. 1.0
        p.covered_count = i;
        pats.push_back(p);
    }
    auto out = finalize_pattern_set(pats, 0.5);
    REQUIRE(out.size() == 5);
    for (size_t i = 1; i < out.size(); ++i) CHECK(*out[i - 1].conf >= *out[i].conf);
    for (const auto& p : out) {
        CHECK(*p.conf >= 0.5);
        CHECK(p.status == PatternStatus::Final);
    }

    // Tie on conf: larger covered_count first, then pattern_id.
    Pattern x, y, z;
    x.pattern_id = "t-a"; x.conf = 0.8; x.covered_count = 5;
    y.pattern_id = "t-b"; y.conf = 0.8; y.covered_count = 9;
    z.pattern_id = "t-0"; z.conf = 0.8; z.covered_count = 5;
    auto tied = finalize_pattern_set({x, y, z}, 0.5);
    REQUIRE(tied.size() == 3);
    CHECK(tied[0].pattern_id == "t-b");
    CHECK(tied[1].pattern_id == "t-0");
    CHECK(tied[2].pattern_id == "t-a");
}

TEST_CASE("pattern store round-trips through disk") {
    PatternStore store;
    Pattern p;
    p.pattern_id = "t-1";
    p.tool_id = "t";
    p.name = "n";
    p.explanation = "e";
    p.example_idxs = {1, 2, 3, 4, 5};
    p.align = 1.0;
    p.cov = 1.0;
    p.conf = 0.75;
    p.covered_count = 12;
    p.status = PatternStatus::Final;
    store.by_tool["t"].push_back(p);

    auto dir = std::filesystem::temp_directory_path() / "armor_store_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "patterns.json";
    store.save(path);
    PatternStore loaded = PatternStore::load(path);
    REQUIRE(loaded.by_tool.count("t") == 1);
    const Pattern& q = loaded.by_tool["t"][0];
    CHECK(q.pattern_id == p.pattern_id);
    CHECK(q.example_idxs == p.example_idxs);
    CHECK(q.conf == p.conf);
    CHECK(q.covered_count == 12);
    CHECK(q.status == PatternStatus::Final);
    std::filesystem::remove_all(dir);
}

TEST_CASE("select_tools ranks by best covering pattern conf") {
    SynthOutput out = small_universe();
    OracleBackend oracle(out.ground_truth);

    // Hand-build a store: spec03 strong in region 0 (Cl), spec04 in region 1 (Br).
    auto make_final = [&](const std::string& tool, int region, double conf) {
        Pattern p;
        p.tool_id = tool;
        p.name = oracle.rule_name_for_region(region);
        p.explanation = "covers the region";
        p.example_idxs = {0, 1, 2, 3, 4};
        p.pattern_id = make_pattern_id(tool, p.name, p.explanation, p.example_idxs);
        p.conf = conf;
        p.status = PatternStatus::Final;
        return p;
    };
    PatternStore store;
    store.by_tool["spec03"].push_back(make_final("spec03", 0, 0.95));
    store.by_tool["spec04"].push_back(make_final("spec04", 0, 0.60));
    store.by_tool["spec05"].push_back(make_final("spec05", 1, 0.99));

    ToolRegistry registry = registry_from_dataset(out.validation);
    CoverageCache cache;
    // Reaction in region 0 (Cl marker).
    const Reaction* r0 = nullptr;
    for (const auto& r : out.validation.reactions)
        if (out.ground_truth.region_from_reactants(r.reactants) == 0) { r0 = &r; break; }
    REQUIRE(r0 != nullptr);

    auto selected = select_tools(oracle, cache, *r0, store, registry, 5);
    REQUIRE(selected.size() == 2);  // spec05's pattern does not cover region 0
    CHECK(selected[0].tool_id == "spec03");
    CHECK(selected[1].tool_id == "spec04");

    auto top1 = select_tools(oracle, cache, *r0, store, registry, 1);
    REQUIRE(top1.size() == 1);
    CHECK(top1[0].tool_id == "spec03");
}

TEST_CASE("cands_section and quoted_list render stable text") {
    std::vector<CandidateLine> cands = {
        {"spec03", Prediction::Pred1, "rule", "why", 0.9},
        {"spec04", Prediction::NA, "rule2", "why2", 0.5},
    };
    std::string text = render_cands_section(cands);
    CHECK(text.rfind("Candidate tools and their matched rules:", 0) == 0);
    CHECK(text.find("\"tool\":\"spec03\"") != std::string::npos);
    CHECK(text.find("\"tool_prediction\":1") != std::string::npos);
    CHECK(text.find("\"tool_prediction\":\"NA\"") != std::string::npos);
    CHECK(quoted_list({"a", "b"}) == "\"a\", \"b\"");
    CHECK(quoted_list({}) == "");
}
