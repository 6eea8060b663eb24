#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <armor/llm.hpp>

using namespace armor;
using nlohmann::json;

namespace {

std::filesystem::path test_data_dir() {
    const char* env = std::getenv("ARMOR_TEST_DATA");
    REQUIRE(env != nullptr);
    return env;
}

/// Backend that returns a fixed sequence of canned strings.
class SequenceBackend : public LlmBackend {
public:
    explicit SequenceBackend(std::vector<std::string> responses)
        : responses_(std::move(responses)) {}

    std::string complete(const LlmRequest& request) override {
        last_prompt = request.prompt;
        last_repair = request.repair;
        ++calls;
        if (responses_.empty()) throw Error("BackendUnavailable", "sequence exhausted");
        std::string out = responses_.front();
        responses_.erase(responses_.begin());
        return out;
    }
    std::string tag() const override { return "sequence"; }

    int calls = 0;
    std::string last_prompt;
    bool last_repair = false;

private:
    std::vector<std::string> responses_;
};

}  // namespace

TEST_CASE("template name round-trip") {
    for (TemplateId id : {TemplateId::PatternExtraction, TemplateId::PatternMatch,
                          TemplateId::Consolidation, TemplateId::MemoryBuild,
                          TemplateId::ToolSelect, TemplateId::DirectAsk}) {
        CHECK(template_from_name(template_name(id)) == id);
        CHECK_FALSE(template_body(id).empty());
        CHECK_FALSE(template_placeholders(id).empty());
    }
    CHECK_THROWS_AS(template_from_name("NoSuch"), Error);
}

TEST_CASE("render_prompt substitutes every declared placeholder") {
    std::string out = render_prompt(TemplateId::DirectAsk,
                                    {{"reactants", "CCO"}, {"product", "CCOC"}});
    CHECK(out.find("CCO") != std::string::npos);
    CHECK(out.find("{reactants}") == std::string::npos);
    CHECK(out.find("{product}") == std::string::npos);
    // Literal braces in the JSON schema block survive untouched.
    CHECK(out.find("\"prediction\"") != std::string::npos);
    CHECK_THROWS_AS(render_prompt(TemplateId::DirectAsk, {{"reactants", "C"}}), Error);
}

TEST_CASE("bindings_hash is stable and order-independent") {
    Bindings a = {{"x", "1"}, {"y", "2"}};
    Bindings b = {{"y", "2"}, {"x", "1"}};
    CHECK(bindings_hash(TemplateId::DirectAsk, a) == bindings_hash(TemplateId::DirectAsk, b));
    CHECK(bindings_hash(TemplateId::DirectAsk, a) != bindings_hash(TemplateId::ToolSelect, a));
    CHECK(bindings_hash(TemplateId::DirectAsk, {{"x", "1"}, {"y", "22"}}) !=
          bindings_hash(TemplateId::DirectAsk, a));
}

TEST_CASE("strip_code_fences") {
    CHECK(strip_code_fences("{\"a\":1}") == "{\"a\":1}");
    CHECK(strip_code_fences("  {\"a\":1}\n") == "{\"a\":1}");
    CHECK(strip_code_fences("```json\n{\"a\":1}\n```") == "{\"a\":1}");
    CHECK(strip_code_fences("```\n{\"a\":1}\n```\n") == "{\"a\":1}");
}

TEST_CASE("schema validation per template") {
    SchemaContext ctx;
    CHECK_THROWS_AS(validate_schema(TemplateId::DirectAsk, json::parse("[1]"), ctx), Error);
    CHECK_NOTHROW(validate_schema(TemplateId::DirectAsk, json::parse("{\"prediction\":1}"), ctx));
    CHECK_THROWS_AS(validate_schema(TemplateId::DirectAsk, json::parse("{\"prediction\":2}"), ctx),
                    Error);

    json extraction = json::parse(R"({"tool_acc":"80.00%","often_correct_on":[
        {"name":"n","explanation":"e","examples_idx":[1,2,3,4,5]}]})");
    CHECK_NOTHROW(validate_schema(TemplateId::PatternExtraction, extraction, ctx));
    extraction["often_correct_on"][0]["examples_idx"] = json::array({1, 2, 3});
    CHECK_THROWS_AS(validate_schema(TemplateId::PatternExtraction, extraction, ctx), Error);

    json match = json::parse(R"({"belongs_to_rule":true,"confidence":"high"})");
    CHECK_NOTHROW(validate_schema(TemplateId::PatternMatch, match, ctx));
    match["confidence"] = "certain";
    CHECK_THROWS_AS(validate_schema(TemplateId::PatternMatch, match, ctx), Error);

    json mem = json::parse(R"({"tool":"a","evidence":["x"],"elimination":[
        {"tool":"b","why_not":"r"}],"final_reason":"ok"})");
    CHECK_NOTHROW(validate_schema(TemplateId::MemoryBuild, mem, ctx));
    for (int i = 0; i < 4; ++i)
        mem["elimination"].push_back(json{{"tool", "t"}, {"why_not", "w"}});
    CHECK_THROWS_AS(validate_schema(TemplateId::MemoryBuild, mem, ctx), Error);

    ctx.allowed_tools = {"alpha"};
    CHECK_NOTHROW(validate_schema(TemplateId::ToolSelect, json::parse(R"({"tool":"alpha"})"), ctx));
    CHECK_NOTHROW(
        validate_schema(TemplateId::ToolSelect, json::parse(R"({"tool":"abstain"})"), ctx));
    CHECK_THROWS_AS(
        validate_schema(TemplateId::ToolSelect, json::parse(R"({"tool":"beta"})"), ctx), Error);
}

TEST_CASE("complete_json retries exactly once with a repair prompt") {
    Bindings b = {{"reactants", "C"}, {"product", "CO"}};

    SequenceBackend good({"```json\n{\"prediction\": 1}\n```"});
    json out = complete_json(good, TemplateId::DirectAsk, b);
    CHECK(out["prediction"] == 1);
    CHECK(good.calls == 1);
    CHECK_FALSE(good.last_repair);

    SequenceBackend repaired({"not json at all", "{\"prediction\": 0}"});
    json out2 = complete_json(repaired, TemplateId::DirectAsk, b);
    CHECK(out2["prediction"] == 0);
    CHECK(repaired.calls == 2);
    CHECK(repaired.last_repair);
    CHECK(repaired.last_prompt.find("Your previous answer was not valid") != std::string::npos);

    SequenceBackend hopeless({"nope", "still nope", "never reached"});
    try {
        complete_json(hopeless, TemplateId::DirectAsk, b);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "JsonInvalid");
    }
    CHECK(hopeless.calls == 2);

    SequenceBackend schema_bad({"{\"prediction\": 9}", "{\"prediction\": 9}"});
    try {
        complete_json(schema_bad, TemplateId::DirectAsk, b);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "SchemaViolation");
    }
}

TEST_CASE("scripted backend answers by bindings hash with fallback") {
    ScriptedBackend backend;
    Bindings b = {{"reactants", "C"}, {"product", "CO"}};
    backend.add_response(TemplateId::DirectAsk, b, "{\"prediction\":1}");

    json out = complete_json(backend, TemplateId::DirectAsk, b);
    CHECK(out["prediction"] == 1);

    Bindings other = {{"reactants", "N"}, {"product", "NO"}};
    LlmRequest req;
    req.template_id = TemplateId::DirectAsk;
    req.bindings = other;
    CHECK_THROWS_AS(backend.complete(req), Error);

    backend.set_fallback([](const LlmRequest&) -> std::optional<std::string> {
        return "{\"prediction\":0}";
    });
    CHECK(complete_json(backend, TemplateId::DirectAsk, other)["prediction"] == 0);
}

TEST_CASE("scripted backend save / from_file round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "armor_llm_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "scenario.jsonl";

    ScriptedBackend backend;
    Bindings b = {{"reactants", "C"}, {"product", "CO"}};
    backend.add_response(TemplateId::DirectAsk, b, "{\"prediction\":1}");
    backend.save(path);

    ScriptedBackend loaded = ScriptedBackend::from_file(path);
    CHECK(complete_json(loaded, TemplateId::DirectAsk, b)["prediction"] == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("recording backend replays through a scripted backend") {
    auto dir = std::filesystem::temp_directory_path() / "armor_rec_test";
    std::filesystem::create_directories(dir);
    auto path = dir / "recorded.jsonl";
    std::filesystem::remove(path);

    ScriptedBackend inner;
    Bindings b = {{"reactants", "C"}, {"product", "CO"}};
    inner.add_response(TemplateId::DirectAsk, b, "{\"prediction\":1}");
    RecordingBackend rec(inner, path);
    complete_json(rec, TemplateId::DirectAsk, b);

    ScriptedBackend replay = ScriptedBackend::from_file(path);
    CHECK(complete_json(replay, TemplateId::DirectAsk, b)["prediction"] == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("http backend fails cleanly without an endpoint") {
    HttpLlmBackend backend("", "");
    LlmRequest req;
    req.template_id = TemplateId::DirectAsk;
    req.prompt = "x";
    try {
        backend.complete(req);
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "BackendUnavailable");
    }
}

TEST_CASE("rendered prompts byte-match the transcribed golden files") {
    auto golden_dir = test_data_dir() / "golden";

    struct Fixture {
        TemplateId id;
        const char* file;
        Bindings bindings;
    };
    std::vector<Fixture> fixtures = {
        {TemplateId::PatternExtraction,
         "pattern_extraction.txt",
         {{"dataset_text",
           "{\"idx\": 1, \"reactants\": \"CCClC\", \"product\": \"CCClCOCl\", \"label\": 1, "
           "\"prediction\": 1}"}}},
        {TemplateId::PatternMatch,
         "pattern_match.txt",
         {{"rule_name", "\"Cl-marked backbone extension\""},
          {"rule_explanation", "\"The reactants carry a chlorine marker.\""},
          {"example_json",
           "{\"idx\": 1, \"reactants\": \"CCClC\", \"product\": \"CCClCOCl\"}"}}},
        {TemplateId::Consolidation,
         "consolidation.txt",
         {{"n_rules", "2"},
          {"rule_name", "Cl-marked backbone extension"},
          {"candidates_json",
           "[{\"index\": 0, \"name\": \"a\"}, {\"index\": 1, \"name\": \"b\"}]"}}},
        {TemplateId::MemoryBuild,
         "memory_build.txt",
         {{"reactants", "CCClC"},
          {"product", "CCClCOCl"},
          {"cands_section", "Candidate tools and their matched rules:\n{\"tool\":\"spec03\"}"},
          {"gold_tool", "spec03"},
          {"neg_tools_json", "[\"spec04\"]"},
          {"neg_str", "\"spec04\""}}},
        {TemplateId::ToolSelect,
         "tool_select.txt",
         {{"reactants", "CCClC"},
          {"product", "CCClCOCl"},
          {"cands_section", "Candidate tools and their matched rules:\n{\"tool\":\"spec03\"}"},
          {"conf_hint", "- conf hint line\n"},
          {"tiebreak", "- tiebreak line\n"},
          {"demos_section", "\ndemo block\n"},
          {"allowed_str", "\"spec03\", \"spec04\""}}},
    };

    for (const auto& fx : fixtures) {
        CAPTURE(fx.file);
        std::ifstream in(golden_dir / fx.file, std::ios::binary);
        REQUIRE(in.good());
        std::string golden((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
        CHECK(render_prompt(fx.id, fx.bindings) == golden);
    }
}
