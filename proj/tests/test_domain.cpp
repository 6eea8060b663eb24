#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include <armor/domain.hpp>

using namespace armor;

TEST_CASE("label and prediction conversions") {
    CHECK(label_from_int(0) == Label::Infeasible);
    CHECK(label_from_int(1) == Label::Feasible);
    CHECK_THROWS_AS(label_from_int(2), Error);
    CHECK(label_to_int(Label::Feasible) == 1);
    CHECK(prediction_from_label(Label::Infeasible) == Prediction::Pred0);
}

TEST_CASE("prediction_matches treats NA as never correct") {
    CHECK(prediction_matches(Prediction::Pred1, Label::Feasible));
    CHECK(prediction_matches(Prediction::Pred0, Label::Infeasible));
    CHECK_FALSE(prediction_matches(Prediction::Pred1, Label::Infeasible));
    CHECK_FALSE(prediction_matches(Prediction::NA, Label::Feasible));
    CHECK_FALSE(prediction_matches(Prediction::NA, Label::Infeasible));
}

TEST_CASE("parse_dataset reads reactions, labels, and prediction columns") {
    std::string text =
        R"({"idx":0,"reactants":"CCO","product":"CCOC","label":1,"toolA":1,"toolB":"NA"})"
        "\n"
        R"({"idx":1,"reactants":"CCN","product":"CCNC","label":0,"toolA":0,"comment":"skip me"})"
        "\n";
    Dataset ds = parse_dataset(text);
    REQUIRE(ds.reactions.size() == 2);
    CHECK(ds.reactions[0].idx == 0);
    CHECK(ds.reactions[0].label == Label::Feasible);
    CHECK(ds.prediction("toolA", 0) == Prediction::Pred1);
    CHECK(ds.prediction("toolB", 0) == Prediction::NA);
    CHECK(ds.prediction("toolA", 1) == Prediction::Pred0);
    // "comment" does not fit the prediction domain and is ignored.
    CHECK(ds.predictions.count("comment") == 0);
    // Unknown tool / unrecorded idx both read as NA.
    CHECK(ds.prediction("toolB", 1) == Prediction::NA);
    CHECK(ds.prediction("nosuch", 0) == Prediction::NA);
}

TEST_CASE("prediction value spellings") {
    std::string text =
        R"({"idx":0,"reactants":"C","product":"CC","t1":"0","t2":"1","t3":"na","t4":"None","t5":null})"
        "\n";
    Dataset ds = parse_dataset(text);
    CHECK(ds.prediction("t1", 0) == Prediction::Pred0);
    CHECK(ds.prediction("t2", 0) == Prediction::Pred1);
    CHECK(ds.prediction("t3", 0) == Prediction::NA);
    CHECK(ds.prediction("t4", 0) == Prediction::NA);
    CHECK(ds.prediction("t5", 0) == Prediction::NA);
}

TEST_CASE("parse_dataset error codes") {
    CHECK_THROWS_WITH_AS(parse_dataset("not json\n"), doctest::Contains("line 1"), Error);
    try {
        parse_dataset("{\"idx\":0}\n");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "MissingField");
    }
    try {
        parse_dataset(
            R"({"idx":0,"reactants":"C","product":"CC"})"
            "\n"
            R"({"idx":0,"reactants":"C","product":"CC"})"
            "\n");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "DuplicateIdx");
    }
    try {
        parse_dataset("garbage\n");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.code() == "MalformedLine");
    }
}

TEST_CASE("serialize then parse round-trips the dataset") {
    std::string text =
        R"({"idx":3,"reactants":"CCO","product":"CCON","label":0,"toolA":1,"toolB":"NA"})"
        "\n"
        R"({"idx":7,"reactants":"CN","product":"CNO","toolA":0})"
        "\n";
    Dataset ds = parse_dataset(text);
    Dataset again = parse_dataset(serialize_dataset(ds));
    CHECK(ds == again);
    // And the serialization itself is a fixed point.
    CHECK(serialize_dataset(ds) == serialize_dataset(again));
}

TEST_CASE("Dataset::at throws for unknown idx") {
    Dataset ds = parse_dataset(R"({"idx":5,"reactants":"C","product":"CC"})" "\n");
    CHECK(ds.at(5).idx == 5);
    CHECK(ds.find(6) == nullptr);
    CHECK_THROWS_AS(ds.at(6), Error);
}

TEST_CASE("validate_reaction reports structural violations") {
    Reaction ok{0, "CCO", "CCOC", Label::Feasible};
    CHECK(validate_reaction(ok).ok());

    Reaction empty{1, "", "CC", {}};
    auto v = validate_reaction(empty);
    REQUIRE_FALSE(v.ok());
    CHECK(v.violations[0] == "EmptyReactants");

    Reaction neg{-4, "C", "", {}};
    auto v2 = validate_reaction(neg);
    CHECK(std::count(v2.violations.begin(), v2.violations.end(), "EmptyProduct") == 1);
    CHECK(std::count(v2.violations.begin(), v2.violations.end(), "NegativeIdx") == 1);

    Reaction bad{2, "C(", "CC", {}};
    auto v3 = validate_reaction(bad);
    REQUIRE_FALSE(v3.ok());
    CHECK(v3.violations[0] == "UnbalancedParenthesis(reactants)");

    Reaction badp{3, "CC", "C[Unterminated", {}};
    auto v4 = validate_reaction(badp);
    REQUIRE_FALSE(v4.ok());
    CHECK(v4.violations[0] == "UnterminatedBracket(product)");
}
