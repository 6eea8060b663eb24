#include "armor/domain.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "armor/chem.hpp"

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

const Reaction* Dataset::find(long idx) const {
    for (const auto& r : reactions)
        if (r.idx == idx) return &r;
    return nullptr;
}

const Reaction& Dataset::at(long idx) const {
    const Reaction* r = find(idx);
    if (!r) throw Error("MissingExample", "no reaction with idx " + std::to_string(idx));
    return *r;
}

Prediction Dataset::prediction(const std::string& tool_id, long idx) const {
    auto it = predictions.find(tool_id);
    if (it == predictions.end()) return Prediction::NA;
    auto jt = it->second.find(idx);
    if (jt == it->second.end()) return Prediction::NA;
    return jt->second;
}

namespace {

// Accepts 0/1 integers, "0"/"1"/"NA" strings, and null; anything else is
// not a prediction value.
std::optional<Prediction> try_parse_prediction(const json& v) {
    if (v.is_null()) return Prediction::NA;
    if (v.is_number_integer()) {
        long n = v.get<long>();
        if (n == 0) return Prediction::Pred0;
        if (n == 1) return Prediction::Pred1;
        return std::nullopt;
    }
    if (v.is_string()) {
        const std::string& s = v.get_ref<const std::string&>();
        if (s == "0") return Prediction::Pred0;
        if (s == "1") return Prediction::Pred1;
        if (s == "NA" || s == "na" || s == "None") return Prediction::NA;
    }
    return std::nullopt;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void parse_dataset_line(Dataset& ds, std::set<long>& seen, int line_no, const std::string& line) {
    json obj;
    try {
        obj = json::parse(line);
    } catch (const json::exception&) {
        throw Error("MalformedLine", "invalid JSON at line " + std::to_string(line_no));
    }
    if (!obj.is_object())
        throw Error("MalformedLine", "line " + std::to_string(line_no) + " is not an object");

    for (const char* key : {"idx", "reactants", "product"}) {
        if (!obj.contains(key))
            throw Error("MissingField",
                        std::string("missing field '") + key + "' at line " + std::to_string(line_no));
    }

    Reaction r;
    if (!obj["idx"].is_number_integer() || obj["idx"].get<long>() < 0)
        throw Error("MissingField", "idx must be a non-negative integer at line " + std::to_string(line_no));
    r.idx = obj["idx"].get<long>();
    if (!seen.insert(r.idx).second)
        throw Error("DuplicateIdx", "duplicate idx " + std::to_string(r.idx) +
                                        " at line " + std::to_string(line_no));
    if (!obj["reactants"].is_string() || !obj["product"].is_string())
        throw Error("MissingField", "reactants/product must be strings at line " + std::to_string(line_no));
    r.reactants = obj["reactants"].get<std::string>();
    r.product = obj["product"].get<std::string>();
    if (obj.contains("label") && !obj["label"].is_null())
        r.label = label_from_int(obj["label"].get<int>());

    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string& key = it.key();
        if (key == "idx" || key == "reactants" || key == "product" || key == "label") continue;
        // Keys whose values fit the prediction domain fold into the
        // predictions map; all other unknown keys are ignored.
        if (auto p = try_parse_prediction(it.value())) ds.predictions[key][r.idx] = *p;
    }
    ds.reactions.push_back(std::move(r));
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
    Dataset ds;
    std::set<long> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        parse_dataset_line(ds, seen, line_no, line);
    }
    return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
    Dataset ds;
    std::set<long> seen;
    for_each_line(path, [&](int line_no, const std::string& line) {
        parse_dataset_line(ds, seen, line_no, line);
    });
    return ds;
}

std::string serialize_dataset(const Dataset& ds) {
    std::string out;
    for (const auto& r : ds.reactions) {
        ordered_json obj;
        obj["idx"] = r.idx;
        obj["reactants"] = r.reactants;
        obj["product"] = r.product;
        if (r.label) obj["label"] = label_to_int(*r.label);
        for (const auto& [tool, table] : ds.predictions) {
            auto it = table.find(r.idx);
            if (it == table.end()) continue;
            switch (it->second) {
                case Prediction::Pred0: obj[tool] = 0; break;
                case Prediction::Pred1: obj[tool] = 1; break;
                case Prediction::NA: obj[tool] = "NA"; break;
            }
        }
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_dataset(ds));
}

ValidationResult validate_reaction(const Reaction& r) {
    ValidationResult res;
    const std::string reactants = trim(r.reactants);
    const std::string product = trim(r.product);
    if (reactants.empty()) res.violations.push_back("EmptyReactants");
    if (product.empty()) res.violations.push_back("EmptyProduct");
    if (r.idx < 0) res.violations.push_back("NegativeIdx");

    auto check = [&res](const std::string& s, const char* side) {
        if (s.empty()) return;
        try {
            tokenize_smiles(s);
        } catch (const Error& e) {
            res.violations.push_back(e.code() + std::string("(") + side + ")");
        }
    };
    check(reactants, "reactants");
    check(product, "product");
    return res;
}

}  // namespace armor
