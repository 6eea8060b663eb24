#include "armor/tools.hpp"

#include <mutex>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace armor {

using nlohmann::json;

ToolRecord& ToolRegistry::add(ToolRecord record) {
    if (by_id_.count(record.tool_id))
        throw Error("DuplicateTool", "tool_id already registered: " + record.tool_id);
    by_id_[record.tool_id] = tools_.size();
    tools_.push_back(std::move(record));
    return tools_.back();
}

ToolRecord& ToolRegistry::get(const std::string& tool_id) {
    auto it = by_id_.find(tool_id);
    if (it == by_id_.end()) throw Error("UnknownTool", "unknown tool_id: " + tool_id);
    return tools_[it->second];
}

const ToolRecord& ToolRegistry::get(const std::string& tool_id) const {
    auto it = by_id_.find(tool_id);
    if (it == by_id_.end()) throw Error("UnknownTool", "unknown tool_id: " + tool_id);
    return tools_[it->second];
}

bool ToolRegistry::contains(const std::string& tool_id) const { return by_id_.count(tool_id) > 0; }

std::vector<std::string> ToolRegistry::ids() const {
    std::vector<std::string> out;
    out.reserve(tools_.size());
    for (const auto& t : tools_) out.push_back(t.tool_id);
    return out;
}

namespace {

std::mutex g_scenarios_mutex;

std::unordered_map<std::string, std::function<Prediction(const Reaction&)>>& scenarios() {
    static auto* map = [] {
        auto* m = new std::unordered_map<std::string, std::function<Prediction(const Reaction&)>>();
        (*m)["always-feasible"] = [](const Reaction&) { return Prediction::Pred1; };
        (*m)["always-infeasible"] = [](const Reaction&) { return Prediction::Pred0; };
        (*m)["always-na"] = [](const Reaction&) { return Prediction::NA; };
        return m;
    }();
    return *map;
}

Prediction parse_prediction_token(const std::string& raw) {
    if (raw == "0") return Prediction::Pred0;
    if (raw == "1") return Prediction::Pred1;
    if (raw == "NA" || raw == "na" || raw == "None" || raw.empty()) return Prediction::NA;
    throw Error("ValueOutOfDomain", "prediction value out of domain: " + raw);
}

Prediction http_predict(const HttpProvider& provider, const Reaction& r) {
    size_t scheme_end = provider.endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw Error("BackendUnavailable", "endpoint must include a scheme");
    size_t path_begin = provider.endpoint.find('/', scheme_end + 3);
    std::string host = provider.endpoint.substr(0, path_begin);
    std::string path = path_begin == std::string::npos ? "/" : provider.endpoint.substr(path_begin);

    json payload = {{"reactants", r.reactants}, {"product", r.product}};
    // One retry after the first failure, then NA.
    for (int attempt = 0; attempt < 2; ++attempt) {
        httplib::Client client(host);
        client.set_connection_timeout(provider.timeout_seconds);
        client.set_read_timeout(provider.timeout_seconds);
        auto res = client.Post(path, payload.dump(), "application/json");
        if (!res || res->status != 200) continue;
        json body = json::parse(res->body, nullptr, false);
        if (body.is_discarded() || !body.contains("prediction")) continue;
        const json& p = body["prediction"];
        if (p.is_number_integer()) {
            long n = p.get<long>();
            if (n == 0) return Prediction::Pred0;
            if (n == 1) return Prediction::Pred1;
            continue;
        }
        if (p.is_string()) return parse_prediction_token(p.get<std::string>());
        continue;
    }
    throw Error("BackendUnavailable", "http provider failed after retry");
}

}  // namespace

void register_scripted_scenario(const std::string& scenario_id,
                                std::function<Prediction(const Reaction&)> fn) {
    std::lock_guard<std::mutex> lock(g_scenarios_mutex);
    scenarios()[scenario_id] = std::move(fn);
}

std::unordered_map<long, Prediction> load_prediction_table(const std::filesystem::path& path) {
    std::unordered_map<long, Prediction> table;
    const bool jsonl = path.extension() == ".jsonl" || path.extension() == ".json";
    for_each_line(path, [&](int line_no, const std::string& line) {
        if (jsonl) {
            json obj = json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.is_object() || !obj.contains("idx") ||
                !obj.contains("prediction"))
                throw Error("MalformedRow", "bad prediction row at line " + std::to_string(line_no));
            long idx = obj["idx"].get<long>();
            const json& p = obj["prediction"];
            if (p.is_number_integer())
                table[idx] = parse_prediction_token(std::to_string(p.get<long>()));
            else if (p.is_string() || p.is_null())
                table[idx] = parse_prediction_token(p.is_null() ? "NA" : p.get<std::string>());
            else
                throw Error("MalformedRow", "bad prediction value at line " + std::to_string(line_no));
            return;
        }
        if (line_no == 1 && line.rfind("idx", 0) == 0) return;  // header
        size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw Error("MalformedRow", "expected idx,prediction at line " + std::to_string(line_no));
        long idx;
        try {
            idx = std::stol(line.substr(0, comma));
        } catch (const std::exception&) {
            throw Error("MalformedRow", "bad idx at line " + std::to_string(line_no));
        }
        table[idx] = parse_prediction_token(line.substr(comma + 1));
    });
    return table;
}

Prediction predict(const ToolRecord& tool, const Reaction& r,
                   std::vector<std::string>* diagnostics) {
    try {
        if (const auto* tp = std::get_if<TableProvider>(&tool.provider)) {
            auto it = tp->table.find(r.idx);
            return it == tp->table.end() ? Prediction::NA : it->second;
        }
        if (const auto* hp = std::get_if<HttpProvider>(&tool.provider)) return http_predict(*hp, r);
        if (const auto* lp = std::get_if<LlmPromptingProvider>(&tool.provider)) {
            if (!lp->backend) throw Error("BackendUnavailable", "no LLM backend bound");
            json out = complete_json(*lp->backend, TemplateId::DirectAsk,
                                     {{"reactants", r.reactants}, {"product", r.product}});
            long p = out.at("prediction").is_string()
                         ? (out.at("prediction") == "1" ? 1 : 0)
                         : out.at("prediction").get<long>();
            return p == 1 ? Prediction::Pred1 : Prediction::Pred0;
        }
        const auto& sp = std::get<ScriptedProvider>(tool.provider);
        std::function<Prediction(const Reaction&)> fn;
        {
            std::lock_guard<std::mutex> lock(g_scenarios_mutex);
            auto it = scenarios().find(sp.scenario_id);
            if (it == scenarios().end())
                throw Error("ScenarioMissing", "unknown scripted scenario: " + sp.scenario_id);
            fn = it->second;
        }
        return fn(r);
    } catch (const std::exception& e) {
        if (diagnostics)
            diagnostics->push_back(tool.tool_id + " idx=" + std::to_string(r.idx) + ": " + e.what());
        return Prediction::NA;
    }
}

double tool_accuracy(const ToolRecord& tool, const Dataset& dataset) {
    long total = 0, correct = 0;
    for (const auto& r : dataset.reactions) {
        if (!r.label) continue;
        ++total;
        if (prediction_matches(predict(tool, r), *r.label)) ++correct;
    }
    if (total == 0) throw Error("EmptyDataset", "no labeled reactions to score");
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace armor
