#include "armor/llm.hpp"

#include <cstdlib>
#include <fstream>

#include <httplib.h>

namespace armor {

using nlohmann::json;
using nlohmann::ordered_json;

std::string render_prompt(TemplateId id, const Bindings& bindings) {
    std::string out = template_body(id);
    for (const auto& name : template_placeholders(id)) {
        auto it = bindings.find(name);
        if (it == bindings.end())
            throw Error("UnboundPlaceholder", std::string("unbound placeholder {") + name +
                                                  "} in template " + template_name(id));
        const std::string needle = "{" + name + "}";
        size_t pos = 0;
        while ((pos = out.find(needle, pos)) != std::string::npos) {
            out.replace(pos, needle.size(), it->second);
            pos += it->second.size();
        }
    }
    return out;
}

uint64_t bindings_hash(TemplateId id, const Bindings& bindings) {
    std::string canon = template_name(id);
    canon += '\x1e';
    for (const auto& [k, v] : bindings) {
        canon += k;
        canon += '\x1f';
        canon += v;
        canon += '\x1e';
    }
    return fnv1a64(canon, 0x534e4443ull);
}

std::string strip_code_fences(const std::string& text) {
    size_t begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return text;
    size_t end = text.find_last_not_of(" \t\r\n") + 1;
    std::string body = text.substr(begin, end - begin);
    if (body.rfind("```", 0) != 0) return body;
    size_t nl = body.find('\n');
    if (nl == std::string::npos) return body;
    body.erase(0, nl + 1);
    size_t fence = body.rfind("```");
    if (fence != std::string::npos) body.erase(fence);
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
    return body;
}

namespace {

void require_key(const json& v, const char* key, const char* type) {
    if (!v.contains(key))
        throw Error("SchemaViolation", std::string("missing key '") + key + "'");
    const json& f = v.at(key);
    bool ok = false;
    std::string t = type;
    if (t == "string") ok = f.is_string();
    else if (t == "int") ok = f.is_number_integer();
    else if (t == "bool") ok = f.is_boolean();
    else if (t == "array") ok = f.is_array();
    if (!ok) throw Error("SchemaViolation", std::string("key '") + key + "' must be " + type);
}

void validate_pattern_extraction(const json& v) {
    require_key(v, "tool_acc", "string");
    require_key(v, "often_correct_on", "array");
    for (const auto& entry : v.at("often_correct_on")) {
        if (!entry.is_object()) throw Error("SchemaViolation", "often_correct_on entries must be objects");
        require_key(entry, "name", "string");
        require_key(entry, "explanation", "string");
        require_key(entry, "examples_idx", "array");
        const auto& ex = entry.at("examples_idx");
        if (ex.size() != 5)
            throw Error("SchemaViolation", "examples_idx must contain exactly 5 integers");
        for (const auto& e : ex)
            if (!e.is_number_integer())
                throw Error("SchemaViolation", "examples_idx entries must be integers");
    }
}

void validate_pattern_match(const json& v) {
    require_key(v, "belongs_to_rule", "bool");
    require_key(v, "confidence", "string");
    const std::string c = v.at("confidence").get<std::string>();
    if (c != "high" && c != "medium" && c != "low")
        throw Error("SchemaViolation", "confidence must be high|medium|low");
}

void validate_consolidation(const json& v) { require_key(v, "keep_index", "int"); }

void validate_memory_build(const json& v) {
    require_key(v, "tool", "string");
    require_key(v, "evidence", "array");
    require_key(v, "elimination", "array");
    require_key(v, "final_reason", "string");
    if (v.at("elimination").size() > 3)
        throw Error("SchemaViolation", "elimination allows at most 3 items");
    for (const auto& e : v.at("elimination")) {
        if (!e.is_object()) throw Error("SchemaViolation", "elimination entries must be objects");
        require_key(e, "tool", "string");
        require_key(e, "why_not", "string");
    }
}

void validate_tool_select(const json& v, const SchemaContext& ctx) {
    require_key(v, "tool", "string");
    const std::string tool = v.at("tool").get<std::string>();
    if (tool == "abstain") return;
    if (!ctx.allowed_tools.empty() && !ctx.allowed_tools.count(tool))
        throw Error("SchemaViolation", "tool '" + tool + "' is not in the allowed set");
}

void validate_direct_ask(const json& v) {
    if (!v.contains("prediction"))
        throw Error("SchemaViolation", "missing key 'prediction'");
    const json& p = v.at("prediction");
    long n;
    if (p.is_number_integer()) n = p.get<long>();
    else if (p.is_string() && (p == "0" || p == "1")) n = p == "1" ? 1 : 0;
    else throw Error("SchemaViolation", "prediction must be 0 or 1");
    if (n != 0 && n != 1) throw Error("SchemaViolation", "prediction must be 0 or 1");
}

}  // namespace

void validate_schema(TemplateId id, const json& value, const SchemaContext& ctx) {
    if (!value.is_object()) throw Error("SchemaViolation", "response is not a JSON object");
    switch (id) {
        case TemplateId::PatternExtraction: validate_pattern_extraction(value); break;
        case TemplateId::PatternMatch: validate_pattern_match(value); break;
        case TemplateId::Consolidation: validate_consolidation(value); break;
        case TemplateId::MemoryBuild: validate_memory_build(value); break;
        case TemplateId::ToolSelect: validate_tool_select(value, ctx); break;
        case TemplateId::DirectAsk: validate_direct_ask(value); break;
    }
}

json complete_json(LlmBackend& backend, TemplateId id, const Bindings& bindings,
                   const SchemaContext& ctx) {
    LlmRequest req;
    req.template_id = id;
    req.bindings = bindings;
    req.prompt = render_prompt(id, bindings);

    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        req.repair = attempt == 1;
        if (req.repair) req.prompt += "\n\nYour previous answer was not valid. Return valid JSON only.";
        std::string raw = backend.complete(req);
        if (static_cast<int>(raw.size()) > req.max_response_chars)
            throw Error("ResponseTruncated", "backend response exceeds the configured cap");
        std::string body = strip_code_fences(raw);
        try {
            json value = json::parse(body);
            validate_schema(id, value, ctx);
            return value;
        } catch (const json::exception& e) {
            last_error = std::string("JsonInvalid: ") + e.what();
        } catch (const Error& e) {
            if (e.code() != "SchemaViolation") throw;
            last_error = e.what();
        }
    }
    if (last_error.rfind("JsonInvalid", 0) == 0)
        throw Error("JsonInvalid", "unparseable response after repair retry: " + last_error);
    throw Error("SchemaViolation", "invalid response after repair retry: " + last_error);
}

void ScriptedBackend::add_response(TemplateId id, const Bindings& bindings, std::string response) {
    add_response_by_hash(id, bindings_hash(id, bindings), std::move(response));
}

void ScriptedBackend::add_response_by_hash(TemplateId id, uint64_t hash, std::string response) {
    responses_[{static_cast<int>(id), hash}] = std::move(response);
}

std::string ScriptedBackend::complete(const LlmRequest& request) {
    uint64_t h = bindings_hash(request.template_id, request.bindings);
    auto it = responses_.find({static_cast<int>(request.template_id), h});
    if (it != responses_.end()) return it->second;
    if (fallback_) {
        if (auto resp = fallback_(request)) return *resp;
    }
    throw Error("ScenarioMissing",
                std::string("no scripted response for template ") +
                    template_name(request.template_id) + " under scenario " + scenario_id_);
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
    ScriptedBackend backend;
    backend.set_scenario_id(path.stem().string());
    for_each_line(path, [&](int line_no, const std::string& line) {
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception&) {
            throw Error("MalformedLine", "scenario line " + std::to_string(line_no) + " is not JSON");
        }
        TemplateId id = template_from_name(obj.at("template_id").get<std::string>());
        uint64_t hash = std::stoull(obj.at("bindings_hash").get<std::string>(), nullptr, 16);
        backend.add_response_by_hash(id, hash, obj.at("response").get<std::string>());
    });
    return backend;
}

void ScriptedBackend::save(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& [key, response] : responses_) {
        ordered_json obj;
        obj["template_id"] = template_name(static_cast<TemplateId>(key.first));
        obj["bindings_hash"] = to_hex64(key.second);
        obj["response"] = response;
        out += obj.dump();
        out += '\n';
    }
    write_file_atomic(path, out);
}

std::string RecordingBackend::complete(const LlmRequest& request) {
    std::string response = inner_.complete(request);
    std::lock_guard<std::mutex> lock(mutex_);
    ordered_json obj;
    obj["template_id"] = template_name(request.template_id);
    obj["bindings_hash"] = to_hex64(bindings_hash(request.template_id, request.bindings));
    obj["response"] = response;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    out << obj.dump() << '\n';
    return response;
}

HttpLlmBackend::HttpLlmBackend() {
    if (const char* e = std::getenv("ARMOR_LLM_ENDPOINT")) endpoint_ = e;
    if (const char* k = std::getenv("ARMOR_LLM_KEY")) key_ = k;
}

std::string HttpLlmBackend::complete(const LlmRequest& request) {
    if (endpoint_.empty())
        throw Error("BackendUnavailable", "ARMOR_LLM_ENDPOINT is not configured");

    // endpoint = scheme://host[:port][/path]
    size_t scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos)
        throw Error("BackendUnavailable", "endpoint must include a scheme: " + endpoint_);
    size_t path_begin = endpoint_.find('/', scheme_end + 3);
    std::string host = endpoint_.substr(0, path_begin);
    std::string path = path_begin == std::string::npos ? "/" : endpoint_.substr(path_begin);

    json payload = {
        {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
        {"do_sample", false},
        {"max_tokens", request.max_response_chars / 4},
    };

    httplib::Client client(host);
    client.set_connection_timeout(30);
    client.set_read_timeout(30);
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);

    auto res = client.Post(path, headers, payload.dump(), "application/json");
    if (!res || res->status != 200)
        throw Error("BackendUnavailable",
                    "chat-completion request failed with status " +
                        std::to_string(res ? res->status : 0));
    try {
        json body = json::parse(res->body);
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw Error("BackendUnavailable", "malformed chat-completion response body");
    }
}

}  // namespace armor
