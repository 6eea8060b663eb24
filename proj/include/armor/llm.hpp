#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "armor/util.hpp"

namespace armor {

enum class TemplateId {
    PatternExtraction,
    PatternMatch,
    Consolidation,
    MemoryBuild,
    ToolSelect,
    DirectAsk,
};

const char* template_name(TemplateId id);
TemplateId template_from_name(const std::string& name);

/// Raw template body; placeholders appear as {name}.
const std::string& template_body(TemplateId id);

/// Placeholder names a template requires at render time.
const std::vector<std::string>& template_placeholders(TemplateId id);

using Bindings = std::map<std::string, std::string>;

/// Pure string substitution of every declared placeholder; throws
/// UnboundPlaceholder when a required binding is absent.
std::string render_prompt(TemplateId id, const Bindings& bindings);

/// Canonical hash over (template, sorted bindings); the scripted backend key.
uint64_t bindings_hash(TemplateId id, const Bindings& bindings);

struct LlmRequest {
    TemplateId template_id;
    Bindings bindings;
    std::string prompt;       // rendered text; sampling is always disabled
    bool repair = false;      // set on the single retry after a bad response
    int max_response_chars = 262144;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string complete(const LlmRequest& request) = 0;
    virtual std::string tag() const = 0;
};

/// Structural context for schema validation (value domains declared by the
/// prompt, e.g. the allowed tool ids of a ToolSelect call).
struct SchemaContext {
    std::set<std::string> allowed_tools;
};

/// Renders, calls the backend, strips code fences, parses and validates.
/// One repair retry on parse/validation failure; the second failure throws
/// JsonInvalid or SchemaViolation.
nlohmann::json complete_json(LlmBackend& backend, TemplateId id, const Bindings& bindings,
                             const SchemaContext& ctx = {});

/// Validation only; throws SchemaViolation on the first offending key.
void validate_schema(TemplateId id, const nlohmann::json& value, const SchemaContext& ctx);

std::string strip_code_fences(const std::string& text);

/// Deterministic offline backend: responses looked up by
/// (template_id, bindings hash), with an optional programmatic default.
class ScriptedBackend : public LlmBackend {
public:
    using Fallback = std::function<std::optional<std::string>(const LlmRequest&)>;

    std::string complete(const LlmRequest& request) override;
    std::string tag() const override { return "scripted:" + scenario_id_; }

    void set_scenario_id(std::string id) { scenario_id_ = std::move(id); }
    void set_fallback(Fallback fb) { fallback_ = std::move(fb); }
    void add_response(TemplateId id, const Bindings& bindings, std::string response);
    void add_response_by_hash(TemplateId id, uint64_t hash, std::string response);

    static ScriptedBackend from_file(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::string scenario_id_ = "default";
    std::map<std::pair<int, uint64_t>, std::string> responses_;
    Fallback fallback_;
};

/// Records every request/response pair into a scenario JSONL file while
/// delegating to a live backend. Single writer.
class RecordingBackend : public LlmBackend {
public:
    RecordingBackend(LlmBackend& inner, std::filesystem::path path)
        : inner_(inner), path_(std::move(path)) {}

    std::string complete(const LlmRequest& request) override;
    std::string tag() const override { return inner_.tag() + "+recording"; }

private:
    LlmBackend& inner_;
    std::filesystem::path path_;
    std::mutex mutex_;
};

/// Remote chat-completion backend. Endpoint and credential come from
/// ARMOR_LLM_ENDPOINT / ARMOR_LLM_KEY unless given explicitly.
class HttpLlmBackend : public LlmBackend {
public:
    HttpLlmBackend();  // reads environment variables
    HttpLlmBackend(std::string endpoint, std::string key)
        : endpoint_(std::move(endpoint)), key_(std::move(key)) {}

    std::string complete(const LlmRequest& request) override;
    std::string tag() const override { return "http"; }

private:
    std::string endpoint_;
    std::string key_;
};

}  // namespace armor
