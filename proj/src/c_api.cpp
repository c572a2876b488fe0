#include "routine/c_api.h"

#include "routine/client.hpp"
#include "routine/error.hpp"
#include "routine/eval.hpp"
#include "routine/memory.hpp"
#include "routine/pipeline.hpp"
#include "routine/rng.hpp"
#include "routine/routine.hpp"
#include "routine/runtime.hpp"
#include "routine/tools.hpp"

#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <vector>

struct rtn_catalog {
    routine::ToolRegistry registry;
};

struct rtn_client {
    std::unique_ptr<routine::ModelClient> client;
};

namespace {

using routine::json;

char* dup_string(const std::string& text) {
    char* out = static_cast<char*>(::operator new(text.size() + 1, std::nothrow));
    if (!out) return nullptr;
    std::memcpy(out, text.c_str(), text.size() + 1);
    return out;
}

void set_error(char** out_error, const std::string& message) {
    if (out_error) *out_error = dup_string(message);
}

rtn_status map_errc(routine::Errc code) {
    using routine::Errc;
    switch (code) {
    case Errc::malformed_id:
    case Errc::malformed_document:
    case Errc::unknown_kind:
    case Errc::no_tool_call_span:
    case Errc::malformed_json:
    case Errc::bad_shape:
        return RTN_ERR_PARSE;
    case Errc::invariant_violation:
    case Errc::missing_branch_choice:
    case Errc::invalid_branch_choice:
    case Errc::already_terminated:
        return RTN_ERR_INVARIANT;
    case Errc::duplicate_name:
    case Errc::unknown_tool:
    case Errc::unknown_placeholder:
        return RTN_ERR_NAME;
    case Errc::handler_failure:
    case Errc::unfinished_trace:
    case Errc::insufficient_distractors:
    case Errc::exhausted_repairs:
        return RTN_ERR_STATE;
    case Errc::transport_failure:
    case Errc::timeout:
        return RTN_ERR_TRANSPORT;
    case Errc::io_error:
        return RTN_ERR_IO;
    }
    return RTN_ERR_INTERNAL;
}

template <typename Fn>
rtn_status guarded(char** out_error, Fn&& fn) {
    try {
        return fn();
    } catch (const routine::Error& e) {
        set_error(out_error, e.what());
        return map_errc(e.code());
    } catch (const std::exception& e) {
        set_error(out_error, e.what());
        return RTN_ERR_INTERNAL;
    }
}

rtn_status require(bool condition, char** out_error, const char* message) {
    if (condition) return RTN_OK;
    set_error(out_error, message);
    return RTN_ERR_ARGUMENT;
}

json parse_json_arg(const char* text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw routine::Error(routine::Errc::malformed_document, std::string(what) + ": " + e.what());
    }
}

std::vector<routine::Routine> routines_from_arg(const char* routines_json) {
    std::vector<routine::Routine> routines;
    if (!routines_json || !*routines_json) return routines;
    json doc = parse_json_arg(routines_json, "routines document");
    if (doc.is_array() && (doc.empty() || doc.front().is_object())) {
        bool looks_like_steps = !doc.empty() && doc.front().is_object() && doc.front().contains("step");
        if (looks_like_steps) {
            routines.push_back(routine::routine_from_json(doc));
            return routines;
        }
        for (const json& entry : doc) {
            routines.push_back(routine::routine_from_json(entry));
        }
        return routines;
    }
    routines.push_back(routine::routine_from_json(doc));
    return routines;
}

routine::SessionConfig config_from_arg(const char* session_config_json) {
    if (!session_config_json || !*session_config_json) return {};
    return routine::SessionConfig::from_json(parse_json_arg(session_config_json, "session config"));
}

} // namespace

extern "C" {

const char* rtn_status_name(rtn_status status) {
    switch (status) {
    case RTN_OK: return "ok";
    case RTN_ERR_ARGUMENT: return "argument-error";
    case RTN_ERR_PARSE: return "parse-error";
    case RTN_ERR_INVARIANT: return "invariant-error";
    case RTN_ERR_NAME: return "name-error";
    case RTN_ERR_STATE: return "state-error";
    case RTN_ERR_TRANSPORT: return "transport-error";
    case RTN_ERR_IO: return "io-error";
    case RTN_ERR_INTERNAL: return "internal-error";
    }
    return "unknown";
}

void rtn_string_free(char* s) {
    ::operator delete(s, std::nothrow);
}

rtn_status rtn_routine_parse(const char* json_text, char** out_json, char** out_error) {
    if (rtn_status s = require(json_text && out_json, out_error, "json_text and out_json are required")) return s;
    return guarded(out_error, [&] {
        routine::Routine r = routine::parse_routine(json_text);
        *out_json = dup_string(routine::render_json(r));
        return RTN_OK;
    });
}

rtn_status rtn_routine_render_nl(const char* routine_json, int with_io, int without_tools, char** out_text,
                                 char** out_error) {
    if (rtn_status s = require(routine_json && out_text, out_error, "routine_json and out_text are required"))
        return s;
    return guarded(out_error, [&] {
        routine::Routine r = routine::parse_routine(routine_json);
        routine::RenderOptions opts;
        opts.with_io = with_io != 0;
        opts.without_tools = without_tools != 0;
        *out_text = dup_string(routine::render_natural_language(r, opts));
        return RTN_OK;
    });
}

rtn_status rtn_routine_validate(const char* routine_json, const char* tools_config_json, char** out_findings,
                                char** out_error) {
    if (rtn_status s = require(routine_json && tools_config_json && out_findings, out_error,
                               "routine_json, tools_config_json and out_findings are required"))
        return s;
    return guarded(out_error, [&] {
        routine::Routine r = routine::parse_routine(routine_json);
        routine::ToolRegistry registry = routine::ToolRegistry::from_config(tools_config_json);
        routine::ValidationReport report = routine::validate(r, registry.tool_names());
        *out_findings = dup_string(report.to_json().dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_routine_flatten(const char* routine_json, char** out_array, char** out_error) {
    if (rtn_status s = require(routine_json && out_array, out_error, "routine_json and out_array are required"))
        return s;
    return guarded(out_error, [&] {
        routine::Routine r = routine::parse_routine(routine_json);
        json arr = json::array();
        for (const routine::Routine& flat : routine::flatten_branches(r)) {
            arr.push_back(routine::routine_to_json(flat));
        }
        *out_array = dup_string(arr.dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_catalog_from_config(const char* config_json, rtn_catalog** out_catalog, char** out_error) {
    if (rtn_status s = require(config_json && out_catalog, out_error, "config_json and out_catalog are required"))
        return s;
    return guarded(out_error, [&] {
        auto catalog = std::make_unique<rtn_catalog>();
        catalog->registry = routine::ToolRegistry::from_config(config_json);
        *out_catalog = catalog.release();
        return RTN_OK;
    });
}

void rtn_catalog_free(rtn_catalog* catalog) {
    delete catalog;
}

rtn_status rtn_catalog_serialize(const rtn_catalog* catalog, int has_seed, uint64_t seed, char** out_json,
                                 char** out_error) {
    if (rtn_status s = require(catalog && out_json, out_error, "catalog and out_json are required")) return s;
    return guarded(out_error, [&] {
        std::optional<std::uint64_t> order_seed;
        if (has_seed) order_seed = seed;
        *out_json = dup_string(catalog->registry.serialize(order_seed));
        return RTN_OK;
    });
}

rtn_status rtn_client_scripted(const char* const* outputs, size_t count, rtn_client** out_client,
                               char** out_error) {
    if (rtn_status s = require(out_client && (outputs || count == 0), out_error, "out_client is required"))
        return s;
    return guarded(out_error, [&] {
        std::vector<std::string> script;
        script.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            script.emplace_back(outputs[i] ? outputs[i] : "");
        }
        auto client = std::make_unique<rtn_client>();
        client->client = std::make_unique<routine::ScriptedClient>(std::move(script));
        *out_client = client.release();
        return RTN_OK;
    });
}

rtn_status rtn_client_http(const char* endpoint, const char* model, const char* credentials_env,
                           long timeout_ms, rtn_client** out_client, char** out_error) {
    if (rtn_status s = require(endpoint && model && out_client, out_error,
                               "endpoint, model and out_client are required"))
        return s;
    return guarded(out_error, [&] {
        routine::HttpClientConfig config;
        config.endpoint = endpoint;
        config.model = model;
        config.credentials_env = credentials_env ? credentials_env : "";
        config.timeout_ms = static_cast<int>(timeout_ms);
        auto client = std::make_unique<rtn_client>();
        client->client = routine::make_http_chat_client(config);
        *out_client = client.release();
        return RTN_OK;
    });
}

void rtn_client_free(rtn_client* client) {
    delete client;
}

rtn_status rtn_agent_run(const char* query, const char* routines_json, rtn_catalog* catalog,
                         rtn_client* client, const char* session_config_json, char** out_trace,
                         char** out_error) {
    if (rtn_status s = require(query && catalog && client && out_trace, out_error,
                               "query, catalog, client and out_trace are required"))
        return s;
    return guarded(out_error, [&] {
        std::vector<routine::Routine> routines = routines_from_arg(routines_json);
        routine::SessionConfig cfg = config_from_arg(session_config_json);
        routine::Trace trace = routine::run_task(query, routines, *client->client, catalog->registry, cfg);
        *out_trace = dup_string(trace.to_json().dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_prompt_build(const char* session_config_json, const char* routines_json,
                            const char* variables_json, rtn_catalog* catalog, int include_tools,
                            char** out_prompt, char** out_error) {
    if (rtn_status s = require(catalog && out_prompt, out_error, "catalog and out_prompt are required"))
        return s;
    return guarded(out_error, [&] {
        routine::SessionConfig cfg = config_from_arg(session_config_json);
        std::vector<routine::Routine> routines = routines_from_arg(routines_json);
        routine::VariableStore store(cfg.variable_threshold);
        if (variables_json && *variables_json) {
            json vars = parse_json_arg(variables_json, "variables document");
            if (!vars.is_object()) {
                throw routine::Error(routine::Errc::malformed_document, "variables document must be an object");
            }
            for (const auto& [key, value] : vars.items()) {
                store.restore(key, value);
            }
        }
        routine::PromptOptions opts;
        opts.include_tools = include_tools != 0;
        *out_prompt = dup_string(routine::build_system_prompt(cfg, routines, store, catalog->registry, opts));
        return RTN_OK;
    });
}

rtn_status rtn_library_retrieve(const char* library_json, const char* query, int k, char** out_ranked,
                                char** out_error) {
    if (rtn_status s = require(library_json && query && out_ranked && k >= 1, out_error,
                               "library_json, query, out_ranked and k >= 1 are required"))
        return s;
    return guarded(out_error, [&] {
        routine::RoutineLibrary library = routine::RoutineLibrary::load(library_json);
        json out = json::array();
        for (const auto& [r, score] : library.retrieve(query, static_cast<std::size_t>(k))) {
            out.push_back({{"routine_id", r->routine_id}, {"score", score}});
        }
        *out_ranked = dup_string(out.dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_data_generation_prompt(const char* draft, rtn_catalog* catalog, char** out_prompt,
                                      char** out_error) {
    if (rtn_status s = require(draft && catalog && out_prompt, out_error,
                               "draft, catalog and out_prompt are required"))
        return s;
    return guarded(out_error, [&] {
        *out_prompt = dup_string(routine::build_generation_prompt(draft, catalog->registry));
        return RTN_OK;
    });
}

rtn_status rtn_data_optimize(const char* draft, rtn_catalog* catalog, rtn_client* planner, int max_repairs,
                             char** out_routine, char** out_error) {
    if (rtn_status s = require(draft && catalog && planner && out_routine, out_error,
                               "draft, catalog, planner and out_routine are required"))
        return s;
    return guarded(out_error, [&] {
        routine::Routine r =
            routine::optimize_routine(draft, catalog->registry, *planner->client, max_repairs);
        *out_routine = dup_string(routine::render_json(r));
        return RTN_OK;
    });
}

rtn_status rtn_data_filter(const char* records_jsonl, int step_cap, char** out_jsonl, char** out_report,
                           char** out_error) {
    if (rtn_status s = require(records_jsonl && out_jsonl && out_report, out_error,
                               "records_jsonl, out_jsonl and out_report are required"))
        return s;
    return guarded(out_error, [&] {
        auto records = routine::read_jsonl_records(records_jsonl);
        auto [filtered, report] = routine::filter_dataset(std::move(records), step_cap);
        *out_jsonl = dup_string(routine::write_jsonl_records(filtered));
        *out_report = dup_string(report.to_json().dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_data_decompose(const char* trace_json, rtn_catalog* catalog, int has_seed, uint64_t seed,
                              char** out_samples, char** out_error) {
    if (rtn_status s = require(trace_json && catalog && out_samples, out_error,
                               "trace_json, catalog and out_samples are required"))
        return s;
    return guarded(out_error, [&] {
        routine::Trace trace = routine::Trace::from_json(parse_json_arg(trace_json, "trace document"));
        std::optional<std::uint64_t> order_seed;
        if (has_seed) order_seed = seed;
        json out = json::array();
        for (const routine::EvalSample& sample :
             routine::decompose_trace(trace, catalog->registry, order_seed)) {
            out.push_back(sample.to_json());
        }
        *out_samples = dup_string(out.dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_data_expand(const char* templates_json, const char* entities_json, char** out_queries,
                           char** out_error) {
    if (rtn_status s = require(templates_json && entities_json && out_queries, out_error,
                               "templates_json, entities_json and out_queries are required"))
        return s;
    return guarded(out_error, [&] {
        json templates_doc = parse_json_arg(templates_json, "templates document");
        if (!templates_doc.is_array()) {
            throw routine::Error(routine::Errc::malformed_document, "templates document must be a JSON array");
        }
        std::vector<std::string> templates;
        for (const json& t : templates_doc) {
            if (!t.is_string()) {
                throw routine::Error(routine::Errc::malformed_document, "templates must be strings");
            }
            templates.push_back(t.get<std::string>());
        }
        json entities_doc = parse_json_arg(entities_json, "entities document");
        if (!entities_doc.is_object()) {
            throw routine::Error(routine::Errc::malformed_document, "entities document must be a JSON object");
        }
        std::map<std::string, std::vector<std::string>> entities;
        for (const auto& [name, values] : entities_doc.items()) {
            if (!values.is_array()) {
                throw routine::Error(routine::Errc::malformed_document,
                                     "entity column \"" + name + "\" must be an array");
            }
            for (const json& v : values) {
                entities[name].push_back(v.is_string() ? v.get<std::string>() : v.dump());
            }
        }
        json out = json::array();
        for (const std::string& query : routine::expand_query_templates(templates, entities)) {
            out.push_back(query);
        }
        *out_queries = dup_string(out.dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_data_distill(const char* queries_json, const char* routine_json, rtn_catalog* catalog,
                            rtn_client* teacher, const char* session_config_json, char** out_traces,
                            char** out_rejections, char** out_error) {
    if (rtn_status s = require(queries_json && routine_json && catalog && teacher && out_traces &&
                                   out_rejections,
                               out_error,
                               "queries_json, routine_json, catalog, teacher, out_traces and "
                               "out_rejections are required"))
        return s;
    return guarded(out_error, [&] {
        json queries_doc = parse_json_arg(queries_json, "queries document");
        if (!queries_doc.is_array()) {
            throw routine::Error(routine::Errc::malformed_document, "queries document must be a JSON array");
        }
        std::vector<std::string> queries;
        for (const json& q : queries_doc) {
            queries.push_back(q.is_string() ? q.get<std::string>() : q.dump());
        }
        routine::Routine r = routine::parse_routine(routine_json);
        routine::SessionConfig cfg = config_from_arg(session_config_json);
        routine::DistillResult result =
            routine::distill(queries, r, *teacher->client, catalog->registry, cfg);
        json traces = json::array();
        for (const routine::Trace& trace : result.kept) {
            traces.push_back(trace.to_json());
        }
        *out_traces = dup_string(traces.dump(2));
        *out_rejections = dup_string(result.rejections.dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_data_emit_sharegpt(const char* trace_json, const char* routines_json, rtn_catalog* catalog,
                                  const char* session_config_json, int include_final_observation,
                                  char** out_record, char** out_error) {
    if (rtn_status s = require(trace_json && catalog && out_record, out_error,
                               "trace_json, catalog and out_record are required"))
        return s;
    return guarded(out_error, [&] {
        routine::Trace trace = routine::Trace::from_json(parse_json_arg(trace_json, "trace document"));
        std::vector<routine::Routine> routines = routines_from_arg(routines_json);
        routine::SessionConfig cfg = config_from_arg(session_config_json);
        routine::EmitOptions opts;
        opts.include_final_observation = include_final_observation != 0;
        routine::DatasetRecord record =
            routine::emit_sharegpt(trace, routines, catalog->registry, cfg, opts);
        *out_record = dup_string(record.to_json().dump());
        return RTN_OK;
    });
}

rtn_status rtn_eval_judge(const char* model_output, const char* sample_json, char** out_verdict,
                          char** out_error) {
    if (rtn_status s = require(model_output && sample_json && out_verdict, out_error,
                               "model_output, sample_json and out_verdict are required"))
        return s;
    return guarded(out_error, [&] {
        routine::EvalSample sample =
            routine::EvalSample::from_json(parse_json_arg(sample_json, "sample document"));
        *out_verdict = dup_string(routine::judge(model_output, sample).to_json().dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_eval_variant(const char* samples_json, const char* library_json, const char* variant,
                            uint64_t seed, char** out_samples, char** out_error) {
    if (rtn_status s = require(samples_json && library_json && variant && out_samples, out_error,
                               "samples_json, library_json, variant and out_samples are required"))
        return s;
    return guarded(out_error, [&] {
        json samples_doc = parse_json_arg(samples_json, "samples document");
        if (!samples_doc.is_array()) {
            throw routine::Error(routine::Errc::malformed_document, "samples document must be a JSON array");
        }
        routine::RoutineLibrary library = routine::RoutineLibrary::load(library_json);
        routine::ScenarioVariant v = routine::ScenarioVariant::parse(variant);
        routine::SplitMix64 seed_stream(seed);
        json out = json::array();
        for (const json& entry : samples_doc) {
            routine::EvalSample base = routine::EvalSample::from_json(entry);
            routine::EvalSample rewritten = routine::make_variant(base, library, v, seed_stream.next());
            out.push_back(rewritten.to_json());
        }
        *out_samples = dup_string(out.dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_eval_run(const char* samples_json, rtn_client* client, int jobs, char** out_verdicts,
                        char** out_report, char** out_error) {
    if (rtn_status s = require(samples_json && client && out_verdicts && out_report, out_error,
                               "samples_json, client, out_verdicts and out_report are required"))
        return s;
    return guarded(out_error, [&] {
        json samples_doc = parse_json_arg(samples_json, "samples document");
        if (!samples_doc.is_array()) {
            throw routine::Error(routine::Errc::malformed_document, "samples document must be a JSON array");
        }
        std::vector<routine::EvalSample> samples;
        for (const json& entry : samples_doc) {
            samples.push_back(routine::EvalSample::from_json(entry));
        }
        routine::EvalRunResult result = routine::evaluate_run(samples, *client->client, jobs);
        json verdicts = json::array();
        for (const routine::Verdict& v : result.verdicts) {
            verdicts.push_back(v.to_json());
        }
        *out_verdicts = dup_string(verdicts.dump(2));
        *out_report = dup_string(result.report.to_json().dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_eval_report(const char* verdicts_json, char** out_report, char** out_error) {
    if (rtn_status s = require(verdicts_json && out_report, out_error,
                               "verdicts_json and out_report are required"))
        return s;
    return guarded(out_error, [&] {
        json verdicts_doc = parse_json_arg(verdicts_json, "verdicts document");
        if (!verdicts_doc.is_array()) {
            throw routine::Error(routine::Errc::malformed_document, "verdicts document must be a JSON array");
        }
        std::vector<routine::Verdict> verdicts;
        for (const json& entry : verdicts_doc) {
            verdicts.push_back(routine::Verdict::from_json(entry));
        }
        *out_report = dup_string(routine::aggregate(verdicts).to_json().dump(2));
        return RTN_OK;
    });
}

rtn_status rtn_eval_report_table(const char* report_json, char** out_table, char** out_error) {
    if (rtn_status s = require(report_json && out_table, out_error, "report_json and out_table are required"))
        return s;
    return guarded(out_error, [&] {
        routine::MetricsReport report =
            routine::MetricsReport::from_json(parse_json_arg(report_json, "report document"));
        *out_table = dup_string(report.to_table());
        return RTN_OK;
    });
}

} // extern "C"
