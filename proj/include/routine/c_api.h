/* C interface to the routine engine shared library.
 *
 * Conventions:
 *   - Every function returns an rtn_status; RTN_OK means success.
 *   - Results are returned through char** out parameters as NUL-terminated
 *     UTF-8 (JSON or plain text). Free them with rtn_string_free().
 *   - On failure, *out_error (when non-NULL) receives a message; free it
 *     with rtn_string_free(). Out parameters are untouched on failure.
 *   - Structured inputs and outputs are JSON text; handles are opaque.
 */
#ifndef ROUTINE_C_API_H
#define ROUTINE_C_API_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rtn_status {
    RTN_OK = 0,
    RTN_ERR_ARGUMENT = 1,  /* null or malformed arguments */
    RTN_ERR_PARSE = 2,     /* malformed documents, ids, or tool calls */
    RTN_ERR_INVARIANT = 3, /* structural invariant violations */
    RTN_ERR_NAME = 4,      /* unknown/duplicate tool, placeholder, or key */
    RTN_ERR_STATE = 5,     /* unfinished trace, exhausted repairs, ... */
    RTN_ERR_TRANSPORT = 6, /* endpoint unreachable, timeout, bad status */
    RTN_ERR_IO = 7,
    RTN_ERR_INTERNAL = 8
} rtn_status;

const char* rtn_status_name(rtn_status status);
void rtn_string_free(char* s);

/* ---- routines ---------------------------------------------------------- */

/* Parses and normalizes a routine document (bare step list or wrapped form). */
rtn_status rtn_routine_parse(const char* json_text, char** out_json, char** out_error);

/* Natural-language rendering of a routine document. */
rtn_status rtn_routine_render_nl(const char* routine_json, int with_io, int without_tools, char** out_text,
                                 char** out_error);

/* Findings JSON array; empty array means executable against the catalog. */
rtn_status rtn_routine_validate(const char* routine_json, const char* tools_config_json, char** out_findings,
                                char** out_error);

/* JSON array of linear routine documents, one per branch combination. */
rtn_status rtn_routine_flatten(const char* routine_json, char** out_array, char** out_error);

/* ---- tool catalog ------------------------------------------------------ */

typedef struct rtn_catalog rtn_catalog;

rtn_status rtn_catalog_from_config(const char* config_json, rtn_catalog** out_catalog, char** out_error);
void rtn_catalog_free(rtn_catalog* catalog);
rtn_status rtn_catalog_serialize(const rtn_catalog* catalog, int has_seed, uint64_t seed, char** out_json,
                                 char** out_error);

/* ---- model clients ----------------------------------------------------- */

typedef struct rtn_client rtn_client;

rtn_status rtn_client_scripted(const char* const* outputs, size_t count, rtn_client** out_client,
                               char** out_error);
rtn_status rtn_client_http(const char* endpoint, const char* model, const char* credentials_env,
                           long timeout_ms, rtn_client** out_client, char** out_error);
void rtn_client_free(rtn_client* client);

/* ---- agent runtime ----------------------------------------------------- */

/* session_config_json: {role_preamble?, system_params?, step_cap?,
 * parse_retries?, variable_threshold?, tool_order_seed?, exemplar_block?};
 * NULL or "" selects defaults. routines_json is a JSON array of routine
 * documents ([] runs the no-routine baseline). Returns the trace JSON. */
rtn_status rtn_agent_run(const char* query, const char* routines_json, rtn_catalog* catalog,
                         rtn_client* client, const char* session_config_json, char** out_trace,
                         char** out_error);

/* Builds the execution system prompt for the given state; variables_json is
 * an object of memory entries (may be "" or "{}"). */
rtn_status rtn_prompt_build(const char* session_config_json, const char* routines_json,
                            const char* variables_json, rtn_catalog* catalog, int include_tools,
                            char** out_prompt, char** out_error);

/* ---- procedure memory -------------------------------------------------- */

/* library_json: array of {routine_id,title,description,steps}. Returns
 * [{routine_id, score}] ranked. */
rtn_status rtn_library_retrieve(const char* library_json, const char* query, int k, char** out_ranked,
                                char** out_error);

/* ---- data pipeline ----------------------------------------------------- */

rtn_status rtn_data_generation_prompt(const char* draft, rtn_catalog* catalog, char** out_prompt,
                                      char** out_error);
rtn_status rtn_data_optimize(const char* draft, rtn_catalog* catalog, rtn_client* planner, int max_repairs,
                             char** out_routine, char** out_error);
rtn_status rtn_data_filter(const char* records_jsonl, int step_cap, char** out_jsonl, char** out_report,
                           char** out_error);
rtn_status rtn_data_decompose(const char* trace_json, rtn_catalog* catalog, int has_seed, uint64_t seed,
                              char** out_samples, char** out_error);
rtn_status rtn_data_expand(const char* templates_json, const char* entities_json, char** out_queries,
                           char** out_error);
rtn_status rtn_data_distill(const char* queries_json, const char* routine_json, rtn_catalog* catalog,
                            rtn_client* teacher, const char* session_config_json, char** out_traces,
                            char** out_rejections, char** out_error);
rtn_status rtn_data_emit_sharegpt(const char* trace_json, const char* routines_json, rtn_catalog* catalog,
                                  const char* session_config_json, int include_final_observation,
                                  char** out_record, char** out_error);

/* ---- evaluator --------------------------------------------------------- */

rtn_status rtn_eval_judge(const char* model_output, const char* sample_json, char** out_verdict,
                          char** out_error);
rtn_status rtn_eval_variant(const char* samples_json, const char* library_json, const char* variant,
                            uint64_t seed, char** out_samples, char** out_error);
rtn_status rtn_eval_run(const char* samples_json, rtn_client* client, int jobs, char** out_verdicts,
                        char** out_report, char** out_error);
rtn_status rtn_eval_report(const char* verdicts_json, char** out_report, char** out_error);
rtn_status rtn_eval_report_table(const char* report_json, char** out_table, char** out_error);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ROUTINE_C_API_H */
