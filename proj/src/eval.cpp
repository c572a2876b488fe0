#include "routine/eval.hpp"

#include "routine/error.hpp"
#include "routine/rng.hpp"
#include "routine/runtime.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <sstream>
#include <thread>

namespace routine {

const char* fail_category_name(FailCategory category) {
    switch (category) {
    case FailCategory::missing_brackets: return "missing-brackets/punctuation";
    case FailCategory::natural_language_output: return "natural-language-output";
    case FailCategory::wrong_call_count: return "wrong-call-count";
    case FailCategory::nonexistent_tool: return "nonexistent-tool";
    case FailCategory::wrong_tool: return "wrong-tool";
    case FailCategory::wrong_param_value: return "wrong-param-value";
    case FailCategory::hallucinated_param: return "hallucinated-param";
    case FailCategory::missing_required_param: return "missing-required-param";
    case FailCategory::wrong_param_type: return "wrong-param-type";
    case FailCategory::transport_failure: return "transport-failure";
    }
    return "missing-brackets/punctuation";
}

std::optional<FailCategory> fail_category_from(const std::string& name) {
    static const std::pair<const char*, FailCategory> table[] = {
        {"missing-brackets/punctuation", FailCategory::missing_brackets},
        {"natural-language-output", FailCategory::natural_language_output},
        {"wrong-call-count", FailCategory::wrong_call_count},
        {"nonexistent-tool", FailCategory::nonexistent_tool},
        {"wrong-tool", FailCategory::wrong_tool},
        {"wrong-param-value", FailCategory::wrong_param_value},
        {"hallucinated-param", FailCategory::hallucinated_param},
        {"missing-required-param", FailCategory::missing_required_param},
        {"wrong-param-type", FailCategory::wrong_param_type},
        {"transport-failure", FailCategory::transport_failure},
    };
    for (const auto& [tag, category] : table) {
        if (name == tag) return category;
    }
    return std::nullopt;
}

// ---- sample / verdict serialization ------------------------------------

json EvalSample::to_json() const {
    json doc;
    doc["id"] = sample_id;
    doc["system_prompt"] = system_prompt;
    json turns = json::array();
    for (const ChatTurn& t : history) {
        turns.push_back({{"role", t.role}, {"content", t.content}});
    }
    doc["history"] = turns;
    doc["tools"] = tools_text;
    doc["ground_truth"] = {{"name", ground_truth.name}, {"arguments", ground_truth.arguments}};
    json free_text = json::array();
    for (const std::string& name : free_text_params) free_text.push_back(name);
    doc["free_text_params"] = free_text;
    doc["routine_id"] = routine_id;
    json choices = json::object();
    for (const auto& [parent, no] : branch_choices) choices[std::to_string(parent)] = no;
    doc["branch_choices"] = choices;
    return doc;
}

EvalSample EvalSample::from_json(const json& doc) {
    if (!doc.is_object()) {
        throw Error(Errc::malformed_document, "eval sample must be a JSON object");
    }
    EvalSample sample;
    sample.sample_id = doc.value("id", std::string());
    sample.system_prompt = doc.value("system_prompt", std::string());
    if (doc.contains("history") && doc["history"].is_array()) {
        for (const json& t : doc["history"]) {
            sample.history.push_back({t.value("role", std::string()), t.value("content", std::string())});
        }
    }
    sample.tools_text = doc.value("tools", std::string());
    if (!doc.contains("ground_truth") || !doc["ground_truth"].is_object()) {
        throw Error(Errc::malformed_document, "eval sample has no ground_truth");
    }
    sample.ground_truth.name = doc["ground_truth"].value("name", std::string());
    sample.ground_truth.arguments =
        doc["ground_truth"].contains("arguments") ? doc["ground_truth"]["arguments"] : json::object();
    if (doc.contains("free_text_params") && doc["free_text_params"].is_array()) {
        for (const json& name : doc["free_text_params"]) {
            if (name.is_string()) sample.free_text_params.insert(name.get<std::string>());
        }
    }
    sample.routine_id = doc.value("routine_id", std::string());
    if (doc.contains("branch_choices") && doc["branch_choices"].is_object()) {
        for (const auto& [parent, no] : doc["branch_choices"].items()) {
            sample.branch_choices[std::stoi(parent)] = no.get<int>();
        }
    }
    return sample;
}

namespace {

json stage_to_json(const StageResult& stage) {
    json details = json::array();
    for (const FailDetail& d : stage.details) {
        details.push_back({{"category", fail_category_name(d.category)}, {"message", d.message}});
    }
    return json{{"pass", stage.passed}, {"details", details}};
}

StageResult stage_from_json(const json& doc) {
    StageResult stage;
    stage.passed = doc.value("pass", false);
    if (doc.contains("details") && doc["details"].is_array()) {
        for (const json& d : doc["details"]) {
            auto category = fail_category_from(d.value("category", std::string()));
            if (!category) {
                throw Error(Errc::malformed_document,
                            "unknown verdict category \"" + d.value("category", std::string()) + "\"");
            }
            stage.details.push_back({*category, d.value("message", std::string())});
        }
    }
    return stage;
}

} // namespace

json Verdict::to_json() const {
    json doc;
    doc["sample_id"] = sample_id;
    doc["structural"] = stage_to_json(structural);
    doc["tool"] = tool ? stage_to_json(*tool) : json(nullptr);
    doc["params"] = params ? stage_to_json(*params) : json(nullptr);
    doc["overall"] = overall;
    json notes = json::array();
    for (const std::string& n : notices) notes.push_back(n);
    doc["notices"] = notes;
    return doc;
}

Verdict Verdict::from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("structural")) {
        throw Error(Errc::malformed_document, "verdict must be an object with a structural stage");
    }
    Verdict v;
    v.sample_id = doc.value("sample_id", std::string());
    v.structural = stage_from_json(doc["structural"]);
    if (doc.contains("tool") && !doc["tool"].is_null()) v.tool = stage_from_json(doc["tool"]);
    if (doc.contains("params") && !doc["params"].is_null()) v.params = stage_from_json(doc["params"]);
    v.overall = doc.value("overall", false);
    if (doc.contains("notices") && doc["notices"].is_array()) {
        for (const json& n : doc["notices"]) {
            if (n.is_string()) v.notices.push_back(n.get<std::string>());
        }
    }
    return v;
}

// ---- judging ------------------------------------------------------------

namespace {

std::string trim_outer(const std::string& text) {
    std::size_t begin = 0, end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return text.substr(begin, end - begin);
}

// Semantic equality: numbers compared numerically, strings after trimming
// outer whitespace, containers structurally and key-order-insensitively.
bool canonical_equal(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        return a.get<double>() == b.get<double>();
    }
    if (a.is_string() && b.is_string()) {
        return trim_outer(a.get<std::string>()) == trim_outer(b.get<std::string>());
    }
    if (a.is_boolean() && b.is_boolean()) {
        return a.get<bool>() == b.get<bool>();
    }
    if (a.is_null() && b.is_null()) {
        return true;
    }
    if (a.is_array() && b.is_array()) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!canonical_equal(a[i], b[i])) return false;
        }
        return true;
    }
    if (a.is_object() && b.is_object()) {
        if (a.size() != b.size()) return false;
        for (const auto& [key, value] : a.items()) {
            if (!b.contains(key) || !canonical_equal(value, b.at(key))) return false;
        }
        return true;
    }
    return false;
}

} // namespace

Verdict judge(const std::string& model_output, const EvalSample& sample) {
    Verdict verdict;
    verdict.sample_id = sample.sample_id;

    // stage 1: structure
    ToolCallParse parsed = parse_tool_call(model_output);
    if (!parsed.ok()) {
        verdict.structural.passed = false;
        if (parsed.fail == ToolCallParse::Fail::no_span) {
            verdict.structural.details.push_back({FailCategory::natural_language_output, parsed.message});
        } else {
            verdict.structural.details.push_back({FailCategory::missing_brackets, parsed.message});
        }
        verdict.overall = false;
        return verdict;
    }
    verdict.structural.passed = true;

    // stage 2: tool selection
    std::vector<ToolSpec> specs;
    try {
        specs = parse_tool_signatures(sample.tools_text);
    } catch (const Error&) {
        specs.clear();
    }
    const ToolCall& call = *parsed.call;
    StageResult tool_stage;
    const ToolSpec* spec = nullptr;
    for (const ToolSpec& s : specs) {
        if (s.name == call.name) spec = &s;
    }
    if (parsed.span_count != 1) {
        tool_stage.details.push_back({FailCategory::wrong_call_count,
                                      std::to_string(parsed.span_count) + " tool_call spans in one turn"});
    } else if (!spec) {
        tool_stage.details.push_back(
            {FailCategory::nonexistent_tool, "tool \"" + call.name + "\" is not in the tool list"});
    } else if (call.name != sample.ground_truth.name) {
        tool_stage.details.push_back({FailCategory::wrong_tool, "called \"" + call.name + "\", expected \"" +
                                                                    sample.ground_truth.name + "\""});
    }
    tool_stage.passed = tool_stage.details.empty();
    verdict.tool = tool_stage;
    if (!tool_stage.passed) {
        verdict.overall = false;
        return verdict;
    }

    // stage 3: parameters
    StageResult params_stage;
    const json& args = call.arguments;
    const json& truth = sample.ground_truth.arguments;

    for (const auto& [name, value] : args.items()) {
        if (!spec->find_param(name)) {
            params_stage.details.push_back(
                {FailCategory::hallucinated_param, "parameter \"" + name + "\" is not in the tool definition"});
        }
    }
    for (const ParamSpec& p : spec->params) {
        if (p.required && !args.contains(p.name)) {
            params_stage.details.push_back(
                {FailCategory::missing_required_param, "required parameter \"" + p.name + "\" is absent"});
        }
    }
    for (const auto& [name, value] : args.items()) {
        const ParamSpec* p = spec->find_param(name);
        if (!p) continue; // already flagged as hallucinated
        if (!value_conforms(value, p->type)) {
            params_stage.details.push_back({FailCategory::wrong_param_type,
                                            "parameter \"" + name + "\" is not of type " +
                                                param_type_name(p->type)});
            continue;
        }
        if (sample.free_text_params.count(name)) {
            if (value.is_string() && trim_outer(value.get<std::string>()).empty()) {
                verdict.notices.push_back("free-text parameter \"" + name + "\" is empty");
            }
            continue; // presence and type only
        }
        if (truth.contains(name)) {
            if (!canonical_equal(value, truth.at(name))) {
                params_stage.details.push_back(
                    {FailCategory::wrong_param_value, "parameter \"" + name + "\" differs from ground truth"});
            }
        } else {
            params_stage.details.push_back(
                {FailCategory::wrong_param_value, "parameter \"" + name + "\" is not expected by ground truth"});
        }
    }
    for (const auto& [name, value] : truth.items()) {
        if (args.contains(name)) continue;
        const ParamSpec* p = spec->find_param(name);
        if (p && p->required) continue; // already flagged as missing-required-param
        params_stage.details.push_back(
            {FailCategory::wrong_param_value, "expected parameter \"" + name + "\" is absent"});
    }

    params_stage.passed = params_stage.details.empty();
    verdict.params = params_stage;
    verdict.overall = params_stage.passed;
    return verdict;
}

// ---- aggregation ---------------------------------------------------------

MetricsReport aggregate(const std::vector<Verdict>& verdicts) {
    MetricsReport report;
    report.n_total = verdicts.size();
    for (const Verdict& v : verdicts) {
        if (v.structural.passed) ++report.structural_pass;
        if (v.tool && v.tool->passed) ++report.tool_pass;
        if (v.params && v.params->passed) ++report.param_pass;
        if (v.overall) ++report.overall_pass;
        for (const FailDetail& d : v.structural.details) {
            ++report.error_histogram[fail_category_name(d.category)];
        }
        if (v.tool) {
            for (const FailDetail& d : v.tool->details) {
                ++report.error_histogram[fail_category_name(d.category)];
            }
        }
        if (v.params) {
            for (const FailDetail& d : v.params->details) {
                ++report.error_histogram[fail_category_name(d.category)];
            }
        }
    }
    if (report.n_total > 0) {
        report.structural_acc = 100.0 * static_cast<double>(report.structural_pass) / report.n_total;
        report.overall_acc = 100.0 * static_cast<double>(report.overall_pass) / report.n_total;
    }
    if (report.structural_pass > 0) {
        report.tool_acc = 100.0 * static_cast<double>(report.tool_pass) / report.structural_pass;
    }
    if (report.tool_pass > 0) {
        report.param_acc = 100.0 * static_cast<double>(report.param_pass) / report.tool_pass;
    }
    return report;
}

namespace {

json acc_to_json(const std::optional<double>& acc) {
    return acc ? json(*acc) : json(nullptr);
}

std::string acc_to_text(const std::optional<double>& acc) {
    if (!acc) return "n/a";
    char buffer[32];
    std::snprintf(buffer, sizeof(buffer), "%.1f", *acc);
    return buffer;
}

} // namespace

json MetricsReport::to_json() const {
    json doc;
    doc["n_total"] = n_total;
    doc["counts"] = {{"structural_pass", structural_pass},
                     {"tool_pass", tool_pass},
                     {"param_pass", param_pass},
                     {"overall_pass", overall_pass}};
    doc["accuracy"] = {{"structural", acc_to_json(structural_acc)},
                       {"tool", acc_to_json(tool_acc)},
                       {"param", acc_to_json(param_acc)},
                       {"overall", acc_to_json(overall_acc)}};
    json histogram = json::object();
    for (const auto& [category, count] : error_histogram) histogram[category] = count;
    doc["error_histogram"] = histogram;
    return doc;
}

MetricsReport MetricsReport::from_json(const json& doc) {
    if (!doc.is_object()) {
        throw Error(Errc::malformed_document, "metrics report must be a JSON object");
    }
    MetricsReport report;
    report.n_total = doc.value("n_total", std::size_t{0});
    if (doc.contains("counts") && doc["counts"].is_object()) {
        const json& counts = doc["counts"];
        report.structural_pass = counts.value("structural_pass", std::size_t{0});
        report.tool_pass = counts.value("tool_pass", std::size_t{0});
        report.param_pass = counts.value("param_pass", std::size_t{0});
        report.overall_pass = counts.value("overall_pass", std::size_t{0});
    }
    if (doc.contains("accuracy") && doc["accuracy"].is_object()) {
        const json& acc = doc["accuracy"];
        auto read = [&acc](const char* key) -> std::optional<double> {
            if (acc.contains(key) && acc[key].is_number()) return acc[key].get<double>();
            return std::nullopt;
        };
        report.structural_acc = read("structural");
        report.tool_acc = read("tool");
        report.param_acc = read("param");
        report.overall_acc = read("overall");
    }
    if (doc.contains("error_histogram") && doc["error_histogram"].is_object()) {
        for (const auto& [category, count] : doc["error_histogram"].items()) {
            report.error_histogram[category] = count.get<std::size_t>();
        }
    }
    return report;
}

std::string MetricsReport::to_table() const {
    std::ostringstream out;
    out << "samples: " << n_total << "\n";
    out << "structural accuracy: " << acc_to_text(structural_acc) << "  (" << structural_pass << "/" << n_total
        << ")\n";
    out << "tool accuracy:       " << acc_to_text(tool_acc) << "  (" << tool_pass << "/" << structural_pass
        << ")\n";
    out << "parameter accuracy:  " << acc_to_text(param_acc) << "  (" << param_pass << "/" << tool_pass << ")\n";
    out << "overall accuracy:    " << acc_to_text(overall_acc) << "  (" << overall_pass << "/" << n_total
        << ")\n";
    if (!error_histogram.empty()) {
        out << "errors:\n";
        for (const auto& [category, count] : error_histogram) {
            out << "  " << category << ": " << count << "\n";
        }
    }
    return out.str();
}

// ---- variants ------------------------------------------------------------

ScenarioVariant ScenarioVariant::parse(const std::string& flag) {
    ScenarioVariant v;
    if (flag == "no-routine") {
        v.kind = Kind::no_routine;
    } else if (flag == "linear") {
        v.kind = Kind::routine_linear;
    } else if (flag == "branching") {
        v.kind = Kind::routine_branching;
    } else if (flag == "with-io") {
        v.kind = Kind::routine_with_io;
    } else if (flag == "without-tools") {
        v.kind = Kind::routine_without_tools;
    } else if (flag.rfind("multi:", 0) == 0) {
        v.kind = Kind::multi_routine;
        try {
            v.k = std::stoi(flag.substr(6));
        } catch (const std::exception&) {
            throw Error(Errc::bad_shape, "variant \"" + flag + "\": multi:K needs an integer K");
        }
        if (v.k < 1) throw Error(Errc::bad_shape, "variant \"" + flag + "\": K must be >= 1");
    } else {
        throw Error(Errc::bad_shape, "unknown variant \"" + flag + "\"");
    }
    return v;
}

std::string ScenarioVariant::str() const {
    switch (kind) {
    case Kind::no_routine: return "no-routine";
    case Kind::routine_linear: return "linear";
    case Kind::routine_branching: return "branching";
    case Kind::routine_with_io: return "with-io";
    case Kind::routine_without_tools: return "without-tools";
    case Kind::multi_routine: return "multi:" + std::to_string(k);
    }
    return "no-routine";
}

namespace {

const Routine& applicable_routine(const EvalSample& sample, const RoutineLibrary& library) {
    const Routine* r = library.find(sample.routine_id);
    if (!r) {
        throw Error(Errc::unknown_tool,
                    "sample \"" + sample.sample_id + "\": routine \"" + sample.routine_id +
                        "\" is not in the library");
    }
    return *r;
}

Routine linear_for_sample(const EvalSample& sample, const Routine& branching) {
    for (FlatPath& path : flatten_paths(branching)) {
        if (path.choices == sample.branch_choices) {
            return std::move(path.routine);
        }
    }
    throw Error(Errc::invalid_branch_choice,
                "sample \"" + sample.sample_id + "\": no flattened path matches its branch choices");
}

std::string labeled_block(const std::vector<const Routine*>& routines) {
    std::string body;
    for (std::size_t i = 0; i < routines.size(); ++i) {
        if (i) body += "\n\n";
        const Routine& r = *routines[i];
        body += "Routine: " + (r.title.empty() ? r.routine_id : r.title) + "\n";
        body += "Function: " + r.description + "\n\n";
        body += render_natural_language(r);
    }
    return body;
}

} // namespace

EvalSample make_variant(const EvalSample& base, const RoutineLibrary& library, const ScenarioVariant& variant,
                        std::uint64_t seed) {
    EvalSample out = base;
    switch (variant.kind) {
    case ScenarioVariant::Kind::no_routine:
        out.system_prompt = strip_routine_section(base.system_prompt);
        return out;
    case ScenarioVariant::Kind::routine_linear: {
        Routine linear = linear_for_sample(base, applicable_routine(base, library));
        out.system_prompt = replace_routines_block(base.system_prompt, render_natural_language(linear));
        return out;
    }
    case ScenarioVariant::Kind::routine_branching: {
        const Routine& r = applicable_routine(base, library);
        out.system_prompt = replace_routines_block(base.system_prompt, render_natural_language(r));
        return out;
    }
    case ScenarioVariant::Kind::routine_with_io: {
        const Routine& r = applicable_routine(base, library);
        RenderOptions opts;
        opts.with_io = true;
        out.system_prompt = replace_routines_block(base.system_prompt, render_natural_language(r, opts));
        return out;
    }
    case ScenarioVariant::Kind::routine_without_tools: {
        const Routine& r = applicable_routine(base, library);
        RenderOptions opts;
        opts.without_tools = true;
        out.system_prompt = replace_routines_block(base.system_prompt, render_natural_language(r, opts));
        return out;
    }
    case ScenarioVariant::Kind::multi_routine: {
        const Routine& applicable = applicable_routine(base, library);
        std::vector<const Routine*> distractors;
        for (const Routine& r : library.routines()) {
            if (r.routine_id != applicable.routine_id) distractors.push_back(&r);
        }
        if (static_cast<int>(distractors.size()) < variant.k - 1) {
            throw Error(Errc::insufficient_distractors,
                        "library holds " + std::to_string(library.size()) + " routines; multi:" +
                            std::to_string(variant.k) + " needs " + std::to_string(variant.k - 1) +
                            " distractors");
        }
        SplitMix64 rng(seed);
        seeded_shuffle(distractors, rng.next());
        distractors.resize(static_cast<std::size_t>(variant.k - 1));
        std::vector<const Routine*> block{&applicable};
        block.insert(block.end(), distractors.begin(), distractors.end());
        seeded_shuffle(block, rng.next());
        out.system_prompt = replace_routines_block(base.system_prompt, labeled_block(block));
        return out;
    }
    }
    return out;
}

// ---- evaluation runs ------------------------------------------------------

EvalRunResult evaluate_run(const std::vector<EvalSample>& samples, ModelClient& client, int parallelism) {
    EvalRunResult result;
    result.verdicts.resize(samples.size());

    auto evaluate_one = [&](std::size_t i) {
        const EvalSample& sample = samples[i];
        std::string output;
        try {
            output = client.complete(sample.system_prompt, sample.history);
        } catch (const std::exception& e) {
            Verdict v;
            v.sample_id = sample.sample_id;
            v.structural.passed = false;
            v.structural.details.push_back({FailCategory::transport_failure, e.what()});
            v.overall = false;
            result.verdicts[i] = std::move(v);
            return;
        }
        result.verdicts[i] = judge(output, sample);
    };

    int jobs = std::max(1, parallelism);
    if (jobs == 1 || samples.size() < 2) {
        for (std::size_t i = 0; i < samples.size(); ++i) evaluate_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        std::size_t worker_count = std::min<std::size_t>(static_cast<std::size_t>(jobs), samples.size());
        workers.reserve(worker_count);
        for (std::size_t w = 0; w < worker_count; ++w) {
            workers.emplace_back([&]() {
                while (true) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= samples.size()) break;
                    evaluate_one(i);
                }
            });
        }
        for (std::thread& t : workers) t.join();
    }

    result.report = aggregate(result.verdicts);
    return result;
}

} // namespace routine
