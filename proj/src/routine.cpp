#include "routine/routine.hpp"

#include "routine/error.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace routine {

const char* errc_name(Errc code) {
    switch (code) {
    case Errc::malformed_id: return "malformed-id";
    case Errc::malformed_document: return "malformed-document";
    case Errc::unknown_kind: return "unknown-kind";
    case Errc::invariant_violation: return "invariant-violation";
    case Errc::no_tool_call_span: return "no-tool-call-span";
    case Errc::malformed_json: return "malformed-json";
    case Errc::bad_shape: return "bad-shape";
    case Errc::duplicate_name: return "duplicate-name";
    case Errc::unknown_tool: return "unknown-tool";
    case Errc::handler_failure: return "handler-failure";
    case Errc::missing_branch_choice: return "missing-branch-choice";
    case Errc::invalid_branch_choice: return "invalid-branch-choice";
    case Errc::already_terminated: return "already-terminated";
    case Errc::unfinished_trace: return "unfinished-trace";
    case Errc::unknown_placeholder: return "unknown-placeholder";
    case Errc::insufficient_distractors: return "insufficient-distractors";
    case Errc::exhausted_repairs: return "exhausted-repairs";
    case Errc::transport_failure: return "transport-failure";
    case Errc::timeout: return "timeout";
    case Errc::io_error: return "io-error";
    }
    return "error";
}

namespace {

std::string lower_trim(const std::string& text) {
    std::size_t begin = 0, end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    std::string out = text.substr(begin, end - begin);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool forbidden_tool_literal(const std::string& tool) {
    std::string t = lower_trim(tool);
    return t.empty() || t == "none" || t == "no tool needed" || t == "no tool used";
}

std::string get_string_field(const json& obj, const char* key, bool required, const std::string& id_hint) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) {
            throw Error(Errc::malformed_document, std::string("step ") + id_hint + " missing \"" + key + "\"");
        }
        return {};
    }
    if (!it->is_string()) {
        throw Error(Errc::malformed_document, std::string("step ") + id_hint + " field \"" + key + "\" is not a string");
    }
    return it->get<std::string>();
}

} // namespace

const Step* Routine::find(const StepId& id) const {
    for (const Step& s : steps) {
        if (s.id == id) return &s;
    }
    return nullptr;
}

std::optional<std::size_t> Routine::index_of(const StepId& id) const {
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (steps[i].id == id) return i;
    }
    return std::nullopt;
}

std::map<int, std::vector<std::size_t>> Routine::branch_groups(int parent) const {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const StepId& id = steps[i].id;
        if (id.is_branch() && id.main == parent) {
            groups[id.branch_no].push_back(i);
        }
    }
    for (auto& [no, indices] : groups) {
        std::sort(indices.begin(), indices.end(),
                  [this](std::size_t a, std::size_t b) { return steps[a].id.index < steps[b].id.index; });
    }
    return groups;
}

std::vector<std::pair<int, std::vector<int>>> Routine::branch_points() const {
    std::vector<std::pair<int, std::vector<int>>> points;
    for (const Step& s : steps) {
        if (s.kind != StepKind::branch) continue;
        std::vector<int> numbers;
        for (const auto& [no, indices] : branch_groups(s.id.main)) {
            if (!indices.empty()) numbers.push_back(no);
        }
        points.emplace_back(s.id.main, std::move(numbers));
    }
    return points;
}

json ValidationReport::to_json() const {
    json arr = json::array();
    for (const Finding& f : findings) {
        arr.push_back({{"code", f.code}, {"step", f.step_id}, {"message", f.message}});
    }
    return arr;
}

std::string ValidationReport::to_string() const {
    std::ostringstream out;
    for (const Finding& f : findings) {
        out << f.code;
        if (!f.step_id.empty()) out << " at step " << f.step_id;
        out << ": " << f.message << "\n";
    }
    return out.str();
}

Routine routine_from_json(const json& doc) {
    Routine r;
    const json* steps_doc = nullptr;
    if (doc.is_array()) {
        steps_doc = &doc;
    } else if (doc.is_object()) {
        if (!doc.contains("steps") || !doc["steps"].is_array()) {
            throw Error(Errc::malformed_document, "routine object has no \"steps\" array");
        }
        if (doc.contains("routine_id") && doc["routine_id"].is_string()) r.routine_id = doc["routine_id"];
        if (doc.contains("title") && doc["title"].is_string()) r.title = doc["title"];
        if (doc.contains("description") && doc["description"].is_string()) r.description = doc["description"];
        steps_doc = &doc["steps"];
    } else {
        throw Error(Errc::malformed_document, "routine document must be a JSON list or object");
    }

    for (const json& entry : *steps_doc) {
        if (!entry.is_object()) {
            throw Error(Errc::malformed_document, "step entry is not an object");
        }
        Step s;
        std::string id_text;
        if (entry.contains("step") && entry["step"].is_number_integer()) {
            id_text = std::to_string(entry["step"].get<long long>());
        } else {
            id_text = get_string_field(entry, "step", true, "?");
        }
        s.id = parse_step_id(id_text);

        std::string kind_tag = get_string_field(entry, "type", false, id_text);
        if (kind_tag.empty()) {
            throw Error(Errc::unknown_kind, "step " + id_text + " has no \"type\"");
        }
        auto kind = step_kind_from(kind_tag);
        if (!kind) {
            throw Error(Errc::unknown_kind, "step " + id_text + " has unknown type \"" + kind_tag + "\"");
        }
        s.kind = *kind;

        s.name = get_string_field(entry, "name", false, id_text);
        s.description = get_string_field(entry, "description", false, id_text);
        if (entry.contains("tool")) {
            if (!entry["tool"].is_string()) {
                throw Error(Errc::malformed_document, "step " + id_text + " field \"tool\" is not a string");
            }
            s.tool = entry["tool"].get<std::string>();
        }
        if (entry.contains("input") && entry["input"].is_string()) s.input_desc = entry["input"].get<std::string>();
        if (entry.contains("output") && entry["output"].is_string()) s.output_desc = entry["output"].get<std::string>();

        if (s.kind == StepKind::branch) {
            if (s.id.is_branch()) {
                throw Error(Errc::invariant_violation, "branch step " + id_text + " must carry a main id");
            }
            if (s.tool) {
                throw Error(Errc::invariant_violation, "branch step " + id_text + " must not name a tool");
            }
        } else {
            if (s.kind == StepKind::branchnode && !s.id.is_branch()) {
                throw Error(Errc::invariant_violation, "branchnode " + id_text + " must carry a branch id");
            }
            if (s.kind == StepKind::node && s.id.is_branch()) {
                throw Error(Errc::invariant_violation, "node step " + id_text + " must carry a main id");
            }
            if (!s.tool || s.tool->empty()) {
                throw Error(Errc::invariant_violation, "step " + id_text + " of type " + kind_tag + " names no tool");
            }
        }
        if (s.id.is_branch() && s.id.index == 1) {
            s.condition = extract_condition(s.description);
        }
        r.steps.push_back(std::move(s));
    }

    // unique ids
    std::set<std::string> seen;
    for (const Step& s : r.steps) {
        if (!seen.insert(s.id.str()).second) {
            throw Error(Errc::invariant_violation, "duplicate-id: step \"" + s.id.str() + "\" appears twice");
        }
    }

    // ordering: main ids strictly increasing; branch runs contiguous after their parent
    int last_main = 0;
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
        const Step& s = r.steps[i];
        if (!s.id.is_branch()) {
            if (s.id.main <= last_main) {
                throw Error(Errc::invariant_violation,
                            "main ids not strictly increasing at step \"" + s.id.str() + "\"");
            }
            last_main = s.id.main;
        } else {
            std::size_t j = i;
            while (j > 0 && r.steps[j - 1].id.is_branch() && r.steps[j - 1].id.main == s.id.main) --j;
            if (j == 0 || r.steps[j - 1].kind != StepKind::branch || r.steps[j - 1].id.main != s.id.main) {
                throw Error(Errc::invariant_violation, "step \"" + s.id.str() +
                                                           "\" does not follow its parent branch step");
            }
        }
    }

    // group contiguity: indices 1..k, adjacent in the list
    std::set<int> parents;
    for (const Step& s : r.steps) {
        if (s.id.is_branch()) parents.insert(s.id.main);
    }
    for (int parent : parents) {
        for (const auto& [no, indices] : r.branch_groups(parent)) {
            for (std::size_t k = 0; k < indices.size(); ++k) {
                const StepId& id = r.steps[indices[k]].id;
                if (id.index != static_cast<int>(k) + 1) {
                    throw Error(Errc::invariant_violation, "branch group " + std::to_string(parent) + "-" +
                                                               std::to_string(no) +
                                                               " indices are not consecutive from 1");
                }
                if (k > 0 && indices[k] != indices[k - 1] + 1) {
                    throw Error(Errc::invariant_violation, "branch group " + std::to_string(parent) + "-" +
                                                               std::to_string(no) + " is not contiguous");
                }
            }
        }
    }

    bool has_finish = std::any_of(r.steps.begin(), r.steps.end(),
                                  [](const Step& s) { return s.kind == StepKind::finish; });
    if (!has_finish) {
        throw Error(Errc::invariant_violation, "no finish step");
    }
    return r;
}

Routine parse_routine(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::malformed_document, e.what());
    }
    return routine_from_json(doc);
}

json routine_to_json(const Routine& r) {
    json steps = json::array();
    for (const Step& s : r.steps) {
        json entry;
        entry["step"] = s.id.str();
        entry["name"] = s.name;
        if (!(s.kind == StepKind::branch && s.description.empty())) {
            entry["description"] = s.description;
        }
        if (s.input_desc) entry["input"] = *s.input_desc;
        if (s.output_desc) entry["output"] = *s.output_desc;
        if (s.tool) entry["tool"] = *s.tool;
        entry["type"] = step_kind_name(s.kind);
        steps.push_back(std::move(entry));
    }
    if (r.routine_id.empty() && r.title.empty() && r.description.empty()) {
        return steps;
    }
    json doc;
    doc["routine_id"] = r.routine_id;
    doc["title"] = r.title;
    doc["description"] = r.description;
    doc["steps"] = std::move(steps);
    return doc;
}

std::string render_json(const Routine& r) {
    return routine_to_json(r).dump(2);
}

namespace {

std::string step_body(const Step& s, const RenderOptions& opts) {
    std::string text = s.description;
    if (opts.with_io) {
        if (s.input_desc) text += ", input: " + *s.input_desc;
        if (s.output_desc) text += ", output: " + *s.output_desc;
    }
    bool finish = s.kind == StepKind::finish;
    if (opts.without_tools || !s.tool) {
        text += finish ? ", and end the workflow;" : ";";
    } else if (finish) {
        text += ", using the " + *s.tool + " tool, and end the workflow;";
    } else {
        text += ", use the " + *s.tool + " tool;";
    }
    return text;
}

} // namespace

std::string render_natural_language(const Routine& r, const RenderOptions& opts) {
    std::vector<std::string> blocks;
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
        const Step& s = r.steps[i];
        if (s.id.is_branch()) continue; // emitted under the parent branch step
        if (s.kind == StepKind::branch) {
            std::string block =
                "Step " + s.id.str() + ". " + s.name + ": This step performs a branch condition check:";
            for (std::size_t j = i + 1; j < r.steps.size(); ++j) {
                const Step& bn = r.steps[j];
                if (!bn.id.is_branch() || bn.id.main != s.id.main) break;
                block += "\n  Branch " + std::to_string(bn.id.main) + "-" + std::to_string(bn.id.branch_no) +
                         " Step " + std::to_string(bn.id.index) + ". " + bn.name + ": " + step_body(bn, opts);
            }
            blocks.push_back(std::move(block));
        } else {
            blocks.push_back("Step " + s.id.str() + ". " + s.name + ": " + step_body(s, opts));
        }
    }
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) out += "\n\n";
        out += blocks[i];
    }
    return out;
}

// ---- cursor -----------------------------------------------------------

namespace {

struct NextPos {
    enum class Tag { step, needs_choice, terminated } tag;
    StepId id;
    int parent = 0;
};

NextPos next_position(const Routine& r, const StepId& pos) {
    auto idx = r.index_of(pos);
    if (!idx) {
        throw Error(Errc::invariant_violation, "cursor position \"" + pos.str() + "\" not in routine");
    }
    const Step& current = r.steps[*idx];
    if (current.kind == StepKind::finish) {
        return {NextPos::Tag::terminated, {}, 0};
    }
    std::size_t j;
    if (pos.is_branch()) {
        StepId next_in_group{pos.main, pos.branch_no, pos.index + 1};
        if (auto k = r.index_of(next_in_group)) {
            return {NextPos::Tag::step, r.steps[*k].id, 0};
        }
        j = *idx + 1;
        while (j < r.steps.size() && r.steps[j].id.is_branch() && r.steps[j].id.main == pos.main) ++j;
    } else {
        j = *idx + 1;
    }
    if (j >= r.steps.size()) {
        return {NextPos::Tag::terminated, {}, 0};
    }
    const Step& next = r.steps[j];
    if (next.kind == StepKind::branch) {
        return {NextPos::Tag::needs_choice, {}, next.id.main};
    }
    if (next.id.is_branch()) {
        throw Error(Errc::invariant_violation, "branchnode \"" + next.id.str() + "\" follows step \"" +
                                                   pos.str() + "\" without a branch step");
    }
    return {NextPos::Tag::step, next.id, 0};
}

StepId enter_branch(const Routine& r, int parent, int choice) {
    auto groups = r.branch_groups(parent);
    auto it = groups.find(choice);
    if (it == groups.end() || it->second.empty()) {
        throw Error(Errc::invalid_branch_choice, "branch step " + std::to_string(parent) + " has no group " +
                                                     std::to_string(choice));
    }
    return r.steps[it->second.front()].id;
}

} // namespace

Cursor initial_cursor(const Routine& r, std::optional<int> branch_choice) {
    if (r.steps.empty()) {
        throw Error(Errc::invariant_violation, "routine has no steps");
    }
    Cursor c;
    c.routine_id = r.routine_id;
    const Step& first = r.steps.front();
    if (first.kind == StepKind::branch) {
        if (!branch_choice) {
            throw Error(Errc::missing_branch_choice,
                        "routine opens with branch step " + first.id.str() + "; a choice is required");
        }
        c.position = enter_branch(r, first.id.main, *branch_choice);
        c.chosen_branches[first.id.main] = *branch_choice;
        return c;
    }
    if (first.id.is_branch()) {
        throw Error(Errc::invariant_violation, "routine opens with a branchnode");
    }
    if (branch_choice) {
        throw Error(Errc::invalid_branch_choice, "no branch decision pending at the first step");
    }
    c.position = first.id;
    return c;
}

Cursor advance(const Routine& r, const Cursor& c, std::optional<int> branch_choice) {
    if (c.terminated()) {
        throw Error(Errc::already_terminated, "cursor for \"" + c.routine_id + "\" is terminated");
    }
    NextPos np = next_position(r, *c.position);
    Cursor out = c;
    switch (np.tag) {
    case NextPos::Tag::terminated:
        if (branch_choice) {
            throw Error(Errc::invalid_branch_choice, "no branch decision pending");
        }
        out.position.reset();
        return out;
    case NextPos::Tag::step:
        if (branch_choice) {
            throw Error(Errc::invalid_branch_choice, "no branch decision pending");
        }
        out.position = np.id;
        return out;
    case NextPos::Tag::needs_choice:
        if (!branch_choice) {
            throw Error(Errc::missing_branch_choice,
                        "branch step " + std::to_string(np.parent) + " requires a choice");
        }
        out.position = enter_branch(r, np.parent, *branch_choice);
        out.chosen_branches[np.parent] = *branch_choice;
        return out;
    }
    throw Error(Errc::invariant_violation, "unreachable");
}

std::optional<int> pending_branch(const Routine& r, const Cursor& c) {
    if (c.terminated()) return std::nullopt;
    NextPos np = next_position(r, *c.position);
    if (np.tag == NextPos::Tag::needs_choice) return np.parent;
    return std::nullopt;
}

// ---- path enumeration, validation, flattening -------------------------

namespace {

struct PathInfo {
    std::vector<std::size_t> indices; // executed steps, list indices
    std::map<int, int> consulted;     // branch choices actually taken
};

std::vector<PathInfo> enumerate_paths(const Routine& r) {
    std::vector<std::map<int, int>> combos{{}};
    for (const auto& [parent, numbers] : r.branch_points()) {
        if (numbers.empty()) continue; // empty branch group: validation finding, not traversal
        std::vector<std::map<int, int>> expanded;
        expanded.reserve(combos.size() * numbers.size());
        for (const auto& combo : combos) {
            for (int no : numbers) {
                auto next = combo;
                next[parent] = no;
                expanded.push_back(std::move(next));
            }
        }
        combos = std::move(expanded);
    }

    std::vector<PathInfo> paths;
    paths.reserve(combos.size());
    for (const auto& combo : combos) {
        PathInfo path;
        std::optional<int> first_choice;
        if (!r.steps.empty() && r.steps.front().kind == StepKind::branch) {
            auto it = combo.find(r.steps.front().id.main);
            if (it != combo.end()) first_choice = it->second;
        }
        Cursor c = initial_cursor(r, first_choice);
        if (first_choice) path.consulted[r.steps.front().id.main] = *first_choice;
        path.indices.push_back(*r.index_of(*c.position));
        while (true) {
            auto parent = pending_branch(r, c);
            std::optional<int> choice;
            if (parent) {
                auto it = combo.find(*parent);
                if (it == combo.end()) {
                    throw Error(Errc::invariant_violation,
                                "no choice enumerated for branch step " + std::to_string(*parent));
                }
                choice = it->second;
                path.consulted[*parent] = it->second;
            }
            c = advance(r, c, choice);
            if (c.terminated()) break;
            path.indices.push_back(*r.index_of(*c.position));
        }
        paths.push_back(std::move(path));
    }
    return paths;
}

} // namespace

ValidationReport validate(const Routine& r, const std::vector<std::string>& tool_names) {
    ValidationReport report;
    std::set<std::string> names(tool_names.begin(), tool_names.end());

    std::set<std::string> seen;
    for (const Step& s : r.steps) {
        if (!seen.insert(s.id.str()).second) {
            report.findings.push_back({"duplicate-id", s.id.str(), "step id appears more than once"});
        }
    }

    for (const Step& s : r.steps) {
        if (s.kind == StepKind::branch) continue;
        if (!s.tool || forbidden_tool_literal(*s.tool)) {
            report.findings.push_back({"forbidden-no-tool", s.id.str(),
                                       s.tool ? "step names the placeholder tool \"" + *s.tool + "\""
                                              : "step names no tool"});
        } else if (!names.count(*s.tool)) {
            report.findings.push_back(
                {"unknown-tool", s.id.str(), "tool \"" + *s.tool + "\" is not in the catalog"});
        }
    }

    for (const Step& s : r.steps) {
        if (s.kind != StepKind::branch) continue;
        if (r.branch_groups(s.id.main).empty()) {
            report.findings.push_back(
                {"empty-branch-group", s.id.str(), "branch step has no branchnodes"});
        }
    }

    if (r.steps.empty()) {
        report.findings.push_back({"unreachable-finish", "", "routine has no steps"});
        return report;
    }
    try {
        for (const PathInfo& path : enumerate_paths(r)) {
            const Step& last = r.steps[path.indices.back()];
            if (last.kind != StepKind::finish) {
                std::string choices;
                for (const auto& [parent, no] : path.consulted) {
                    if (!choices.empty()) choices += ", ";
                    choices += std::to_string(parent) + "-" + std::to_string(no);
                }
                report.findings.push_back({"unreachable-finish", last.id.str(),
                                           choices.empty()
                                               ? "execution path ends without a finish step"
                                               : "path with branches " + choices + " ends without a finish step"});
            }
        }
    } catch (const Error& e) {
        report.findings.push_back({"unreachable-finish", "", std::string("path traversal failed: ") + e.what()});
    }
    return report;
}

std::vector<FlatPath> flatten_paths(const Routine& r) {
    std::vector<FlatPath> out;
    for (const PathInfo& path : enumerate_paths(r)) {
        FlatPath flat;
        flat.choices = path.consulted;
        Routine linear;
        linear.title = r.title;
        linear.description = r.description;
        linear.routine_id = r.routine_id;
        if (!path.consulted.empty()) {
            std::string suffix;
            for (const auto& [parent, no] : path.consulted) {
                if (!suffix.empty()) suffix += ",";
                suffix += std::to_string(parent) + "-" + std::to_string(no);
            }
            linear.routine_id += "@" + suffix;
        }
        int n = 1;
        for (std::size_t idx : path.indices) {
            const Step& s = r.steps[idx];
            Step t;
            t.id = main_step(n++);
            t.name = s.name;
            t.description = s.description;
            t.tool = s.tool;
            t.input_desc = s.input_desc;
            t.output_desc = s.output_desc;
            t.condition = s.condition;
            t.kind = s.kind == StepKind::finish ? StepKind::finish : StepKind::node;
            linear.steps.push_back(std::move(t));
        }
        flat.routine = std::move(linear);
        out.push_back(std::move(flat));
    }
    return out;
}

std::vector<Routine> flatten_branches(const Routine& r) {
    std::vector<Routine> out;
    for (FlatPath& flat : flatten_paths(r)) {
        out.push_back(std::move(flat.routine));
    }
    return out;
}

} // namespace routine
