#pragma once

#include "routine/step.hpp"

#include <json.hpp>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace routine {

using json = nlohmann::ordered_json;

/// A structured multi-step plan: ordered steps, optional branch groups,
/// finish markers. Immutable after construction; safe to share.
struct Routine {
    std::string routine_id;
    std::string title;
    std::string description; // drives procedure-memory retrieval
    std::vector<Step> steps;

    const Step* find(const StepId& id) const;
    std::optional<std::size_t> index_of(const StepId& id) const;

    /// Branch groups under a branch step: branch_no -> step indices, in id order.
    std::map<int, std::vector<std::size_t>> branch_groups(int parent) const;

    /// Branch steps in list order with their group numbers.
    std::vector<std::pair<int, std::vector<int>>> branch_points() const;

    friend bool operator==(const Routine&, const Routine&) = default;
};

struct Finding {
    std::string code;    // unknown-tool | forbidden-no-tool | unreachable-finish | empty-branch-group | duplicate-id
    std::string step_id; // offending step ("" when routine-wide)
    std::string message;

    friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool ok() const { return findings.empty(); }
    json to_json() const;
    std::string to_string() const;
};

struct RenderOptions {
    bool with_io = false;       // include input/output descriptions
    bool without_tools = false; // drop the "use the <tool> tool" clauses
};

/// Accepts either the bare JSON step list or {routine_id,title,description,steps}.
/// Throws Error(malformed_document | unknown_kind | invariant_violation).
Routine parse_routine(const std::string& json_text);
Routine routine_from_json(const json& doc);

json routine_to_json(const Routine& r);
std::string render_json(const Routine& r);

std::string render_natural_language(const Routine& r, const RenderOptions& opts = {});

ValidationReport validate(const Routine& r, const std::vector<std::string>& tool_names);

/// Execution position. `position` is always a node/branchnode/finish step;
/// branch steps are decision points resolved on entry. nullopt = terminated.
struct Cursor {
    std::string routine_id;
    std::optional<StepId> position;
    std::map<int, int> chosen_branches; // branch parent -> branch_no

    bool terminated() const { return !position.has_value(); }
};

/// Cursor at the first actionable step. branch_choice is required exactly
/// when the routine opens with a branch step.
Cursor initial_cursor(const Routine& r, std::optional<int> branch_choice = {});

/// Moves to the next node/branchnode/finish along the chosen path. Throws
/// missing_branch_choice/invalid_branch_choice/already_terminated.
Cursor advance(const Routine& r, const Cursor& c, std::optional<int> branch_choice = {});

/// Parent id of the branch step that must be resolved by the next advance,
/// if the next step is a branch decision.
std::optional<int> pending_branch(const Routine& r, const Cursor& c);

struct FlatPath {
    Routine routine;
    std::map<int, int> choices; // branch parent -> branch_no taken
};

/// One linear routine per combination of branch choices; branchnodes are
/// renumbered into the main sequence. Branch-free input yields a singleton.
std::vector<FlatPath> flatten_paths(const Routine& r);
std::vector<Routine> flatten_branches(const Routine& r);

} // namespace routine
