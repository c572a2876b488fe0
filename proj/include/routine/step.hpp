#pragma once

#include <optional>
#include <string>

namespace routine {

enum class StepKind { node, branch, branchnode, finish };

const char* step_kind_name(StepKind kind);
std::optional<StepKind> step_kind_from(const std::string& tag);

/// Step address within a routine: "3" names a main step, "3-2_1" names the
/// first step of the second branch under main step 3.
struct StepId {
    int main = 0;      // >= 1
    int branch_no = 0; // 0 on main ids
    int index = 0;     // 0 on main ids

    bool is_branch() const { return branch_no > 0; }
    std::string str() const;

    friend bool operator==(const StepId&, const StepId&) = default;
};

StepId main_step(int n);
StepId branch_step(int parent, int branch_no, int index);

/// Throws Error(Errc::malformed_id) on wrong separators, non-numeric or
/// zero/negative components.
StepId parse_step_id(const std::string& text);

struct Step {
    StepId id;
    std::string name;
    std::string description;
    std::optional<std::string> tool; // absent on branch steps
    std::optional<std::string> input_desc;
    std::optional<std::string> output_desc;
    StepKind kind = StepKind::node;
    std::optional<std::string> condition; // entry condition of a branch's first step

    friend bool operator==(const Step&, const Step&) = default;
};

/// "If <condition>, ..." -> the condition clause; nullopt when the
/// description does not open with an If clause.
std::optional<std::string> extract_condition(const std::string& description);

} // namespace routine
