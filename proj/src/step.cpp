#include "routine/step.hpp"

#include "routine/error.hpp"

#include <cctype>

namespace routine {

namespace {

// Strictly positive decimal; rejects empty, sign characters, and overflow.
int parse_component(const std::string& text, const std::string& whole) {
    if (text.empty()) {
        throw Error(Errc::malformed_id, "empty component in step id \"" + whole + "\"");
    }
    long value = 0;
    for (char ch : text) {
        if (!std::isdigit(static_cast<unsigned char>(ch))) {
            throw Error(Errc::malformed_id, "non-numeric component in step id \"" + whole + "\"");
        }
        value = value * 10 + (ch - '0');
        if (value > 1000000) {
            throw Error(Errc::malformed_id, "component out of range in step id \"" + whole + "\"");
        }
    }
    if (value < 1) {
        throw Error(Errc::malformed_id, "zero component in step id \"" + whole + "\"");
    }
    return static_cast<int>(value);
}

} // namespace

const char* step_kind_name(StepKind kind) {
    switch (kind) {
    case StepKind::node: return "node";
    case StepKind::branch: return "branch";
    case StepKind::branchnode: return "branchnode";
    case StepKind::finish: return "finish";
    }
    return "node";
}

std::optional<StepKind> step_kind_from(const std::string& tag) {
    if (tag == "node") return StepKind::node;
    if (tag == "branch") return StepKind::branch;
    if (tag == "branchnode") return StepKind::branchnode;
    if (tag == "finish") return StepKind::finish;
    return std::nullopt;
}

std::string StepId::str() const {
    if (!is_branch()) {
        return std::to_string(main);
    }
    return std::to_string(main) + "-" + std::to_string(branch_no) + "_" + std::to_string(index);
}

StepId main_step(int n) {
    if (n < 1) throw Error(Errc::malformed_id, "main step number must be >= 1");
    return StepId{n, 0, 0};
}

StepId branch_step(int parent, int branch_no, int index) {
    if (parent < 1 || branch_no < 1 || index < 1) {
        throw Error(Errc::malformed_id, "branch step components must be >= 1");
    }
    return StepId{parent, branch_no, index};
}

StepId parse_step_id(const std::string& text) {
    auto dash = text.find('-');
    if (dash == std::string::npos) {
        if (text.find('_') != std::string::npos) {
            throw Error(Errc::malformed_id, "wrong separators in step id \"" + text + "\"");
        }
        return main_step(parse_component(text, text));
    }
    auto underscore = text.find('_', dash + 1);
    if (underscore == std::string::npos) {
        throw Error(Errc::malformed_id, "missing index separator in step id \"" + text + "\"");
    }
    if (text.find('-', dash + 1) != std::string::npos || text.find('_', underscore + 1) != std::string::npos) {
        throw Error(Errc::malformed_id, "extra separators in step id \"" + text + "\"");
    }
    int parent = parse_component(text.substr(0, dash), text);
    int branch_no = parse_component(text.substr(dash + 1, underscore - dash - 1), text);
    int index = parse_component(text.substr(underscore + 1), text);
    return branch_step(parent, branch_no, index);
}

std::optional<std::string> extract_condition(const std::string& description) {
    if (description.size() < 3) return std::nullopt;
    if (!(description.compare(0, 3, "If ") == 0 || description.compare(0, 3, "if ") == 0)) {
        return std::nullopt;
    }
    std::string rest = description.substr(3);
    auto comma = rest.find(',');
    std::string condition = comma == std::string::npos ? rest : rest.substr(0, comma);
    while (!condition.empty() && std::isspace(static_cast<unsigned char>(condition.back()))) {
        condition.pop_back();
    }
    if (condition.empty()) return std::nullopt;
    return condition;
}

} // namespace routine
