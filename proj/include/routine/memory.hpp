#pragma once

#include "routine/routine.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace routine {

/// Per-task store of oversized parameter values behind memory_* keys.
/// Created empty per task, discarded at task end; owned by one session.
class VariableStore {
public:
    explicit VariableStore(std::size_t threshold = 200);

    std::size_t threshold() const { return threshold_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    bool contains(const std::string& key) const;
    const json* find(const std::string& key) const;
    const std::vector<std::pair<std::string, json>>& entries() const { return entries_; }

    /// Stores value under a fresh `memory_<name>` key (numeric suffix on
    /// collision) and returns the key. Never overwrites.
    std::string put(const std::string& name, json value);

    /// Inserts an entry under an exact key, e.g. when rebuilding a session
    /// state from a trace. No-op when the key exists.
    void restore(const std::string& key, json value);

private:
    std::size_t threshold_;
    std::vector<std::pair<std::string, json>> entries_;
};

/// Replaces every string leaf longer than the store threshold with a fresh
/// memory key and returns the JSON text of the substituted structure.
/// `field_names` optionally overrides the key name for a JSON-pointer path.
std::string compress_observation(const json& raw, VariableStore& store,
                                 const std::map<std::string, std::string>& field_names = {});

/// Substitutes argument strings that exactly equal a stored key with the
/// stored value. Unknown memory_* strings pass through and are reported.
json resolve_arguments(const json& args, const VariableStore& store,
                       std::vector<std::string>* unknown_key_warnings = nullptr);

/// One line per entry; values over 80 characters are previewed and marked
/// "(truncated, N chars total)". Empty store renders "".
std::string render_variables_block(const VariableStore& store);

/// Term-frequency cosine over lowercased alphanumeric tokens.
double lexical_cosine(const std::string& a, const std::string& b);

/// Long-term routine collection with similarity retrieval over descriptions.
/// Read-only after load; concurrent retrieval is safe.
class RoutineLibrary {
public:
    using Similarity = std::function<double(const std::string& description, const std::string& query)>;

    static RoutineLibrary load(const std::string& json_text);
    static RoutineLibrary from_json(const json& doc);

    void add(Routine r); // throws duplicate_name on repeated routine_id
    bool empty() const { return routines_.empty(); }
    std::size_t size() const { return routines_.size(); }
    const std::vector<Routine>& routines() const { return routines_; }
    const Routine* find(const std::string& routine_id) const;

    /// Top-k by descending similarity(description, query); ties broken by
    /// routine_id. Default similarity is lexical_cosine.
    std::vector<std::pair<const Routine*, double>> retrieve(const std::string& query, std::size_t k,
                                                            const Similarity& similarity = {}) const;

    json to_json() const;

private:
    std::vector<Routine> routines_;
};

} // namespace routine
