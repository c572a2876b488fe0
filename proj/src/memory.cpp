#include "routine/memory.hpp"

#include "routine/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

namespace routine {

VariableStore::VariableStore(std::size_t threshold) : threshold_(threshold) {}

bool VariableStore::contains(const std::string& key) const {
    return find(key) != nullptr;
}

const json* VariableStore::find(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return &v;
    }
    return nullptr;
}

namespace {

std::string sanitize_identifier(const std::string& name) {
    std::string out;
    for (char ch : name) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!out.empty() && out.back() != '_') {
            out += '_';
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "value" : out;
}

} // namespace

std::string VariableStore::put(const std::string& name, json value) {
    std::string base = "memory_" + sanitize_identifier(name);
    std::string key = base;
    int suffix = 2;
    while (contains(key)) {
        key = base + "_" + std::to_string(suffix++);
    }
    entries_.emplace_back(key, std::move(value));
    return key;
}

void VariableStore::restore(const std::string& key, json value) {
    if (contains(key)) return;
    entries_.emplace_back(key, std::move(value));
}

namespace {

json compress_value(const json& value, const std::string& name, const std::string& path, VariableStore& store,
                    const std::map<std::string, std::string>& field_names) {
    if (value.is_string()) {
        const auto& text = value.get_ref<const std::string&>();
        if (text.size() > store.threshold()) {
            auto it = field_names.find(path);
            std::string key = store.put(it != field_names.end() ? it->second : name, value);
            return json(key);
        }
        return value;
    }
    if (value.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : value.items()) {
            out[k] = compress_value(v, k, path + "/" + k, store, field_names);
        }
        return out;
    }
    if (value.is_array()) {
        json out = json::array();
        std::size_t i = 0;
        for (const auto& v : value) {
            out.push_back(compress_value(v, name + "_" + std::to_string(i), path + "/" + std::to_string(i),
                                         store, field_names));
            ++i;
        }
        return out;
    }
    return value;
}

} // namespace

std::string compress_observation(const json& raw, VariableStore& store,
                                 const std::map<std::string, std::string>& field_names) {
    json substituted = compress_value(raw, "value", "", store, field_names);
    return substituted.dump();
}

namespace {

json resolve_value(const json& value, const VariableStore& store, std::vector<std::string>* warnings) {
    if (value.is_string()) {
        const auto& text = value.get_ref<const std::string&>();
        if (const json* stored = store.find(text)) {
            return *stored;
        }
        if (text.rfind("memory_", 0) == 0 && !store.contains(text)) {
            if (warnings) warnings->push_back("unknown-key: " + text);
        }
        return value;
    }
    if (value.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : value.items()) {
            out[k] = resolve_value(v, store, warnings);
        }
        return out;
    }
    if (value.is_array()) {
        json out = json::array();
        for (const auto& v : value) {
            out.push_back(resolve_value(v, store, warnings));
        }
        return out;
    }
    return value;
}

} // namespace

json resolve_arguments(const json& args, const VariableStore& store, std::vector<std::string>* warnings) {
    return resolve_value(args, store, warnings);
}

std::string render_variables_block(const VariableStore& store) {
    std::string out;
    for (const auto& [key, value] : store.entries()) {
        std::string text = value.is_string() ? value.get<std::string>() : value.dump();
        if (!out.empty()) out += "\n";
        if (text.size() <= 80) {
            out += key + " = " + text;
        } else {
            out += key + " = " + text.substr(0, 80) + "… (truncated, " + std::to_string(text.size()) +
                   " chars total)";
        }
    }
    return out;
}

namespace {

std::map<std::string, int> term_bag(const std::string& text) {
    std::map<std::string, int> bag;
    std::string token;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!token.empty()) {
            ++bag[token];
            token.clear();
        }
    }
    if (!token.empty()) ++bag[token];
    return bag;
}

} // namespace

double lexical_cosine(const std::string& a, const std::string& b) {
    auto bag_a = term_bag(a);
    auto bag_b = term_bag(b);
    if (bag_a.empty() || bag_b.empty()) return 0.0;
    double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
    for (const auto& [term, count] : bag_a) {
        norm_a += static_cast<double>(count) * count;
        auto it = bag_b.find(term);
        if (it != bag_b.end()) dot += static_cast<double>(count) * it->second;
    }
    for (const auto& [term, count] : bag_b) {
        norm_b += static_cast<double>(count) * count;
    }
    if (dot == 0.0) return 0.0;
    return dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
}

RoutineLibrary RoutineLibrary::load(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(Errc::malformed_document, e.what());
    }
    return from_json(doc);
}

RoutineLibrary RoutineLibrary::from_json(const json& doc) {
    if (!doc.is_array()) {
        throw Error(Errc::malformed_document, "routine library must be a JSON array");
    }
    RoutineLibrary lib;
    for (const json& entry : doc) {
        lib.add(routine_from_json(entry));
    }
    return lib;
}

void RoutineLibrary::add(Routine r) {
    if (find(r.routine_id)) {
        throw Error(Errc::duplicate_name, "routine_id \"" + r.routine_id + "\" already in library");
    }
    routines_.push_back(std::move(r));
}

const Routine* RoutineLibrary::find(const std::string& routine_id) const {
    for (const Routine& r : routines_) {
        if (r.routine_id == routine_id) return &r;
    }
    return nullptr;
}

std::vector<std::pair<const Routine*, double>> RoutineLibrary::retrieve(const std::string& query, std::size_t k,
                                                                        const Similarity& similarity) const {
    const Similarity& sim = similarity ? similarity : Similarity(lexical_cosine);
    std::vector<std::pair<const Routine*, double>> scored;
    scored.reserve(routines_.size());
    for (const Routine& r : routines_) {
        scored.emplace_back(&r, sim(r.description, query));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first->routine_id < b.first->routine_id;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

json RoutineLibrary::to_json() const {
    json arr = json::array();
    for (const Routine& r : routines_) {
        arr.push_back(routine_to_json(r));
    }
    return arr;
}

} // namespace routine
