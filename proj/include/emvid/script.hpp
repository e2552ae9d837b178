#pragma once

// Structured story-script format: entities with unique identifiers
// (CH_xx / OB_xx / SC_xx, optionally attribute-suffixed) declared once and
// referenced from shot prompts via bracketed tokens.

#include "emvid/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace emvid {

enum class EntityCategory { Character, Object, Scene };

inline const char* category_prefix(EntityCategory c) {
    switch (c) {
    case EntityCategory::Character: return "CH";
    case EntityCategory::Object: return "OB";
    case EntityCategory::Scene: return "SC";
    }
    return "??";
}

struct EntityId {
    EntityCategory category = EntityCategory::Character;
    int index = 0;
    std::string raw; // canonical form, e.g. "CH_01" or "CH_01_blue_tshirt"

    std::optional<std::string> attribute_suffix() const {
        // raw = PP_dd or PP_dd_suffix
        if (raw.size() > 5 && raw[5] == '_') {
            return raw.substr(6);
        }
        return std::nullopt;
    }

    bool operator==(const EntityId&) const = default;
    auto operator<=>(const EntityId& other) const { return raw <=> other.raw; }
};

// Grammar: (CH|OB|SC) '_' 2-digit index, optionally followed by a
// '_'-joined lowercase attribute suffix.
inline std::optional<EntityId> parse_entity_id(const std::string& s) {
    if (s.size() < 5 || s[2] != '_') {
        return std::nullopt;
    }
    EntityCategory cat;
    if (s.compare(0, 2, "CH") == 0) {
        cat = EntityCategory::Character;
    } else if (s.compare(0, 2, "OB") == 0) {
        cat = EntityCategory::Object;
    } else if (s.compare(0, 2, "SC") == 0) {
        cat = EntityCategory::Scene;
    } else {
        return std::nullopt;
    }
    if (!std::isdigit(static_cast<unsigned char>(s[3])) ||
        !std::isdigit(static_cast<unsigned char>(s[4]))) {
        return std::nullopt;
    }
    const int index = (s[3] - '0') * 10 + (s[4] - '0');
    if (index == 0) {
        return std::nullopt;
    }
    if (s.size() > 5) {
        if (s[5] != '_' || s.size() == 6) {
            return std::nullopt;
        }
        for (std::size_t i = 6; i < s.size(); ++i) {
            const char c = s[i];
            const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
            if (!ok) {
                return std::nullopt;
            }
        }
    }
    return EntityId{cat, index, s};
}

struct EntityDecl {
    EntityId id;
    std::string short_description;
    bool operator==(const EntityDecl&) const = default;
};

struct Shot {
    int shot_num = 0;
    std::string abstract_prompt;
    std::string natural_prompt;
    std::optional<std::string> first_frame_prompt;
    bool operator==(const Shot&) const = default;
};

struct StoryScript {
    std::string story_name;
    std::string story_overview;
    std::vector<EntityDecl> characters;
    std::vector<EntityDecl> objects;
    std::vector<EntityDecl> scenes;
    std::vector<Shot> shots;

    std::vector<const EntityDecl*> all_entities() const {
        std::vector<const EntityDecl*> out;
        for (const auto& e : characters) out.push_back(&e);
        for (const auto& e : objects) out.push_back(&e);
        for (const auto& e : scenes) out.push_back(&e);
        return out;
    }

    const EntityDecl* find(const EntityId& id) const {
        for (const auto* e : all_entities()) {
            if (e->id == id) {
                return e;
            }
        }
        return nullptr;
    }

    bool operator==(const StoryScript&) const = default;
};

// Returns each bracketed identifier in first-occurrence order, de-duplicated.
// Bracketed tokens that do not parse as entity ids are skipped and reported
// through `warnings` when given.
inline std::vector<EntityId> extract_entity_refs(const std::string& abstract_prompt,
                                                 std::vector<std::string>* warnings = nullptr) {
    std::vector<EntityId> out;
    std::size_t pos = 0;
    while ((pos = abstract_prompt.find('[', pos)) != std::string::npos) {
        const std::size_t close = abstract_prompt.find(']', pos + 1);
        if (close == std::string::npos) {
            break;
        }
        const std::string token = abstract_prompt.substr(pos + 1, close - pos - 1);
        if (auto id = parse_entity_id(token)) {
            if (std::find(out.begin(), out.end(), *id) == out.end()) {
                out.push_back(*id);
            }
        } else if (warnings) {
            warnings->push_back("unrecognized bracketed token [" + token + "]");
        }
        pos = close + 1;
    }
    return out;
}

// Empty list iff all StoryScript invariants hold.
inline std::vector<std::string> validate_script(const StoryScript& script) {
    std::vector<std::string> diags;

    std::set<std::string> declared;
    for (const auto* e : script.all_entities()) {
        if (!declared.insert(e->id.raw).second) {
            diags.push_back("duplicate id " + e->id.raw);
        }
        if (e->short_description.empty()) {
            diags.push_back("empty short_description for " + e->id.raw);
        }
    }

    int expected = 1;
    for (const auto& shot : script.shots) {
        if (shot.shot_num != expected) {
            diags.push_back("non-contiguous shot numbering: expected shot " +
                            std::to_string(expected) + ", got " + std::to_string(shot.shot_num));
            expected = shot.shot_num;
        }
        ++expected;
        for (const auto& id : extract_entity_refs(shot.abstract_prompt)) {
            if (declared.find(id.raw) == declared.end()) {
                diags.push_back("shot " + std::to_string(shot.shot_num) +
                                " references undeclared entity " + id.raw);
            }
        }
    }
    return diags;
}

namespace detail {

inline std::vector<EntityDecl> parse_decls(const nlohmann::json& j, const std::string& key) {
    std::vector<EntityDecl> out;
    if (!j.contains(key)) {
        throw SchemaError("missing required field '" + key + "'");
    }
    if (!j.at(key).is_array()) {
        throw SchemaError("field '" + key + "' must be an array");
    }
    for (const auto& item : j.at(key)) {
        if (!item.contains("id") || !item.contains("short_description")) {
            throw SchemaError("entity in '" + key + "' missing id or short_description");
        }
        const std::string raw = item.at("id").get<std::string>();
        auto id = parse_entity_id(raw);
        if (!id) {
            throw ValidationError("malformed entity id '" + raw + "' in '" + key + "'");
        }
        out.push_back({*id, item.at("short_description").get<std::string>()});
    }
    return out;
}

} // namespace detail

// Parses without enforcing cross-reference invariants; used by tools that
// want to show diagnostics instead of failing.
inline StoryScript parse_script_lenient(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SyntaxError(std::string("malformed script document: ") + e.what());
    }
    for (const char* key : {"story_name", "story_overview", "shots"}) {
        if (!j.contains(key)) {
            throw SchemaError(std::string("missing required field '") + key + "'");
        }
    }
    StoryScript s;
    s.story_name = j.at("story_name").get<std::string>();
    s.story_overview = j.at("story_overview").get<std::string>();
    s.characters = detail::parse_decls(j, "characters");
    s.objects = detail::parse_decls(j, "objects");
    s.scenes = detail::parse_decls(j, "scenes");
    for (const auto& js : j.at("shots")) {
        for (const char* key : {"shot_num", "abstract_prompt", "natural_prompt"}) {
            if (!js.contains(key)) {
                throw SchemaError(std::string("shot missing required field '") + key + "'");
            }
        }
        Shot shot;
        shot.shot_num = js.at("shot_num").get<int>();
        shot.abstract_prompt = js.at("abstract_prompt").get<std::string>();
        shot.natural_prompt = js.at("natural_prompt").get<std::string>();
        if (js.contains("first_frame_prompt")) {
            shot.first_frame_prompt = js.at("first_frame_prompt").get<std::string>();
        }
        s.shots.push_back(std::move(shot));
    }
    return s;
}

inline StoryScript parse_script(const std::string& text) {
    StoryScript s = parse_script_lenient(text);
    const auto diags = validate_script(s);
    if (!diags.empty()) {
        std::string msg = "invalid script:";
        for (const auto& d : diags) {
            msg += "\n  " + d;
        }
        throw ValidationError(msg);
    }
    return s;
}

inline nlohmann::json serialize_script(const StoryScript& s) {
    nlohmann::json j;
    j["story_name"] = s.story_name;
    j["story_overview"] = s.story_overview;
    auto decls = [](const std::vector<EntityDecl>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& e : v) {
            arr.push_back({{"id", e.id.raw}, {"short_description", e.short_description}});
        }
        return arr;
    };
    j["characters"] = decls(s.characters);
    j["objects"] = decls(s.objects);
    j["scenes"] = decls(s.scenes);
    nlohmann::json shots = nlohmann::json::array();
    for (const auto& shot : s.shots) {
        nlohmann::json js = {{"shot_num", shot.shot_num},
                             {"abstract_prompt", shot.abstract_prompt},
                             {"natural_prompt", shot.natural_prompt}};
        if (shot.first_frame_prompt) {
            js["first_frame_prompt"] = *shot.first_frame_prompt;
        }
        shots.push_back(std::move(js));
    }
    j["shots"] = std::move(shots);
    return j;
}

} // namespace emvid
