#pragma once

// The entity-indexed memory: per-entity lists of sparse latent-patch entries
// with appearance/relevance descriptors, threshold-gated acceptance, and
// budgeted greedy eviction with first-entry protection.

#include "emvid/codec.hpp"
#include "emvid/errors.hpp"
#include "emvid/prng.hpp"
#include "emvid/script.hpp"
#include "emvid/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace emvid {

struct LatentPatch {
    int gx = 0; // patch-grid coordinates in the source frame
    int gy = 0;
    int frame_index = 0; // source memory-frame id f_i
    std::vector<float> values; // C * p_h * p_w, canonical gather order
    bool operator==(const LatentPatch&) const = default;
};

struct EntryOrigin {
    enum class Kind { UserReference, Generated };
    Kind kind = Kind::UserReference;
    int shot_num = 0; // Generated only
    int keyframe = 0; // Generated only
    bool operator==(const EntryOrigin&) const = default;
};

struct EntityEntry {
    EntityId entity;
    int entry_index = 0;
    std::vector<LatentPatch> patches;
    std::vector<float> appearance_vec; // unit-norm
    double relevance_score = 0.0;      // in [-1, 1]
    EntryOrigin origin;

    int token_cost() const { return static_cast<int>(patches.size()); }
    double keep_score() const { return relevance_score / token_cost(); } // relevance per token
    bool operator==(const EntityEntry&) const = default;
};

struct BankConfig {
    double tau_minmatch = 0.50;
    double tau_redundant = 0.95;
    int token_budget = 64;
    double subject_overlap_threshold = 0.0;
    double scene_overlap_threshold = 0.5;
    MemoryLayout layout;   // per-slot latent/patch geometry (memory_slots unused here)
    int vae_stride = 8;
    ProjectionSeed seed;

    void validate() const {
        if (!(tau_minmatch < tau_redundant)) {
            throw ValidationError("BankConfig: tau_minmatch must be < tau_redundant");
        }
        if (token_budget < 1) {
            throw ValidationError("BankConfig: token_budget must be >= 1");
        }
    }

    double overlap_threshold_for(EntityCategory cat) const {
        return cat == EntityCategory::Scene ? scene_overlap_threshold : subject_overlap_threshold;
    }

    bool operator==(const BankConfig&) const = default;
};

// Descriptor backend: appearance embedding of a masked region plus a
// region-vs-text relevance score. Swappable for real vision/text models.
class DescriptorProvider {
public:
    virtual ~DescriptorProvider() = default;
    virtual std::vector<float> embed_appearance(const Frame& frame, const PixelMask& mask) const = 0;
    virtual double score_relevance(const Frame& frame, const PixelMask& mask,
                                   const std::string& description) const = 0;
};

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("cosine: vector sizes differ");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline void l2_normalize(std::vector<float>& v) {
    double n = 0.0;
    for (float x : v) {
        n += static_cast<double>(x) * x;
    }
    n = std::sqrt(n);
    if (n > 0.0) {
        for (auto& x : v) {
            x = static_cast<float>(x / n);
        }
    }
}

// Deterministic synthetic descriptors: appearance is the normalized
// concatenation of masked per-channel means, masked per-channel variances,
// and a 4x4 masked spatial histogram (22 dims). Relevance is the cosine
// between a hashed character-trigram embedding of the description and a
// hashed quantization of the appearance vector.
class SyntheticProvider : public DescriptorProvider {
public:
    static constexpr int kDim = 22;

    std::vector<float> embed_appearance(const Frame& frame, const PixelMask& mask) const override {
        if (frame.height != mask.height || frame.width != mask.width) {
            throw DimensionMismatch("embed_appearance: frame/mask dims differ");
        }
        const std::size_t n = mask.popcount();
        if (n == 0) {
            throw EmptyMask("embed_appearance: empty mask");
        }
        std::vector<float> out(kDim, 0.0f);
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0, sumsq = 0.0;
            for (int y = 0; y < frame.height; ++y) {
                for (int x = 0; x < frame.width; ++x) {
                    if (mask.get(y, x)) {
                        const double v = frame.at(c, y, x);
                        sum += v;
                        sumsq += v * v;
                    }
                }
            }
            const double mean = sum / static_cast<double>(n);
            out[c] = static_cast<float>(mean);
            out[3 + c] = static_cast<float>(std::max(0.0, sumsq / static_cast<double>(n) - mean * mean));
        }
        // 4x4 histogram of mask pixel positions
        for (int y = 0; y < frame.height; ++y) {
            for (int x = 0; x < frame.width; ++x) {
                if (mask.get(y, x)) {
                    const int by = std::min(3, y * 4 / mask.height);
                    const int bx = std::min(3, x * 4 / mask.width);
                    out[6 + by * 4 + bx] += 1.0f / static_cast<float>(n);
                }
            }
        }
        l2_normalize(out);
        return out;
    }

    double score_relevance(const Frame& frame, const PixelMask& mask,
                           const std::string& description) const override {
        const auto appearance = embed_appearance(frame, mask);
        std::vector<float> quantized(appearance.size());
        for (std::size_t i = 0; i < appearance.size(); ++i) {
            quantized[i] = std::round(appearance[i] * 8.0f) / 8.0f;
        }
        const auto text = embed_text(description);
        return cosine(text, quantized);
    }

    // Hashed bag of character trigrams, signed hashing into kDim buckets.
    static std::vector<float> embed_text(const std::string& text) {
        std::vector<float> v(kDim, 0.0f);
        const std::string padded = "^" + text + "$";
        for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
            const std::uint64_t h = hash64(padded.data() + i, 3);
            const int bucket = static_cast<int>(h % kDim);
            const float sign = (h >> 32) & 1 ? 1.0f : -1.0f;
            v[bucket] += sign;
        }
        l2_normalize(v);
        return v;
    }
};

struct EntityBank {
    std::map<std::string, std::vector<EntityEntry>> entries; // keyed by EntityId::raw
    BankConfig config;

    std::vector<EntityEntry>& list_for(const EntityId& id) { return entries[id.raw]; }
    const std::vector<EntityEntry>* find_list(const EntityId& id) const {
        auto it = entries.find(id.raw);
        return it == entries.end() ? nullptr : &it->second;
    }

    int token_cost(const EntityId& id) const {
        const auto* list = find_list(id);
        if (!list) {
            return 0;
        }
        int total = 0;
        for (const auto& e : *list) {
            total += e.token_cost();
        }
        return total;
    }

    bool operator==(const EntityBank&) const = default;
};

// Encodes the frame, downsamples the mask to the patch grid, and stores the
// overlapping latent patches with their coordinates and descriptors.
inline EntityEntry build_entry(const Frame& frame, const PixelMask& pixel_mask,
                               const EntityId& entity, const std::string& description,
                               int frame_index, const DescriptorProvider& provider,
                               const BankConfig& config) {
    if (frame.height != pixel_mask.height || frame.width != pixel_mask.width) {
        throw DimensionMismatch("build_entry: frame/mask dims differ");
    }
    if (pixel_mask.empty_mask()) {
        throw EmptyMask("build_entry: mask is empty for " + entity.raw);
    }
    const MemoryLayout& layout = config.layout;
    const LatentGrid latent = vae_encode(frame, config.vae_stride, layout.channels, config.seed);
    if (latent.height != layout.height || latent.width != layout.width) {
        throw DimensionMismatch("build_entry: frame does not match bank layout");
    }
    const PatchMask pm = downsample_mask(pixel_mask, layout, config.vae_stride,
                                         config.overlap_threshold_for(entity.category));
    EntityEntry entry;
    entry.entity = entity;
    for (int gy = 0; gy < pm.grid_h; ++gy) {
        for (int gx = 0; gx < pm.grid_w; ++gx) {
            if (!pm.get(gy, gx)) {
                continue;
            }
            LatentPatch p;
            p.gx = gx;
            p.gy = gy;
            p.frame_index = frame_index;
            p.values.resize(static_cast<std::size_t>(layout.patch_values()));
            detail::gather_patch(latent, layout, gy, gx, p.values.data());
            entry.patches.push_back(std::move(p));
        }
    }
    if (entry.patches.empty()) {
        throw EmptyMask("build_entry: no latent patch selected for " + entity.raw);
    }
    entry.appearance_vec = provider.embed_appearance(frame, pixel_mask);
    entry.relevance_score = provider.score_relevance(frame, pixel_mask, description);
    return entry;
}

// Max cosine between the candidate's appearance vector and all stored
// entries of its entity; nullopt when the entity has no entries.
inline std::optional<double> appearance_similarity_max(const EntityBank& bank,
                                                       const EntityEntry& candidate) {
    const auto* list = bank.find_list(candidate.entity);
    if (!list || list->empty()) {
        return std::nullopt;
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : *list) {
        best = std::max(best, cosine(candidate.appearance_vec, e.appearance_vec));
    }
    return best;
}

enum class AcceptDecision { AcceptedEmpty, AcceptedInRange, RejectedLow, RejectedRedundant };

inline const char* to_string(AcceptDecision d) {
    switch (d) {
    case AcceptDecision::AcceptedEmpty: return "accepted_empty";
    case AcceptDecision::AcceptedInRange: return "accepted_in_range";
    case AcceptDecision::RejectedLow: return "rejected_low";
    case AcceptDecision::RejectedRedundant: return "rejected_redundant";
    }
    return "?";
}

// Acceptance rule: (1) entity has no entries, or (2) the max appearance
// similarity lies in the closed interval [tau_minmatch, tau_redundant].
inline AcceptDecision accept_candidate(EntityBank& bank, EntityEntry candidate,
                                       const BankConfig& config) {
    const auto s_max = appearance_similarity_max(bank, candidate);
    auto& list = bank.list_for(candidate.entity);
    if (!s_max) {
        candidate.entry_index = 0;
        list.push_back(std::move(candidate));
        return AcceptDecision::AcceptedEmpty;
    }
    if (*s_max < config.tau_minmatch) {
        return AcceptDecision::RejectedLow;
    }
    if (*s_max > config.tau_redundant) {
        return AcceptDecision::RejectedRedundant;
    }
    candidate.entry_index = list.back().entry_index + 1;
    list.push_back(std::move(candidate));
    return AcceptDecision::AcceptedInRange;
}

// Greedy budget pruning: entry 0 is always kept; the rest are scanned in
// descending keep_score (ties: lower entry_index first) and kept iff the running
// token cost stays within budget. Returns evicted entry indices.
inline std::vector<int> enforce_budget(EntityBank& bank, const EntityId& entity) {
    auto it = bank.entries.find(entity.raw);
    if (it == bank.entries.end()) {
        throw UnknownEntity("enforce_budget: unknown entity " + entity.raw);
    }
    auto& list = it->second;
    if (list.empty()) {
        return {};
    }
    std::vector<const EntityEntry*> rest;
    for (std::size_t i = 1; i < list.size(); ++i) {
        rest.push_back(&list[i]);
    }
    std::stable_sort(rest.begin(), rest.end(), [](const EntityEntry* a, const EntityEntry* b) {
        if (a->keep_score() != b->keep_score()) {
            return a->keep_score() > b->keep_score();
        }
        return a->entry_index < b->entry_index;
    });
    int cost = list.front().token_cost(); // protected first entry
    std::vector<int> kept_indices{list.front().entry_index};
    std::vector<int> evicted;
    for (const auto* e : rest) {
        if (cost + e->token_cost() <= bank.config.token_budget) {
            cost += e->token_cost();
            kept_indices.push_back(e->entry_index);
        } else {
            evicted.push_back(e->entry_index);
        }
    }
    if (!evicted.empty()) {
        std::sort(kept_indices.begin(), kept_indices.end());
        std::vector<EntityEntry> kept;
        for (auto& e : list) {
            if (std::binary_search(kept_indices.begin(), kept_indices.end(), e.entry_index)) {
                kept.push_back(std::move(e));
            }
        }
        list = std::move(kept);
        std::sort(evicted.begin(), evicted.end());
    }
    return evicted;
}

// ---------------------------------------------------------------------------
// Snapshot format: magic "EMVB" | version u16 LE | header length u32 LE |
// header JSON (UTF-8) | patch payload, IEEE-754 binary32 LE in header order.

inline constexpr std::uint16_t kBankFormatVersion = 1;

namespace detail {

inline nlohmann::json layout_to_json(const MemoryLayout& l) {
    return {{"memory_slots", l.memory_slots}, {"channels", l.channels}, {"height", l.height},
            {"width", l.width},               {"patch_h", l.patch_h},   {"patch_w", l.patch_w}};
}

inline MemoryLayout layout_from_json(const nlohmann::json& j) {
    MemoryLayout l;
    l.memory_slots = j.at("memory_slots").get<int>();
    l.channels = j.at("channels").get<int>();
    l.height = j.at("height").get<int>();
    l.width = j.at("width").get<int>();
    l.patch_h = j.at("patch_h").get<int>();
    l.patch_w = j.at("patch_w").get<int>();
    return l;
}

inline nlohmann::json bank_config_to_json(const BankConfig& c) {
    return {{"tau_minmatch", c.tau_minmatch},
            {"tau_redundant", c.tau_redundant},
            {"token_budget", c.token_budget},
            {"subject_overlap_threshold", c.subject_overlap_threshold},
            {"scene_overlap_threshold", c.scene_overlap_threshold},
            {"layout", layout_to_json(c.layout)},
            {"vae_stride", c.vae_stride},
            {"seed", c.seed.seed}};
}

inline BankConfig bank_config_from_json(const nlohmann::json& j) {
    BankConfig c;
    c.tau_minmatch = j.at("tau_minmatch").get<double>();
    c.tau_redundant = j.at("tau_redundant").get<double>();
    c.token_budget = j.at("token_budget").get<int>();
    c.subject_overlap_threshold = j.at("subject_overlap_threshold").get<double>();
    c.scene_overlap_threshold = j.at("scene_overlap_threshold").get<double>();
    c.layout = layout_from_json(j.at("layout"));
    c.vae_stride = j.at("vae_stride").get<int>();
    c.seed.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

} // namespace detail

inline void snapshot(const EntityBank& bank, const std::filesystem::path& path) {
    nlohmann::json header;
    header["config"] = detail::bank_config_to_json(bank.config);
    nlohmann::json entities = nlohmann::json::array();
    std::vector<float> payload;
    for (const auto& [raw, list] : bank.entries) {
        nlohmann::json je;
        je["id"] = raw;
        nlohmann::json jentries = nlohmann::json::array();
        for (const auto& entry : list) {
            nlohmann::json j;
            j["entry_index"] = entry.entry_index;
            j["relevance_score"] = entry.relevance_score;
            j["origin"] = {{"kind", entry.origin.kind == EntryOrigin::Kind::UserReference
                                        ? "user_reference"
                                        : "generated"},
                           {"shot_num", entry.origin.shot_num},
                           {"keyframe", entry.origin.keyframe}};
            j["appearance_dim"] = entry.appearance_vec.size();
            payload.insert(payload.end(), entry.appearance_vec.begin(), entry.appearance_vec.end());
            nlohmann::json patches = nlohmann::json::array();
            for (const auto& p : entry.patches) {
                patches.push_back({{"gx", p.gx}, {"gy", p.gy}, {"frame_index", p.frame_index},
                                   {"count", p.values.size()}});
                payload.insert(payload.end(), p.values.begin(), p.values.end());
            }
            j["patches"] = std::move(patches);
            jentries.push_back(std::move(j));
        }
        je["entries"] = std::move(jentries);
        entities.push_back(std::move(je));
    }
    header["entities"] = std::move(entities);

    const std::string header_str = header.dump();
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), {'E', 'M', 'V', 'B'});
    detail::put_u16(buf, kBankFormatVersion);
    detail::put_u32(buf, static_cast<std::uint32_t>(header_str.size()));
    buf.insert(buf.end(), header_str.begin(), header_str.end());
    detail::append_f32(buf, payload);
    detail::write_file(path, buf);
}

inline EntityBank load_snapshot(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    if (bytes.size() < 10 || std::memcmp(bytes.data(), "EMVB", 4) != 0) {
        throw FormatError("bank snapshot: bad magic");
    }
    const std::uint16_t version = detail::get_u16(bytes.data() + 4);
    if (version != kBankFormatVersion) {
        throw VersionMismatch("bank snapshot: unsupported version " + std::to_string(version));
    }
    const std::uint32_t header_len = detail::get_u32(bytes.data() + 6);
    if (bytes.size() < 10 + static_cast<std::size_t>(header_len)) {
        throw FormatError("bank snapshot: truncated header");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 10, bytes.begin() + 10 + header_len);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("bank snapshot: bad header: ") + e.what());
    }
    EntityBank bank;
    bank.config = detail::bank_config_from_json(header.at("config"));
    std::size_t offset = 10 + header_len;
    for (const auto& je : header.at("entities")) {
        const std::string raw = je.at("id").get<std::string>();
        const auto id = parse_entity_id(raw);
        if (!id) {
            throw FormatError("bank snapshot: malformed entity id " + raw);
        }
        auto& list = bank.entries[raw];
        for (const auto& j : je.at("entries")) {
            EntityEntry entry;
            entry.entity = *id;
            entry.entry_index = j.at("entry_index").get<int>();
            entry.relevance_score = j.at("relevance_score").get<double>();
            const auto& jo = j.at("origin");
            entry.origin.kind = jo.at("kind").get<std::string>() == "generated"
                                    ? EntryOrigin::Kind::Generated
                                    : EntryOrigin::Kind::UserReference;
            entry.origin.shot_num = jo.at("shot_num").get<int>();
            entry.origin.keyframe = jo.at("keyframe").get<int>();
            const std::size_t app_dim = j.at("appearance_dim").get<std::size_t>();
            entry.appearance_vec = detail::extract_f32(bytes, offset, app_dim, "bank snapshot");
            offset += app_dim * 4;
            for (const auto& jp : j.at("patches")) {
                LatentPatch p;
                p.gx = jp.at("gx").get<int>();
                p.gy = jp.at("gy").get<int>();
                p.frame_index = jp.at("frame_index").get<int>();
                const std::size_t count = jp.at("count").get<std::size_t>();
                p.values = detail::extract_f32(bytes, offset, count, "bank snapshot");
                offset += count * 4;
                entry.patches.push_back(std::move(p));
            }
            list.push_back(std::move(entry));
        }
    }
    return bank;
}

} // namespace emvid
