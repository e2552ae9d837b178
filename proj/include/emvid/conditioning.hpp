#pragma once

// Inference-time sparse memory pipeline: retrieve entries, scatter to the
// dense memory layout, patchify, prune to entity tokens, run the mock
// transformer step, scatter predictions back, unpatchify. Includes the
// attention-op cost accounting.

#include "emvid/bank.hpp"
#include "emvid/codec.hpp"
#include "emvid/errors.hpp"
#include "emvid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace emvid {

struct TokenMask {
    std::vector<std::uint8_t> bits; // one per canonical token position

    TokenMask() = default;
    explicit TokenMask(int count, bool fill = false)
        : bits(static_cast<std::size_t>(count), fill ? 1 : 0) {}

    bool get(int i) const { return bits[static_cast<std::size_t>(i)] != 0; }
    void set(int i, bool v = true) { bits[static_cast<std::size_t>(i)] = v ? 1 : 0; }
    int size() const { return static_cast<int>(bits.size()); }
    int popcount() const {
        return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }
    bool operator==(const TokenMask&) const = default;
};

struct CostReport {
    long long tokens_full = 0;
    long long tokens_kept = 0;
    long long target_tokens = 0;
    long long attention_ops_full = 0;
    long long attention_ops_kept = 0;
    int steps = 1;

    double reduction() const {
        return tokens_full == 0 ? 0.0
                                : 1.0 - static_cast<double>(tokens_kept) / static_cast<double>(tokens_full);
    }
    bool operator==(const CostReport&) const = default;
};

// Attention cost model: ops(T) = T^2 per step over the combined sequence.
inline long long attention_ops(long long total_tokens) {
    return total_tokens * total_tokens;
}

inline CostReport cost_report(const MemoryLayout& layout_full, const TokenMask& mask,
                              long long target_tokens, int steps = 1) {
    CostReport r;
    r.tokens_full = layout_full.total_patches();
    r.tokens_kept = mask.popcount();
    r.target_tokens = target_tokens;
    r.steps = steps;
    r.attention_ops_full = attention_ops(r.tokens_full + target_tokens) * steps;
    r.attention_ops_kept = attention_ops(r.tokens_kept + target_tokens) * steps;
    return r;
}

// Retrieval result: the sparse patches plus the slot layout and, per slot,
// which (entity, entry) it came from.
struct RetrievedMemory {
    PatchSet patches;
    std::vector<std::pair<EntityId, int>> slot_sources; // (entity, entry_index) per slot
    std::vector<std::string> missing_entities;
};

// Concatenates all entries of the requested entities; each (entity, entry)
// pair gets its own memory-frame slot, ordered by (raw id, entry_index).
inline RetrievedMemory retrieve_memory(const EntityBank& bank, std::vector<EntityId> entity_ids) {
    std::sort(entity_ids.begin(), entity_ids.end(),
              [](const EntityId& a, const EntityId& b) { return a.raw < b.raw; });
    entity_ids.erase(std::unique(entity_ids.begin(), entity_ids.end()), entity_ids.end());

    RetrievedMemory out;
    out.patches.layout = bank.config.layout;
    for (const auto& id : entity_ids) {
        const auto* list = bank.find_list(id);
        if (!list || list->empty()) {
            out.missing_entities.push_back(id.raw);
            continue;
        }
        for (const auto& entry : *list) {
            const int slot = static_cast<int>(out.slot_sources.size());
            out.slot_sources.emplace_back(id, entry.entry_index);
            for (const auto& p : entry.patches) {
                PatchItem item;
                item.slot = slot;
                item.gy = p.gy;
                item.gx = p.gx;
                item.values = p.values;
                out.patches.items.push_back(std::move(item));
            }
        }
    }
    out.patches.layout.memory_slots = static_cast<int>(out.slot_sources.size());
    return out;
}

struct ScatteredMemory {
    std::vector<LatentGrid> slots;
    std::vector<PatchMask> masks; // written cells, one per slot
};

// Zero-initialized dense grid with patch values written at their coords.
inline ScatteredMemory scatter_to_dense(const PatchSet& patches) {
    const MemoryLayout& layout = patches.layout;
    layout.validate();
    ScatteredMemory out;
    out.slots.assign(static_cast<std::size_t>(layout.memory_slots),
                     LatentGrid(layout.channels, layout.height, layout.width));
    out.masks.assign(static_cast<std::size_t>(layout.memory_slots),
                     PatchMask(layout.grid_h(), layout.grid_w()));
    for (const auto& item : patches.items) {
        if (item.slot < 0 || item.slot >= layout.memory_slots || item.gy < 0 ||
            item.gy >= layout.grid_h() || item.gx < 0 || item.gx >= layout.grid_w()) {
            throw CoordinateOutOfRange("scatter_to_dense: patch outside layout");
        }
        if (out.masks[item.slot].get(item.gy, item.gx)) {
            throw DuplicateCoordinate("scatter_to_dense: duplicate patch at slot " +
                                      std::to_string(item.slot));
        }
        if (static_cast<int>(item.values.size()) != layout.patch_values()) {
            throw DimensionMismatch("scatter_to_dense: bad patch value count");
        }
        detail::scatter_patch(out.slots[item.slot], layout, item.gy, item.gx, item.values.data());
        out.masks[item.slot].set(item.gy, item.gx);
    }
    return out;
}

inline TokenMask token_mask_from_patch_masks(const std::vector<PatchMask>& masks,
                                             const MemoryLayout& layout) {
    TokenMask mask(layout.total_patches());
    for (int slot = 0; slot < layout.memory_slots; ++slot) {
        for (int gy = 0; gy < layout.grid_h(); ++gy) {
            for (int gx = 0; gx < layout.grid_w(); ++gx) {
                if (masks[slot].get(gy, gx)) {
                    mask.set(token_index(layout, slot, gy, gx));
                }
            }
        }
    }
    return mask;
}

// Retains tokens where the mask is set, preserving canonical order and
// recording positions.
inline std::vector<SparseToken> prune_tokens(const TokenGrid& tokens, const TokenMask& mask) {
    if (mask.size() != tokens.token_count()) {
        throw LengthMismatch("prune_tokens: mask length does not match token count");
    }
    std::vector<SparseToken> out;
    for (int i = 0; i < tokens.token_count(); ++i) {
        if (mask.get(i)) {
            SparseToken t;
            t.position = i;
            t.values.assign(tokens.token(i), tokens.token(i) + tokens.dim);
            out.push_back(std::move(t));
        }
    }
    return out;
}

// Dense TokenGrid with predictions at masked positions, `fill` elsewhere.
inline TokenGrid scatter_tokens_back(const std::vector<SparseToken>& predictions,
                                     const TokenMask& mask, const TokenGrid& fill) {
    if (static_cast<int>(predictions.size()) != mask.popcount()) {
        throw CountMismatch("scatter_tokens_back: prediction count != mask popcount");
    }
    if (mask.size() != fill.token_count()) {
        throw LengthMismatch("scatter_tokens_back: mask length does not match fill grid");
    }
    TokenGrid out = fill;
    std::size_t next = 0;
    for (int i = 0; i < mask.size(); ++i) {
        if (mask.get(i)) {
            const auto& pred = predictions[next++];
            if (pred.position != i) {
                throw CountMismatch("scatter_tokens_back: prediction positions out of order");
            }
            if (static_cast<int>(pred.values.size()) != out.dim) {
                throw DimensionMismatch("scatter_tokens_back: bad token width");
            }
            std::copy(pred.values.begin(), pred.values.end(), out.token(i));
        }
    }
    return out;
}

// Single seeded scaled-dot-product attention layer: each target token attends
// over (memory ∪ target) tokens. Dropped memory tokens have zero influence
// because they never enter the key/value set.
class MockDit {
public:
    MockDit(int dim, const ProjectionSeed& seed)
        : dim_(dim),
          wq_(detail::orthonormal_columns(dim, dim, derive_seed(seed.seed, 0xD17A))),
          wk_(detail::orthonormal_columns(dim, dim, derive_seed(seed.seed, 0xD17B))),
          wv_(detail::orthonormal_columns(dim, dim, derive_seed(seed.seed, 0xD17C))) {}

    std::vector<std::vector<float>> step(const std::vector<SparseToken>& memory_tokens,
                                         const std::vector<std::vector<float>>& target_tokens) const {
        std::vector<const float*> context;
        for (const auto& t : memory_tokens) {
            if (static_cast<int>(t.values.size()) != dim_) {
                throw DimensionMismatch("mock_dit_step: memory token width != D");
            }
            context.push_back(t.values.data());
        }
        for (const auto& t : target_tokens) {
            if (static_cast<int>(t.size()) != dim_) {
                throw DimensionMismatch("mock_dit_step: target token width != D");
            }
            context.push_back(t.data());
        }
        std::vector<std::vector<double>> keys, values_p;
        for (const float* tok : context) {
            keys.push_back(project(wk_, tok));
            values_p.push_back(project(wv_, tok));
        }
        const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
        std::vector<std::vector<float>> out;
        out.reserve(target_tokens.size());
        for (const auto& t : target_tokens) {
            const auto q = project(wq_, t.data());
            std::vector<double> logits(context.size());
            double max_logit = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < context.size(); ++j) {
                double dot = 0.0;
                for (int d = 0; d < dim_; ++d) {
                    dot += q[d] * keys[j][d];
                }
                logits[j] = dot * scale;
                max_logit = std::max(max_logit, logits[j]);
            }
            double denom = 0.0;
            for (auto& l : logits) {
                l = std::exp(l - max_logit);
                denom += l;
            }
            std::vector<float> o(static_cast<std::size_t>(dim_), 0.0f);
            std::vector<double> acc(static_cast<std::size_t>(dim_), 0.0);
            for (std::size_t j = 0; j < context.size(); ++j) {
                const double w = logits[j] / denom;
                for (int d = 0; d < dim_; ++d) {
                    acc[d] += w * values_p[j][d];
                }
            }
            for (int d = 0; d < dim_; ++d) {
                o[d] = static_cast<float>(acc[d]);
            }
            out.push_back(std::move(o));
        }
        return out;
    }

private:
    std::vector<double> project(const std::vector<double>& w, const float* tok) const {
        std::vector<double> out(static_cast<std::size_t>(dim_), 0.0);
        for (int r = 0; r < dim_; ++r) {
            double acc = 0.0;
            for (int c = 0; c < dim_; ++c) {
                acc += w[static_cast<std::size_t>(r) * dim_ + c] * tok[c];
            }
            out[r] = acc;
        }
        return out;
    }

    int dim_;
    std::vector<double> wq_, wk_, wv_;
};

inline std::vector<std::vector<float>> mock_dit_step(const std::vector<SparseToken>& memory_tokens,
                                                     const std::vector<std::vector<float>>& target_tokens,
                                                     int dim, const ProjectionSeed& seed) {
    return MockDit(dim, seed).step(memory_tokens, target_tokens);
}

// Channel-wise conditioning state: noisy target tokens z_t, binary slot mask
// z_mask (true = conditioning slot), clean conditioning tokens z_c, and the
// token keep-mask over memory positions. z_c and z_mask are fixed across
// denoising steps.
struct ConditioningState {
    MemoryLayout memory_layout;   // M conditioning slots
    MemoryLayout target_layout;   // target slots (z_t geometry)
    std::vector<SparseToken> z_c; // pruned clean memory tokens
    TokenMask token_mask;         // over the dense memory token layout
    TokenGrid z_t;                // noisy target tokens
    std::vector<std::uint8_t> z_mask; // per slot: 1 = conditioning, 0 = target

    void validate() const {
        if (token_mask.size() != memory_layout.total_patches()) {
            throw LengthMismatch("ConditioningState: token_mask length != memory layout");
        }
        if (static_cast<int>(z_c.size()) != token_mask.popcount()) {
            throw CountMismatch("ConditioningState: z_c size != token_mask popcount");
        }
        const int slots = memory_layout.memory_slots + target_layout.memory_slots;
        if (static_cast<int>(z_mask.size()) != slots) {
            throw LengthMismatch("ConditioningState: z_mask length != slot count");
        }
        for (int i = 0; i < memory_layout.memory_slots; ++i) {
            if (!z_mask[i]) {
                throw ValidationError("ConditioningState: memory slot not marked conditioning");
            }
        }
        for (int i = memory_layout.memory_slots; i < slots; ++i) {
            if (z_mask[i]) {
                throw ValidationError("ConditioningState: target slot marked conditioning");
            }
        }
    }
};

// Builds the conditioning state for a shot: scatter + patchify + prune the
// retrieved memory, seed the noisy target tokens.
inline ConditioningState make_conditioning(const PatchSet& retrieved, const MemoryLayout& target_layout,
                                           const ProjectionSeed& seed, std::uint64_t noise_seed) {
    ConditioningState state;
    state.memory_layout = retrieved.layout;
    state.target_layout = target_layout;

    const ScatteredMemory scattered = scatter_to_dense(retrieved);
    const TokenGrid dense = patchify(scattered.slots, retrieved.layout, seed);
    state.token_mask = token_mask_from_patch_masks(scattered.masks, retrieved.layout);
    state.z_c = prune_tokens(dense, state.token_mask);

    state.z_t = TokenGrid(target_layout, dense.dim > 0 ? dense.dim : PatchifyMap(target_layout, seed.seed).dim());
    SplitMix64 rng(noise_seed);
    for (auto& v : state.z_t.values) {
        v = static_cast<float>(rng.next_gaussian());
    }

    state.z_mask.assign(static_cast<std::size_t>(retrieved.layout.memory_slots), 1);
    state.z_mask.insert(state.z_mask.end(),
                        static_cast<std::size_t>(target_layout.memory_slots), 0);
    return state;
}

// Iterates the mock DiT step `steps` times, updating only z_t; z_c and
// z_mask are untouched. Final targets are unpatchified to latent space.
inline std::vector<LatentGrid> denoise_shot(ConditioningState& state, int steps,
                                            const ProjectionSeed& seed) {
    state.validate();
    const MockDit dit(state.z_t.dim, seed);
    for (int s = 0; s < steps; ++s) {
        std::vector<std::vector<float>> targets;
        targets.reserve(static_cast<std::size_t>(state.z_t.token_count()));
        for (int i = 0; i < state.z_t.token_count(); ++i) {
            targets.emplace_back(state.z_t.token(i), state.z_t.token(i) + state.z_t.dim);
        }
        const auto predicted = dit.step(state.z_c, targets);
        for (int i = 0; i < state.z_t.token_count(); ++i) {
            std::copy(predicted[i].begin(), predicted[i].end(), state.z_t.token(i));
        }
    }
    return unpatchify(state.z_t, state.target_layout, seed);
}

} // namespace emvid
