#pragma once

// Pixel-space Gaussian noise injection, applied before encoding and bank
// storage: background-leakage suppression and selective appearance
// preservation (attribute edits).

#include "emvid/bank.hpp"
#include "emvid/errors.hpp"
#include "emvid/prng.hpp"
#include "emvid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace emvid {

struct NoiseSpec {
    double sigma = 0.25; // pixel units, [0,1] value range
    std::uint64_t seed = 0;
    PixelMask region; // cells to noise

    void validate() const {
        if (sigma < 0.0) {
            throw ValidationError("NoiseSpec: sigma must be >= 0");
        }
    }
};

// Pixels outside the region stay bit-identical; pixels inside get
// original + N(0, sigma^2), clamped to [0,1]. The generator is consumed in
// raster order over region pixels (3 draws per pixel), so the output is a
// pure function of (frame, spec).
inline Frame inject_noise(const Frame& frame, const NoiseSpec& spec) {
    spec.validate();
    if (spec.region.height != frame.height || spec.region.width != frame.width) {
        throw DimensionMismatch("inject_noise: region dims do not match frame");
    }
    Frame out = frame;
    if (spec.sigma == 0.0) {
        return out;
    }
    SplitMix64 rng(spec.seed);
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) {
            if (!spec.region.get(y, x)) {
                continue;
            }
            for (int c = 0; c < 3; ++c) {
                const double noised = frame.at(c, y, x) + spec.sigma * rng.next_gaussian();
                out.at(c, y, x) = static_cast<float>(std::clamp(noised, 0.0, 1.0));
            }
        }
    }
    return out;
}

// Injects noise into the complement of the entity mask, then builds the
// entry as usual; boundary patches carry noised background pixels through
// the encoder instead of the original background.
inline EntityEntry background_suppressed_entry(const Frame& frame, const PixelMask& entity_mask,
                                               double sigma, std::uint64_t noise_seed,
                                               const EntityId& entity, const std::string& description,
                                               int frame_index, const DescriptorProvider& provider,
                                               const BankConfig& config) {
    NoiseSpec spec;
    spec.sigma = sigma;
    spec.seed = noise_seed;
    spec.region = scene_complement({entity_mask}, entity_mask.height, entity_mask.width);
    const Frame noised = inject_noise(frame, spec);
    return build_entry(noised, entity_mask, entity, description, frame_index, provider, config);
}

// True iff every pixel of patch (gy,gx)'s footprint lies inside the mask.
inline bool footprint_inside(const PixelMask& mask, const MemoryLayout& layout, int vae_stride,
                             int gy, int gx) {
    const int fy = layout.patch_h * vae_stride;
    const int fx = layout.patch_w * vae_stride;
    for (int y = gy * fy; y < (gy + 1) * fy; ++y) {
        for (int x = gx * fx; x < (gx + 1) * fx; ++x) {
            if (!mask.get(y, x)) {
                return false;
            }
        }
    }
    return true;
}

// Selective appearance preservation: drops every patch fully contained in
// the modification region and re-encodes the retained boundary patches from
// a frame with noise injected into that region.
inline EntityEntry attribute_edit_entry(const EntityEntry& entry, const Frame& source_frame,
                                        const PixelMask& entity_mask,
                                        const PixelMask& modification_mask, double sigma,
                                        std::uint64_t noise_seed, const BankConfig& config,
                                        std::vector<std::string>* warnings = nullptr) {
    require_same_dims(entity_mask, modification_mask);
    if (warnings) {
        for (int y = 0; y < modification_mask.height; ++y) {
            for (int x = 0; x < modification_mask.width; ++x) {
                if (modification_mask.get(y, x) && !entity_mask.get(y, x)) {
                    warnings->push_back("modification mask extends outside entity mask");
                    y = modification_mask.height; // one report is enough
                    break;
                }
            }
        }
    }
    if (modification_mask.empty_mask()) {
        return entry;
    }

    NoiseSpec spec;
    spec.sigma = sigma;
    spec.seed = noise_seed;
    spec.region = modification_mask;
    const Frame noised = inject_noise(source_frame, spec);
    const LatentGrid latent =
        vae_encode(noised, config.vae_stride, config.layout.channels, config.seed);

    EntityEntry out = entry;
    out.patches.clear();
    for (const auto& p : entry.patches) {
        if (footprint_inside(modification_mask, config.layout, config.vae_stride, p.gy, p.gx)) {
            continue; // fully inside the modification region
        }
        LatentPatch np = p;
        detail::gather_patch(latent, config.layout, p.gy, p.gx, np.values.data());
        out.patches.push_back(std::move(np));
    }
    if (out.patches.empty()) {
        throw EmptyResult("attribute_edit_entry: edit removes all patches of " + entry.entity.raw);
    }
    return out;
}

} // namespace emvid
