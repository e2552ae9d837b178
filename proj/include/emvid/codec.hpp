#pragma once

// Deterministic stand-ins for the VAE and the patchify/unpatchify projection.
// Both are single fixed seeded linear maps, so they keep the locality property
// the sparse pipeline depends on: a latent cell influences exactly one token
// and a pixel influences exactly one latent cell.

#include "emvid/errors.hpp"
#include "emvid/prng.hpp"
#include "emvid/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace emvid {

struct ProjectionSeed {
    std::uint64_t seed = 0x5EEDC0DEULL;
    bool operator==(const ProjectionSeed&) const = default;
};

// Token sequence of a patchified set of memory slots, canonical row-major
// slot-major ordering: (slot, patch-row, patch-col).
struct TokenGrid {
    MemoryLayout layout;
    int dim = 0; // D, embedding width
    std::vector<float> values; // token count x dim

    TokenGrid() = default;
    TokenGrid(const MemoryLayout& l, int d)
        : layout(l), dim(d),
          values(static_cast<std::size_t>(l.total_patches()) * d, 0.0f) {}

    int token_count() const { return layout.total_patches(); }
    float* token(int idx) { return values.data() + static_cast<std::size_t>(idx) * dim; }
    const float* token(int idx) const { return values.data() + static_cast<std::size_t>(idx) * dim; }
    bool operator==(const TokenGrid&) const = default;
};

namespace detail {

// Seeded Gaussian matrix with orthonormalized columns (modified Gram-Schmidt
// in double precision). rows >= cols required.
inline std::vector<double> orthonormal_columns(int rows, int cols, std::uint64_t seed) {
    SplitMix64 rng(seed);
    std::vector<double> m(static_cast<std::size_t>(rows) * cols);
    for (auto& v : m) {
        v = rng.next_gaussian();
    }
    for (int c = 0; c < cols; ++c) {
        for (int prev = 0; prev < c; ++prev) {
            double dot = 0.0;
            for (int r = 0; r < rows; ++r) {
                dot += m[static_cast<std::size_t>(r) * cols + c] * m[static_cast<std::size_t>(r) * cols + prev];
            }
            for (int r = 0; r < rows; ++r) {
                m[static_cast<std::size_t>(r) * cols + c] -= dot * m[static_cast<std::size_t>(r) * cols + prev];
            }
        }
        double norm = 0.0;
        for (int r = 0; r < rows; ++r) {
            norm += m[static_cast<std::size_t>(r) * cols + c] * m[static_cast<std::size_t>(r) * cols + c];
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            // Degenerate draw; reseed this column.
            for (int r = 0; r < rows; ++r) {
                m[static_cast<std::size_t>(r) * cols + c] = rng.next_gaussian();
            }
            --c;
            continue;
        }
        for (int r = 0; r < rows; ++r) {
            m[static_cast<std::size_t>(r) * cols + c] /= norm;
        }
    }
    return m;
}

} // namespace detail

// The fixed VAE projection: C x 3 matrix with orthonormal columns, so the
// transpose is an exact left inverse on the range.
class VaeMap {
public:
    VaeMap(int latent_channels, std::uint64_t seed)
        : channels_(latent_channels),
          m_(detail::orthonormal_columns(latent_channels, 3, derive_seed(seed, 0x7AE))) {}

    int channels() const { return channels_; }

    // block_means: 3 values -> latent: C values
    void forward(const double block_means[3], float* latent_out) const {
        for (int c = 0; c < channels_; ++c) {
            double acc = 0.0;
            for (int i = 0; i < 3; ++i) {
                acc += m_[static_cast<std::size_t>(c) * 3 + i] * block_means[i];
            }
            latent_out[c] = static_cast<float>(acc);
        }
    }

    // latent: C values -> block means: 3 values
    void backward(const float* latent, double block_means_out[3]) const {
        for (int i = 0; i < 3; ++i) {
            double acc = 0.0;
            for (int c = 0; c < channels_; ++c) {
                acc += m_[static_cast<std::size_t>(c) * 3 + i] * latent[c];
            }
            block_means_out[i] = acc;
        }
    }

private:
    int channels_;
    std::vector<double> m_;
};

// Block average per input channel followed by the fixed seeded linear map.
// Latent cell (h,w) depends only on the stride x stride pixel block at (h,w).
inline LatentGrid vae_encode(const Frame& frame, int stride, int latent_channels,
                             const ProjectionSeed& seed) {
    if (stride <= 0 || frame.height % stride != 0 || frame.width % stride != 0) {
        throw DimensionMismatch("vae_encode: frame dims not divisible by stride");
    }
    if (latent_channels < 3) {
        throw DimensionMismatch("vae_encode: need at least 3 latent channels");
    }
    const VaeMap map(latent_channels, seed.seed);
    const int H = frame.height / stride;
    const int W = frame.width / stride;
    LatentGrid latent(latent_channels, H, W);
    std::vector<float> cell(static_cast<std::size_t>(latent_channels));
    const double inv_block = 1.0 / (static_cast<double>(stride) * stride);
    for (int h = 0; h < H; ++h) {
        for (int w = 0; w < W; ++w) {
            double means[3] = {0.0, 0.0, 0.0};
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int y = h * stride; y < (h + 1) * stride; ++y) {
                    for (int x = w * stride; x < (w + 1) * stride; ++x) {
                        acc += frame.at(c, y, x);
                    }
                }
                means[c] = acc * inv_block;
            }
            map.forward(means, cell.data());
            for (int c = 0; c < latent_channels; ++c) {
                latent.at(c, h, w) = cell[c];
            }
        }
    }
    return latent;
}

// Pseudo-inverse of vae_encode: reproduces per-block means, upsampled by
// nearest neighbor.
inline Frame vae_decode(const LatentGrid& latent, int stride, const ProjectionSeed& seed) {
    if (stride <= 0) {
        throw DimensionMismatch("vae_decode: bad stride");
    }
    const VaeMap map(latent.channels, seed.seed);
    Frame frame(latent.height * stride, latent.width * stride);
    std::vector<float> cell(static_cast<std::size_t>(latent.channels));
    for (int h = 0; h < latent.height; ++h) {
        for (int w = 0; w < latent.width; ++w) {
            for (int c = 0; c < latent.channels; ++c) {
                cell[c] = latent.at(c, h, w);
            }
            double means[3];
            map.backward(cell.data(), means);
            for (int c = 0; c < 3; ++c) {
                const float v = static_cast<float>(means[c]);
                for (int y = h * stride; y < (h + 1) * stride; ++y) {
                    for (int x = w * stride; x < (w + 1) * stride; ++x) {
                        frame.at(c, y, x) = v;
                    }
                }
            }
        }
    }
    return frame;
}

// The fixed patchify projection: D x D orthonormal matrix with
// D = C * p_h * p_w, invertible by construction.
class PatchifyMap {
public:
    PatchifyMap(const MemoryLayout& layout, std::uint64_t seed)
        : dim_(layout.patch_values()),
          w_(detail::orthonormal_columns(dim_, dim_, derive_seed(seed, 0x9A7C4))) {}

    int dim() const { return dim_; }

    // in/out: dim_ values. Fixed accumulation order; the sparse and dense
    // routes share this exact code path, which is what makes them bit-equal.
    void forward(const float* patch_values, float* token_out) const {
        for (int r = 0; r < dim_; ++r) {
            double acc = 0.0;
            for (int c = 0; c < dim_; ++c) {
                acc += w_[static_cast<std::size_t>(r) * dim_ + c] * patch_values[c];
            }
            token_out[r] = static_cast<float>(acc);
        }
    }

    void backward(const float* token, float* patch_values_out) const {
        for (int c = 0; c < dim_; ++c) {
            double acc = 0.0;
            for (int r = 0; r < dim_; ++r) {
                acc += w_[static_cast<std::size_t>(r) * dim_ + c] * token[r];
            }
            patch_values_out[c] = static_cast<float>(acc);
        }
    }

private:
    int dim_;
    std::vector<double> w_;
};

namespace detail {

// Gathers the C x p_h x p_w values of patch (gy,gx) in canonical order.
inline void gather_patch(const LatentGrid& grid, const MemoryLayout& layout, int gy, int gx,
                         float* out) {
    int i = 0;
    for (int c = 0; c < layout.channels; ++c) {
        for (int py = 0; py < layout.patch_h; ++py) {
            for (int px = 0; px < layout.patch_w; ++px) {
                out[i++] = grid.at(c, gy * layout.patch_h + py, gx * layout.patch_w + px);
            }
        }
    }
}

inline void scatter_patch(LatentGrid& grid, const MemoryLayout& layout, int gy, int gx,
                          const float* values) {
    int i = 0;
    for (int c = 0; c < layout.channels; ++c) {
        for (int py = 0; py < layout.patch_h; ++py) {
            for (int px = 0; px < layout.patch_w; ++px) {
                grid.at(c, gy * layout.patch_h + py, gx * layout.patch_w + px) = values[i++];
            }
        }
    }
}

} // namespace detail

inline TokenGrid patchify(const std::vector<LatentGrid>& slots, const MemoryLayout& layout,
                          const ProjectionSeed& seed) {
    layout.validate();
    if (static_cast<int>(slots.size()) != layout.memory_slots) {
        throw DimensionMismatch("patchify: slot count does not match layout");
    }
    for (const auto& s : slots) {
        if (s.channels != layout.channels || s.height != layout.height || s.width != layout.width) {
            throw DimensionMismatch("patchify: slot dims do not match layout");
        }
    }
    const PatchifyMap map(layout, seed.seed);
    TokenGrid tokens(layout, map.dim());
    std::vector<float> patch(static_cast<std::size_t>(map.dim()));
    int idx = 0;
    for (int slot = 0; slot < layout.memory_slots; ++slot) {
        for (int gy = 0; gy < layout.grid_h(); ++gy) {
            for (int gx = 0; gx < layout.grid_w(); ++gx) {
                detail::gather_patch(slots[slot], layout, gy, gx, patch.data());
                map.forward(patch.data(), tokens.token(idx));
                ++idx;
            }
        }
    }
    return tokens;
}

// Sparse set of latent patches with (slot, grid coordinate) addressing.
struct PatchItem {
    int slot = 0;   // memory-frame slot index
    int gy = 0;     // patch-grid row
    int gx = 0;     // patch-grid col
    std::vector<float> values; // C * p_h * p_w, canonical gather order
    bool operator==(const PatchItem&) const = default;
};

struct PatchSet {
    MemoryLayout layout;
    std::vector<PatchItem> items;
    bool operator==(const PatchSet&) const = default;
};

struct SparseToken {
    int position = 0; // canonical token index
    std::vector<float> values;
    bool operator==(const SparseToken&) const = default;
};

inline int token_index(const MemoryLayout& layout, int slot, int gy, int gx) {
    return (slot * layout.grid_h() + gy) * layout.grid_w() + gx;
}

// Applies the patchify map per stored patch without constructing the dense
// grid. Shares PatchifyMap::forward with the dense route, so for the
// single-layer non-overlapping patchify the two routes are bit-equal.
inline std::vector<SparseToken> sparse_patchify_direct(const PatchSet& patches,
                                                       const MemoryLayout& layout,
                                                       const ProjectionSeed& seed) {
    layout.validate();
    const PatchifyMap map(layout, seed.seed);
    std::vector<SparseToken> out;
    out.reserve(patches.items.size());
    for (const auto& item : patches.items) {
        if (item.slot < 0 || item.slot >= layout.memory_slots || item.gy < 0 ||
            item.gy >= layout.grid_h() || item.gx < 0 || item.gx >= layout.grid_w()) {
            throw CoordinateOutOfRange("sparse_patchify_direct: patch outside layout");
        }
        if (static_cast<int>(item.values.size()) != map.dim()) {
            throw DimensionMismatch("sparse_patchify_direct: bad patch value count");
        }
        SparseToken tok;
        tok.position = token_index(layout, item.slot, item.gy, item.gx);
        tok.values.resize(static_cast<std::size_t>(map.dim()));
        map.forward(item.values.data(), tok.values.data());
        out.push_back(std::move(tok));
    }
    // canonical position order, independent of item order in the PatchSet
    std::sort(out.begin(), out.end(),
              [](const SparseToken& a, const SparseToken& b) { return a.position < b.position; });
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i].position == out[i - 1].position) {
            throw DuplicateCoordinate("sparse_patchify_direct: duplicate patch coordinate");
        }
    }
    return out;
}

inline std::vector<LatentGrid> unpatchify(const TokenGrid& tokens, const MemoryLayout& layout,
                                          const ProjectionSeed& seed) {
    layout.validate();
    const PatchifyMap map(layout, seed.seed);
    if (tokens.dim != map.dim() || tokens.token_count() != layout.total_patches()) {
        throw DimensionMismatch("unpatchify: token grid does not match layout");
    }
    std::vector<LatentGrid> slots(static_cast<std::size_t>(layout.memory_slots),
                                  LatentGrid(layout.channels, layout.height, layout.width));
    std::vector<float> patch(static_cast<std::size_t>(map.dim()));
    int idx = 0;
    for (int slot = 0; slot < layout.memory_slots; ++slot) {
        for (int gy = 0; gy < layout.grid_h(); ++gy) {
            for (int gx = 0; gx < layout.grid_w(); ++gx) {
                map.backward(tokens.token(idx), patch.data());
                detail::scatter_patch(slots[slot], layout, gy, gx, patch.data());
                ++idx;
            }
        }
    }
    return slots;
}

} // namespace emvid
