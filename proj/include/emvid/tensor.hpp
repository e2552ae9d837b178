#pragma once

// Dense latent tensors, pixel/patch masks, mask algebra, and the binary
// tensor/mask file formats shared by all modules.
//
// Tensor file: magic "EMVT" | version u16 LE | rank u16 LE | dims u32 LE each
//              | payload IEEE-754 binary32 LE, row-major.
// Mask file:   magic "EMVM" | same header | packed bits row-major, each row
//              padded to a byte boundary.

#include "emvid/errors.hpp"

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace emvid {

inline constexpr std::uint16_t kTensorFormatVersion = 1;

struct Frame {
    int height = 0;
    int width = 0;
    static constexpr int channels = 3;
    std::vector<float> data; // [c][y][x] row-major, values in [0,1]

    Frame() = default;
    Frame(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<std::size_t>(channels) * h * w, fill) {}

    float& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    bool operator==(const Frame&) const = default;
};

struct LatentGrid {
    int channels = 0;
    int height = 0; // latent units
    int width = 0;
    std::vector<float> data; // [c][h][w] row-major

    LatentGrid() = default;
    LatentGrid(int c, int h, int w, float fill = 0.0f)
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    float& at(int c, int h, int w) {
        return data[(static_cast<std::size_t>(c) * height + h) * width + w];
    }
    float at(int c, int h, int w) const {
        return data[(static_cast<std::size_t>(c) * height + h) * width + w];
    }
    bool operator==(const LatentGrid&) const = default;
};

struct MemoryLayout {
    int memory_slots = 0; // M
    int channels = 4;     // C
    int height = 32;      // H, latent units
    int width = 32;       // W
    int patch_h = 2;      // p_h
    int patch_w = 2;      // p_w

    void validate() const {
        if (memory_slots < 0) {
            throw DimensionMismatch("MemoryLayout: memory_slots < 0");
        }
        if (patch_h <= 0 || patch_w <= 0 || height % patch_h != 0 || width % patch_w != 0) {
            throw DimensionMismatch("MemoryLayout: patch size must divide latent dims");
        }
    }

    int grid_h() const { return height / patch_h; }
    int grid_w() const { return width / patch_w; }
    int patches_per_slot() const { return grid_h() * grid_w(); }
    int total_patches() const { return memory_slots * patches_per_slot(); }
    int patch_values() const { return channels * patch_h * patch_w; }

    bool operator==(const MemoryLayout&) const = default;
};

struct PixelMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> bits; // 0/1 per pixel, row-major

    PixelMask() = default;
    PixelMask(int h, int w, bool fill = false)
        : height(h), width(w), bits(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

    bool get(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int y, int x, bool v = true) {
        bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
    }
    std::size_t popcount() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }
    bool empty_mask() const { return popcount() == 0; }
    bool operator==(const PixelMask&) const = default;
};

// Boolean grid over the latent patch grid of a single memory slot.
struct PatchMask {
    int grid_h = 0;
    int grid_w = 0;
    std::vector<std::uint8_t> bits;

    PatchMask() = default;
    PatchMask(int gh, int gw, bool fill = false)
        : grid_h(gh), grid_w(gw), bits(static_cast<std::size_t>(gh) * gw, fill ? 1 : 0) {}

    bool get(int y, int x) const { return bits[static_cast<std::size_t>(y) * grid_w + x] != 0; }
    void set(int y, int x, bool v = true) {
        bits[static_cast<std::size_t>(y) * grid_w + x] = v ? 1 : 0;
    }
    std::size_t popcount() const {
        return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
    }
    bool operator==(const PatchMask&) const = default;
};

// ---------------------------------------------------------------------------
// Mask algebra

inline void require_same_dims(const PixelMask& a, const PixelMask& b) {
    if (a.height != b.height || a.width != b.width) {
        throw DimensionMismatch("mask dimensions differ");
    }
}

inline PixelMask union_masks(const std::vector<PixelMask>& masks) {
    if (masks.empty()) {
        throw DimensionMismatch("union_masks: no masks given");
    }
    PixelMask out = masks.front();
    for (std::size_t i = 1; i < masks.size(); ++i) {
        require_same_dims(out, masks[i]);
        for (std::size_t j = 0; j < out.bits.size(); ++j) {
            out.bits[j] |= masks[i].bits[j];
        }
    }
    return out;
}

// Scene region = complement of the union of all foreground masks.
inline PixelMask scene_complement(const std::vector<PixelMask>& foreground, int height, int width) {
    PixelMask out(height, width, true);
    for (const auto& m : foreground) {
        require_same_dims(out, m);
        for (std::size_t j = 0; j < out.bits.size(); ++j) {
            if (m.bits[j]) {
                out.bits[j] = 0;
            }
        }
    }
    return out;
}

// A patch cell is set iff the fraction of set pixels inside its footprint
// exceeds overlap_threshold. With threshold 0 this is "any overlap".
inline PatchMask downsample_mask(const PixelMask& mask, const MemoryLayout& layout, int vae_stride,
                                 double overlap_threshold) {
    layout.validate();
    if (mask.height != layout.height * vae_stride || mask.width != layout.width * vae_stride) {
        throw DimensionMismatch("downsample_mask: pixel mask does not cover the latent grid");
    }
    const int fy = layout.patch_h * vae_stride;
    const int fx = layout.patch_w * vae_stride;
    PatchMask out(layout.grid_h(), layout.grid_w());
    for (int gy = 0; gy < out.grid_h; ++gy) {
        for (int gx = 0; gx < out.grid_w; ++gx) {
            std::size_t set = 0;
            for (int y = gy * fy; y < (gy + 1) * fy; ++y) {
                for (int x = gx * fx; x < (gx + 1) * fx; ++x) {
                    set += mask.get(y, x) ? 1 : 0;
                }
            }
            const double frac = static_cast<double>(set) / (static_cast<double>(fy) * fx);
            out.set(gy, gx, frac > overlap_threshold);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary file I/O

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xFF));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
}
inline std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    const std::size_t n = std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (n != bytes.size()) {
        throw IoError("short write: " + path.string());
    }
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    if (!f) {
        throw IoError("cannot open for reading: " + path.string());
    }
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
    const std::size_t n = std::fread(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    if (n != bytes.size()) {
        throw IoError("short read: " + path.string());
    }
    return bytes;
}

inline std::vector<std::uint8_t> encode_header(const char magic[4], const std::vector<std::uint32_t>& dims) {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), magic, magic + 4);
    put_u16(buf, kTensorFormatVersion);
    put_u16(buf, static_cast<std::uint16_t>(dims.size()));
    for (auto d : dims) {
        put_u32(buf, d);
    }
    return buf;
}

struct Header {
    std::vector<std::uint32_t> dims;
    std::size_t payload_offset = 0;
};

inline Header decode_header(const std::vector<std::uint8_t>& bytes, const char magic[4],
                            const std::string& what) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), magic, 4) != 0) {
        throw FormatError(what + ": bad magic");
    }
    const std::uint16_t version = get_u16(bytes.data() + 4);
    if (version != kTensorFormatVersion) {
        throw VersionMismatch(what + ": unsupported format version " + std::to_string(version));
    }
    const std::uint16_t rank = get_u16(bytes.data() + 6);
    Header h;
    h.payload_offset = 8 + static_cast<std::size_t>(rank) * 4;
    if (bytes.size() < h.payload_offset) {
        throw FormatError(what + ": truncated header");
    }
    for (std::uint16_t i = 0; i < rank; ++i) {
        h.dims.push_back(get_u32(bytes.data() + 8 + 4 * i));
    }
    return h;
}

inline void append_f32(std::vector<std::uint8_t>& buf, const std::vector<float>& values) {
    for (float v : values) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        put_u32(buf, u);
    }
}

inline std::vector<float> extract_f32(const std::vector<std::uint8_t>& bytes, std::size_t offset,
                                      std::size_t count, const std::string& what) {
    if (bytes.size() < offset + count * 4) {
        throw FormatError(what + ": truncated payload");
    }
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t u = get_u32(bytes.data() + offset + 4 * i);
        std::memcpy(&out[i], &u, 4);
    }
    return out;
}

} // namespace detail

inline void write_tensor(const std::filesystem::path& path, const Frame& frame) {
    auto buf = detail::encode_header("EMVT", {static_cast<std::uint32_t>(Frame::channels),
                                              static_cast<std::uint32_t>(frame.height),
                                              static_cast<std::uint32_t>(frame.width)});
    detail::append_f32(buf, frame.data);
    detail::write_file(path, buf);
}

inline void write_tensor(const std::filesystem::path& path, const LatentGrid& grid) {
    auto buf = detail::encode_header("EMVT", {static_cast<std::uint32_t>(grid.channels),
                                              static_cast<std::uint32_t>(grid.height),
                                              static_cast<std::uint32_t>(grid.width)});
    detail::append_f32(buf, grid.data);
    detail::write_file(path, buf);
}

// A tensor file holds a rank-3 [C,H,W] array; the caller decides whether it
// is a Frame (C=3, pixel space) or a LatentGrid.
inline LatentGrid read_tensor(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    const auto h = detail::decode_header(bytes, "EMVT", "tensor file");
    if (h.dims.size() != 3) {
        throw FormatError("tensor file: expected rank 3, got " + std::to_string(h.dims.size()));
    }
    LatentGrid grid(static_cast<int>(h.dims[0]), static_cast<int>(h.dims[1]),
                    static_cast<int>(h.dims[2]));
    grid.data = detail::extract_f32(bytes, h.payload_offset, grid.data.size(), "tensor file");
    return grid;
}

inline Frame read_frame(const std::filesystem::path& path) {
    const LatentGrid g = read_tensor(path);
    if (g.channels != 3) {
        throw FormatError("frame file: expected 3 channels, got " + std::to_string(g.channels));
    }
    Frame f(g.height, g.width);
    f.data = g.data;
    return f;
}

inline void write_mask(const std::filesystem::path& path, const PixelMask& mask) {
    auto buf = detail::encode_header("EMVM", {static_cast<std::uint32_t>(mask.height),
                                              static_cast<std::uint32_t>(mask.width)});
    const int row_bytes = (mask.width + 7) / 8;
    for (int y = 0; y < mask.height; ++y) {
        for (int b = 0; b < row_bytes; ++b) {
            std::uint8_t byte = 0;
            for (int i = 0; i < 8; ++i) {
                const int x = b * 8 + i;
                if (x < mask.width && mask.get(y, x)) {
                    byte |= static_cast<std::uint8_t>(1 << i);
                }
            }
            buf.push_back(byte);
        }
    }
    detail::write_file(path, buf);
}

inline PixelMask read_mask(const std::filesystem::path& path) {
    const auto bytes = detail::read_file(path);
    const auto h = detail::decode_header(bytes, "EMVM", "mask file");
    if (h.dims.size() != 2) {
        throw FormatError("mask file: expected rank 2");
    }
    PixelMask mask(static_cast<int>(h.dims[0]), static_cast<int>(h.dims[1]));
    const int row_bytes = (mask.width + 7) / 8;
    if (bytes.size() < h.payload_offset + static_cast<std::size_t>(row_bytes) * mask.height) {
        throw FormatError("mask file: truncated payload");
    }
    for (int y = 0; y < mask.height; ++y) {
        const std::uint8_t* row = bytes.data() + h.payload_offset + static_cast<std::size_t>(y) * row_bytes;
        for (int x = 0; x < mask.width; ++x) {
            mask.set(y, x, (row[x / 8] >> (x % 8)) & 1);
        }
    }
    return mask;
}

} // namespace emvid
