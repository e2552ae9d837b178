#pragma once

// Cross-shot evaluation mathematics: smoothstep gates, silhouette IoU with
// tight-bbox normalization, shot-level subject embeddings, CSC / CSC* with
// the copy-paste penalty, and background-script alignment via Spearman rank
// correlation.

#include "emvid/bank.hpp"
#include "emvid/errors.hpp"
#include "emvid/script.hpp"
#include "emvid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace emvid {

struct PenaltyConfig {
    double alpha1 = 0.88; // identity smoothstep edges
    double alpha2 = 0.96;
    double beta1 = 0.75; // silhouette smoothstep edges
    double beta2 = 0.90;
    int resolution = 64; // silhouette normalization R x R

    void validate() const {
        if (!(alpha1 < alpha2) || !(beta1 < beta2)) {
            throw InvalidEdges("PenaltyConfig: edges must satisfy a < b");
        }
        if (resolution < 8) {
            throw ValidationError("PenaltyConfig: resolution must be >= 8");
        }
    }
};

// Cubic smoothstep: 0 for x <= a, 1 for x >= b, else 3t^2 - 2t^3.
inline double smoothstep(double a, double b, double x) {
    if (!(a < b)) {
        throw InvalidEdges("smoothstep: requires a < b");
    }
    if (x <= a) {
        return 0.0;
    }
    if (x >= b) {
        return 1.0;
    }
    const double t = (x - a) / (b - a);
    return t * t * (3.0 - 2.0 * t);
}

namespace detail {

struct Bbox {
    int y0, x0, y1, x1; // inclusive
};

inline Bbox tight_bbox(const PixelMask& m) {
    Bbox b{m.height, m.width, -1, -1};
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (m.get(y, x)) {
                b.y0 = std::min(b.y0, y);
                b.x0 = std::min(b.x0, x);
                b.y1 = std::max(b.y1, y);
                b.x1 = std::max(b.x1, x);
            }
        }
    }
    return b;
}

// Nearest-neighbor resize of the bbox crop to R x R. Samples at cell
// centers, so integer-ratio rescales are exact.
inline std::vector<std::uint8_t> normalize_silhouette(const PixelMask& m, int R) {
    const Bbox b = tight_bbox(m);
    if (b.y1 < 0) {
        throw EmptyMask("silhouette_iou: empty mask");
    }
    const int bh = b.y1 - b.y0 + 1;
    const int bw = b.x1 - b.x0 + 1;
    std::vector<std::uint8_t> out(static_cast<std::size_t>(R) * R);
    for (int i = 0; i < R; ++i) {
        const int sy = std::min(bh - 1, static_cast<int>((i + 0.5) * bh / R));
        for (int j = 0; j < R; ++j) {
            const int sx = std::min(bw - 1, static_cast<int>((j + 0.5) * bw / R));
            out[static_cast<std::size_t>(i) * R + j] = m.get(b.y0 + sy, b.x0 + sx) ? 1 : 0;
        }
    }
    return out;
}

} // namespace detail

// Silhouette IoU after tight-bbox crop and nearest-neighbor resize to R x R.
inline double silhouette_iou(const PixelMask& m1, const PixelMask& m2, int R) {
    const auto a = detail::normalize_silhouette(m1, R);
    const auto b = detail::normalize_silhouette(m2, R);
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += (a[i] & b[i]);
        uni += (a[i] | b[i]);
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct ShotSubjectObservation {
    EntityId subject;
    int shot = 0;
    std::vector<Frame> frames;    // exactly 4
    std::vector<PixelMask> masks; // exactly 4
    std::vector<float> embedding; // e_{s,i}, unit-norm
};

enum class EmbeddingMode { PatchPooled, MaskedImage };

// Per-frame embeddings averaged across the 4 sampled frames, l2-normalized.
// PatchPooled passes the mask to the provider; MaskedImage zeroes non-subject
// pixels first and embeds against the full-frame mask.
inline std::vector<float> shot_subject_embedding(const std::vector<Frame>& frames,
                                                 const std::vector<PixelMask>& masks,
                                                 const DescriptorProvider& provider,
                                                 EmbeddingMode mode) {
    if (frames.size() != 4 || masks.size() != 4) {
        throw LengthMismatch("shot_subject_embedding: need exactly 4 frame/mask pairs");
    }
    std::vector<float> mean;
    for (std::size_t i = 0; i < 4; ++i) {
        std::vector<float> e;
        if (mode == EmbeddingMode::PatchPooled) {
            e = provider.embed_appearance(frames[i], masks[i]);
        } else {
            if (masks[i].empty_mask()) {
                throw EmptyMask("shot_subject_embedding: empty mask");
            }
            Frame masked = frames[i];
            for (int y = 0; y < masked.height; ++y) {
                for (int x = 0; x < masked.width; ++x) {
                    if (!masks[i].get(y, x)) {
                        for (int c = 0; c < 3; ++c) {
                            masked.at(c, y, x) = 0.0f;
                        }
                    }
                }
            }
            PixelMask full(masked.height, masked.width, true);
            e = provider.embed_appearance(masked, full);
        }
        if (mean.empty()) {
            mean.assign(e.size(), 0.0f);
        }
        for (std::size_t d = 0; d < e.size(); ++d) {
            mean[d] += e[d] / 4.0f;
        }
    }
    l2_normalize(mean);
    return mean;
}

// One matched observation pair (s, i, j), i < j.
struct SubjectPair {
    EntityId subject;
    int shot_i = 0;
    int shot_j = 0;
    std::vector<float> embedding_i;
    std::vector<float> embedding_j;
    const PixelMask* mask_i = nullptr; // union subject mask per shot; CSC* only
    const PixelMask* mask_j = nullptr;
};

inline double csc(const std::vector<SubjectPair>& pairs) {
    if (pairs.empty()) {
        throw EmptyPairSet("csc: no matched pairs");
    }
    double sum = 0.0;
    for (const auto& p : pairs) {
        sum += cosine(p.embedding_i, p.embedding_j);
    }
    return sum / static_cast<double>(pairs.size());
}

inline double duplicate_risk(double cos_sim, double iou, const PenaltyConfig& cfg) {
    return smoothstep(cfg.alpha1, cfg.alpha2, cos_sim) * smoothstep(cfg.beta1, cfg.beta2, iou);
}

// CSC*: mean of cos * (1 - identity_high * silhouette_same) over pairs.
inline double csc_star(const std::vector<SubjectPair>& pairs, const PenaltyConfig& cfg) {
    cfg.validate();
    if (pairs.empty()) {
        throw EmptyPairSet("csc_star: no matched pairs");
    }
    double sum = 0.0;
    for (const auto& p : pairs) {
        if (!p.mask_i || !p.mask_j) {
            throw EmptyMask("csc_star: pair is missing silhouette masks");
        }
        const double cos_sim = cosine(p.embedding_i, p.embedding_j);
        const double iou = silhouette_iou(*p.mask_i, *p.mask_j, cfg.resolution);
        sum += cos_sim * (1.0 - duplicate_risk(cos_sim, iou, cfg));
    }
    return sum / static_cast<double>(pairs.size());
}

// Average ranks (ties share the mean rank), 1-based.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) {
            ++j;
        }
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw DegenerateInput("pearson: constant input sequence");
    }
    return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) {
        throw LengthMismatch("spearman: length mismatch");
    }
    if (xs.size() < 2) {
        throw DegenerateInput("spearman: need at least 2 observations");
    }
    return pearson(average_ranks(xs), average_ranks(ys));
}

struct BackgroundObservation {
    int shot = 0;
    std::vector<float> embedding;            // e_{bg,i}, unit-norm
    std::vector<float> scene_text_embedding; // unit-norm
};

// BGA: Spearman correlation between pairwise visual background similarities
// and pairwise scene-text similarities over the same shot pairs.
inline double bga(const std::vector<BackgroundObservation>& obs) {
    if (obs.size() < 3) {
        throw DegenerateInput("bga: need at least 3 shots");
    }
    std::vector<double> visual, text;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        for (std::size_t j = i + 1; j < obs.size(); ++j) {
            visual.push_back(cosine(obs[i].embedding, obs[j].embedding));
            text.push_back(cosine(obs[i].scene_text_embedding, obs[j].scene_text_embedding));
        }
    }
    return spearman(visual, text);
}

// Frame sampling for shot-level observations: 4 frames at relative positions
// {0, 1/3, 2/3, 1} of the shot, inclusive endpoints.
inline std::vector<int> sample_frame_indices(int frame_count) {
    if (frame_count < 1) {
        throw DegenerateInput("sample_frame_indices: empty shot");
    }
    std::vector<int> out;
    for (int k = 0; k < 4; ++k) {
        out.push_back(static_cast<int>(std::lround(static_cast<double>(k) * (frame_count - 1) / 3.0)));
    }
    return out;
}

} // namespace emvid
