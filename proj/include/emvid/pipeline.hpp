#pragma once

// End-to-end orchestration: ingest a script and reference assets, run the
// multi-shot loop with the mock generator, update the bank per shot, and
// emit cost/metrics reports and bank snapshots.
//
// Run directory layout:
//   config.json              resolved RunConfig
//   script.json              parsed script, reserialized
//   bank.emvb                final bank snapshot
//   shots/shot_NNN/          frame_KKK.emvt, mask_<ID>.emvm, background.emvm,
//                            latent_target.emvt, cost.txt, decisions.txt
//   reports/                 cost_report.csv, metrics_report.csv,
//                            metrics_pairs.csv

#include "emvid/bank.hpp"
#include "emvid/codec.hpp"
#include "emvid/conditioning.hpp"
#include "emvid/errors.hpp"
#include "emvid/metrics.hpp"
#include "emvid/noise.hpp"
#include "emvid/script.hpp"
#include "emvid/tensor.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace emvid {

struct ReferenceAsset {
    std::string frame_path;
    std::string mask_path;
    std::string entity; // raw id
};

struct RunConfig {
    BankConfig bank;
    int steps_per_shot = 2;
    int frames_per_shot = 4;
    int keyframes_per_shot = 2;
    int update_every = 1; // update the bank after every N-th shot
    double noise_sigma = 0.25;
    std::uint64_t run_seed = 1;
    std::vector<ReferenceAsset> references;
    std::string script_path;
    std::string output_dir;

    void validate() const {
        bank.validate();
        if (steps_per_shot < 0 || frames_per_shot < 1 || keyframes_per_shot < 1 ||
            update_every < 1) {
            throw ValidationError("RunConfig: counts must be >= 1");
        }
        if (keyframes_per_shot > frames_per_shot) {
            throw InvalidK("RunConfig: keyframes_per_shot > frames_per_shot");
        }
    }

    int frame_height() const { return bank.layout.height * bank.vae_stride; }
    int frame_width() const { return bank.layout.width * bank.vae_stride; }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
    nlohmann::json refs = nlohmann::json::array();
    for (const auto& r : c.references) {
        refs.push_back({{"frame", r.frame_path}, {"mask", r.mask_path}, {"entity", r.entity}});
    }
    return {{"bank", detail::bank_config_to_json(c.bank)},
            {"steps_per_shot", c.steps_per_shot},
            {"frames_per_shot", c.frames_per_shot},
            {"keyframes_per_shot", c.keyframes_per_shot},
            {"update_every", c.update_every},
            {"noise_sigma", c.noise_sigma},
            {"run_seed", c.run_seed},
            {"references", refs},
            {"script", c.script_path},
            {"output_dir", c.output_dir}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    c.bank = detail::bank_config_from_json(j.at("bank"));
    c.steps_per_shot = j.at("steps_per_shot").get<int>();
    c.frames_per_shot = j.at("frames_per_shot").get<int>();
    c.keyframes_per_shot = j.at("keyframes_per_shot").get<int>();
    c.update_every = j.value("update_every", 1);
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.run_seed = j.at("run_seed").get<std::uint64_t>();
    if (j.contains("references")) {
        for (const auto& jr : j.at("references")) {
            c.references.push_back({jr.at("frame").get<std::string>(),
                                    jr.at("mask").get<std::string>(),
                                    jr.at("entity").get<std::string>()});
        }
    }
    c.script_path = j.value("script", "");
    c.output_dir = j.value("output_dir", "");
    return c;
}

struct BankDecision {
    std::string entity;
    int keyframe = 0;
    AcceptDecision decision = AcceptDecision::AcceptedEmpty;
    std::vector<int> evicted;
};

struct ShotResult {
    int shot_num = 0;
    std::vector<LatentGrid> target_latents;
    std::vector<Frame> frames;
    std::map<std::string, PixelMask> entity_masks; // per referenced subject entity
    PixelMask background_mask;
    std::vector<int> keyframes;
    std::vector<BankDecision> decisions;
    CostReport cost;
};

struct SynthesizedShot {
    std::vector<Frame> frames;
    std::map<std::string, PixelMask> entity_masks;
};

namespace detail {

// Smooth per-scene background: two seeded color anchors blended along a
// seeded diagonal direction.
inline Frame scene_background(int height, int width, std::uint64_t scene_seed) {
    SplitMix64 rng(scene_seed);
    float c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = static_cast<float>(0.2 + 0.6 * rng.next_double());
        c1[c] = static_cast<float>(0.2 + 0.6 * rng.next_double());
    }
    const double ang = rng.next_double() * 6.283185307179586;
    const double dx = std::cos(ang), dy = std::sin(ang);
    Frame out(height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double t = 0.5 + 0.5 * (dx * (2.0 * x / width - 1.0) + dy * (2.0 * y / height - 1.0));
            for (int c = 0; c < 3; ++c) {
                out.at(c, y, x) = static_cast<float>(c0[c] * (1.0 - t) + c1[c] * t);
            }
        }
    }
    return out;
}

} // namespace detail

// Deterministic stand-in for shot generation: decodes each retrieved
// entity's first entry onto a scene-hashed background with per-shot jitter
// (translation within +/-2 patches). Exists to drive the update loop and
// metrics, not to produce plausible video.
inline SynthesizedShot mock_shot_synthesizer(const Shot& shot, const RetrievedMemory& retrieved,
                                             const StoryScript& script, const RunConfig& config,
                                             std::uint64_t seed) {
    const MemoryLayout& layout = config.bank.layout;
    const int stride = config.bank.vae_stride;
    const int fh = config.frame_height();
    const int fw = config.frame_width();

    // Background keyed by the first referenced scene's description.
    std::string scene_key = shot.natural_prompt;
    for (const auto& id : extract_entity_refs(shot.abstract_prompt)) {
        if (id.category == EntityCategory::Scene) {
            if (const auto* decl = script.find(id)) {
                scene_key = decl->short_description;
                break;
            }
        }
    }
    const Frame background = detail::scene_background(fh, fw, hash64(scene_key));

    SynthesizedShot out;
    SplitMix64 jitter_rng(derive_seed(seed, static_cast<std::uint64_t>(shot.shot_num)));

    Frame canvas = background;
    // First entry slot of each subject entity, in slot order.
    std::map<std::string, int> first_slot;
    for (std::size_t s = 0; s < retrieved.slot_sources.size(); ++s) {
        const auto& [id, entry_index] = retrieved.slot_sources[s];
        if (id.category == EntityCategory::Scene || entry_index != 0) {
            continue;
        }
        first_slot.emplace(id.raw, static_cast<int>(s));
    }
    for (const auto& [raw, slot] : first_slot) {
        const int jx = static_cast<int>(jitter_rng.next_u64() % 5) - 2; // patches
        const int jy = static_cast<int>(jitter_rng.next_u64() % 5) - 2;

        LatentGrid latent(layout.channels, layout.height, layout.width);
        PatchMask pm(layout.grid_h(), layout.grid_w());
        for (const auto& item : retrieved.patches.items) {
            if (item.slot != slot) {
                continue;
            }
            detail::scatter_patch(latent, layout, item.gy, item.gx, item.values.data());
            pm.set(item.gy, item.gx);
        }
        const Frame decoded = vae_decode(latent, stride, config.bank.seed);

        PixelMask mask(fh, fw);
        const int fy = layout.patch_h * stride;
        const int fx = layout.patch_w * stride;
        for (int gy = 0; gy < pm.grid_h; ++gy) {
            for (int gx = 0; gx < pm.grid_w; ++gx) {
                if (!pm.get(gy, gx)) {
                    continue;
                }
                const int ty = gy + jy;
                const int tx = gx + jx;
                if (ty < 0 || ty >= pm.grid_h || tx < 0 || tx >= pm.grid_w) {
                    continue;
                }
                for (int y = 0; y < fy; ++y) {
                    for (int x = 0; x < fx; ++x) {
                        for (int c = 0; c < 3; ++c) {
                            canvas.at(c, ty * fy + y, tx * fx + x) = decoded.at(c, gy * fy + y, gx * fx + x);
                        }
                        mask.set(ty * fy + y, tx * fx + x);
                    }
                }
            }
        }
        out.entity_masks.emplace(raw, std::move(mask));
    }

    out.frames.assign(static_cast<std::size_t>(config.frames_per_shot), canvas);
    return out;
}

// Discrete-Laplacian variance over the luma channel, a sharpness proxy.
inline double laplacian_variance(const Frame& frame) {
    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (int y = 1; y + 1 < frame.height; ++y) {
        for (int x = 1; x + 1 < frame.width; ++x) {
            double lum_c = 0.0, lum_u = 0.0, lum_d = 0.0, lum_l = 0.0, lum_r = 0.0;
            for (int c = 0; c < 3; ++c) {
                lum_c += frame.at(c, y, x);
                lum_u += frame.at(c, y - 1, x);
                lum_d += frame.at(c, y + 1, x);
                lum_l += frame.at(c, y, x - 1);
                lum_r += frame.at(c, y, x + 1);
            }
            const double lap = lum_u + lum_d + lum_l + lum_r - 4.0 * lum_c;
            sum += lap;
            sumsq += lap * lap;
            ++n;
        }
    }
    if (n == 0) {
        return 0.0;
    }
    const double mean = sum / static_cast<double>(n);
    return sumsq / static_cast<double>(n) - mean * mean;
}

// Top-k frame indices by scorer, ties broken by lower index.
template <typename Scorer>
std::vector<int> select_keyframes(const std::vector<Frame>& frames, Scorer&& scorer, int k) {
    if (k < 1 || k > static_cast<int>(frames.size())) {
        throw InvalidK("select_keyframes: k out of range");
    }
    std::vector<std::pair<double, int>> scored;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        scored.emplace_back(scorer(frames[i]), static_cast<int>(i));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first > b.first;
        }
        return a.second < b.second;
    });
    std::vector<int> out;
    for (int i = 0; i < k; ++i) {
        out.push_back(scored[i].second);
    }
    return out;
}

inline std::vector<int> select_keyframes(const std::vector<Frame>& frames, int k) {
    return select_keyframes(frames, laplacian_variance, k);
}

struct MetricsReport {
    double csc_patch = 0.0;
    double csc_star_patch = 0.0;
    double csc_masked = 0.0;
    double csc_star_masked = 0.0;
    int pair_count = 0;
    double bga_value = 0.0;
    bool bga_degenerate = true;
    struct PairRow {
        std::string subject;
        int shot_i = 0;
        int shot_j = 0;
        double cos_patch = 0.0;
        double cos_masked = 0.0;
        double iou = 0.0;
        double risk_patch = 0.0;
    };
    std::vector<PairRow> pairs;
};

struct StoryRun {
    EntityBank bank;
    std::vector<ShotResult> shots;
    MetricsReport metrics;
    CostReport aggregate_cost;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) {
        throw IoError("cannot open for writing: " + path.string());
    }
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
}

} // namespace detail

// Computes CSC/CSC*/BGA over per-shot frames and masks. Observations use the
// 4-point frame sampling; shots where a subject has no mask are skipped for
// that subject.
inline MetricsReport compute_metrics(const StoryScript& script,
                                     const std::vector<ShotResult>& shots,
                                     const PenaltyConfig& penalty = PenaltyConfig{}) {
    const SyntheticProvider provider;
    MetricsReport report;

    struct Obs {
        int shot;
        std::vector<float> e_patch;
        std::vector<float> e_masked;
        const PixelMask* mask;
    };
    std::map<std::string, std::vector<Obs>> per_subject;

    for (const auto& shot : shots) {
        if (shot.frames.empty()) {
            continue;
        }
        const auto indices = sample_frame_indices(static_cast<int>(shot.frames.size()));
        for (const auto& [raw, mask] : shot.entity_masks) {
            if (mask.empty_mask()) {
                continue;
            }
            std::vector<Frame> frames;
            std::vector<PixelMask> masks;
            for (int idx : indices) {
                frames.push_back(shot.frames[static_cast<std::size_t>(idx)]);
                masks.push_back(mask);
            }
            Obs obs;
            obs.shot = shot.shot_num;
            obs.e_patch = shot_subject_embedding(frames, masks, provider, EmbeddingMode::PatchPooled);
            obs.e_masked = shot_subject_embedding(frames, masks, provider, EmbeddingMode::MaskedImage);
            obs.mask = &mask;
            per_subject[raw].push_back(std::move(obs));
        }
    }

    std::vector<SubjectPair> pairs_patch, pairs_masked;
    for (const auto& [raw, obs] : per_subject) {
        const auto id = parse_entity_id(raw);
        for (std::size_t i = 0; i < obs.size(); ++i) {
            for (std::size_t j = i + 1; j < obs.size(); ++j) {
                SubjectPair p;
                p.subject = id.value_or(EntityId{});
                p.shot_i = obs[i].shot;
                p.shot_j = obs[j].shot;
                p.mask_i = obs[i].mask;
                p.mask_j = obs[j].mask;
                p.embedding_i = obs[i].e_patch;
                p.embedding_j = obs[j].e_patch;
                pairs_patch.push_back(p);
                p.embedding_i = obs[i].e_masked;
                p.embedding_j = obs[j].e_masked;
                pairs_masked.push_back(std::move(p));
            }
        }
    }

    report.pair_count = static_cast<int>(pairs_patch.size());
    if (!pairs_patch.empty()) {
        report.csc_patch = csc(pairs_patch);
        report.csc_star_patch = csc_star(pairs_patch, penalty);
        report.csc_masked = csc(pairs_masked);
        report.csc_star_masked = csc_star(pairs_masked, penalty);
        for (std::size_t i = 0; i < pairs_patch.size(); ++i) {
            MetricsReport::PairRow row;
            row.subject = pairs_patch[i].subject.raw;
            row.shot_i = pairs_patch[i].shot_i;
            row.shot_j = pairs_patch[i].shot_j;
            row.cos_patch = cosine(pairs_patch[i].embedding_i, pairs_patch[i].embedding_j);
            row.cos_masked = cosine(pairs_masked[i].embedding_i, pairs_masked[i].embedding_j);
            row.iou = silhouette_iou(*pairs_patch[i].mask_i, *pairs_patch[i].mask_j,
                                     penalty.resolution);
            row.risk_patch = duplicate_risk(row.cos_patch, row.iou, penalty);
            report.pairs.push_back(std::move(row));
        }
    }

    // Background-script alignment over shots with a non-empty background.
    std::vector<BackgroundObservation> bg;
    for (const auto& shot : shots) {
        if (shot.frames.empty() || shot.background_mask.empty_mask()) {
            continue;
        }
        std::string scene_text = "";
        if (shot.shot_num >= 1 && shot.shot_num <= static_cast<int>(script.shots.size())) {
            const auto& s = script.shots[static_cast<std::size_t>(shot.shot_num - 1)];
            scene_text = s.natural_prompt;
            for (const auto& id : extract_entity_refs(s.abstract_prompt)) {
                if (id.category == EntityCategory::Scene) {
                    if (const auto* decl = script.find(id)) {
                        scene_text = decl->short_description;
                        break;
                    }
                }
            }
        }
        BackgroundObservation obs;
        obs.shot = shot.shot_num;
        const auto indices = sample_frame_indices(static_cast<int>(shot.frames.size()));
        std::vector<Frame> frames;
        std::vector<PixelMask> masks;
        for (int idx : indices) {
            frames.push_back(shot.frames[static_cast<std::size_t>(idx)]);
            masks.push_back(shot.background_mask);
        }
        obs.embedding = shot_subject_embedding(frames, masks, provider, EmbeddingMode::PatchPooled);
        obs.scene_text_embedding = SyntheticProvider::embed_text(scene_text);
        bg.push_back(std::move(obs));
    }
    if (bg.size() >= 3) {
        try {
            report.bga_value = bga(bg);
            report.bga_degenerate = false;
        } catch (const DegenerateInput&) {
            report.bga_degenerate = true;
        }
    }
    return report;
}

// Writes per-shot and aggregate tables with deterministic ordering.
inline void emit_reports(const std::vector<ShotResult>& shots, const MetricsReport& metrics,
                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::string cost_csv = "shot,tokens_full,tokens_kept,reduction,attention_ops_full,"
                           "attention_ops_kept,steps\n";
    CostReport agg;
    for (const auto& s : shots) {
        cost_csv += std::to_string(s.shot_num) + "," + std::to_string(s.cost.tokens_full) + "," +
                    std::to_string(s.cost.tokens_kept) + "," +
                    detail::format_double(s.cost.reduction()) + "," +
                    std::to_string(s.cost.attention_ops_full) + "," +
                    std::to_string(s.cost.attention_ops_kept) + "," +
                    std::to_string(s.cost.steps) + "\n";
        agg.tokens_full += s.cost.tokens_full;
        agg.tokens_kept += s.cost.tokens_kept;
        agg.attention_ops_full += s.cost.attention_ops_full;
        agg.attention_ops_kept += s.cost.attention_ops_kept;
    }
    cost_csv += "total," + std::to_string(agg.tokens_full) + "," + std::to_string(agg.tokens_kept) +
                "," + detail::format_double(agg.reduction()) + "," +
                std::to_string(agg.attention_ops_full) + "," +
                std::to_string(agg.attention_ops_kept) + ",\n";
    detail::write_text(dir / "cost_report.csv", cost_csv);

    std::string summary = "metric,value\n";
    summary += "csc_patch," + detail::format_double(metrics.csc_patch) + "\n";
    summary += "csc_star_patch," + detail::format_double(metrics.csc_star_patch) + "\n";
    summary += "csc_masked," + detail::format_double(metrics.csc_masked) + "\n";
    summary += "csc_star_masked," + detail::format_double(metrics.csc_star_masked) + "\n";
    summary += "pair_count," + std::to_string(metrics.pair_count) + "\n";
    summary += "bga," + (metrics.bga_degenerate ? std::string("degenerate")
                                                : detail::format_double(metrics.bga_value)) + "\n";
    detail::write_text(dir / "metrics_report.csv", summary);

    std::string pairs_csv = "subject,shot_i,shot_j,cos_patch,cos_masked,iou,duplicate_risk\n";
    for (const auto& row : metrics.pairs) {
        pairs_csv += row.subject + "," + std::to_string(row.shot_i) + "," +
                     std::to_string(row.shot_j) + "," + detail::format_double(row.cos_patch) + "," +
                     detail::format_double(row.cos_masked) + "," + detail::format_double(row.iou) +
                     "," + detail::format_double(row.risk_patch) + "\n";
    }
    detail::write_text(dir / "metrics_pairs.csv", pairs_csv);
}

// Seeds the bank from the config's reference assets.
inline EntityBank init_bank(const StoryScript& script, const RunConfig& config) {
    config.validate();
    EntityBank bank;
    bank.config = config.bank;
    const SyntheticProvider provider;
    int frame_index = 0;
    for (const auto& ref : config.references) {
        const auto id = parse_entity_id(ref.entity);
        if (!id) {
            throw ValidationError("init_bank: malformed entity id " + ref.entity);
        }
        const auto* decl = script.find(*id);
        if (!decl) {
            throw UnknownEntity("init_bank: entity not declared in script: " + ref.entity);
        }
        const Frame frame = read_frame(ref.frame_path);
        const PixelMask mask = read_mask(ref.mask_path);
        EntityEntry entry;
        if (id->category == EntityCategory::Scene) {
            entry = build_entry(frame, mask, *id, decl->short_description, frame_index, provider,
                                bank.config);
        } else {
            entry = background_suppressed_entry(frame, mask, config.noise_sigma,
                                                derive_seed(config.run_seed, hash64(ref.entity)),
                                                *id, decl->short_description, frame_index,
                                                provider, bank.config);
        }
        entry.origin.kind = EntryOrigin::Kind::UserReference;
        accept_candidate(bank, std::move(entry), bank.config);
        enforce_budget(bank, *id);
        ++frame_index;
    }
    return bank;
}

// The multi-shot loop: retrieve, condition, denoise, synthesize, select
// keyframes, update the bank, account costs; metrics over all shots at the
// end. Stage errors abort with the shot number and stage named.
inline StoryRun run_story(const StoryScript& script, const RunConfig& config) {
    config.validate();
    StoryRun run;
    run.bank = init_bank(script, config);
    const SyntheticProvider provider;

    int global_frame_index = 1000; // generated frames; references occupy low ids
    for (const auto& shot : script.shots) {
        auto stage_fail = [&](const std::string& stage, const std::exception& e) -> Error {
            return Error("shot " + std::to_string(shot.shot_num) + ", stage " + stage + ": " +
                         e.what());
        };
        ShotResult result;
        result.shot_num = shot.shot_num;
        try {
            const auto refs = extract_entity_refs(shot.abstract_prompt);
            RetrievedMemory retrieved = retrieve_memory(run.bank, refs);

            MemoryLayout target_layout = config.bank.layout;
            target_layout.memory_slots = 1;
            ConditioningState state =
                make_conditioning(retrieved.patches, target_layout, config.bank.seed,
                                  derive_seed(config.run_seed, 0x5107 + shot.shot_num));
            result.cost = cost_report(retrieved.patches.layout, state.token_mask,
                                      target_layout.total_patches(), config.steps_per_shot);
            result.target_latents = denoise_shot(state, config.steps_per_shot, config.bank.seed);

            SynthesizedShot synth =
                mock_shot_synthesizer(shot, retrieved, script, config, config.run_seed);
            result.frames = std::move(synth.frames);
            result.entity_masks = std::move(synth.entity_masks);
            {
                std::vector<PixelMask> fg;
                for (const auto& [raw, m] : result.entity_masks) {
                    fg.push_back(m);
                }
                result.background_mask =
                    scene_complement(fg, config.frame_height(), config.frame_width());
            }
            result.keyframes = select_keyframes(result.frames, config.keyframes_per_shot);
        } catch (const Error& e) {
            throw stage_fail("generation", e);
        }

        if (shot.shot_num % config.update_every == 0) {
            try {
                for (int kf : result.keyframes) {
                    const Frame& frame = result.frames[static_cast<std::size_t>(kf)];
                    for (const auto& [raw, mask] : result.entity_masks) {
                        if (mask.empty_mask()) {
                            continue;
                        }
                        const auto id = parse_entity_id(raw);
                        const auto* decl = script.find(*id);
                        EntityEntry cand = background_suppressed_entry(
                            frame, mask, config.noise_sigma,
                            derive_seed(config.run_seed, hash64(raw) + shot.shot_num * 8 + kf),
                            *id, decl ? decl->short_description : raw, global_frame_index,
                            provider, run.bank.config);
                        cand.origin = {EntryOrigin::Kind::Generated, shot.shot_num, kf};
                        BankDecision d;
                        d.entity = raw;
                        d.keyframe = kf;
                        d.decision = accept_candidate(run.bank, std::move(cand), run.bank.config);
                        d.evicted = enforce_budget(run.bank, *id);
                        result.decisions.push_back(std::move(d));
                        ++global_frame_index;
                    }
                }
            } catch (const Error& e) {
                throw stage_fail("bank-update", e);
            }
        }
        run.shots.push_back(std::move(result));
    }

    run.metrics = compute_metrics(script, run.shots);
    for (const auto& s : run.shots) {
        run.aggregate_cost.tokens_full += s.cost.tokens_full;
        run.aggregate_cost.tokens_kept += s.cost.tokens_kept;
        run.aggregate_cost.attention_ops_full += s.cost.attention_ops_full;
        run.aggregate_cost.attention_ops_kept += s.cost.attention_ops_kept;
    }
    return run;
}

// Writes the full run directory: config echo, script echo, bank snapshot,
// per-shot artifacts, and reports.
inline void write_run_dir(const StoryScript& script, const RunConfig& config, const StoryRun& run) {
    const std::filesystem::path dir = config.output_dir;
    std::filesystem::create_directories(dir / "shots");
    detail::write_text(dir / "config.json", run_config_to_json(config).dump(2) + "\n");
    detail::write_text(dir / "script.json", serialize_script(script).dump(2) + "\n");
    snapshot(run.bank, dir / "bank.emvb");

    for (const auto& s : run.shots) {
        char name[32];
        std::snprintf(name, sizeof(name), "shot_%03d", s.shot_num);
        const std::filesystem::path sd = dir / "shots" / name;
        std::filesystem::create_directories(sd);
        for (std::size_t i = 0; i < s.frames.size(); ++i) {
            char fname[32];
            std::snprintf(fname, sizeof(fname), "frame_%03zu.emvt", i);
            write_tensor(sd / fname, s.frames[i]);
        }
        for (const auto& [raw, mask] : s.entity_masks) {
            write_mask(sd / ("mask_" + raw + ".emvm"), mask);
        }
        write_mask(sd / "background.emvm", s.background_mask);
        for (std::size_t i = 0; i < s.target_latents.size(); ++i) {
            char lname[32];
            std::snprintf(lname, sizeof(lname), "latent_%03zu.emvt", i);
            write_tensor(sd / lname, s.target_latents[i]);
        }

        std::string cost = "tokens_full=" + std::to_string(s.cost.tokens_full) + "\n" +
                           "tokens_kept=" + std::to_string(s.cost.tokens_kept) + "\n" +
                           "reduction=" + detail::format_double(s.cost.reduction()) + "\n" +
                           "attention_ops_full=" + std::to_string(s.cost.attention_ops_full) + "\n" +
                           "attention_ops_kept=" + std::to_string(s.cost.attention_ops_kept) + "\n" +
                           "steps=" + std::to_string(s.cost.steps) + "\n";
        detail::write_text(sd / "cost.txt", cost);

        std::string decisions;
        for (const auto& d : s.decisions) {
            decisions += d.entity + " keyframe=" + std::to_string(d.keyframe) + " " +
                         to_string(d.decision);
            if (!d.evicted.empty()) {
                decisions += " evicted=";
                for (std::size_t i = 0; i < d.evicted.size(); ++i) {
                    decisions += (i ? "," : "") + std::to_string(d.evicted[i]);
                }
            }
            decisions += "\n";
        }
        detail::write_text(sd / "decisions.txt", decisions);

        std::string keyframes;
        for (std::size_t i = 0; i < s.keyframes.size(); ++i) {
            keyframes += (i ? "," : "") + std::to_string(s.keyframes[i]);
        }
        detail::write_text(sd / "keyframes.txt", keyframes + "\n");
    }
    emit_reports(run.shots, run.metrics, dir / "reports");
}

} // namespace emvid
