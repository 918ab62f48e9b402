#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"

#include "mmpipe/core.hpp"
#include "mmpipe/errors.hpp"

namespace mmpipe {

inline constexpr std::size_t kDefaultPackWindow = 8;

struct PackEntry {
    std::string dataset_id;
    std::uint64_t sample_index = 0;
    std::uint64_t tokens = 0;
    std::uint64_t visual_tokens = 0;

    bool operator==(const PackEntry&) const = default;
};

// One fixed-length training sequence assembled from whole samples. Samples
// are never split; the tail is padding.
struct Pack {
    std::uint64_t pack_id = 0;
    std::vector<PackEntry> entries;
    std::uint64_t used_tokens = 0;
    std::uint64_t pad_tokens = 0;
    // Cumulative token offsets [0, l1, l1+l2, ..., used_tokens]; one segment
    // per sample, the compressed form of the block-diagonal attention mask.
    std::vector<std::uint64_t> segment_bounds;

    bool operator==(const Pack&) const = default;
};

// Compressed attention metadata: position (i, j) attends iff both fall inside
// the same segment and both are below used_tokens (padding attends nowhere).
struct MaskDescriptor {
    enum class Mode { block_diagonal };

    std::vector<std::uint64_t> bounds;
    std::uint64_t total_length = 0;
    Mode mode = Mode::block_diagonal;
};

inline MaskDescriptor mask_descriptor(const Pack& pack) {
    return MaskDescriptor{pack.segment_bounds, pack.used_tokens + pack.pad_tokens,
                          MaskDescriptor::Mode::block_diagonal};
}

/// Expand a descriptor into a dense row-major boolean matrix. Intended for
/// small lengths (verification, debugging); production consumers use the
/// bounds directly.
inline std::vector<std::uint8_t> expand_mask(const MaskDescriptor& desc) {
    const std::size_t n = static_cast<std::size_t>(desc.total_length);
    std::vector<std::uint8_t> mask(n * n, 0);
    for (std::size_t seg = 0; seg + 1 < desc.bounds.size(); ++seg) {
        const std::size_t lo = static_cast<std::size_t>(desc.bounds[seg]);
        const std::size_t hi = static_cast<std::size_t>(desc.bounds[seg + 1]);
        for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t j = lo; j < hi; ++j) mask[i * n + j] = 1;
    }
    return mask;
}

// Online first-fit packer over a bounded window of open packs.
//
// Each arriving sample goes to the first open pack (creation order) with room
// under both the token budget and the visual-token cap. A pack with no free
// tokens is emitted at once; when a new pack is needed and the window is full,
// the oldest open pack is emitted to make room. flush() emits the remainder in
// creation order. Output is a pure function of (input order, config, window).
class OnlinePacker {
public:
    explicit OnlinePacker(PipelineConfig cfg, std::size_t window = kDefaultPackWindow)
        : cfg_(std::move(cfg)), window_(window) {
        cfg_.validate();
    }

    // window = 0 means unbounded (no forced emission before flush).
    std::size_t window() const { return window_; }
    std::uint64_t emitted() const { return next_pack_id_; }

    /// Feed one sample; returns the packs this sample caused to be emitted.
    std::vector<Pack> add(const SampleRecord& sample) {
        const std::uint64_t visual = sample_visual_tokens(sample, cfg_);
        const std::uint64_t total = sample.text_tokens + visual;
        if (total == 0)
            throw ValidationError("zero-length sample (" + sample.dataset_id + ", " +
                                  std::to_string(sample.sample_index) + ")");
        if (total > cfg_.sequence_length || (cfg_.visual_token_cap && visual > *cfg_.visual_token_cap))
            throw OversizedSampleError(
                sample.dataset_id, sample.sample_index, total,
                "oversized sample (" + sample.dataset_id + ", " +
                    std::to_string(sample.sample_index) + "): " + std::to_string(total) +
                    " tokens (" + std::to_string(visual) + " visual) exceed budget");

        std::vector<Pack> out;
        Open* slot = nullptr;
        for (Open& o : open_) {
            if (o.used + total <= cfg_.sequence_length &&
                (!cfg_.visual_token_cap || o.visual + visual <= *cfg_.visual_token_cap)) {
                slot = &o;
                break;
            }
        }
        if (slot == nullptr) {
            if (window_ != 0 && open_.size() == window_) {
                out.push_back(seal(open_.front()));
                open_.pop_front();
            }
            open_.emplace_back();
            slot = &open_.back();
        }
        slot->entries.push_back(PackEntry{sample.dataset_id, sample.sample_index, total, visual});
        slot->used += total;
        slot->visual += visual;

        if (slot->used == cfg_.sequence_length) {
            // No sample can ever fit; emit without waiting for the window.
            auto it = std::find_if(open_.begin(), open_.end(), [&](const Open& o) { return &o == slot; });
            out.push_back(seal(*it));
            open_.erase(it);
        }
        return out;
    }

    /// End of stream: emit every open pack in creation order.
    std::vector<Pack> flush() {
        std::vector<Pack> out;
        for (Open& o : open_) out.push_back(seal(o));
        open_.clear();
        return out;
    }

private:
    struct Open {
        std::vector<PackEntry> entries;
        std::uint64_t used = 0;
        std::uint64_t visual = 0;
    };

    Pack seal(Open& o) {
        Pack p;
        p.pack_id = next_pack_id_++;
        p.entries = std::move(o.entries);
        p.used_tokens = o.used;
        p.pad_tokens = cfg_.sequence_length - o.used;
        p.segment_bounds.reserve(p.entries.size() + 1);
        p.segment_bounds.push_back(0);
        std::uint64_t cum = 0;
        for (const PackEntry& e : p.entries) {
            cum += e.tokens;
            p.segment_bounds.push_back(cum);
        }
        return p;
    }

    PipelineConfig cfg_;
    std::size_t window_;
    std::deque<Open> open_;
    std::uint64_t next_pack_id_ = 0;
};

/// Pack an in-memory sample list in arrival order.
inline std::vector<Pack> pack_stream(const std::vector<SampleRecord>& samples,
                                     const PipelineConfig& cfg,
                                     std::size_t window = kDefaultPackWindow) {
    OnlinePacker packer(cfg, window);
    std::vector<Pack> packs;
    for (const SampleRecord& s : samples)
        for (Pack& p : packer.add(s)) packs.push_back(std::move(p));
    for (Pack& p : packer.flush()) packs.push_back(std::move(p));
    return packs;
}

/// Offline first-fit-decreasing baseline: sort by total token length
/// (descending, input order on ties), then first-fit with no window bound.
inline std::vector<Pack> pack_offline(const std::vector<SampleRecord>& samples,
                                      const PipelineConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::uint64_t> totals(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) totals[i] = total_tokens(samples[i], cfg);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return totals[a] > totals[b]; });

    OnlinePacker packer(cfg, 0);
    std::vector<Pack> packs;
    for (std::size_t i : order)
        for (Pack& p : packer.add(samples[i])) packs.push_back(std::move(p));
    for (Pack& p : packer.flush()) packs.push_back(std::move(p));
    return packs;
}

// --- fill reporting -----------------------------------------------------

struct HistogramBucket {
    std::uint64_t lo = 0;  // inclusive
    std::uint64_t hi = 0;  // exclusive; lo == hi marks the overflow bucket
    std::uint64_t count = 0;
};

struct FillReport {
    std::uint64_t pack_count = 0;
    double mean_fill = 1.0;  // sum(used) / (count * L); 1.0 by convention when empty
    std::uint64_t used_tokens = 0;
    std::uint64_t pad_tokens = 0;
    std::vector<HistogramBucket> visual_histogram;
};

inline std::vector<std::uint64_t> default_histogram_edges(std::uint64_t sequence_length) {
    std::vector<std::uint64_t> edges;
    for (std::uint64_t i = 0; i <= 8; ++i) edges.push_back(i * sequence_length / 8);
    return edges;
}

/// Pack count, mean fill ratio, and a histogram of per-pack visual token
/// totals over configurable bucket edges.
inline FillReport fill_report(const std::vector<Pack>& packs, std::uint64_t sequence_length,
                              std::vector<std::uint64_t> edges = {}) {
    if (sequence_length == 0) throw ValidationError("sequence_length must be positive");
    if (edges.empty()) edges = default_histogram_edges(sequence_length);
    if (!std::is_sorted(edges.begin(), edges.end()))
        throw ValidationError("histogram edges must be non-decreasing");

    FillReport r;
    r.pack_count = packs.size();
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
        r.visual_histogram.push_back(HistogramBucket{edges[i], edges[i + 1], 0});
    HistogramBucket overflow{edges.empty() ? 0 : edges.back(), edges.empty() ? 0 : edges.back(), 0};

    for (const Pack& p : packs) {
        r.used_tokens += p.used_tokens;
        r.pad_tokens += p.pad_tokens;
        std::uint64_t visual = 0;
        for (const PackEntry& e : p.entries) visual += e.visual_tokens;
        bool bucketed = false;
        for (auto& b : r.visual_histogram) {
            const bool last = &b == &r.visual_histogram.back();
            if (visual >= b.lo && (visual < b.hi || (last && visual == b.hi))) {
                ++b.count;
                bucketed = true;
                break;
            }
        }
        if (!bucketed) ++overflow.count;
    }
    if (overflow.count > 0) r.visual_histogram.push_back(overflow);
    r.mean_fill = packs.empty() ? 1.0
                                : static_cast<double>(r.used_tokens) /
                                      (static_cast<double>(packs.size()) *
                                       static_cast<double>(sequence_length));
    return r;
}

// --- pack serialization ---------------------------------------------------
//
// One record per line, deterministic field order:
//   {"pack_id":N,"entries":[{"dataset_id":s,"sample_index":N,"tokens":N,
//    "visual_tokens":N},...],"used":N,"pad":N,"bounds":[...]}

inline nlohmann::ordered_json pack_to_json(const Pack& p) {
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const PackEntry& e : p.entries)
        entries.push_back({{"dataset_id", e.dataset_id},
                           {"sample_index", e.sample_index},
                           {"tokens", e.tokens},
                           {"visual_tokens", e.visual_tokens}});
    return nlohmann::ordered_json{{"pack_id", p.pack_id},
                                  {"entries", std::move(entries)},
                                  {"used", p.used_tokens},
                                  {"pad", p.pad_tokens},
                                  {"bounds", p.segment_bounds}};
}

inline std::string serialize_pack(const Pack& p) { return pack_to_json(p).dump(); }

inline Pack parse_pack_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad pack record: ") + e.what());
    }
    Pack p;
    try {
        p.pack_id = j.at("pack_id").get<std::uint64_t>();
        for (const auto& je : j.at("entries")) {
            PackEntry e;
            e.dataset_id = je.at("dataset_id").get<std::string>();
            e.sample_index = je.at("sample_index").get<std::uint64_t>();
            e.tokens = je.at("tokens").get<std::uint64_t>();
            e.visual_tokens = je.at("visual_tokens").get<std::uint64_t>();
            p.entries.push_back(std::move(e));
        }
        p.used_tokens = j.at("used").get<std::uint64_t>();
        p.pad_tokens = j.at("pad").get<std::uint64_t>();
        p.segment_bounds = j.at("bounds").get<std::vector<std::uint64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad pack record: ") + e.what());
    }
    return p;
}

inline std::vector<Pack> load_packs(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open pack file: " + path.string());
    std::vector<Pack> packs;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            packs.push_back(parse_pack_line(line));
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (in.bad()) throw IoError("read failure: " + path.string());
    return packs;
}

}  // namespace mmpipe
