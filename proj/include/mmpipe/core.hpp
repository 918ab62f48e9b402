#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mmpipe/errors.hpp"
#include "mmpipe/resolution.hpp"
#include "mmpipe/util.hpp"

namespace mmpipe {

// One multimodal training sample: text token length plus image shapes. The
// pipeline is metadata-driven; pixel data never enters it.
struct SampleRecord {
    std::string dataset_id;
    std::uint64_t sample_index = 0;
    std::uint64_t text_tokens = 0;
    std::vector<ImageSpec> images;

    bool operator==(const SampleRecord&) const = default;
};

struct PipelineConfig {
    std::uint64_t sequence_length = 8192;
    std::uint64_t min_pixels = 4 * kPatchPixels * kPatchPixels;
    std::uint64_t max_pixels = 1280 * kPatchPixels * kPatchPixels;
    // Per-pack visual token budget; nullopt = unlimited. Defaults to half the
    // sequence so image-heavy samples cannot starve one pipeline stage.
    std::optional<std::uint64_t> visual_token_cap = 8192 / 2;
    std::uint64_t seed = 0;
    std::uint32_t dp_ranks = 1;

    void validate() const {
        if (sequence_length == 0) throw ValidationError("sequence_length must be positive");
        if (min_pixels > max_pixels)
            throw ValidationError("min_pixels " + std::to_string(min_pixels) +
                                  " exceeds max_pixels " + std::to_string(max_pixels));
        if (visual_token_cap && *visual_token_cap > sequence_length)
            throw ValidationError("visual_token_cap " + std::to_string(*visual_token_cap) +
                                  " exceeds sequence_length " + std::to_string(sequence_length));
        if (dp_ranks == 0) throw ValidationError("dp_ranks must be positive");
    }
};

inline PipelineConfig default_config() { return PipelineConfig{}; }

namespace detail {
inline PipelineConfig make_preset(std::uint64_t seq_len, std::uint64_t max_pixel_units) {
    PipelineConfig cfg;
    cfg.sequence_length = seq_len;
    cfg.max_pixels = max_pixel_units * kPatchPixels * kPatchPixels;
    cfg.visual_token_cap = seq_len / 2;
    return cfg;
}
}  // namespace detail

// SFT sequence-length variants: each pairs a context length with the image
// pixel cap it was trained under.
inline PipelineConfig preset_sft_2k() { return detail::make_preset(2048, 1280); }
inline PipelineConfig preset_sft_4k() { return detail::make_preset(4096, 3072); }
inline PipelineConfig preset_sft_8k() { return detail::make_preset(8192, 4096); }

inline std::optional<PipelineConfig> preset_by_name(std::string_view name) {
    if (name == "sft-2k") return preset_sft_2k();
    if (name == "sft-4k") return preset_sft_4k();
    if (name == "sft-8k") return preset_sft_8k();
    if (name == "default") return default_config();
    return std::nullopt;
}

/// Visual tokens a sample contributes after smart_resize under cfg.
inline std::uint64_t sample_visual_tokens(const SampleRecord& sample, const PipelineConfig& cfg) {
    std::uint64_t total = 0;
    for (const ImageSpec& img : sample.images)
        total += smart_resize(img, cfg.min_pixels, cfg.max_pixels).visual_tokens;
    return total;
}

/// Text tokens plus per-image visual tokens after resize. Computed on demand,
/// never cached on the record.
inline std::uint64_t total_tokens(const SampleRecord& sample, const PipelineConfig& cfg) {
    return sample.text_tokens + sample_visual_tokens(sample, cfg);
}

// --- manifest I/O ------------------------------------------------------
//
// Newline-delimited records, one JSON object per line:
//   {"dataset_id":str, "sample_index":int, "text_tokens":int, "images":[{"w":int,"h":int},...]}

inline nlohmann::ordered_json sample_to_json(const SampleRecord& s) {
    nlohmann::ordered_json images = nlohmann::ordered_json::array();
    for (const ImageSpec& img : s.images) images.push_back({{"w", img.width}, {"h", img.height}});
    return nlohmann::ordered_json{{"dataset_id", s.dataset_id},
                                  {"sample_index", s.sample_index},
                                  {"text_tokens", s.text_tokens},
                                  {"images", std::move(images)}};
}

inline SampleRecord parse_sample_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    if (!j.is_object()) throw ValidationError("record is not an object");
    for (const char* field : {"dataset_id", "sample_index", "text_tokens", "images"})
        if (!j.contains(field)) throw ValidationError(std::string("missing field '") + field + "'");

    SampleRecord s;
    if (!j["dataset_id"].is_string()) throw ValidationError("dataset_id must be a string");
    s.dataset_id = j["dataset_id"].get<std::string>();
    if (!j["sample_index"].is_number_integer() || j["sample_index"].get<std::int64_t>() < 0)
        throw ValidationError("sample_index must be a non-negative integer");
    s.sample_index = j["sample_index"].get<std::uint64_t>();
    if (!j["text_tokens"].is_number_integer() || j["text_tokens"].get<std::int64_t>() < 0)
        throw ValidationError("text_tokens must be a non-negative integer, got " +
                              j["text_tokens"].dump());
    s.text_tokens = j["text_tokens"].get<std::uint64_t>();
    if (!j["images"].is_array()) throw ValidationError("images must be an array");
    for (const auto& ji : j["images"]) {
        if (!ji.is_object() || !ji.contains("w") || !ji.contains("h"))
            throw ValidationError("image entries must be {w, h} objects");
        std::int64_t w = ji["w"].get<std::int64_t>();
        std::int64_t h = ji["h"].get<std::int64_t>();
        if (w < 1 || h < 1)
            throw ValidationError("image dimensions must be >= 1, got " + std::to_string(w) + "x" +
                                  std::to_string(h));
        s.images.push_back(ImageSpec{static_cast<std::uint64_t>(w), static_cast<std::uint64_t>(h)});
    }
    return s;
}

/// Load a manifest file. Records come back in file order; duplicate
/// (dataset_id, sample_index) pairs and malformed lines are rejected with the
/// offending line number.
inline std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path.string());

    std::vector<SampleRecord> records;
    std::set<std::pair<std::string, std::uint64_t>> seen;
    std::string line;
    std::uint64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        SampleRecord s;
        try {
            s = parse_sample_line(line);
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": parse error: " + e.what());
        } catch (const ValidationError& e) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!seen.emplace(s.dataset_id, s.sample_index).second)
            throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                                  ": duplicate sample key (" + s.dataset_id + ", " +
                                  std::to_string(s.sample_index) + ")");
        records.push_back(std::move(s));
    }
    if (in.bad()) throw IoError("read failure: " + path.string());
    return records;
}

inline void save_manifest(const std::vector<SampleRecord>& records,
                          const std::filesystem::path& path) {
    std::string out;
    for (const SampleRecord& s : records) {
        out += sample_to_json(s).dump();
        out += '\n';
    }
    atomic_write_file(path, out);
}

/// Order-sensitive hash over every record field; any edit changes it.
inline std::uint64_t manifest_content_hash(const std::vector<SampleRecord>& records) {
    Fnv1a64 h;
    h.update_u64(records.size());
    for (const SampleRecord& s : records) {
        h.update(s.dataset_id);
        h.update("\0", 1);
        h.update_u64(s.sample_index);
        h.update_u64(s.text_tokens);
        h.update_u64(s.images.size());
        for (const ImageSpec& img : s.images) {
            h.update_u64(img.width);
            h.update_u64(img.height);
        }
    }
    return h.digest();
}

}  // namespace mmpipe
