// mmpipe: plan shards, pack samples into fixed-length sequences, resume from
// tracker state, merge checkpoints, run resolution search, report pack stats.

#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mmpipe/mmpipe.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Exit codes: 0 success, 1 usage, 2 validation, 3 I/O, 4 state mismatch.
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitState = 4;

std::vector<std::uint64_t> parse_u64_list(const std::string& csv, const std::string& flag) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoull(item));
        } catch (const std::exception&) {
            throw mmpipe::ValidationError("bad value '" + item + "' in " + flag);
        }
    }
    if (out.empty()) throw mmpipe::ValidationError(flag + " is empty");
    return out;
}

std::vector<double> parse_double_list(const std::string& csv, const std::string& flag) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw mmpipe::ValidationError("bad value '" + item + "' in " + flag);
        }
    }
    return out;
}

struct PackFlags {
    std::string manifest;
    std::string plan;
    std::string out;
    std::string state;
    std::string preset;
    std::uint32_t rank = 0;
    std::uint64_t seq_len = 0;        // 0: from preset/default
    std::uint64_t min_pixels = 0;     // 0: from preset/default
    std::uint64_t max_pixels = 0;     // 0: from preset/default
    std::int64_t visual_cap = -1;     // -1: default (seq/2), 0: unlimited
    std::uint64_t window = mmpipe::kDefaultPackWindow;
    std::uint64_t max_packs = 0;      // 0: no limit
    bool resume = false;
    bool strict = false;
};

mmpipe::PipelineConfig config_from_flags(const PackFlags& f) {
    mmpipe::PipelineConfig cfg;
    if (!f.preset.empty()) {
        auto preset = mmpipe::preset_by_name(f.preset);
        if (!preset) throw mmpipe::ValidationError("unknown preset '" + f.preset + "'");
        cfg = *preset;
    }
    if (f.seq_len != 0) {
        cfg.sequence_length = f.seq_len;
        if (f.preset.empty()) cfg.visual_token_cap = f.seq_len / 2;
    }
    if (f.min_pixels != 0) cfg.min_pixels = f.min_pixels;
    if (f.max_pixels != 0) cfg.max_pixels = f.max_pixels;
    if (f.visual_cap == 0)
        cfg.visual_token_cap.reset();
    else if (f.visual_cap > 0)
        cfg.visual_token_cap = static_cast<std::uint64_t>(f.visual_cap);
    cfg.validate();
    return cfg;
}

int cmd_plan(const std::string& manifest_path, std::uint32_t dp_ranks, std::uint64_t seed,
             std::uint64_t epoch, bool no_shuffle, const std::string& out) {
    const auto manifest = mmpipe::load_manifest(manifest_path);
    const auto plan = mmpipe::build_plan(
        manifest, dp_ranks, seed, epoch,
        no_shuffle ? mmpipe::ShuffleMode::none : mmpipe::ShuffleMode::seeded);
    mmpipe::save_plan(plan, out);

    std::size_t min_size = SIZE_MAX, max_size = 0;
    for (const auto& shard : plan.assignment) {
        min_size = std::min(min_size, shard.size());
        max_size = std::max(max_size, shard.size());
    }
    if (plan.assignment.empty()) min_size = 0;
    ordered_json summary{{"dp_ranks", plan.dp_ranks},
                         {"samples", manifest.size()},
                         {"min_shard", min_size},
                         {"max_shard", max_size},
                         {"fingerprint", mmpipe::to_hex64(mmpipe::plan_fingerprint(plan))},
                         {"plan_file", out}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_pack(const PackFlags& f) {
    const mmpipe::PipelineConfig cfg = config_from_flags(f);
    const auto manifest = mmpipe::load_manifest(f.manifest);
    const auto plan = mmpipe::load_plan(f.plan);
    if (plan.manifest_hash != mmpipe::manifest_content_hash(manifest))
        throw mmpipe::StateMismatchError("manifest content does not match the plan's manifest hash");

    std::unordered_map<std::string, const mmpipe::SampleRecord*> by_key;
    by_key.reserve(manifest.size());
    for (const auto& s : manifest)
        by_key.emplace(s.dataset_id + "\x1f" + std::to_string(s.sample_index), &s);

    mmpipe::TrackerState state = mmpipe::make_tracker(plan);
    if (f.resume) {
        if (f.state.empty()) throw mmpipe::ValidationError("--resume requires --state");
        state = mmpipe::restore(f.state);
        const std::uint64_t live = mmpipe::plan_fingerprint(plan);
        if (state.plan_fingerprint != live)
            throw mmpipe::StateMismatchError(
                "tracker state fingerprint " + mmpipe::to_hex64(state.plan_fingerprint) +
                " does not match live plan " + mmpipe::to_hex64(live));
        if (f.rank >= state.ranks.size())
            throw mmpipe::ValidationError("rank " + std::to_string(f.rank) + " out of range");
    }

    std::ofstream out(f.out, std::ios::binary | std::ios::trunc);
    if (!out) throw mmpipe::IoError("cannot open output: " + f.out);

    // Resume replays the shard stream from the start and suppresses packs the
    // tracker already covers; the packer is deterministic, so suppressed packs
    // are exactly the ones a previous invocation wrote.
    const std::int64_t suppress_to = f.resume ? state.ranks[f.rank].last_pack_id : -1;
    const std::uint64_t initial_cursor = f.resume ? state.ranks[f.rank].cursor : 0;
    std::uint64_t replayed_samples = 0;
    std::uint64_t written = 0;
    std::uint64_t skipped = 0;
    bool stopped_early = false;

    mmpipe::OnlinePacker packer(cfg, static_cast<std::size_t>(f.window));
    const auto handle_pack = [&](const mmpipe::Pack& pack) {
        if (static_cast<std::int64_t>(pack.pack_id) <= suppress_to) {
            replayed_samples += pack.entries.size();
            return true;
        }
        out << mmpipe::serialize_pack(pack) << "\n";
        out.flush();
        if (!out) throw mmpipe::IoError("write failure: " + f.out);
        state = mmpipe::record_consumed(state, plan, f.rank, pack.entries.size(),
                                        static_cast<std::int64_t>(pack.pack_id));
        if (!f.state.empty()) mmpipe::checkpoint(state, f.state);
        ++written;
        return f.max_packs == 0 || written < f.max_packs;
    };

    for (const mmpipe::SampleKey& key : mmpipe::rank_stream(plan, f.rank)) {
        auto it = by_key.find(key.dataset_id + "\x1f" + std::to_string(key.sample_index));
        if (it == by_key.end())
            throw mmpipe::StateMismatchError("plan references unknown sample (" + key.dataset_id +
                                             ", " + std::to_string(key.sample_index) + ")");
        std::vector<mmpipe::Pack> emitted;
        try {
            emitted = packer.add(*it->second);
        } catch (const mmpipe::OversizedSampleError& e) {
            if (f.strict) throw;
            std::cerr << "mmpipe: warning: " << e.what() << ", skipped\n";
            ++skipped;
            continue;
        } catch (const mmpipe::ValidationError& e) {
            if (f.strict) throw;
            std::cerr << "mmpipe: warning: " << e.what() << ", skipped\n";
            ++skipped;
            continue;
        }
        for (const auto& pack : emitted)
            if (!handle_pack(pack)) { stopped_early = true; break; }
        if (stopped_early) break;
    }
    if (!stopped_early) {
        for (const auto& pack : packer.flush())
            if (!handle_pack(pack)) { stopped_early = true; break; }
    }

    // Suppressed packs always precede written ones, so by now the replay phase
    // is complete and must account for exactly the samples the cursor covers.
    // A mismatch means the config or window differs from the original run.
    if (f.resume && replayed_samples != initial_cursor)
        throw mmpipe::StateMismatchError(
            "resume replay covered " + std::to_string(replayed_samples) +
            " samples but the tracker cursor says " + std::to_string(initial_cursor) +
            "; packing config differs from the original run");

    ordered_json summary{{"rank", f.rank},
                         {"packs_written", written},
                         {"packs_replayed", suppress_to + 1},
                         {"samples_skipped", skipped},
                         {"cursor", state.ranks[f.rank].cursor},
                         {"last_pack_id", state.ranks[f.rank].last_pack_id},
                         {"stopped_early", stopped_early}};
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_merge(const std::vector<std::string>& inputs, const std::string& weights_csv,
              const std::string& filter, std::int64_t passthrough, const std::string& out) {
    mmpipe::MergeSpec spec;
    for (const auto& p : inputs) spec.inputs.emplace_back(p);
    if (!weights_csv.empty()) spec.weights = parse_double_list(weights_csv, "--weights");
    if (!filter.empty()) spec.key_filter = filter;
    if (passthrough < 0 || static_cast<std::size_t>(passthrough) >= inputs.size())
        throw mmpipe::ValidationError("--passthrough index out of range");
    spec.passthrough_source = static_cast<std::size_t>(passthrough);

    const mmpipe::TensorContainer merged = mmpipe::average(spec);
    mmpipe::save_container(merged, out);

    std::size_t merged_count = 0, passthrough_count = 0;
    for (const auto& e : merged.entries())
        (spec.matches(e.name) ? merged_count : passthrough_count) += 1;
    ordered_json summary{{"inputs", inputs.size()},
                         {"tensors_merged", merged_count},
                         {"tensors_passthrough", passthrough_count},
                         {"out", out}};
    std::cout << summary.dump() << "\n";
    return 0;
}

// Scorer subprocess protocol: the command is run once per configuration as
//   <command> <min_pixels> <max_pixels> <summary_json_path>
// and must print one real number on stdout and exit 0. A nonzero exit (or
// unparsable output) records a hole for that configuration.
std::optional<double> invoke_scorer(const std::string& command, const mmpipe::GridPoint& config,
                                    const fs::path& summary_path) {
    const std::string cmd = command + " " + std::to_string(config.min_pixels) + " " +
                            std::to_string(config.max_pixels) + " '" + summary_path.string() + "'";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) throw mmpipe::IoError("cannot spawn scorer: " + command);
    std::string output;
    char buf[256];
    while (std::fgets(buf, sizeof(buf), pipe) != nullptr) output += buf;
    const int status = pclose(pipe);
    if (status != 0) return std::nullopt;
    try {
        std::size_t pos = 0;
        const double score = std::stod(output, &pos);
        return score;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int cmd_search(const std::string& manifest_path, const std::string& scorer_cmd,
               const std::string& min_csv, const std::string& max_csv, const std::string& out,
               std::string summary_dir) {
    const auto manifest = mmpipe::load_manifest(manifest_path);
    mmpipe::ResolutionGrid grid;
    if (!min_csv.empty()) grid.min_values = parse_u64_list(min_csv, "--min-pixels");
    if (!max_csv.empty()) grid.max_values = parse_u64_list(max_csv, "--max-pixels");

    if (summary_dir.empty())
        summary_dir = (fs::temp_directory_path() /
                       ("mmpipe-search-" + std::to_string(::getpid())))
                          .string();
    fs::create_directories(summary_dir);

    const mmpipe::Scorer scorer = [&](const mmpipe::GridPoint& config,
                                      const mmpipe::ResizeSummary& summary) {
        const fs::path summary_path =
            fs::path(summary_dir) / ("config_" + std::to_string(config.min_pixels) + "_" +
                                     std::to_string(config.max_pixels) + ".json");
        ordered_json doc{{"min_pixels", config.min_pixels},
                         {"max_pixels", config.max_pixels},
                         {"samples", summary.sample_count},
                         {"images", summary.image_count},
                         {"infeasible_images", summary.infeasible_images},
                         {"total_visual_tokens", summary.total_visual_tokens},
                         {"mean_visual_tokens", summary.mean_visual_tokens}};
        mmpipe::atomic_write_file(summary_path, doc.dump(2) + "\n");
        return invoke_scorer(scorer_cmd, config, summary_path);
    };

    const mmpipe::SearchResult result = mmpipe::run_search(grid, manifest, scorer);
    const mmpipe::BoxTable box = mmpipe::surface_report(result);

    ordered_json surface = ordered_json::array();
    for (const auto& [config, score] : result.surface) {
        const auto& summary = result.summaries.at(config);
        surface.push_back({{"min_pixels", config.min_pixels},
                           {"max_pixels", config.max_pixels},
                           {"score", score},
                           {"mean_visual_tokens", summary.mean_visual_tokens},
                           {"infeasible_images", summary.infeasible_images}});
    }
    ordered_json holes = ordered_json::array();
    for (const auto& h : result.holes)
        holes.push_back({{"min_pixels", h.min_pixels}, {"max_pixels", h.max_pixels}});
    ordered_json box_rows = ordered_json::array();
    for (const auto& row : box.rows)
        box_rows.push_back({{"max_pixels", row.max_pixels},
                            {"n", row.n},
                            {"min", row.min},
                            {"q1", row.q1},
                            {"median", row.median},
                            {"q3", row.q3},
                            {"max", row.max}});
    ordered_json doc{{"grid", {{"min_values", grid.min_values}, {"max_values", grid.max_values}}},
                     {"best",
                      {{"min_pixels", result.best.min_pixels},
                       {"max_pixels", result.best.max_pixels},
                       {"score", result.best_score}}},
                     {"surface", std::move(surface)},
                     {"holes", std::move(holes)},
                     {"box_table", std::move(box_rows)},
                     {"warnings", box.warnings}};
    for (const auto& w : box.warnings) std::cerr << "mmpipe: warning: " << w << "\n";

    if (out.empty()) {
        std::cout << doc.dump(2) << "\n";
    } else {
        mmpipe::atomic_write_file(out, doc.dump(2) + "\n");
        ordered_json summary{{"configs", result.surface.size() + result.holes.size()},
                             {"holes", result.holes.size()},
                             {"best_min_pixels", result.best.min_pixels},
                             {"best_max_pixels", result.best.max_pixels},
                             {"best_score", result.best_score},
                             {"report", out}};
        std::cout << summary.dump() << "\n";
    }
    return 0;
}

int cmd_stats(const std::string& packs_path, std::uint64_t seq_len, const std::string& edges_csv) {
    const auto packs = mmpipe::load_packs(packs_path);
    std::vector<std::uint64_t> edges;
    if (!edges_csv.empty()) edges = parse_u64_list(edges_csv, "--edges");
    const mmpipe::FillReport report = mmpipe::fill_report(packs, seq_len, edges);

    ordered_json histogram = ordered_json::array();
    for (const auto& b : report.visual_histogram)
        histogram.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
    ordered_json doc{{"pack_count", report.pack_count},
                     {"mean_fill", report.mean_fill},
                     {"used_tokens", report.used_tokens},
                     {"pad_tokens", report.pad_tokens},
                     {"visual_histogram", std::move(histogram)}};
    std::cout << doc.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal training-data pipeline toolkit"};
    app.require_subcommand(1);

    // plan
    auto* plan = app.add_subcommand("plan", "build a deterministic shard plan from a manifest");
    std::string plan_manifest, plan_out;
    std::uint32_t plan_ranks = 1;
    std::uint64_t plan_seed = 0, plan_epoch = 0;
    bool plan_no_shuffle = false;
    plan->add_option("--manifest", plan_manifest, "manifest file (ndjson)")->required();
    plan->add_option("--dp-ranks", plan_ranks, "number of data-parallel ranks");
    plan->add_option("--seed", plan_seed, "shuffle seed");
    plan->add_option("--epoch", plan_epoch, "epoch number (derives the shuffle seed)");
    plan->add_flag("--no-shuffle", plan_no_shuffle, "keep manifest order (identity shuffle)");
    plan->add_option("--out", plan_out, "plan file to write")->required();

    // pack / resume
    PackFlags pf;
    const auto add_pack_flags = [&](CLI::App* cmd) {
        cmd->add_option("--manifest", pf.manifest, "manifest file (ndjson)")->required();
        cmd->add_option("--plan", pf.plan, "shard plan file")->required();
        cmd->add_option("--rank", pf.rank, "data-parallel rank to pack")->required();
        cmd->add_option("--out", pf.out, "pack output file (ndjson)")->required();
        cmd->add_option("--state", pf.state, "tracker state file (persisted per pack)");
        cmd->add_option("--preset", pf.preset, "config preset: default, sft-2k, sft-4k, sft-8k");
        cmd->add_option("--seq-len", pf.seq_len, "sequence length (tokens)");
        cmd->add_option("--min-pixels", pf.min_pixels, "lower image area bound");
        cmd->add_option("--max-pixels", pf.max_pixels, "upper image area bound");
        cmd->add_option("--visual-cap", pf.visual_cap, "visual tokens per pack (0 = unlimited)");
        cmd->add_option("--window", pf.window, "open-pack window (0 = unbounded)");
        cmd->add_option("--max-packs", pf.max_packs, "stop after N packs (0 = no limit)");
        cmd->add_flag("--strict", pf.strict, "fail on oversized samples instead of skipping");
    };
    auto* pack = app.add_subcommand("pack", "pack one rank's shard into fixed-length sequences");
    add_pack_flags(pack);
    pack->add_flag("--resume", pf.resume, "continue from the tracker state");
    auto* resume = app.add_subcommand("resume", "continue packing from tracker state");
    add_pack_flags(resume);

    // merge
    auto* merge = app.add_subcommand("merge", "average checkpoint containers");
    std::vector<std::string> merge_inputs;
    std::string merge_weights, merge_filter, merge_out;
    std::int64_t merge_passthrough = 0;
    merge->add_option("--inputs", merge_inputs, "container files (>= 2)")
        ->required()
        ->expected(-2);
    merge->add_option("--weights", merge_weights, "comma-separated weights (default uniform)");
    merge->add_option("--filter", merge_filter, "merge only tensors with this name prefix");
    merge->add_option("--passthrough", merge_passthrough,
                      "input index supplying non-matching tensors");
    merge->add_option("--out", merge_out, "merged container file")->required();

    // search
    auto* search = app.add_subcommand("search", "grid-search test-time resolution bounds");
    std::string search_manifest, search_scorer, search_min, search_max, search_out, search_dir;
    search->add_option("--manifest", search_manifest, "evaluation manifest (ndjson)")->required();
    search->add_option("--scorer", search_scorer,
                       "scorer command, run as: CMD <min_pixels> <max_pixels> <summary.json>")
        ->required();
    search->add_option("--min-pixels", search_min, "comma-separated min_pixels axis");
    search->add_option("--max-pixels", search_max, "comma-separated max_pixels axis");
    search->add_option("--out", search_out, "report file (default: stdout)");
    search->add_option("--summaries-dir", search_dir, "where per-config summaries are written");

    // stats
    auto* stats = app.add_subcommand("stats", "fill report over a pack file");
    std::string stats_packs, stats_edges;
    std::uint64_t stats_seq_len = 8192;
    stats->add_option("--packs", stats_packs, "pack file (ndjson)")->required();
    stats->add_option("--seq-len", stats_seq_len, "sequence length the packs were built for");
    stats->add_option("--edges", stats_edges, "comma-separated histogram bucket edges");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "mmpipe: usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (plan->parsed())
            return cmd_plan(plan_manifest, plan_ranks, plan_seed, plan_epoch, plan_no_shuffle,
                            plan_out);
        if (pack->parsed()) return cmd_pack(pf);
        if (resume->parsed()) {
            pf.resume = true;
            if (pf.state.empty())
                throw mmpipe::ValidationError("resume requires --state");
            return cmd_pack(pf);
        }
        if (merge->parsed())
            return cmd_merge(merge_inputs, merge_weights, merge_filter, merge_passthrough,
                             merge_out);
        if (search->parsed())
            return cmd_search(search_manifest, search_scorer, search_min, search_max, search_out,
                              search_dir);
        if (stats->parsed()) return cmd_stats(stats_packs, stats_seq_len, stats_edges);
    } catch (const mmpipe::StateMismatchError& e) {
        std::cerr << "mmpipe: error: state: " << e.what() << "\n";
        return kExitState;
    } catch (const mmpipe::IoError& e) {
        std::cerr << "mmpipe: error: io: " << e.what() << "\n";
        return kExitIo;
    } catch (const mmpipe::ValidationError& e) {
        std::cerr << "mmpipe: error: validation: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "mmpipe: error: " << e.what() << "\n";
        return kExitValidation;
    }
    return 0;
}
