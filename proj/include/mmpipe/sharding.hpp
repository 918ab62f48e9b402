#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "mmpipe/core.hpp"
#include "mmpipe/errors.hpp"
#include "mmpipe/util.hpp"

namespace mmpipe {

struct SampleKey {
    std::string dataset_id;
    std::uint64_t sample_index = 0;

    auto operator<=>(const SampleKey&) const = default;
};

enum class ShuffleMode { seeded, none };

// Deterministic assignment of manifest samples to data-parallel ranks. Each
// rank reads only its own list; lists are disjoint, cover the manifest, and
// differ in size by at most one.
struct ShardPlan {
    std::uint32_t dp_ranks = 1;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::uint64_t manifest_hash = 0;
    std::vector<std::vector<SampleKey>> assignment;  // index = rank
};

/// Shuffle seed for a given epoch: both words absorbed through SplitMix64 so
/// epochs reuse one base seed without correlated permutations.
inline std::uint64_t epoch_seed(std::uint64_t seed, std::uint64_t epoch) {
    std::uint64_t state = seed;
    splitmix64(state);
    state ^= epoch;
    return splitmix64(state);
}

namespace detail {

// Fisher-Yates driven by std::mt19937_64 (seeded with epoch_seed) and a plain
// modulo draw. Spelled out rather than std::shuffle because the standard
// leaves std::shuffle's draw sequence implementation-defined and plans must be
// reproducible across toolchains.
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed,
                                                 std::uint64_t epoch, ShuffleMode mode) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (mode == ShuffleMode::none || n < 2) return idx;
    std::mt19937_64 rng(epoch_seed(seed, epoch));
    for (std::size_t i = n - 1; i >= 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
        std::swap(idx[i], idx[j]);
    }
    return idx;
}

}  // namespace detail

/// Permute the manifest with the seeded shuffle, then deal round-robin:
/// shuffled position i goes to rank i mod dp_ranks.
inline ShardPlan build_plan(const std::vector<SampleRecord>& manifest, std::uint32_t dp_ranks,
                            std::uint64_t seed, std::uint64_t epoch = 0,
                            ShuffleMode mode = ShuffleMode::seeded) {
    if (dp_ranks == 0) throw ValidationError("dp_ranks must be >= 1");
    ShardPlan plan;
    plan.dp_ranks = dp_ranks;
    plan.seed = seed;
    plan.epoch = epoch;
    plan.manifest_hash = manifest_content_hash(manifest);
    plan.assignment.resize(dp_ranks);

    const auto order = detail::shuffled_indices(manifest.size(), seed, epoch, mode);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const SampleRecord& s = manifest[order[i]];
        plan.assignment[i % dp_ranks].push_back(SampleKey{s.dataset_id, s.sample_index});
    }
    return plan;
}

/// The full ordered shard for one rank.
inline std::span<const SampleKey> rank_stream(const ShardPlan& plan, std::uint32_t rank) {
    if (rank >= plan.dp_ranks)
        throw ValidationError("rank " + std::to_string(rank) + " out of range [0, " +
                              std::to_string(plan.dp_ranks) + ")");
    return plan.assignment[rank];
}

/// Identity of a plan: any change to (dp_ranks, seed, epoch, manifest content)
/// yields a different fingerprint, which invalidates stale tracker state.
inline std::uint64_t plan_fingerprint(const ShardPlan& plan) {
    Fnv1a64 h;
    h.update_u64(plan.dp_ranks);
    h.update_u64(plan.seed);
    h.update_u64(plan.epoch);
    h.update_u64(plan.manifest_hash);
    return h.digest();
}

// --- plan persistence -------------------------------------------------
//
// Single JSON document: {dp_ranks, seed, epoch, manifest_hash, assignment}
// where assignment[rank] is a list of [dataset_id, sample_index] pairs.

inline void save_plan(const ShardPlan& plan, const std::filesystem::path& path) {
    nlohmann::ordered_json assignment = nlohmann::ordered_json::array();
    for (const auto& shard : plan.assignment) {
        nlohmann::ordered_json keys = nlohmann::ordered_json::array();
        for (const SampleKey& k : shard)
            keys.push_back(nlohmann::ordered_json::array({k.dataset_id, k.sample_index}));
        assignment.push_back(std::move(keys));
    }
    nlohmann::ordered_json doc{{"dp_ranks", plan.dp_ranks},
                               {"seed", plan.seed},
                               {"epoch", plan.epoch},
                               {"manifest_hash", to_hex64(plan.manifest_hash)},
                               {"assignment", std::move(assignment)}};
    atomic_write_file(path, doc.dump(2) + "\n");
}

inline ShardPlan load_plan(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad plan file " + path.string() + ": " + e.what());
    }
    ShardPlan plan;
    try {
        plan.dp_ranks = doc.at("dp_ranks").get<std::uint32_t>();
        plan.seed = doc.at("seed").get<std::uint64_t>();
        plan.epoch = doc.at("epoch").get<std::uint64_t>();
        plan.manifest_hash = parse_hex64(doc.at("manifest_hash").get<std::string>());
        for (const auto& shard : doc.at("assignment")) {
            std::vector<SampleKey> keys;
            for (const auto& k : shard)
                keys.push_back(SampleKey{k.at(0).get<std::string>(), k.at(1).get<std::uint64_t>()});
            plan.assignment.push_back(std::move(keys));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("bad plan file " + path.string() + ": " + e.what());
    }
    if (plan.dp_ranks == 0 || plan.assignment.size() != plan.dp_ranks)
        throw ValidationError("bad plan file " + path.string() + ": assignment size " +
                              std::to_string(plan.assignment.size()) + " != dp_ranks " +
                              std::to_string(plan.dp_ranks));
    return plan;
}

}  // namespace mmpipe
