#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "mmpipe/errors.hpp"
#include "mmpipe/sharding.hpp"
#include "mmpipe/util.hpp"

namespace mmpipe {

inline constexpr std::uint32_t kTrackerVersion = 1;

struct RankCursor {
    std::uint64_t cursor = 0;        // samples consumed (persisted at pack boundaries)
    std::int64_t last_pack_id = -1;  // -1: nothing emitted yet

    bool operator==(const RankCursor&) const = default;
};

// Exact record of consumed data per rank. Value-like: updates return a new
// state, so callers can keep the pre-checkpoint state until the write lands.
struct TrackerState {
    std::uint32_t version = kTrackerVersion;
    std::uint64_t plan_fingerprint = 0;
    std::uint64_t epoch = 0;
    std::vector<RankCursor> ranks;

    bool operator==(const TrackerState&) const = default;
};

inline TrackerState make_tracker(const ShardPlan& plan) {
    TrackerState s;
    s.plan_fingerprint = plan_fingerprint(plan);
    s.epoch = plan.epoch;
    s.ranks.resize(plan.dp_ranks);
    return s;
}

namespace detail {
inline void check_rank(const TrackerState& state, std::uint32_t rank) {
    if (rank >= state.ranks.size())
        throw ValidationError("rank " + std::to_string(rank) + " out of range [0, " +
                              std::to_string(state.ranks.size()) + ")");
}
}  // namespace detail

/// Advance one rank's cursor by the samples of a just-emitted pack.
inline TrackerState record_consumed(const TrackerState& state, const ShardPlan& plan,
                                    std::uint32_t rank, std::uint64_t n_samples,
                                    std::int64_t pack_id) {
    detail::check_rank(state, rank);
    const std::uint64_t shard_len = rank_stream(plan, rank).size();
    TrackerState next = state;
    RankCursor& rc = next.ranks[rank];
    if (rc.cursor + n_samples > shard_len)
        throw ValidationError("cursor overflow on rank " + std::to_string(rank) + ": " +
                              std::to_string(rc.cursor) + " + " + std::to_string(n_samples) +
                              " > shard length " + std::to_string(shard_len));
    rc.cursor += n_samples;
    if (n_samples > 0) rc.last_pack_id = pack_id;
    return next;
}

/// The unconsumed suffix of a rank's shard. Fails loudly when the state was
/// recorded against a different plan.
inline std::span<const SampleKey> resume_stream(const ShardPlan& plan, const TrackerState& state,
                                                std::uint32_t rank) {
    const std::uint64_t live = plan_fingerprint(plan);
    if (state.plan_fingerprint != live)
        throw StateMismatchError("tracker state fingerprint " + to_hex64(state.plan_fingerprint) +
                                 " does not match live plan " + to_hex64(live));
    detail::check_rank(state, rank);
    std::span<const SampleKey> shard = rank_stream(plan, rank);
    const std::uint64_t cursor = state.ranks[rank].cursor;
    if (cursor > shard.size())
        throw ValidationError("cursor " + std::to_string(cursor) + " beyond shard length " +
                              std::to_string(shard.size()) + " on rank " + std::to_string(rank));
    return shard.subspan(cursor);
}

// --- state persistence -------------------------------------------------
//
// Human-readable JSON, written atomically:
//   {version, plan_fingerprint, epoch, ranks:[{rank, cursor, last_pack_id}]}

inline void checkpoint(const TrackerState& state, const std::filesystem::path& path) {
    nlohmann::ordered_json ranks = nlohmann::ordered_json::array();
    for (std::size_t r = 0; r < state.ranks.size(); ++r)
        ranks.push_back({{"rank", r},
                         {"cursor", state.ranks[r].cursor},
                         {"last_pack_id", state.ranks[r].last_pack_id}});
    nlohmann::ordered_json doc{{"version", state.version},
                               {"plan_fingerprint", to_hex64(state.plan_fingerprint)},
                               {"epoch", state.epoch},
                               {"ranks", std::move(ranks)}};
    atomic_write_file(path, doc.dump(2) + "\n");
}

inline TrackerState restore(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw StateMismatchError("corrupt tracker state " + path.string() + ": " + e.what());
    }
    TrackerState s;
    try {
        s.version = doc.at("version").get<std::uint32_t>();
        if (s.version != kTrackerVersion)
            throw StateMismatchError("tracker state " + path.string() + " has version " +
                                     std::to_string(s.version) + ", expected " +
                                     std::to_string(kTrackerVersion));
        s.plan_fingerprint = parse_hex64(doc.at("plan_fingerprint").get<std::string>());
        s.epoch = doc.at("epoch").get<std::uint64_t>();
        const auto& ranks = doc.at("ranks");
        s.ranks.resize(ranks.size());
        for (const auto& jr : ranks) {
            const auto r = jr.at("rank").get<std::uint64_t>();
            if (r >= s.ranks.size())
                throw StateMismatchError("corrupt tracker state " + path.string() +
                                         ": rank index out of range");
            s.ranks[r].cursor = jr.at("cursor").get<std::uint64_t>();
            s.ranks[r].last_pack_id = jr.at("last_pack_id").get<std::int64_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw StateMismatchError("corrupt tracker state " + path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
        throw StateMismatchError("corrupt tracker state " + path.string() + ": " + e.what());
    }
    return s;
}

}  // namespace mmpipe
