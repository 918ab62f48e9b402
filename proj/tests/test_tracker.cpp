#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmpipe/packing.hpp"
#include "mmpipe/tracker.hpp"

using namespace mmpipe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    TempDir() {
        path = fs::temp_directory_path() /
               ("mmpipe-tracker-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path file(const std::string& name) const { return path / name; }
    fs::path path;
};

std::vector<SampleRecord> make_manifest(std::size_t n, std::mt19937_64& rng,
                                        std::uint64_t max_len = 2048) {
    std::uniform_int_distribution<std::uint64_t> len(1, max_len);
    std::vector<SampleRecord> m;
    for (std::size_t i = 0; i < n; ++i)
        m.push_back(SampleRecord{"ds" + std::to_string(i % 3), i, len(rng), {}});
    return m;
}

std::vector<SampleKey> to_vec(std::span<const SampleKey> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("record_consumed advances the cursor") {
    std::mt19937_64 rng(1);
    const auto manifest = make_manifest(10, rng);
    const auto plan = build_plan(manifest, 1, 5);
    TrackerState s = make_tracker(plan);

    const TrackerState s7 = record_consumed(s, plan, 0, 7, 0);
    CHECK(s7.ranks[0].cursor == 7);
    CHECK(s7.ranks[0].last_pack_id == 0);
    CHECK(s.ranks[0].cursor == 0);  // value semantics: the old state is untouched

    const TrackerState same = record_consumed(s7, plan, 0, 0, 99);
    CHECK(same.ranks[0].cursor == 7);
    CHECK(same.ranks[0].last_pack_id == 0);  // a no-op does not move the pack id

    CHECK_THROWS_AS(record_consumed(s7, plan, 0, 4, 1), ValidationError);
    CHECK_THROWS_AS(record_consumed(s, plan, 3, 1, 0), ValidationError);
}

TEST_CASE("resume_stream yields the exact suffix") {
    std::mt19937_64 rng(2);
    const auto manifest = make_manifest(10, rng);
    const auto plan = build_plan(manifest, 1, 5);
    const auto full = to_vec(rank_stream(plan, 0));

    TrackerState s = make_tracker(plan);
    s = record_consumed(s, plan, 0, 7, 0);
    const auto suffix = to_vec(resume_stream(plan, s, 0));
    REQUIRE(suffix.size() == 3);
    CHECK(suffix == std::vector<SampleKey>(full.begin() + 7, full.end()));

    CHECK(to_vec(resume_stream(plan, make_tracker(plan), 0)) == full);

    TrackerState done = make_tracker(plan);
    done = record_consumed(done, plan, 0, 10, 0);
    CHECK(resume_stream(plan, done, 0).empty());
}

TEST_CASE("resume_stream rejects foreign state") {
    std::mt19937_64 rng(3);
    const auto manifest = make_manifest(12, rng);
    const auto plan = build_plan(manifest, 2, 5);
    const auto other = build_plan(manifest, 2, 6);

    const TrackerState s = make_tracker(other);
    CHECK_THROWS_AS(resume_stream(plan, s, 0), StateMismatchError);
}

TEST_CASE("resume equivalence over randomized interruption points") {
    std::mt19937_64 rng(0x5e5);
    for (int iter = 0; iter < 150; ++iter) {
        std::uniform_int_distribution<std::size_t> n_dist(1, 120);
        std::uniform_int_distribution<std::uint32_t> r_dist(1, 4);
        const auto manifest = make_manifest(n_dist(rng), rng);
        const auto plan = build_plan(manifest, r_dist(rng), rng());
        const std::uint32_t rank =
            std::uniform_int_distribution<std::uint32_t>(0, plan.dp_ranks - 1)(rng);
        const auto full = to_vec(rank_stream(plan, rank));
        const std::uint64_t k =
            std::uniform_int_distribution<std::uint64_t>(0, full.size())(rng);

        TrackerState s = make_tracker(plan);
        s = record_consumed(s, plan, rank, k, 0);
        const auto suffix = to_vec(resume_stream(plan, s, rank));

        std::vector<SampleKey> glued(full.begin(), full.begin() + static_cast<long>(k));
        glued.insert(glued.end(), suffix.begin(), suffix.end());
        REQUIRE(glued == full);

        const std::multiset<SampleKey> keys(glued.begin(), glued.end());
        REQUIRE(keys.size() == std::set<SampleKey>(keys.begin(), keys.end()).size());
    }
}

TEST_CASE("checkpoint and restore round-trip exactly") {
    TempDir tmp;
    std::mt19937_64 rng(4);
    const auto manifest = make_manifest(30, rng);
    const auto plan = build_plan(manifest, 3, 11);

    TrackerState s = make_tracker(plan);
    s = record_consumed(s, plan, 0, 4, 2);
    s = record_consumed(s, plan, 2, 9, 5);

    checkpoint(s, tmp.file("state.json"));
    CHECK(restore(tmp.file("state.json")) == s);
}

TEST_CASE("restore rejects corrupt and mismatched files") {
    TempDir tmp;
    SECTION("truncated") {
        std::ofstream(tmp.file("t.json")) << R"({"version":1,"plan_fing)";
        CHECK_THROWS_AS(restore(tmp.file("t.json")), StateMismatchError);
    }
    SECTION("wrong version") {
        std::ofstream(tmp.file("v.json"))
            << R"({"version":9,"plan_fingerprint":"00000000000000aa","epoch":0,"ranks":[]})";
        CHECK_THROWS_AS(restore(tmp.file("v.json")), StateMismatchError);
    }
    SECTION("missing file") { CHECK_THROWS_AS(restore(tmp.file("none.json")), IoError); }
}

TEST_CASE("pack output is reproduced byte-identically across a resume") {
    // Interruption happens at a pack boundary; the resumed run replays the
    // deterministic packer from the stream start and suppresses already-written
    // packs, so the concatenation must equal the uninterrupted run.
    std::mt19937_64 rng(0xace);
    for (int iter = 0; iter < 60; ++iter) {
        std::uniform_int_distribution<std::size_t> n_dist(1, 150);
        const auto manifest = make_manifest(n_dist(rng), rng);
        const auto plan = build_plan(manifest, 1, rng());
        PipelineConfig cfg;
        cfg.sequence_length = 4096;
        cfg.visual_token_cap.reset();

        std::vector<SampleRecord> shard;
        for (const SampleKey& key : rank_stream(plan, 0))
            shard.push_back(manifest[key.sample_index]);

        const auto full = pack_stream(shard, cfg);
        if (full.empty()) continue;
        const std::uint64_t stop_after =
            std::uniform_int_distribution<std::uint64_t>(1, full.size())(rng);

        // Run 1: stop after `stop_after` packs, tracking consumption.
        TrackerState state = make_tracker(plan);
        std::string first_output;
        {
            OnlinePacker packer(cfg);
            std::uint64_t written = 0;
            bool stop = false;
            const auto emit = [&](const Pack& p) {
                first_output += serialize_pack(p) + "\n";
                state = record_consumed(state, plan, 0, p.entries.size(),
                                        static_cast<std::int64_t>(p.pack_id));
                return ++written < stop_after;
            };
            for (const auto& s : shard) {
                for (const Pack& p : packer.add(s))
                    if (!emit(p)) { stop = true; break; }
                if (stop) break;
            }
            if (!stop)
                for (const Pack& p : packer.flush())
                    if (!emit(p)) break;
        }

        // Run 2: replay with suppression below the recorded pack id.
        std::string resumed_output;
        {
            OnlinePacker packer(cfg);
            std::uint64_t replayed = 0;
            const auto emit = [&](const Pack& p) {
                if (static_cast<std::int64_t>(p.pack_id) <= state.ranks[0].last_pack_id)
                    replayed += p.entries.size();
                else
                    resumed_output += serialize_pack(p) + "\n";
            };
            for (const auto& s : shard)
                for (const Pack& p : packer.add(s)) emit(p);
            for (const Pack& p : packer.flush()) emit(p);
            REQUIRE(replayed == state.ranks[0].cursor);
        }

        std::string reference;
        for (const Pack& p : full) reference += serialize_pack(p) + "\n";
        REQUIRE(first_output + resumed_output == reference);
    }
}
