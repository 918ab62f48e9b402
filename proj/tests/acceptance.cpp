// Acceptance suite: one binary, one pass/fail line per criterion.
//
// Each criterion is a self-contained randomized or exact check with a fixed
// seed and a wall-clock budget; any violation fails the whole run.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmpipe/mmpipe.hpp"

using namespace mmpipe;

namespace {

int failures = 0;

#define ACCEPT_REQUIRE(cond, what)                                       \
    do {                                                                 \
        if (!(cond)) {                                                   \
            std::printf("        violation: %s (line %d)\n", what, __LINE__); \
            return false;                                                \
        }                                                                \
    } while (0)

void criterion(int number, const char* name, double budget_seconds,
               const std::function<bool()>& body) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string error;
    try {
        ok = body();
    } catch (const std::exception& e) {
        error = e.what();
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && elapsed > budget_seconds) {
        std::printf("[FAIL] %2d. %s — exceeded %.0fs budget (%.2fs)\n", number, name,
                    budget_seconds, elapsed);
        ++failures;
        return;
    }
    if (!ok && !error.empty()) std::printf("        exception: %s\n", error.c_str());
    std::printf("[%s] %2d. %s (%.2fs)\n", ok ? "PASS" : "FAIL", number, name, elapsed);
    if (!ok) ++failures;
}

constexpr std::uint64_t kCell = 28 * 28;

// 1. enumerate_grid defaults emit exactly the 24 documented configurations.
bool grid_fidelity() {
    const auto points = enumerate_grid(ResolutionGrid{});
    ACCEPT_REQUIRE(points.size() == 24, "grid size != 24");
    const std::vector<std::uint64_t> mins{3136, 12544, 25088, 50176};
    const std::vector<std::uint64_t> maxs{1003520, 1605632, 2007040, 2408448, 3211264, 6422528};
    std::size_t i = 0;
    for (std::uint64_t mx : maxs)
        for (std::uint64_t mn : mins) {
            ACCEPT_REQUIRE(points[i].min_pixels == mn && points[i].max_pixels == mx,
                           "grid point mismatch");
            ++i;
        }
    ACCEPT_REQUIRE(points.front().min_pixels == 4 * kCell, "first point min");
    ACCEPT_REQUIRE(points.front().max_pixels == 1280 * kCell, "first point max");
    ACCEPT_REQUIRE(points.back().min_pixels == 64 * kCell, "last point min");
    ACCEPT_REQUIRE(points.back().max_pixels == 8192 * kCell, "last point max");
    return true;
}

// 2. Default config and the three SFT presets carry the documented values.
bool hyperparameter_fidelity() {
    const PipelineConfig cfg = default_config();
    ACCEPT_REQUIRE(cfg.sequence_length == 8192, "default sequence length");
    ACCEPT_REQUIRE(cfg.min_pixels == 4 * kCell, "default min_pixels");
    ACCEPT_REQUIRE(cfg.max_pixels == 1280 * kCell, "default max_pixels");

    const struct {
        const char* name;
        std::uint64_t seq;
        std::uint64_t max_units;
    } presets[] = {{"sft-2k", 2048, 1280}, {"sft-4k", 4096, 3072}, {"sft-8k", 8192, 4096}};
    for (const auto& p : presets) {
        const auto preset = preset_by_name(p.name);
        ACCEPT_REQUIRE(preset.has_value(), "preset missing");
        ACCEPT_REQUIRE(preset->sequence_length == p.seq, "preset sequence length");
        ACCEPT_REQUIRE(preset->max_pixels == p.max_units * kCell, "preset max_pixels");
    }
    return true;
}

// 3. 10,000 random shapes per bound pair: grid, window, idempotence, drift.
bool resize_correctness() {
    std::mt19937_64 rng(0xac3);
    const std::pair<std::uint64_t, std::uint64_t> windows[] = {
        {4 * kCell, 1280 * kCell}, {16 * kCell, 3072 * kCell}, {64 * kCell, 8192 * kCell},
        {kCell, 4 * kCell},        {32 * kCell, 32 * kCell},   {4 * kCell, 4096 * kCell},
    };
    std::uniform_int_distribution<std::uint64_t> dim(1, 8000);
    for (const auto& [lo, hi] : windows) {
        for (int i = 0; i < 10000; ++i) {
            const ImageSpec img{dim(rng), dim(rng)};
            ResizedImage out;
            try {
                out = smart_resize(img, lo, hi);
            } catch (const ResizeInfeasibleError&) {
                continue;  // the declared error is the accepted outcome
            }
            const std::uint64_t area = out.width * out.height;
            ACCEPT_REQUIRE(out.width % 28 == 0 && out.height % 28 == 0, "off grid");
            ACCEPT_REQUIRE(out.width >= 28 && out.height >= 28, "below one cell");
            ACCEPT_REQUIRE(area >= lo && area <= hi, "outside pixel window");
            ACCEPT_REQUIRE(out.visual_tokens == (out.width / 28) * (out.height / 28),
                           "token count");
            ACCEPT_REQUIRE(smart_resize({out.width, out.height}, lo, hi) == out,
                           "not idempotent");
            const double drift = std::abs(static_cast<double>(out.width) / out.height -
                                          static_cast<double>(img.width) / img.height);
            const double bound = 28.0 * (static_cast<double>(out.width) + out.height) /
                                 (static_cast<double>(out.height) * out.height);
            ACCEPT_REQUIRE(drift <= bound + 1e-9, "aspect drift bound");
        }
    }
    return true;
}

// 4. 1,000 random workloads: conservation, count floor, first-fit quality.
bool packing_conservation() {
    std::mt19937_64 rng(0x9ac4);
    for (int iter = 0; iter < 1000; ++iter) {
        // Mostly small workloads with a heavy tail up to 10,000 samples.
        std::size_t n;
        if (iter % 100 == 99)
            n = std::uniform_int_distribution<std::size_t>(5000, 10000)(rng);
        else if (iter % 10 == 9)
            n = std::uniform_int_distribution<std::size_t>(500, 4000)(rng);
        else
            n = std::uniform_int_distribution<std::size_t>(1, 400)(rng);

        const std::uint64_t L = std::vector<std::uint64_t>{2048, 4096, 8192}[rng() % 3];
        PipelineConfig cfg;
        cfg.sequence_length = L;
        cfg.visual_token_cap.reset();

        std::uniform_int_distribution<std::uint64_t> len(1, L);
        std::vector<SampleRecord> samples;
        samples.reserve(n);
        std::multiset<std::pair<std::string, std::uint64_t>> in_keys;
        std::uint64_t total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint64_t l = len(rng);
            samples.push_back(SampleRecord{"d" + std::to_string(i % 7), i, l, {}});
            in_keys.emplace(samples.back().dataset_id, i);
            total += l;
        }

        const std::size_t window = (iter % 3 == 0) ? 0 : 1 + rng() % 16;
        for (const std::size_t w : {window, std::size_t{0}}) {
            const auto packs = pack_stream(samples, cfg, w);

            std::multiset<std::pair<std::string, std::uint64_t>> out_keys;
            for (const Pack& p : packs) {
                ACCEPT_REQUIRE(p.used_tokens <= L, "pack over budget");
                ACCEPT_REQUIRE(p.used_tokens + p.pad_tokens == L, "used+pad != L");
                for (const PackEntry& e : p.entries) out_keys.emplace(e.dataset_id, e.sample_index);
            }
            ACCEPT_REQUIRE(out_keys == in_keys, "conservation violated");
            ACCEPT_REQUIRE(packs.size() >= (total + L - 1) / L, "below optimal floor");

            if (w == 0) {
                int light = 0;
                for (const Pack& p : packs)
                    if (p.used_tokens * 2 < L) ++light;
                ACCEPT_REQUIRE(light <= 1, "more than one pack under 50% fill");
            }
            if (w == 0 && window == 0) break;  // identical run, skip the repeat
        }

        // Every fifth workload re-runs with images under a finite visual cap;
        // conservation and the per-pack visual budget must still hold.
        if (iter % 5 == 0) {
            PipelineConfig capped = cfg;
            capped.visual_token_cap = L / 2;
            std::vector<SampleRecord> visual_samples;
            std::multiset<std::pair<std::string, std::uint64_t>> visual_keys;
            const std::size_t vn = std::min<std::size_t>(n, 300);
            // Square images stay feasible under the default pixel window, and
            // 22*22 = 484 visual tokens fits every cap used here (>= 1024).
            std::uniform_int_distribution<std::uint64_t> side(1, 22);
            for (std::size_t i = 0; i < vn; ++i) {
                const std::uint64_t px = side(rng) * 28;
                SampleRecord s{"v", i, 1 + rng() % (L / 4), {ImageSpec{px, px}}};
                visual_samples.push_back(s);
                visual_keys.emplace("v", i);
            }
            const auto packs = pack_stream(visual_samples, capped, 1 + rng() % 8);
            std::multiset<std::pair<std::string, std::uint64_t>> out_keys;
            for (const Pack& p : packs) {
                std::uint64_t visual = 0;
                for (const PackEntry& e : p.entries) {
                    visual += e.visual_tokens;
                    out_keys.emplace(e.dataset_id, e.sample_index);
                }
                ACCEPT_REQUIRE(visual <= *capped.visual_token_cap, "visual cap violated");
                ACCEPT_REQUIRE(p.used_tokens <= L, "capped pack over budget");
            }
            ACCEPT_REQUIRE(out_keys == visual_keys, "capped conservation violated");
        }
    }
    return true;
}

// 5. 1,000 random packs with L <= 64: mask expansion equals brute force.
bool mask_oracle() {
    std::mt19937_64 rng(0x5ca1e);
    for (int iter = 0; iter < 1000; ++iter) {
        const std::uint64_t L = std::uniform_int_distribution<std::uint64_t>(1, 64)(rng);
        std::vector<std::uint64_t> segments;
        std::uint64_t used = 0;
        while (used < L) {
            const std::uint64_t s =
                std::uniform_int_distribution<std::uint64_t>(1, L - used)(rng);
            segments.push_back(s);
            used += s;
            if (rng() % 3 == 0) break;  // leave some padding
        }

        std::vector<SampleRecord> samples;
        for (std::size_t i = 0; i < segments.size(); ++i)
            samples.push_back(SampleRecord{"m", i, segments[i], {}});
        PipelineConfig cfg;
        cfg.sequence_length = L;
        cfg.visual_token_cap.reset();
        const auto packs = pack_stream(samples, cfg, 0);
        ACCEPT_REQUIRE(packs.size() == 1, "expected a single pack");

        const auto mask = expand_mask(mask_descriptor(packs[0]));
        const std::size_t nn = static_cast<std::size_t>(L);
        std::vector<std::uint8_t> expected(nn * nn, 0);
        std::size_t offset = 0;
        for (std::uint64_t s : segments) {
            for (std::size_t i = offset; i < offset + s; ++i)
                for (std::size_t j = offset; j < offset + s; ++j) expected[i * nn + j] = 1;
            offset += s;
        }
        ACCEPT_REQUIRE(mask == expected, "mask expansion mismatch");
    }
    return true;
}

// 6. 500 random interruption scenarios: resumed output byte-identical.
bool resume_equivalence() {
    std::mt19937_64 rng(0x6e5);
    for (int iter = 0; iter < 500; ++iter) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(1, 200)(rng);
        std::uniform_int_distribution<std::uint64_t> len(1, 2048);
        std::vector<SampleRecord> manifest;
        for (std::size_t i = 0; i < n; ++i)
            manifest.push_back(SampleRecord{"r" + std::to_string(i % 2), i, len(rng), {}});

        const std::uint32_t ranks = 1 + rng() % 4;
        const auto plan = build_plan(manifest, ranks, rng());
        const std::uint32_t rank = rng() % ranks;

        PipelineConfig cfg;
        cfg.sequence_length = 2048;
        cfg.visual_token_cap.reset();

        std::vector<SampleRecord> shard;
        for (const SampleKey& key : rank_stream(plan, rank))
            shard.push_back(manifest[key.sample_index]);

        const auto full = pack_stream(shard, cfg);
        std::string reference;
        for (const Pack& p : full) reference += serialize_pack(p) + "\n";
        if (full.empty()) continue;

        const std::uint64_t stop_after =
            std::uniform_int_distribution<std::uint64_t>(1, full.size())(rng);

        TrackerState state = make_tracker(plan);
        std::string part1;
        {
            OnlinePacker packer(cfg);
            std::uint64_t written = 0;
            bool stop = false;
            for (const auto& s : shard) {
                for (const Pack& p : packer.add(s)) {
                    part1 += serialize_pack(p) + "\n";
                    state = record_consumed(state, plan, rank, p.entries.size(),
                                            static_cast<std::int64_t>(p.pack_id));
                    if (++written == stop_after) { stop = true; break; }
                }
                if (stop) break;
            }
            if (!stop)
                for (const Pack& p : packer.flush()) {
                    part1 += serialize_pack(p) + "\n";
                    state = record_consumed(state, plan, rank, p.entries.size(),
                                            static_cast<std::int64_t>(p.pack_id));
                    if (++written == stop_after) break;
                }
        }

        std::string part2;
        {
            OnlinePacker packer(cfg);
            std::uint64_t replayed = 0;
            const auto emit = [&](const Pack& p) {
                if (static_cast<std::int64_t>(p.pack_id) <= state.ranks[rank].last_pack_id)
                    replayed += p.entries.size();
                else
                    part2 += serialize_pack(p) + "\n";
            };
            for (const auto& s : shard)
                for (const Pack& p : packer.add(s)) emit(p);
            for (const Pack& p : packer.flush()) emit(p);
            ACCEPT_REQUIRE(replayed == state.ranks[rank].cursor, "replay cursor mismatch");
        }
        ACCEPT_REQUIRE(part1 + part2 == reference, "resumed output differs");
    }
    return true;
}

// 7. 500 random (manifest size, dp_ranks): disjoint, covering, balanced.
bool shard_partition() {
    std::mt19937_64 rng(0x7a7);
    for (int iter = 0; iter < 500; ++iter) {
        const std::size_t n = std::uniform_int_distribution<std::size_t>(0, 500)(rng);
        const std::uint32_t ranks = 1 + rng() % 16;
        std::vector<SampleRecord> manifest;
        for (std::size_t i = 0; i < n; ++i)
            manifest.push_back(SampleRecord{"p" + std::to_string(i % 5), i, 1 + i, {}});
        const auto plan = build_plan(manifest, ranks, rng(), rng() % 4);

        std::set<SampleKey> seen;
        std::size_t total = 0, min_size = SIZE_MAX, max_size = 0;
        for (const auto& shard : plan.assignment) {
            total += shard.size();
            min_size = std::min(min_size, shard.size());
            max_size = std::max(max_size, shard.size());
            for (const SampleKey& k : shard)
                ACCEPT_REQUIRE(seen.insert(k).second, "duplicate key across shards");
        }
        ACCEPT_REQUIRE(total == n, "shards do not cover the manifest");
        ACCEPT_REQUIRE(max_size - min_size <= 1, "shard imbalance > 1");
    }
    return true;
}

// 8. 200 random container sets: oracle equality, bounds, identity, filter.
bool merge_oracle() {
    std::mt19937_64 rng(0x8e6);
    std::uniform_real_distribution<float> val(-3.0f, 3.0f);
    for (int iter = 0; iter < 200; ++iter) {
        const std::size_t k = 2 + rng() % 4;
        const std::size_t n_tensors = 1 + rng() % 5;

        std::vector<TensorContainer> inputs(k);
        std::vector<std::uint64_t> sizes;
        for (std::size_t t = 0; t < n_tensors; ++t)
            sizes.push_back(1 + rng() % 997);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t t = 0; t < n_tensors; ++t) {
                TensorEntry e;
                e.name = (t % 2 == 0 ? "lang.t" : "vision.t") + std::to_string(t);
                e.shape = {sizes[t]};
                e.data.resize(sizes[t]);
                for (auto& v : e.data) v = val(rng);
                inputs[i].add(std::move(e));
            }
        }

        std::vector<double> weights(k);
        double sum = 0.0;
        for (auto& w : weights) {
            w = std::uniform_real_distribution<double>(0.01, 1.0)(rng);
            sum += w;
        }
        for (auto& w : weights) w /= sum;
        weights[0] += 1.0 - std::accumulate(weights.begin(), weights.end(), 0.0);

        const TensorContainer out = average(inputs, weights);
        for (const TensorEntry& e : inputs[0].entries()) {
            const TensorEntry* o = out.find(e.name);
            ACCEPT_REQUIRE(o != nullptr, "missing tensor in output");
            for (std::size_t idx = 0; idx < e.data.size(); ++idx) {
                double acc = 0.0, lo = inputs[0].find(e.name)->data[idx], hi = lo;
                for (std::size_t i = 0; i < k; ++i) {
                    const double v = inputs[i].find(e.name)->data[idx];
                    acc += weights[i] * v;
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                ACCEPT_REQUIRE(o->data[idx] == static_cast<float>(acc), "oracle mismatch");
                ACCEPT_REQUIRE(o->data[idx] >= lo && o->data[idx] <= hi,
                               "convex bound violated");
            }
        }

        // Identity on identical inputs.
        const std::vector<TensorContainer> same(k, inputs[0]);
        const TensorContainer id = average(same, {});
        for (const TensorEntry& e : inputs[0].entries())
            ACCEPT_REQUIRE(id.find(e.name)->data == e.data, "identity violated");

        // Selective merge: non-matching tensors byte-equal to the passthrough.
        const std::size_t pass = rng() % k;
        const TensorContainer filtered = average(inputs, weights, std::string("lang."), pass);
        for (const TensorEntry& e : filtered.entries()) {
            if (e.name.rfind("lang.", 0) == 0) continue;
            const TensorEntry* src = inputs[pass].find(e.name);
            ACCEPT_REQUIRE(std::memcmp(e.data.data(), src->data.data(),
                                       e.data.size() * sizeof(float)) == 0,
                           "passthrough tensor not byte-identical");
        }

        // Cascade linearity in the double-precision accumulation.
        if (k >= 3) {
            const TensorEntry* a = inputs[0].find(inputs[0].entries()[0].name);
            const TensorEntry* b = inputs[1].find(a->name);
            const TensorEntry* c = inputs[2].find(a->name);
            const std::vector<const TensorEntry*> abc{a, b, c};
            const std::vector<double> third(3, 1.0 / 3.0);
            const auto direct = weighted_sum_f64(abc, third);
            const std::vector<const TensorEntry*> ab{a, b};
            const std::vector<double> half(2, 0.5);
            const auto m1 = weighted_sum_f64(ab, half);
            for (std::size_t idx = 0; idx < direct.size(); ++idx) {
                const double cascade = (2.0 / 3.0) * m1[idx] + (1.0 / 3.0) * c->data[idx];
                // Relative to the accumulation magnitude; the plain result can
                // cancel to ~0 and carries no meaningful relative scale.
                const double scale = (std::abs(static_cast<double>(a->data[idx])) +
                                      std::abs(static_cast<double>(b->data[idx])) +
                                      std::abs(static_cast<double>(c->data[idx]))) /
                                     3.0;
                ACCEPT_REQUIRE(std::abs(direct[idx] - cascade) <= 1e-12 * std::max(scale, 1e-300),
                               "cascade linearity beyond 1e-12");
            }
        }
    }
    return true;
}

// 9. 100 random score tables (with ties): argmax + box statistics.
bool search_argmax() {
    std::mt19937_64 rng(0x9a6);
    const auto points = enumerate_grid(ResolutionGrid{});
    for (int iter = 0; iter < 100; ++iter) {
        std::map<std::pair<std::uint64_t, std::uint64_t>, double> table;
        std::uniform_int_distribution<int> score(0, 9);
        for (const GridPoint& p : points)
            table[{p.min_pixels, p.max_pixels}] = static_cast<double>(score(rng));

        const Scorer scorer = [&](const GridPoint& c, const ResizeSummary&) {
            return std::optional<double>(table.at({c.min_pixels, c.max_pixels}));
        };
        const SearchResult r = run_search(ResolutionGrid{}, {}, scorer);

        // Independent argmax under the declared tie-break.
        GridPoint best{};
        double best_score = 0.0;
        bool first = true;
        for (const auto& [key, s] : table) {
            const GridPoint p{key.first, key.second};
            bool better = first || s > best_score;
            if (!better && s == best_score) {
                better = p.max_pixels < best.max_pixels ||
                         (p.max_pixels == best.max_pixels && p.min_pixels > best.min_pixels);
            }
            if (better) {
                best = p;
                best_score = s;
                first = false;
            }
        }
        ACCEPT_REQUIRE(r.best == best, "argmax mismatch");
        ACCEPT_REQUIRE(r.best_score == best_score, "argmax score mismatch");

        // Box statistics per column against a direct computation.
        const BoxTable t = surface_report(r);
        ACCEPT_REQUIRE(t.rows.size() == 6, "box table row count");
        for (const BoxRow& row : t.rows) {
            std::vector<double> col;
            for (const auto& [key, s] : table)
                if (key.second == row.max_pixels) col.push_back(s);
            std::sort(col.begin(), col.end());
            ACCEPT_REQUIRE(row.n == col.size(), "column size");
            ACCEPT_REQUIRE(row.min == col.front() && row.max == col.back(), "min/max");
            const auto q = [&](double p) {
                const double h = (static_cast<double>(col.size()) - 1) * p;
                const std::size_t lo = static_cast<std::size_t>(h);
                const double frac = h - static_cast<double>(lo);
                return lo + 1 < col.size() ? col[lo] + frac * (col[lo + 1] - col[lo]) : col[lo];
            };
            ACCEPT_REQUIRE(row.q1 == q(0.25), "q1");
            ACCEPT_REQUIRE(row.median == q(0.5), "median");
            ACCEPT_REQUIRE(row.q3 == q(0.75), "q3");
        }
    }

    // The documented hand-computed column.
    SearchResult fixed;
    fixed.surface[GridPoint{3136, 1003520}] = 1.0;
    fixed.surface[GridPoint{12544, 1003520}] = 2.0;
    fixed.surface[GridPoint{25088, 1003520}] = 3.0;
    fixed.surface[GridPoint{50176, 1003520}] = 4.0;
    const BoxTable t = surface_report(fixed);
    ACCEPT_REQUIRE(t.rows.size() == 1, "fixed column count");
    ACCEPT_REQUIRE(t.rows[0].min == 1.0 && t.rows[0].q1 == 1.75 && t.rows[0].median == 2.5 &&
                       t.rows[0].q3 == 3.25 && t.rows[0].max == 4.0,
                   "fixed column statistics");
    return true;
}

// 10. 100 random containers: file round-trip, corruption rejection.
bool container_roundtrip() {
    std::mt19937_64 rng(0xa10);
    std::uniform_real_distribution<float> val(-10.0f, 10.0f);
    for (int iter = 0; iter < 100; ++iter) {
        TensorContainer c;
        const std::size_t n_tensors = rng() % 6;  // zero-entry containers allowed
        for (std::size_t t = 0; t < n_tensors; ++t) {
            TensorEntry e;
            e.name = "t" + std::to_string(t) + (t % 2 ? ".weight" : ".bias");
            const int rank = 1 + static_cast<int>(rng() % 3);
            std::uint64_t numel = 1;
            for (int r = 0; r < rank; ++r) {
                const std::uint64_t d = 1 + rng() % 17;
                e.shape.push_back(d);
                numel *= d;
            }
            e.data.resize(numel);
            for (auto& v : e.data) v = val(rng);
            c.add(std::move(e));
        }

        const std::string bytes = serialize_container(c);
        const TensorContainer back = parse_container(bytes, "mem");
        ACCEPT_REQUIRE(back.size() == c.size(), "entry count");
        for (std::size_t i = 0; i < c.size(); ++i) {
            ACCEPT_REQUIRE(back.entries()[i].name == c.entries()[i].name, "name");
            ACCEPT_REQUIRE(back.entries()[i].shape == c.entries()[i].shape, "shape");
            ACCEPT_REQUIRE(back.entries()[i].data == c.entries()[i].data, "data");
        }
        ACCEPT_REQUIRE(serialize_container(back) == bytes, "rewrite not byte-identical");

        std::string corrupt = bytes;
        corrupt[2] = '?';
        bool threw = false;
        try {
            parse_container(corrupt, "mem");
        } catch (const IoError&) {
            threw = true;
        }
        ACCEPT_REQUIRE(threw, "bad magic accepted");

        if (bytes.size() > 13) {
            threw = false;
            try {
                parse_container(bytes.substr(0, bytes.size() - 1), "mem");
            } catch (const IoError&) {
                threw = true;
            }
            ACCEPT_REQUIRE(threw, "truncation accepted");
        }
    }
    return true;
}

}  // namespace

int main() {
    std::printf("mmpipe acceptance suite\n");
    criterion(1, "grid fidelity: 24 documented search configurations", 1.0, grid_fidelity);
    criterion(2, "hyper-parameter fidelity: defaults and SFT presets", 1.0,
              hyperparameter_fidelity);
    criterion(3, "resize correctness: 10,000 shapes per bound pair", 10.0, resize_correctness);
    criterion(4, "packing conservation + quality: 1,000 workloads", 60.0, packing_conservation);
    criterion(5, "mask oracle: 1,000 packs vs brute force", 5.0, mask_oracle);
    criterion(6, "resume equivalence: 500 interruption scenarios", 30.0, resume_equivalence);
    criterion(7, "shard partition: 500 random plans", 5.0, shard_partition);
    criterion(8, "merge oracle: 200 container sets", 30.0, merge_oracle);
    criterion(9, "search argmax + box statistics: 100 tables", 5.0, search_argmax);
    criterion(10, "container format round-trip: 100 containers", 10.0, container_roundtrip);

    if (failures == 0) {
        std::printf("all 10 criteria passed\n");
        return 0;
    }
    std::printf("%d criteria FAILED\n", failures);
    return 1;
}
