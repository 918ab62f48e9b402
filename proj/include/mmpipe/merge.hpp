#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmpipe/errors.hpp"
#include "mmpipe/util.hpp"

namespace mmpipe {

enum class DType : std::uint8_t { f32 = 0 };

struct TensorEntry {
    std::string name;
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::vector<float> data;  // row-major

    std::uint64_t numel() const {
        std::uint64_t n = 1;
        for (std::uint64_t d : shape) n *= d;
        return n;
    }
};

// Named n-dimensional arrays with stable insertion order; the in-memory form
// of one checkpoint.
class TensorContainer {
public:
    void add(TensorEntry entry) {
        if (entry.name.empty()) throw ValidationError("tensor name must be non-empty");
        if (entry.shape.empty()) throw ValidationError("tensor '" + entry.name + "' has empty shape");
        if (entry.shape.size() > 255)
            throw ValidationError("tensor '" + entry.name + "' rank exceeds 255");
        for (std::uint64_t d : entry.shape)
            if (d == 0) throw ValidationError("tensor '" + entry.name + "' has a zero dimension");
        if (entry.data.size() != entry.numel())
            throw ValidationError("tensor '" + entry.name + "' data length " +
                                  std::to_string(entry.data.size()) + " != shape product " +
                                  std::to_string(entry.numel()));
        if (index_.count(entry.name))
            throw ValidationError("duplicate tensor name '" + entry.name + "'");
        index_.emplace(entry.name, entries_.size());
        entries_.push_back(std::move(entry));
    }

    const TensorEntry* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }

    const std::vector<TensorEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::vector<TensorEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// --- container file format ---------------------------------------------
//
// magic "MVTC", version u32 LE, entry count u32 LE; per entry: name length
// u32 LE + UTF-8 name, dtype u8 (0 = f32), rank u8, dims u64 LE each, then
// raw little-endian element data. No alignment padding.

inline constexpr char kContainerMagic[4] = {'M', 'V', 'T', 'C'};
inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
public:
    ByteReader(const std::string& buf, std::string origin)
        : buf_(buf), origin_(std::move(origin)) {}

    std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
    std::uint64_t u64() { return take(8); }
    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n)
            throw IoError("corrupt container file " + origin_ + ": truncated at offset " +
                          std::to_string(pos_));
    }

private:
    std::uint64_t take(std::size_t n) {
        need(n);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += n;
        return v;
    }

    const std::string& buf_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_container(const TensorContainer& c) {
    std::string out;
    out.append(kContainerMagic, 4);
    detail::put_u32(out, kContainerVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(c.size()));
    for (const TensorEntry& e : c.entries()) {
        detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
        out += e.name;
        out.push_back(static_cast<char>(e.dtype));
        out.push_back(static_cast<char>(e.shape.size()));
        for (std::uint64_t d : e.shape) detail::put_u64(out, d);
        for (float f : e.data) detail::put_f32(out, f);
    }
    return out;
}

inline void save_container(const TensorContainer& c, const std::filesystem::path& path) {
    atomic_write_file(path, serialize_container(c));
}

inline TensorContainer parse_container(const std::string& bytes, const std::string& origin) {
    detail::ByteReader r(bytes, origin);
    r.need(4);
    if (bytes.compare(0, 4, kContainerMagic, 4) != 0)
        throw IoError("corrupt container file " + origin + ": bad magic");
    r.bytes(4);
    const std::uint32_t version = r.u32();
    if (version != kContainerVersion)
        throw IoError("container file " + origin + " has version " + std::to_string(version) +
                      ", expected " + std::to_string(kContainerVersion));
    const std::uint32_t count = r.u32();
    TensorContainer c;
    for (std::uint32_t i = 0; i < count; ++i) {
        TensorEntry e;
        const std::uint32_t name_len = r.u32();
        e.name = r.bytes(name_len);
        const std::uint8_t dtype = r.u8();
        if (dtype != 0)
            throw IoError("container file " + origin + ": unknown dtype code " +
                          std::to_string(dtype) + " for tensor '" + e.name + "'");
        e.dtype = DType::f32;
        const std::uint8_t rank = r.u8();
        e.shape.resize(rank);
        std::uint64_t numel = 1;
        for (auto& d : e.shape) {
            d = r.u64();
            if (d == 0 || numel > (std::uint64_t(1) << 40) / d)
                throw IoError("corrupt container file " + origin + ": bad shape for tensor '" +
                              e.name + "'");
            numel *= d;
        }
        r.need(numel * 4);
        e.data.resize(numel);
        for (auto& f : e.data) f = r.f32();
        c.add(std::move(e));
    }
    if (r.remaining() != 0)
        throw IoError("corrupt container file " + origin + ": " + std::to_string(r.remaining()) +
                      " trailing bytes");
    return c;
}

inline TensorContainer load_container(const std::filesystem::path& path) {
    return parse_container(read_file(path), path.string());
}

// --- weight averaging ---------------------------------------------------

// Uniform or weighted mean across checkpoints; key_filter restricts the merge
// to a name prefix (the language backbone, typically) while every other
// tensor passes through verbatim from one designated input.
struct MergeSpec {
    std::vector<std::filesystem::path> inputs;
    std::vector<double> weights;             // empty = uniform
    std::optional<std::string> key_filter;   // name prefix; nullopt = merge all
    std::size_t passthrough_source = 0;

    bool matches(const std::string& name) const {
        return !key_filter || name.rfind(*key_filter, 0) == 0;
    }
};

namespace detail {
inline std::vector<double> resolve_weights(std::size_t n, const std::vector<double>& weights) {
    if (n < 2) throw ValidationError("average needs at least 2 inputs, got " + std::to_string(n));
    if (weights.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
    if (weights.size() != n)
        throw ValidationError("weight count " + std::to_string(weights.size()) +
                              " != input count " + std::to_string(n));
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw ValidationError("weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("weights must sum to 1 (got " + std::to_string(sum) + ")");
    return weights;
}

inline std::string shape_str(const std::vector<std::uint64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i)
        s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
}
}  // namespace detail

/// The accumulation core: elementwise weighted sum in double precision, inputs
/// taken in order. Exposed separately so numeric properties can be checked
/// before the f32 narrowing.
inline std::vector<double> weighted_sum_f64(std::span<const TensorEntry* const> inputs,
                                            std::span<const double> weights) {
    const std::uint64_t n = inputs.front()->numel();
    std::vector<double> acc(n, 0.0);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::vector<float>& data = inputs[i]->data;
        const double w = weights[i];
        for (std::uint64_t k = 0; k < n; ++k) acc[k] += w * static_cast<double>(data[k]);
    }
    return acc;
}

inline TensorContainer average(std::span<const TensorContainer> containers,
                               const std::vector<double>& weights_in,
                               const std::optional<std::string>& key_filter = std::nullopt,
                               std::size_t passthrough_source = 0) {
    const std::vector<double> weights = detail::resolve_weights(containers.size(), weights_in);
    if (passthrough_source >= containers.size())
        throw ValidationError("passthrough_source " + std::to_string(passthrough_source) +
                              " out of range");
    MergeSpec match;
    match.key_filter = key_filter;

    // Matched keys must form an identical (name -> shape) schema across all
    // inputs; validate both directions before touching any data.
    const TensorContainer& base = containers[passthrough_source];
    for (std::size_t i = 0; i < containers.size(); ++i) {
        for (const TensorEntry& e : containers[i].entries()) {
            if (!match.matches(e.name)) continue;
            const TensorEntry* b = base.find(e.name);
            if (b == nullptr)
                throw ValidationError("tensor '" + e.name + "' (input " + std::to_string(i) +
                                      ") missing from passthrough source");
            if (b->shape != e.shape)
                throw ValidationError("shape mismatch for tensor '" + e.name + "': " +
                                      detail::shape_str(b->shape) + " vs " +
                                      detail::shape_str(e.shape) + " (input " + std::to_string(i) +
                                      ")");
        }
    }

    TensorContainer out;
    for (const TensorEntry& b : base.entries()) {
        if (!match.matches(b.name)) {
            out.add(b);  // verbatim, bit-exact
            continue;
        }
        std::vector<const TensorEntry*> inputs;
        inputs.reserve(containers.size());
        for (std::size_t i = 0; i < containers.size(); ++i) {
            const TensorEntry* e = containers[i].find(b.name);
            if (e == nullptr)
                throw ValidationError("tensor '" + b.name + "' missing from input " +
                                      std::to_string(i));
            inputs.push_back(e);
        }
        const std::vector<double> acc = weighted_sum_f64(inputs, weights);
        TensorEntry merged;
        merged.name = b.name;
        merged.dtype = b.dtype;
        merged.shape = b.shape;
        merged.data.resize(acc.size());
        for (std::size_t k = 0; k < acc.size(); ++k) merged.data[k] = static_cast<float>(acc[k]);
        out.add(std::move(merged));
    }
    return out;
}

inline TensorContainer average(const MergeSpec& spec) {
    std::vector<TensorContainer> containers;
    containers.reserve(spec.inputs.size());
    for (const auto& p : spec.inputs) containers.push_back(load_container(p));
    return average(containers, spec.weights, spec.key_filter, spec.passthrough_source);
}

// --- diff reporting -------------------------------------------------------

struct DiffRow {
    std::string name;
    double max_abs = 0.0;
    double rms = 0.0;
};

/// Per-tensor max-abs and RMS difference, sorted by max-abs descending.
inline std::vector<DiffRow> diff_report(const TensorContainer& a, const TensorContainer& b) {
    std::string missing;
    for (const TensorEntry& e : a.entries())
        if (!b.find(e.name)) missing += " '" + e.name + "' (only in first)";
    for (const TensorEntry& e : b.entries())
        if (!a.find(e.name)) missing += " '" + e.name + "' (only in second)";
    if (!missing.empty()) throw ValidationError("schema mismatch:" + missing);

    std::vector<DiffRow> rows;
    for (const TensorEntry& ea : a.entries()) {
        const TensorEntry* eb = b.find(ea.name);
        if (ea.shape != eb->shape)
            throw ValidationError("shape mismatch for tensor '" + ea.name + "': " +
                                  detail::shape_str(ea.shape) + " vs " +
                                  detail::shape_str(eb->shape));
        DiffRow row;
        row.name = ea.name;
        double sq = 0.0;
        for (std::size_t k = 0; k < ea.data.size(); ++k) {
            const double d = static_cast<double>(ea.data[k]) - static_cast<double>(eb->data[k]);
            row.max_abs = std::max(row.max_abs, std::abs(d));
            sq += d * d;
        }
        row.rms = ea.data.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(ea.data.size()));
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const DiffRow& x, const DiffRow& y) {
        if (x.max_abs != y.max_abs) return x.max_abs > y.max_abs;
        return x.name < y.name;
    });
    return rows;
}

}  // namespace mmpipe
