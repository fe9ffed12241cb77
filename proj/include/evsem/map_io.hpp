#pragma once

// Binary map format (all integers and floats little-endian):
//
//   magic          7 bytes   "ESMMAP1"
//   num_classes    u32
//   resolution     f64
//   prior_alpha    f64
//   length_scale   f64
//   signal_scale   f64
//   weight_floor   f64
//   label_mode     u8        0 = hard_onehot, 1 = soft_probs
//   weighting      u8        0 = uniform, 1 = one_minus_vacuity
//   scan_count     u64
//   record_count   u64
//   records        record_count x { i32 i, i32 j, i32 k, f64 alpha[K] }
//
// Records are written in ascending (i, j, k) order so equal maps serialize
// to equal bytes.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "evsem/errors.hpp"
#include "evsem/voxel_map.hpp"

namespace evsem {

inline constexpr std::string_view kMapMagic = "ESMMAP1";
inline constexpr std::string_view kMapMagicFamily = "ESMMAP";

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void i32(std::int32_t v) { put(static_cast<std::uint32_t>(v), 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

private:
    void put(std::uint64_t v, int n) {
        for (int b = 0; b < n; ++b) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(get(4))); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::string raw(std::size_t n) {
        need(n);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw LoadError("map file truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int b = 0; b < n; ++b) v |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(b)]) << (8 * b);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_map(const VoxelMap& map) {
    const MapConfig& cfg = map.config();
    detail::ByteWriter w;
    w.raw(kMapMagic);
    w.u32(static_cast<std::uint32_t>(cfg.num_classes));
    w.f64(cfg.resolution);
    w.f64(cfg.prior_alpha);
    w.f64(cfg.kernel.length_scale);
    w.f64(cfg.kernel.signal_scale);
    w.f64(cfg.weight_floor);
    w.u8(cfg.label_mode == LabelMode::hard_onehot ? 0 : 1);
    w.u8(cfg.weighting == Weighting::uniform ? 0 : 1);
    w.u64(map.scan_count());
    const auto keys = map.sorted_keys();
    w.u64(keys.size());
    for (const auto& key : keys) {
        w.i32(key.i);
        w.i32(key.j);
        w.i32(key.k);
        const auto alpha = *map.find(key);
        for (double a : alpha) w.f64(a);
    }
    return w.bytes();
}

inline VoxelMap decode_map(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    const std::string magic = r.raw(kMapMagic.size());
    if (magic != kMapMagic) {
        if (magic.starts_with(kMapMagicFamily)) throw LoadError("unsupported map format version '" + magic + "'");
        throw LoadError("not a map file (bad magic)");
    }
    MapConfig cfg;
    const std::uint32_t k = r.u32();
    cfg.num_classes = k;
    cfg.resolution = r.f64();
    cfg.prior_alpha = r.f64();
    cfg.kernel.length_scale = r.f64();
    cfg.kernel.signal_scale = r.f64();
    cfg.weight_floor = r.f64();
    const std::uint8_t label_mode = r.u8();
    const std::uint8_t weighting = r.u8();
    if (label_mode > 1) throw LoadError("unknown label_mode code " + std::to_string(label_mode));
    if (weighting > 1) throw LoadError("unknown weighting code " + std::to_string(weighting));
    cfg.label_mode = label_mode == 0 ? LabelMode::hard_onehot : LabelMode::soft_probs;
    cfg.weighting = weighting == 0 ? Weighting::uniform : Weighting::one_minus_vacuity;
    const std::uint64_t scan_count = r.u64();
    const std::uint64_t records = r.u64();

    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw LoadError(std::string("invalid map config: ") + e.what());
    }
    const std::uint64_t record_bytes = 12 + 8ULL * k;
    if (records > r.remaining() / record_bytes) throw LoadError("map file truncated: record section too short");

    VoxelMap map(cfg);
    map.set_scan_count(scan_count);
    std::vector<double> alpha(k);
    for (std::uint64_t n = 0; n < records; ++n) {
        VoxelKey key{r.i32(), r.i32(), r.i32()};
        for (auto& a : alpha) a = r.f64();
        if (map.find(key)) throw LoadError("duplicate voxel record");
        try {
            map.assign_cell(key, alpha);
        } catch (const ValidationError& e) {
            throw LoadError(std::string("invalid voxel record: ") + e.what());
        }
    }
    if (r.remaining() != 0) throw LoadError("trailing bytes after map records");
    return map;
}

/// Writes the map to a temporary sibling and renames it into place, so a
/// failed write never leaves a partial file at `path`.
inline void serialize_map(const VoxelMap& map, const std::filesystem::path& path) {
    const auto bytes = encode_map(map);
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw Error("failed writing " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline VoxelMap deserialize_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open map file " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_map(bytes);
}

}  // namespace evsem
