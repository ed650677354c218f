#pragma once

// HMCK checkpoint files.
//
//   "HMCK" | u32 version | u32 record count | records... | u32 CRC-32
//   record: u32 name length | name | u32 rank | rank x u32 dims | float32 data
//   "__config__" record: rank 0, then u32 byte length and UTF-8 JSON
//
// All integers and floats little-endian; the CRC covers every preceding byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <zlib.h>

#include "hapticgen/dataset_io.hpp"
#include "hapticgen/errors.hpp"
#include "hapticgen/tensor.hpp"

namespace hapticgen {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr const char* kConfigRecord = "__config__";

struct CheckpointRecord {
    std::string name;
    Shape shape;
    std::vector<float> data;

    bool operator==(const CheckpointRecord&) const = default;
};

struct Checkpoint {
    std::vector<CheckpointRecord> records;
    std::optional<std::string> config_json;

    const CheckpointRecord* find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }
};

inline std::uint32_t crc32_of(const std::string& bytes, std::size_t n) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
public:
    explicit ByteReader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    std::uint32_t u32() {
        need(4, "truncated integer");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string take(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return end_ - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (n > end_ - pos_) throw ParseError(std::string("checkpoint: ") + what, pos_);
    }
    const std::string& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    std::string out = "HMCK";
    detail::put_u32(out, kCheckpointVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(ck.records.size() + (ck.config_json ? 1 : 0)));
    if (ck.config_json) {
        detail::put_u32(out, static_cast<std::uint32_t>(std::strlen(kConfigRecord)));
        out += kConfigRecord;
        detail::put_u32(out, 0);
        detail::put_u32(out, static_cast<std::uint32_t>(ck.config_json->size()));
        out += *ck.config_json;
    }
    for (const auto& r : ck.records) {
        require(r.name != kConfigRecord, "checkpoint: reserved record name");
        require(numel_of(r.shape) == r.data.size() && !r.shape.empty(),
                "checkpoint: record '" + r.name + "' data does not match its shape");
        detail::put_u32(out, static_cast<std::uint32_t>(r.name.size()));
        out += r.name;
        detail::put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
        for (auto d : r.shape) detail::put_u32(out, static_cast<std::uint32_t>(d));
        for (float f : r.data) detail::put_f32(out, f);
    }
    detail::put_u32(out, crc32_of(out, out.size()));
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 4, "HMCK") != 0) throw IntegrityError("checkpoint: bad magic");
    const std::size_t body = bytes.size() - 4;
    detail::ByteReader tail(bytes.substr(body), 4);
    if (tail.u32() != crc32_of(bytes, body)) throw IntegrityError("checkpoint: CRC mismatch");

    detail::ByteReader in(bytes, body);
    in.take(4, "magic");
    const std::uint32_t version = in.u32();
    if (version != kCheckpointVersion)
        throw IntegrityError("checkpoint: unsupported version " + std::to_string(version));
    const std::uint32_t count = in.u32();
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
        CheckpointRecord r;
        r.name = in.take(in.u32(), "truncated record name");
        const std::uint32_t rank = in.u32();
        if (rank == 0) {
            if (r.name != kConfigRecord) throw ParseError("checkpoint: rank-0 record '" + r.name + "'", in.pos());
            ck.config_json = in.take(in.u32(), "truncated config blob");
            continue;
        }
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            r.shape.push_back(in.u32());
            if (r.shape.back() == 0) throw ParseError("checkpoint: zero dimension in '" + r.name + "'", in.pos());
            n *= r.shape.back();
        }
        if (n > in.remaining() / 4) throw ParseError("checkpoint: truncated data for '" + r.name + "'", in.pos());
        r.data.resize(n);
        for (auto& f : r.data) f = std::bit_cast<float>(in.u32());
        ck.records.push_back(std::move(r));
    }
    if (in.remaining() != 0) throw ParseError("checkpoint: trailing bytes after records", in.pos());
    return ck;
}

inline void save_checkpoint(const fs::path& path, const Checkpoint& ck) { write_file_bytes(path, encode_checkpoint(ck)); }

inline Checkpoint load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file_bytes(path)); }

// Snapshot of named tensors (values stored as float32).
template <typename T>
Checkpoint make_checkpoint(const std::vector<std::pair<std::string, Tensor<T>>>& params,
                           std::optional<std::string> config_json = std::nullopt) {
    Checkpoint ck;
    ck.config_json = std::move(config_json);
    for (const auto& [name, t] : params) {
        CheckpointRecord r{name, t.shape(), std::vector<float>(t.numel())};
        const auto src = t.data();
        for (std::size_t i = 0; i < src.size(); ++i) r.data[i] = static_cast<float>(src[i]);
        ck.records.push_back(std::move(r));
    }
    return ck;
}

// Copies matching records into the tensors; every tensor must be present.
template <typename T>
void restore_parameters(std::vector<std::pair<std::string, Tensor<T>>>& params, const Checkpoint& ck) {
    for (auto& [name, t] : params) {
        const CheckpointRecord* r = ck.find(name);
        if (!r) throw IntegrityError("checkpoint: missing parameter '" + name + "'");
        if (r->shape != t.shape())
            throw IntegrityError("checkpoint: parameter '" + name + "' has shape " + shape_str(r->shape) +
                                 ", model expects " + shape_str(t.shape()));
        auto dst = t.mutable_data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(r->data[i]);
    }
}

}  // namespace hapticgen
