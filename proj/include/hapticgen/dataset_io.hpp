#pragma once

// Portable pixmap/graymap codecs and the JSON-lines corpus manifest.
//
// Layout:  root/<category>/<material>/pair_<k>.image.ppm
//          root/<category>/<material>/pair_<k>.height.pgm   (16-bit, value * 65535)
//          root/manifest.jsonl

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hapticgen/errors.hpp"
#include "hapticgen/heightmap.hpp"

namespace hapticgen {

namespace fs = std::filesystem;

inline std::uint8_t to_u8(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v * 255.0 + 0.5), 0.0, 255.0));
}

inline std::uint16_t to_u16(double v) {
    return static_cast<std::uint16_t>(std::clamp(std::floor(v * 65535.0 + 0.5), 0.0, 65535.0));
}

inline std::string read_file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading", path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file_bytes(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory", path.parent_path().string());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing", path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed", path.string());
}

struct PnmHeader {
    char kind = '5';  // '5' graymap, '6' pixmap
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t maxval = 0;
    std::size_t payload_offset = 0;

    std::size_t channels() const { return kind == '6' ? 3 : 1; }
    std::size_t bytes_per_sample() const { return maxval > 255 ? 2 : 1; }
    std::size_t payload_size() const { return width * height * channels() * bytes_per_sample(); }
};

// total_size is the full file length when only a prefix of it is in `bytes`.
inline PnmHeader parse_pnm_header(const std::string& bytes, std::size_t total_size) {
    PnmHeader h;
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw ParseError("not a binary P5/P6 file", 0);
    h.kind = bytes[1];
    std::size_t pos = 2;
    auto next_number = [&](const char* what) -> std::size_t {
        while (pos < bytes.size()) {
            const char c = bytes[pos];
            if (c == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
                ++pos;
            } else {
                break;
            }
        }
        if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
            throw ParseError(std::string("expected ") + what + " in header", pos);
        std::size_t v = 0;
        while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
            v = v * 10 + static_cast<std::size_t>(bytes[pos] - '0');
            if (v > (1u << 24)) throw ParseError(std::string(what) + " out of range", pos);
            ++pos;
        }
        return v;
    };
    h.width = next_number("width");
    h.height = next_number("height");
    h.maxval = next_number("maxval");
    if (h.width == 0 || h.height == 0) throw ParseError("zero image dimension", pos);
    if (h.maxval == 0 || h.maxval > 65535) throw ParseError("maxval must be in 1..65535", pos);
    if (pos >= bytes.size()) throw ParseError("missing header terminator", pos);
    const char term = bytes[pos];
    if (term != ' ' && term != '\t' && term != '\n' && term != '\r')
        throw ParseError("header must end with a single whitespace byte", pos);
    h.payload_offset = pos + 1;
    if (total_size < h.payload_offset + h.payload_size())
        throw ParseError("truncated payload: expected " + std::to_string(h.payload_size()) + " bytes", total_size);
    return h;
}

inline PnmHeader parse_pnm_header(const std::string& bytes) { return parse_pnm_header(bytes, bytes.size()); }

inline PnmHeader read_pnm_header(const fs::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open for reading", path.string());
    const auto file_size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::string prefix(std::min<std::size_t>(file_size, 256), '\0');
    in.read(prefix.data(), static_cast<std::streamsize>(prefix.size()));
    return parse_pnm_header(prefix, file_size);
}

// ---- encoders ---------------------------------------------------------------

inline std::string encode_ppm(const RgbImage& img) {
    std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.values.size());
    for (double v : img.values) out.push_back(static_cast<char>(to_u8(v)));
    return out;
}

inline std::string encode_pgm_u8(const GrayU8& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(img.values.begin(), img.values.end());
    return out;
}

// Heights in [0, 1] stored as 16-bit big-endian, value * 65535 rounded half-up.
inline std::string encode_height_pgm16(const HeightMap& h) {
    std::string out = "P5\n" + std::to_string(h.width) + " " + std::to_string(h.height) + "\n65535\n";
    out.reserve(out.size() + 2 * h.values.size());
    for (double v : h.values) {
        const std::uint16_t q = to_u16(v);
        out.push_back(static_cast<char>(q >> 8));
        out.push_back(static_cast<char>(q & 0xff));
    }
    return out;
}

// ---- decoders ---------------------------------------------------------------

inline RgbImage decode_ppm(const std::string& bytes) {
    const PnmHeader h = parse_pnm_header(bytes);
    if (h.kind != '6') throw ParseError("expected P6 pixmap", 1);
    if (h.maxval != 255) throw ParseError("only 8-bit pixmaps are supported", h.payload_offset - 1);
    RgbImage img(h.width, h.height);
    for (std::size_t i = 0; i < img.values.size(); ++i)
        img.values[i] = static_cast<unsigned char>(bytes[h.payload_offset + i]) / 255.0;
    return img;
}

inline GrayU8 decode_pgm_u8(const std::string& bytes) {
    const PnmHeader h = parse_pnm_header(bytes);
    if (h.kind != '5') throw ParseError("expected P5 graymap", 1);
    if (h.maxval != 255) throw ParseError("expected an 8-bit graymap", h.payload_offset - 1);
    GrayU8 g{h.width, h.height, std::vector<std::uint8_t>(h.width * h.height)};
    for (std::size_t i = 0; i < g.values.size(); ++i)
        g.values[i] = static_cast<std::uint8_t>(bytes[h.payload_offset + i]);
    return g;
}

// Accepts 8-bit (value / 255) or 16-bit (value / 65535) graymaps.
inline HeightMap decode_height_pgm(const std::string& bytes) {
    const PnmHeader h = parse_pnm_header(bytes);
    if (h.kind != '5') throw ParseError("expected P5 graymap", 1);
    HeightMap out(h.width, h.height);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + h.payload_offset);
    const double scale = static_cast<double>(h.maxval);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const unsigned v = h.bytes_per_sample() == 2 ? (unsigned{p[2 * i]} << 8) | p[2 * i + 1] : p[i];
        out.values[i] = static_cast<double>(v) / scale;
    }
    return out;
}

// ---- file helpers -----------------------------------------------------------

inline void write_ppm(const fs::path& path, const RgbImage& img) { write_file_bytes(path, encode_ppm(img)); }
inline void write_pgm_u8(const fs::path& path, const GrayU8& img) { write_file_bytes(path, encode_pgm_u8(img)); }
inline void write_height_pgm16(const fs::path& path, const HeightMap& h) {
    write_file_bytes(path, encode_height_pgm16(h));
}

template <typename Decode>
auto decode_file(const fs::path& path, Decode decode) {
    const std::string bytes = read_file_bytes(path);
    try {
        return decode(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.offset());
    }
}

inline RgbImage read_ppm(const fs::path& path) { return decode_file(path, decode_ppm); }
inline GrayU8 read_pgm_u8(const fs::path& path) { return decode_file(path, decode_pgm_u8); }
inline HeightMap read_height_pgm(const fs::path& path) { return decode_file(path, decode_height_pgm); }

// ---- manifest ---------------------------------------------------------------

inline constexpr const char* kManifestName = "manifest.jsonl";
inline constexpr const char* kManifestFormat = "hapticgen-manifest";

struct ManifestEntry {
    std::string id;
    std::string category;
    std::string material;
    std::string image_path;   // relative to the corpus root
    std::string height_path;  // relative to the corpus root
    std::string split;        // train | val | test

    bool operator==(const ManifestEntry&) const = default;
};

// Layout "full" declares 5 categories x 20 materials x 20 pairs.
struct Manifest {
    std::string layout = "free";
    std::vector<ManifestEntry> entries;

    std::map<std::string, std::size_t> counts_by_category() const {
        std::map<std::string, std::size_t> out;
        for (const auto& e : entries) ++out[e.category];
        return out;
    }
    std::map<std::string, std::size_t> counts_by_material() const {
        std::map<std::string, std::size_t> out;
        for (const auto& e : entries) ++out[e.category + "/" + e.material];
        return out;
    }
    std::vector<ManifestEntry> split(const std::string& name) const {
        std::vector<ManifestEntry> out;
        for (const auto& e : entries)
            if (e.split == name) out.push_back(e);
        return out;
    }

    bool operator==(const Manifest&) const = default;
};

inline std::string encode_manifest(const Manifest& m) {
    std::string out;
    nlohmann::ordered_json header;
    header["format"] = kManifestFormat;
    header["version"] = 1;
    header["layout"] = m.layout;
    out += header.dump() + "\n";
    for (const auto& e : m.entries) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["category"] = e.category;
        j["material"] = e.material;
        j["image_path"] = e.image_path;
        j["height_path"] = e.height_path;
        j["split"] = e.split;
        out += j.dump() + "\n";
    }
    return out;
}

inline Manifest decode_manifest(const std::string& text) {
    Manifest m;
    std::size_t pos = 0;
    bool saw_header = false;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        const std::string line = text.substr(pos, end - pos);
        const std::size_t line_start = pos;
        pos = end + 1;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("manifest line is not JSON: ") + e.what(), line_start + e.byte);
        }
        if (!j.is_object()) throw ParseError("manifest line is not a JSON object", line_start);
        if (j.contains("format")) {
            if (j.value("format", "") != kManifestFormat) throw ParseError("unknown manifest format", line_start);
            m.layout = j.value("layout", "free");
            saw_header = true;
            continue;
        }
        try {
            m.entries.push_back({j.at("id").get<std::string>(), j.at("category").get<std::string>(),
                                 j.at("material").get<std::string>(), j.at("image_path").get<std::string>(),
                                 j.at("height_path").get<std::string>(), j.at("split").get<std::string>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("manifest entry is missing a field: ") + e.what(), line_start);
        }
    }
    if (!saw_header) throw ParseError("manifest header line missing", 0);
    return m;
}

inline void write_manifest(const fs::path& root, const Manifest& m) {
    write_file_bytes(root / kManifestName, encode_manifest(m));
}

inline Manifest read_manifest(const fs::path& root) {
    const fs::path p = root / kManifestName;
    if (!fs::exists(p)) throw IoError("manifest not found", p.string());
    try {
        return decode_manifest(read_file_bytes(p));
    } catch (const ParseError& e) {
        throw ParseError(p.string() + ": " + e.what(), e.offset());
    }
}

inline constexpr std::size_t kFullCategories = 5;
inline constexpr std::size_t kFullMaterialsPerCategory = 20;
inline constexpr std::size_t kFullPairsPerMaterial = 20;

struct Violation {
    std::string id;    // entry id, or empty for corpus-wide findings
    std::string kind;  // duplicate-id | bad-split | missing-path | unreadable | dimension-mismatch | layout
    std::string message;
};

struct ValidationReport {
    std::size_t entries = 0;
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Read-only check of a corpus directory against its manifest.
inline ValidationReport manifest_validate(const fs::path& root) {
    const Manifest m = read_manifest(root);
    ValidationReport r;
    r.entries = m.entries.size();
    std::set<std::string> ids;
    for (const auto& e : m.entries) {
        if (!ids.insert(e.id).second) r.violations.push_back({e.id, "duplicate-id", "id appears more than once"});
        if (e.split != "train" && e.split != "val" && e.split != "test")
            r.violations.push_back({e.id, "bad-split", "split '" + e.split + "' is not train/val/test"});
        bool paths_ok = true;
        for (const auto& rel : {e.image_path, e.height_path}) {
            if (!fs::exists(root / rel)) {
                r.violations.push_back({e.id, "missing-path", (root / rel).string()});
                paths_ok = false;
            }
        }
        if (!paths_ok) continue;
        try {
            const PnmHeader ih = read_pnm_header(root / e.image_path);
            const PnmHeader hh = read_pnm_header(root / e.height_path);
            if (ih.kind != '6' || hh.kind != '5') {
                r.violations.push_back({e.id, "unreadable", "image must be P6 and height P5"});
            } else if (ih.width != hh.width || ih.height != hh.height) {
                r.violations.push_back({e.id, "dimension-mismatch",
                                        "image " + std::to_string(ih.width) + "x" + std::to_string(ih.height) +
                                            " vs height " + std::to_string(hh.width) + "x" +
                                            std::to_string(hh.height)});
            }
        } catch (const std::exception& ex) {
            r.violations.push_back({e.id, "unreadable", ex.what()});
        }
    }
    if (m.layout == "full") {
        const auto cats = m.counts_by_category();
        const auto mats = m.counts_by_material();
        if (cats.size() != kFullCategories)
            r.violations.push_back({"", "layout", "expected " + std::to_string(kFullCategories) + " categories, found " +
                                                      std::to_string(cats.size())});
        std::map<std::string, std::size_t> materials_per_category;
        for (const auto& [key, n] : mats) {
            ++materials_per_category[key.substr(0, key.find('/'))];
            if (n != kFullPairsPerMaterial)
                r.violations.push_back({"", "layout", "material " + key + " has " + std::to_string(n) + " pairs, expected " +
                                                          std::to_string(kFullPairsPerMaterial)});
        }
        for (const auto& [cat, n] : materials_per_category) {
            if (n != kFullMaterialsPerCategory)
                r.violations.push_back({"", "layout", "category " + cat + " has " + std::to_string(n) +
                                                          " materials, expected " +
                                                          std::to_string(kFullMaterialsPerCategory)});
        }
        const std::size_t expected = kFullCategories * kFullMaterialsPerCategory * kFullPairsPerMaterial;
        if (m.entries.size() != expected)
            r.violations.push_back({"", "layout", "expected " + std::to_string(expected) + " entries, found " +
                                                      std::to_string(m.entries.size())});
    }
    return r;
}

}  // namespace hapticgen
