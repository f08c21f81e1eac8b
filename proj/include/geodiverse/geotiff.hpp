#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "geodiverse/errors.hpp"

namespace geodiverse {

enum class PixelType { U16, F32 };

// Multi-band raster with an affine geotransform. Pixel values are held as
// float; uint16 source data is representable exactly, so a read/write
// round trip of a U16 tile is bit-stable.
struct RasterTile {
    std::vector<std::string> bands;
    std::size_t width = 0;
    std::size_t height = 0;
    PixelType dtype = PixelType::F32;
    // band-major: pixels[b * width * height + row * width + col]
    std::vector<float> pixels;
    // GDAL convention: X = gt[0] + col*gt[1] + row*gt[2],
    //                  Y = gt[3] + col*gt[4] + row*gt[5]
    std::array<double, 6> geotransform{0, 1, 0, 0, 0, -1};
    std::string crs = "EPSG:4326";
    bool geographic = true;
    std::optional<double> nodata;

    std::size_t band_count() const { return bands.size(); }
    std::size_t pixels_per_band() const { return width * height; }

    float at(std::size_t band, std::size_t row, std::size_t col) const {
        return pixels[band * width * height + row * width + col];
    }
    float& at(std::size_t band, std::size_t row, std::size_t col) {
        return pixels[band * width * height + row * width + col];
    }

    void validate() const {
        if (bands.empty() || width == 0 || height == 0) {
            throw validation_error("raster tile has empty dimensions");
        }
        if (pixels.size() != bands.size() * width * height) {
            throw validation_error("raster pixel buffer size mismatch");
        }
        if (geotransform[1] == 0.0 && geotransform[2] == 0.0) {
            throw validation_error("geotransform has zero x pixel size");
        }
        if (geotransform[4] == 0.0 && geotransform[5] == 0.0) {
            throw validation_error("geotransform has zero y pixel size");
        }
    }

    // pixel (col, row) in continuous grid coordinates -> CRS position
    std::pair<double, double> pixel_to_crs(double col, double row) const {
        return {geotransform[0] + col * geotransform[1] + row * geotransform[2],
                geotransform[3] + col * geotransform[4] +
                    row * geotransform[5]};
    }
};

namespace tiff {

// Tag and type constants for the minimal baseline-TIFF + GeoTIFF subset
// this codec supports: little-endian, uncompressed or deflate, planar or
// chunky, uint16/float32 samples.
inline constexpr std::uint16_t kTagWidth = 256;
inline constexpr std::uint16_t kTagHeight = 257;
inline constexpr std::uint16_t kTagBitsPerSample = 258;
inline constexpr std::uint16_t kTagCompression = 259;
inline constexpr std::uint16_t kTagPhotometric = 262;
inline constexpr std::uint16_t kTagImageDescription = 270;
inline constexpr std::uint16_t kTagStripOffsets = 273;
inline constexpr std::uint16_t kTagSamplesPerPixel = 277;
inline constexpr std::uint16_t kTagRowsPerStrip = 278;
inline constexpr std::uint16_t kTagStripByteCounts = 279;
inline constexpr std::uint16_t kTagPlanarConfig = 284;
inline constexpr std::uint16_t kTagSampleFormat = 339;
inline constexpr std::uint16_t kTagModelPixelScale = 33550;
inline constexpr std::uint16_t kTagModelTiepoint = 33922;
inline constexpr std::uint16_t kTagModelTransformation = 34264;
inline constexpr std::uint16_t kTagGeoKeyDirectory = 34735;
inline constexpr std::uint16_t kTagGdalNodata = 42113;

inline constexpr std::uint16_t kTypeByte = 1;
inline constexpr std::uint16_t kTypeAscii = 2;
inline constexpr std::uint16_t kTypeShort = 3;
inline constexpr std::uint16_t kTypeLong = 4;
inline constexpr std::uint16_t kTypeDouble = 12;

inline constexpr std::uint16_t kGeoKeyModelType = 1024;
inline constexpr std::uint16_t kGeoKeyRasterType = 1025;
inline constexpr std::uint16_t kGeoKeyGeographicType = 2048;
inline constexpr std::uint16_t kGeoKeyProjectedCSType = 3072;

inline std::size_t type_size(std::uint16_t type) {
    switch (type) {
        case kTypeByte:
        case kTypeAscii:
            return 1;
        case kTypeShort:
            return 2;
        case kTypeLong:
            return 4;
        case kTypeDouble:
            return 8;
        default:
            return 0;
    }
}

struct Entry {
    std::uint16_t tag;
    std::uint16_t type;
    std::uint32_t count;
    std::vector<std::uint8_t> payload;  // raw little-endian values
};

inline void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v) {
    buf.push_back(static_cast<std::uint8_t>(v & 0xff));
    buf.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

inline void put_f64(std::vector<std::uint8_t>& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
}

inline Entry shorts(std::uint16_t tag, std::vector<std::uint16_t> values) {
    Entry e{tag, kTypeShort, static_cast<std::uint32_t>(values.size()), {}};
    for (std::uint16_t v : values) put_u16(e.payload, v);
    return e;
}

inline Entry longs(std::uint16_t tag, std::vector<std::uint32_t> values) {
    Entry e{tag, kTypeLong, static_cast<std::uint32_t>(values.size()), {}};
    for (std::uint32_t v : values) put_u32(e.payload, v);
    return e;
}

inline Entry doubles(std::uint16_t tag, std::vector<double> values) {
    Entry e{tag, kTypeDouble, static_cast<std::uint32_t>(values.size()), {}};
    for (double v : values) put_f64(e.payload, v);
    return e;
}

inline Entry ascii(std::uint16_t tag, const std::string& text) {
    Entry e{tag, kTypeAscii, static_cast<std::uint32_t>(text.size() + 1), {}};
    e.payload.assign(text.begin(), text.end());
    e.payload.push_back(0);
    return e;
}

// --- writer ----------------------------------------------------------------

inline std::vector<std::uint8_t> encode(const RasterTile& tile) {
    tile.validate();
    const std::size_t spp = tile.band_count();
    const std::size_t sample_bytes = tile.dtype == PixelType::U16 ? 2 : 4;
    const std::size_t strip_bytes =
        tile.pixels_per_band() * sample_bytes;

    // one strip per band, band-sequential
    std::vector<std::uint8_t> strips;
    strips.reserve(spp * strip_bytes);
    for (std::size_t b = 0; b < spp; ++b) {
        for (std::size_t i = 0; i < tile.pixels_per_band(); ++i) {
            const float v = tile.pixels[b * tile.pixels_per_band() + i];
            if (tile.dtype == PixelType::U16) {
                put_u16(strips, static_cast<std::uint16_t>(v));
            } else {
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                put_u32(strips, bits);
            }
        }
    }

    std::vector<Entry> entries;
    entries.push_back(longs(kTagWidth, {static_cast<std::uint32_t>(tile.width)}));
    entries.push_back(
        longs(kTagHeight, {static_cast<std::uint32_t>(tile.height)}));
    entries.push_back(shorts(
        kTagBitsPerSample,
        std::vector<std::uint16_t>(spp, tile.dtype == PixelType::U16 ? 16 : 32)));
    entries.push_back(shorts(kTagCompression, {1}));
    entries.push_back(shorts(kTagPhotometric, {1}));
    {
        std::string desc = "bands=";
        for (std::size_t b = 0; b < spp; ++b) {
            if (b) desc += ',';
            desc += tile.bands[b];
        }
        entries.push_back(ascii(kTagImageDescription, desc));
    }
    const std::uint32_t strips_at = 8;
    std::vector<std::uint32_t> offsets, counts;
    for (std::size_t b = 0; b < spp; ++b) {
        offsets.push_back(strips_at + static_cast<std::uint32_t>(b * strip_bytes));
        counts.push_back(static_cast<std::uint32_t>(strip_bytes));
    }
    entries.push_back(longs(kTagStripOffsets, offsets));
    entries.push_back(
        shorts(kTagSamplesPerPixel, {static_cast<std::uint16_t>(spp)}));
    entries.push_back(
        longs(kTagRowsPerStrip, {static_cast<std::uint32_t>(tile.height)}));
    entries.push_back(longs(kTagStripByteCounts, counts));
    entries.push_back(shorts(kTagPlanarConfig, {2}));
    entries.push_back(shorts(
        kTagSampleFormat,
        std::vector<std::uint16_t>(spp, tile.dtype == PixelType::U16 ? 1 : 3)));

    const auto& gt = tile.geotransform;
    if (gt[2] == 0.0 && gt[4] == 0.0) {
        entries.push_back(
            doubles(kTagModelPixelScale, {gt[1], -gt[5], 0.0}));
        entries.push_back(
            doubles(kTagModelTiepoint, {0, 0, 0, gt[0], gt[3], 0}));
    } else {
        entries.push_back(doubles(
            kTagModelTransformation,
            {gt[1], gt[2], 0, gt[0], gt[4], gt[5], 0, gt[3], 0, 0, 0, 0, 0, 0,
             0, 1}));
    }
    {
        std::uint16_t epsg = 0;
        if (tile.crs.rfind("EPSG:", 0) == 0) {
            epsg = static_cast<std::uint16_t>(std::stoi(tile.crs.substr(5)));
        }
        std::vector<std::uint16_t> keys = {1, 1, 0, 0};
        auto add_key = [&](std::uint16_t id, std::uint16_t value) {
            keys.push_back(id);
            keys.push_back(0);
            keys.push_back(1);
            keys.push_back(value);
        };
        add_key(kGeoKeyModelType, tile.geographic ? 2 : 1);
        add_key(kGeoKeyRasterType, 1);
        if (epsg != 0) {
            add_key(tile.geographic ? kGeoKeyGeographicType
                                    : kGeoKeyProjectedCSType,
                    epsg);
        }
        keys[3] = static_cast<std::uint16_t>((keys.size() - 4) / 4);
        entries.push_back(shorts(kTagGeoKeyDirectory, std::move(keys)));
    }
    if (tile.nodata) {
        std::ostringstream os;
        os << *tile.nodata;
        entries.push_back(ascii(kTagGdalNodata, os.str()));
    }

    // layout: header | strips | out-of-line payloads | IFD
    std::uint32_t aux_at = strips_at + static_cast<std::uint32_t>(strips.size());
    if (aux_at % 2) ++aux_at;
    std::vector<std::uint8_t> aux;
    std::vector<std::uint32_t> value_words(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Entry& e = entries[i];
        if (e.payload.size() <= 4) {
            std::uint32_t w = 0;
            for (std::size_t k = 0; k < e.payload.size(); ++k) {
                w |= static_cast<std::uint32_t>(e.payload[k]) << (8 * k);
            }
            value_words[i] = w;
        } else {
            if (aux.size() % 2) aux.push_back(0);
            value_words[i] = aux_at + static_cast<std::uint32_t>(aux.size());
            aux.insert(aux.end(), e.payload.begin(), e.payload.end());
        }
    }
    std::uint32_t ifd_at = aux_at + static_cast<std::uint32_t>(aux.size());
    if (ifd_at % 2) ++ifd_at;

    std::vector<std::uint8_t> out;
    out.push_back('I');
    out.push_back('I');
    put_u16(out, 42);
    put_u32(out, ifd_at);
    out.insert(out.end(), strips.begin(), strips.end());
    out.resize(aux_at, 0);
    out.insert(out.end(), aux.begin(), aux.end());
    out.resize(ifd_at, 0);
    put_u16(out, static_cast<std::uint16_t>(entries.size()));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        put_u16(out, entries[i].tag);
        put_u16(out, entries[i].type);
        put_u32(out, entries[i].count);
        put_u32(out, value_words[i]);
    }
    put_u32(out, 0);  // no next IFD
    return out;
}

// --- reader ----------------------------------------------------------------

class Cursor {
  public:
    Cursor(const std::uint8_t* data, std::size_t size)
        : data_(data), size_(size) {}

    std::uint16_t u16_at(std::size_t off) const {
        check(off, 2);
        return static_cast<std::uint16_t>(data_[off] | (data_[off + 1] << 8));
    }
    std::uint32_t u32_at(std::size_t off) const {
        check(off, 4);
        return static_cast<std::uint32_t>(data_[off]) |
               (static_cast<std::uint32_t>(data_[off + 1]) << 8) |
               (static_cast<std::uint32_t>(data_[off + 2]) << 16) |
               (static_cast<std::uint32_t>(data_[off + 3]) << 24);
    }
    double f64_at(std::size_t off) const {
        check(off, 8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(data_[off + i]) << (8 * i);
        }
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    const std::uint8_t* bytes_at(std::size_t off, std::size_t n) const {
        check(off, n);
        return data_ + off;
    }
    std::size_t size() const { return size_; }

  private:
    void check(std::size_t off, std::size_t n) const {
        if (off + n > size_) throw parse_error("truncated TIFF data");
    }
    const std::uint8_t* data_;
    std::size_t size_;
};

struct RawEntry {
    std::uint16_t type = 0;
    std::uint32_t count = 0;
    std::size_t value_offset = 0;  // absolute offset of the value bytes
};

inline std::vector<std::uint8_t> inflate_bytes(const std::uint8_t* src,
                                               std::size_t src_len,
                                               std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf out_len = static_cast<uLongf>(expected);
    const int rc = uncompress(out.data(), &out_len, src,
                              static_cast<uLong>(src_len));
    if (rc != Z_OK) throw parse_error("deflate strip decompression failed");
    out.resize(out_len);
    return out;
}

inline RasterTile decode(const std::uint8_t* data, std::size_t size) {
    Cursor cur(data, size);
    if (size < 8 || data[0] != 'I' || data[1] != 'I' || cur.u16_at(2) != 42) {
        throw parse_error("not a little-endian TIFF file");
    }
    const std::uint32_t ifd_at = cur.u32_at(4);
    const std::uint16_t n_entries = cur.u16_at(ifd_at);

    std::map<std::uint16_t, RawEntry> tags;
    for (std::uint16_t i = 0; i < n_entries; ++i) {
        const std::size_t at = ifd_at + 2 + i * 12;
        RawEntry e;
        const std::uint16_t tag = cur.u16_at(at);
        e.type = cur.u16_at(at + 2);
        e.count = cur.u32_at(at + 4);
        const std::size_t bytes = type_size(e.type) * e.count;
        e.value_offset = bytes <= 4 ? at + 8 : cur.u32_at(at + 8);
        tags[tag] = e;
    }

    auto get_scalar = [&](std::uint16_t tag,
                          std::optional<std::uint32_t> fallback =
                              std::nullopt) -> std::uint32_t {
        auto it = tags.find(tag);
        if (it == tags.end()) {
            if (fallback) return *fallback;
            throw parse_error("TIFF missing required tag " +
                              std::to_string(tag));
        }
        return it->second.type == kTypeShort
                   ? cur.u16_at(it->second.value_offset)
                   : cur.u32_at(it->second.value_offset);
    };
    auto get_vector = [&](std::uint16_t tag) -> std::vector<std::uint32_t> {
        const RawEntry& e = tags.at(tag);
        std::vector<std::uint32_t> out(e.count);
        for (std::uint32_t i = 0; i < e.count; ++i) {
            out[i] = e.type == kTypeShort
                         ? cur.u16_at(e.value_offset + 2 * i)
                         : cur.u32_at(e.value_offset + 4 * i);
        }
        return out;
    };
    auto get_doubles = [&](std::uint16_t tag) -> std::vector<double> {
        const RawEntry& e = tags.at(tag);
        std::vector<double> out(e.count);
        for (std::uint32_t i = 0; i < e.count; ++i) {
            out[i] = cur.f64_at(e.value_offset + 8 * i);
        }
        return out;
    };
    auto get_ascii = [&](std::uint16_t tag) -> std::string {
        const RawEntry& e = tags.at(tag);
        const std::uint8_t* p = cur.bytes_at(e.value_offset, e.count);
        std::string s(reinterpret_cast<const char*>(p), e.count);
        while (!s.empty() && s.back() == '\0') s.pop_back();
        return s;
    };

    RasterTile tile;
    tile.width = get_scalar(kTagWidth);
    tile.height = get_scalar(kTagHeight);
    const std::uint32_t spp = get_scalar(kTagSamplesPerPixel, 1u);
    const std::uint32_t compression = get_scalar(kTagCompression, 1u);
    if (compression != 1 && compression != 8) {
        throw parse_error("unsupported TIFF compression " +
                          std::to_string(compression));
    }
    const std::uint32_t planar = get_scalar(kTagPlanarConfig, 1u);
    const std::uint32_t bits = get_vector(kTagBitsPerSample).front();
    std::uint32_t sample_format = 1;
    if (tags.contains(kTagSampleFormat)) {
        sample_format = get_vector(kTagSampleFormat).front();
    }
    if (bits == 16 && sample_format == 1) {
        tile.dtype = PixelType::U16;
    } else if (bits == 32 && sample_format == 3) {
        tile.dtype = PixelType::F32;
    } else {
        throw parse_error("unsupported TIFF sample layout: " +
                          std::to_string(bits) + "-bit format " +
                          std::to_string(sample_format));
    }

    // band names from the writer's ImageDescription convention
    if (tags.contains(kTagImageDescription)) {
        const std::string desc = get_ascii(kTagImageDescription);
        if (desc.rfind("bands=", 0) == 0) {
            std::stringstream ss(desc.substr(6));
            std::string name;
            while (std::getline(ss, name, ',')) tile.bands.push_back(name);
        }
    }
    if (tile.bands.size() != spp) {
        tile.bands.clear();
        for (std::uint32_t b = 0; b < spp; ++b) {
            tile.bands.push_back("B" + std::to_string(b + 1));
        }
    }

    // geotransform
    if (tags.contains(kTagModelTransformation)) {
        const auto m = get_doubles(kTagModelTransformation);
        if (m.size() != 16) throw parse_error("bad ModelTransformation tag");
        tile.geotransform = {m[3], m[0], m[1], m[7], m[4], m[5]};
    } else if (tags.contains(kTagModelPixelScale) &&
               tags.contains(kTagModelTiepoint)) {
        const auto scale = get_doubles(kTagModelPixelScale);
        const auto tie = get_doubles(kTagModelTiepoint);
        if (scale.size() < 2 || tie.size() < 6) {
            throw parse_error("bad GeoTIFF pixel scale / tiepoint tags");
        }
        tile.geotransform = {tie[3] - tie[0] * scale[0],
                             scale[0],
                             0.0,
                             tie[4] + tie[1] * scale[1],
                             0.0,
                             -scale[1]};
    } else {
        throw parse_error("TIFF lacks geotransform tags");
    }

    // CRS from geokeys
    tile.geographic = true;
    tile.crs.clear();
    if (tags.contains(kTagGeoKeyDirectory)) {
        const auto keys = get_vector(kTagGeoKeyDirectory);
        for (std::size_t i = 4; i + 3 < keys.size(); i += 4) {
            const std::uint32_t id = keys[i];
            const std::uint32_t value = keys[i + 3];
            if (id == kGeoKeyModelType) tile.geographic = value == 2;
            if (id == kGeoKeyGeographicType || id == kGeoKeyProjectedCSType) {
                tile.crs = "EPSG:" + std::to_string(value);
            }
        }
    }
    if (tile.crs.empty()) tile.crs = tile.geographic ? "EPSG:4326" : "";

    if (tags.contains(kTagGdalNodata)) {
        try {
            tile.nodata = std::stod(get_ascii(kTagGdalNodata));
        } catch (const std::exception&) {
            throw parse_error("unparseable GDAL nodata tag");
        }
    }

    // strip assembly
    const auto offsets = get_vector(kTagStripOffsets);
    const auto counts = get_vector(kTagStripByteCounts);
    if (offsets.size() != counts.size()) {
        throw parse_error("TIFF strip offset/count mismatch");
    }
    const std::uint32_t rows_per_strip =
        get_scalar(kTagRowsPerStrip, static_cast<std::uint32_t>(tile.height));
    const std::size_t sample_bytes = bits / 8;
    const std::size_t strips_per_plane =
        (tile.height + rows_per_strip - 1) / rows_per_strip;

    std::vector<std::uint8_t> raw;
    raw.reserve(spp * tile.width * tile.height * sample_bytes);
    for (std::size_t s = 0; s < offsets.size(); ++s) {
        const std::uint8_t* src = cur.bytes_at(offsets[s], counts[s]);
        std::size_t rows =
            std::min<std::size_t>(rows_per_strip,
                                  tile.height -
                                      (s % strips_per_plane) * rows_per_strip);
        const std::size_t expect =
            rows * tile.width * sample_bytes * (planar == 2 ? 1 : spp);
        if (compression == 8) {
            const auto inflated = inflate_bytes(src, counts[s], expect);
            raw.insert(raw.end(), inflated.begin(), inflated.end());
        } else {
            if (counts[s] < expect) throw parse_error("short TIFF strip");
            raw.insert(raw.end(), src, src + expect);
        }
    }

    const std::size_t n = tile.width * tile.height;
    tile.pixels.resize(spp * n);
    auto sample_at = [&](std::size_t byte_index) -> float {
        if (tile.dtype == PixelType::U16) {
            return static_cast<float>(
                static_cast<std::uint16_t>(raw[byte_index] |
                                           (raw[byte_index + 1] << 8)));
        }
        std::uint32_t v = static_cast<std::uint32_t>(raw[byte_index]) |
                          (static_cast<std::uint32_t>(raw[byte_index + 1]) << 8) |
                          (static_cast<std::uint32_t>(raw[byte_index + 2]) << 16) |
                          (static_cast<std::uint32_t>(raw[byte_index + 3]) << 24);
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    };
    if (raw.size() < spp * n * sample_bytes) {
        throw parse_error("TIFF pixel data shorter than image dimensions");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint32_t b = 0; b < spp; ++b) {
            const std::size_t src_index =
                planar == 2 ? (b * n + i) : (i * spp + b);
            tile.pixels[b * n + i] = sample_at(src_index * sample_bytes);
        }
    }
    return tile;
}

}  // namespace tiff

inline void write_geotiff(const RasterTile& tile, const std::string& path) {
    const auto bytes = tiff::encode(tile);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw persistence_error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw persistence_error("write failed: " + path);
}

inline RasterTile read_geotiff(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw persistence_error("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    try {
        return tiff::decode(bytes.data(), bytes.size());
    } catch (const parse_error& e) {
        throw parse_error(path + ": " + e.what());
    }
}

}  // namespace geodiverse
