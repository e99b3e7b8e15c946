#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <zlib.h>

#include <textevo/errors.hpp>

namespace textevo {

namespace detail {

inline void append_be32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

inline void append_chunk(std::string& out, const char type[4], const std::string& data) {
    append_be32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.append(type, 4);
    out += data;
    const auto crc = ::crc32(0, reinterpret_cast<const Bytef*>(out.data() + crc_start),
                             static_cast<uInt>(4 + data.size()));
    append_be32(out, static_cast<std::uint32_t>(crc));
}

} // namespace detail

/// Encodes an 8-bit grayscale image as a PNG byte string. Fixed zlib level
/// and filter-0 scanlines keep the output byte-stable for identical pixels.
inline std::string encode_png_gray8(const std::vector<std::uint8_t>& pixels, std::uint32_t width,
                                    std::uint32_t height) {
    if (pixels.size() != static_cast<std::size_t>(width) * height)
        throw ContractViolation("encode_png_gray8: pixel buffer size mismatch");

    std::string raw;
    raw.reserve(static_cast<std::size_t>(height) * (width + 1));
    for (std::uint32_t y = 0; y < height; ++y) {
        raw.push_back('\0');  // filter type 0
        raw.append(reinterpret_cast<const char*>(pixels.data() + static_cast<std::size_t>(y) * width), width);
    }

    uLongf compressed_size = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<Bytef> compressed(compressed_size);
    if (::compress2(compressed.data(), &compressed_size, reinterpret_cast<const Bytef*>(raw.data()),
                    static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw EngineError("png deflate failed");

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    detail::append_be32(ihdr, width);
    detail::append_be32(ihdr, height);
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(0);   // grayscale
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // no interlace
    detail::append_chunk(out, "IHDR", ihdr);
    detail::append_chunk(out, "IDAT",
                         std::string(reinterpret_cast<const char*>(compressed.data()), compressed_size));
    detail::append_chunk(out, "IEND", {});
    return out;
}

} // namespace textevo
