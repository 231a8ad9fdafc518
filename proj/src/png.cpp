#include "kt/png.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "kt/error.hpp"

namespace kt {

namespace {

void put_u32be(std::string& s, uint32_t v) {
    s.push_back(char(v >> 24));
    s.push_back(char(v >> 16));
    s.push_back(char(v >> 8));
    s.push_back(char(v));
}

void put_chunk(std::ofstream& out, const char type[4], const std::string& data) {
    std::string buf;
    put_u32be(buf, uint32_t(data.size()));
    buf.append(type, 4);
    buf += data;
    uint32_t crc = uint32_t(::crc32(0L, Z_NULL, 0));
    crc = uint32_t(::crc32(crc, reinterpret_cast<const Bytef*>(buf.data() + 4),
                           uInt(buf.size() - 4)));
    put_u32be(buf, crc);
    out.write(buf.data(), std::streamsize(buf.size()));
}

// Hues spaced by the golden-ratio step are maximally spread for any count.
void id_color(int id, uint8_t rgb[3]) {
    const double h = std::fmod(0.61803398875 * (id + 1), 1.0) * 6.0;
    const double s = 0.85, v = 0.95;
    const int k = int(h);
    const double f = h - k;
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    double r, g, b;
    switch (k % 6) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    rgb[0] = uint8_t(r * 255 + 0.5);
    rgb[1] = uint8_t(g * 255 + 0.5);
    rgb[2] = uint8_t(b * 255 + 0.5);
}

}  // namespace

void write_png(const std::string& path, const ImageRgb8& img) {
    if (img.rows < 1 || img.cols < 1) throw ParamError("cannot write an empty image");

    std::string ihdr;
    put_u32be(ihdr, uint32_t(img.cols));
    put_u32be(ihdr, uint32_t(img.rows));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // color type: truecolor
    ihdr.push_back(0);   // compression
    ihdr.push_back(0);   // filter
    ihdr.push_back(0);   // interlace

    // Raw scanlines, each prefixed by filter byte 0 (None).
    const size_t stride = size_t(img.cols) * 3;
    std::vector<uint8_t> raw((stride + 1) * size_t(img.rows));
    for (int i = 0; i < img.rows; ++i) {
        uint8_t* row = raw.data() + size_t(i) * (stride + 1);
        row[0] = 0;
        std::memcpy(row + 1, img.px.data() + size_t(i) * stride, stride);
    }

    uLongf comp_len = compressBound(uLong(raw.size()));
    std::string idat(comp_len, '\0');
    if (compress2(reinterpret_cast<Bytef*>(idat.data()), &comp_len, raw.data(),
                  uLong(raw.size()), 6) != Z_OK)
        throw InternalError("zlib compression failed");
    idat.resize(comp_len);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    out.write(reinterpret_cast<const char*>(sig), 8);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", idat);
    put_chunk(out, "IEND", "");
    if (!out) throw IoError("write failed: " + path);
}

ImageRgb8 read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw FormatError("not a PNG file: " + path);

    auto u32be = [&](size_t off) {
        return (uint32_t(uint8_t(bytes[off])) << 24) | (uint32_t(uint8_t(bytes[off + 1])) << 16) |
               (uint32_t(uint8_t(bytes[off + 2])) << 8) | uint32_t(uint8_t(bytes[off + 3]));
    };

    uint32_t w = 0, h = 0;
    std::string idat;
    bool saw_ihdr = false;
    size_t off = 8;
    while (off + 12 <= bytes.size()) {
        const uint32_t len = u32be(off);
        if (off + 12 + len > bytes.size()) throw FormatError("truncated PNG chunk: " + path);
        const std::string type = bytes.substr(off + 4, 4);
        const char* data = bytes.data() + off + 8;
        if (type == "IHDR") {
            if (len != 13) throw FormatError("bad IHDR length: " + path);
            w = u32be(off + 8);
            h = u32be(off + 12);
            if (data[8] != 8 || data[9] != 2 || data[10] != 0 || data[11] != 0 || data[12] != 0)
                throw FormatError("unsupported PNG variant (need 8-bit truecolor): " + path);
            saw_ihdr = true;
        } else if (type == "IDAT") {
            idat.append(data, len);
        } else if (type == "IEND") {
            break;
        }
        off += 12 + len;
    }
    if (!saw_ihdr || w == 0 || h == 0) throw FormatError("missing image header: " + path);

    const size_t stride = size_t(w) * 3;
    std::vector<uint8_t> raw((stride + 1) * h);
    uLongf raw_len = uLongf(raw.size());
    if (uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                   uLong(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw FormatError("corrupt PNG pixel data: " + path);

    const int ih = int(h), iw = int(w);
    ImageRgb8 img(ih, iw);
    for (uint32_t i = 0; i < h; ++i) {
        const uint8_t* row = raw.data() + size_t(i) * (stride + 1);
        if (row[0] != 0) throw FormatError("unsupported PNG scanline filter: " + path);
        std::memcpy(img.px.data() + size_t(i) * stride, row + 1, stride);
    }
    return img;
}

ImageRgb8 cluster_overlay(const SurfaceSlice& slice, const Grid<int32_t>& labels) {
    if (labels.rows() != slice.rows() || labels.cols() != slice.cols())
        throw GeometryError("label grid and slice have mismatched shapes");
    ImageRgb8 img(slice.rows(), slice.cols());
    for (int i = 0; i < img.rows; ++i)
        for (int j = 0; j < img.cols; ++j) {
            const int32_t id = labels(i, j);
            if (id >= 0) {
                uint8_t rgb[3];
                id_color(id, rgb);
                img.set(i, j, rgb[0], rgb[1], rgb[2]);
            } else if (slice.is_material(i, j)) {
                img.set(i, j, 190, 190, 190);
            } else {
                img.set(i, j, 25, 25, 35);
            }
        }
    return img;
}

}  // namespace kt
