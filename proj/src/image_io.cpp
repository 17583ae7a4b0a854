#include "lptr/core/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lptr/core/error.hpp"

namespace lptr {

Tensor make_image(int channels, int height, int width, double fill) {
    Tensor t({channels, height, width});
    if (fill != 0.0) t.fill(fill);
    return t;
}

Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    if (out_h == h && out_w == w) return img;
    Tensor out({c, out_h, out_w});
    for (int oy = 0; oy < out_h; ++oy) {
        // pixel-center alignment on both sides
        double sy = (oy + 0.5) * h / out_h - 0.5;
        int y0 = static_cast<int>(std::floor(sy));
        double fy = sy - y0;
        int y0c = std::clamp(y0, 0, h - 1), y1c = std::clamp(y0 + 1, 0, h - 1);
        for (int ox = 0; ox < out_w; ++ox) {
            double sx = (ox + 0.5) * w / out_w - 0.5;
            int x0 = static_cast<int>(std::floor(sx));
            double fx = sx - x0;
            int x0c = std::clamp(x0, 0, w - 1), x1c = std::clamp(x0 + 1, 0, w - 1);
            for (int ch = 0; ch < c; ++ch) {
                double v00 = img.at(ch, y0c, x0c), v01 = img.at(ch, y0c, x1c);
                double v10 = img.at(ch, y1c, x0c), v11 = img.at(ch, y1c, x1c);
                out.at(ch, oy, ox) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                                     fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }
    return out;
}

Tensor hconcat(const Tensor& left, const Tensor& right) {
    if (image_channels(left) != image_channels(right) ||
        image_height(left) != image_height(right))
        throw ShapeMismatch("hconcat requires equal channels and height");
    const int c = image_channels(left), h = image_height(left);
    const int wl = image_width(left), wr = image_width(right);
    Tensor out({c, h, wl + wr});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < wl; ++x) out.at(ch, y, x) = left.at(ch, y, x);
            for (int x = 0; x < wr; ++x) out.at(ch, y, wl + x) = right.at(ch, y, x);
        }
    return out;
}

Tensor rgb_to_gray(const Tensor& img) {
    if (image_channels(img) == 1) return img;
    const int h = image_height(img), w = image_width(img);
    Tensor out({1, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                              0.114 * img.at(2, y, x);
    return out;
}

std::vector<uint8_t> image_to_u8(const Tensor& img) {
    std::vector<uint8_t> out(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        double v = std::clamp(img.data[i], 0.0, 1.0);
        out[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    return out;
}

Tensor image_from_u8(const uint8_t* data, int channels, int height, int width) {
    Tensor t({channels, height, width});
    for (size_t i = 0; i < t.data.size(); ++i) t.data[i] = data[i] / 255.0;
    return t;
}

namespace {

// interleaves (C,H,W) -> HWC byte rows
std::vector<uint8_t> to_interleaved(const Tensor& img) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    std::vector<uint8_t> u8 = image_to_u8(img);
    std::vector<uint8_t> out(static_cast<size_t>(c) * h * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                out[(static_cast<size_t>(y) * w + x) * c + ch] =
                    u8[(static_cast<size_t>(ch) * h + y) * w + x];
    return out;
}

Tensor from_interleaved(const uint8_t* px, int c, int h, int w, int stride_c) {
    Tensor t({c, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
                t.at(ch, y, x) =
                    px[(static_cast<size_t>(y) * w + x) * stride_c + ch] / 255.0;
    return t;
}

void put_u32_be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

uint32_t get_u32_be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void append_chunk(std::vector<uint8_t>& out, const char type[4],
                  const std::vector<uint8_t>& payload) {
    put_u32_be(out, static_cast<uint32_t>(payload.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32_be(out, crc);
}

}  // namespace

void write_png(const std::string& path, const Tensor& img) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    if (c != 1 && c != 3) throw IOError("write_png supports 1 or 3 channels");
    std::vector<uint8_t> inter = to_interleaved(img);

    // scanlines with filter byte 0
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * c));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);
        const uint8_t* row = inter.data() + static_cast<size_t>(y) * w * c;
        raw.insert(raw.end(), row, row + static_cast<size_t>(w) * c);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw IOError("deflate failed for " + path);
    compressed.resize(bound);

    std::vector<uint8_t> file = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<uint8_t> ihdr;
    put_u32_be(ihdr, static_cast<uint32_t>(w));
    put_u32_be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);                      // bit depth
    ihdr.push_back(c == 1 ? 0 : 2);         // color type
    ihdr.push_back(0);                      // compression
    ihdr.push_back(0);                      // filter
    ihdr.push_back(0);                      // no interlace
    append_chunk(file, "IHDR", ihdr);
    append_chunk(file, "IDAT", compressed);
    append_chunk(file, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(file.data()),
            static_cast<std::streamsize>(file.size()));
    if (!f) throw IOError("short write: " + path);
}

namespace {

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

Tensor read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw IOError("not a PNG file: " + path);

    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_u32_be(buf.data() + pos);
        if (pos + 12 + len > buf.size()) throw IOError("truncated PNG: " + path);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const uint8_t* payload = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = static_cast<int>(get_u32_be(payload));
            h = static_cast<int>(get_u32_be(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw IOError("interlaced PNG unsupported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0) throw IOError("bad PNG header: " + path);
    if (bit_depth != 8) throw IOError("only 8-bit PNG supported: " + path);
    int nch;
    switch (color_type) {
        case 0: nch = 1; break;
        case 2: nch = 3; break;
        case 6: nch = 4; break;
        default: throw IOError("unsupported PNG color type: " + path);
    }

    size_t row_bytes = static_cast<size_t>(w) * nch;
    std::vector<uint8_t> raw(static_cast<size_t>(h) * (row_bytes + 1));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) !=
            Z_OK ||
        raw_len != raw.size())
        throw IOError("inflate failed: " + path);

    std::vector<uint8_t> px(static_cast<size_t>(h) * row_bytes);
    for (int y = 0; y < h; ++y) {
        uint8_t filter = raw[static_cast<size_t>(y) * (row_bytes + 1)];
        const uint8_t* src = raw.data() + static_cast<size_t>(y) * (row_bytes + 1) + 1;
        uint8_t* dst = px.data() + static_cast<size_t>(y) * row_bytes;
        const uint8_t* up = y > 0 ? dst - row_bytes : nullptr;
        for (size_t i = 0; i < row_bytes; ++i) {
            int a = i >= static_cast<size_t>(nch) ? dst[i - nch] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= static_cast<size_t>(nch)) ? up[i - nch] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IOError("bad PNG filter: " + path);
            }
            dst[i] = static_cast<uint8_t>(v & 0xff);
        }
    }
    int out_c = nch == 4 ? 3 : nch;
    return from_interleaved(px.data(), out_c, h, w, nch);
}

void write_pnm(const std::string& path, const Tensor& img) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    if (c != 1 && c != 3) throw IOError("write_pnm supports 1 or 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open for writing: " + path);
    f << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::vector<uint8_t> inter = to_interleaved(img);
    f.write(reinterpret_cast<const char*>(inter.data()),
            static_cast<std::streamsize>(inter.size()));
}

Tensor read_pnm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOError("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5" && magic != "P6") throw IOError("not a binary PNM: " + path);
    int w, h, maxv;
    f >> w >> h >> maxv;
    f.get();  // single whitespace after header
    if (w <= 0 || h <= 0 || maxv != 255) throw IOError("bad PNM header: " + path);
    int c = magic == "P5" ? 1 : 3;
    std::vector<uint8_t> px(static_cast<size_t>(w) * h * c);
    f.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!f) throw IOError("truncated PNM: " + path);
    return from_interleaved(px.data(), c, h, w, c);
}

namespace {
bool ends_with(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}
}  // namespace

Tensor read_image(const std::string& path) {
    if (ends_with(path, ".png")) return read_png(path);
    if (ends_with(path, ".ppm") || ends_with(path, ".pgm")) return read_pnm(path);
    throw IOError("unsupported image extension: " + path);
}

void write_image(const std::string& path, const Tensor& img) {
    if (ends_with(path, ".png")) return write_png(path, img);
    if (ends_with(path, ".ppm") || ends_with(path, ".pgm")) return write_pnm(path, img);
    throw IOError("unsupported image extension: " + path);
}

}  // namespace lptr
