#include "deg/image_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace deg {

namespace {

void put_u32be(std::vector<unsigned char>& buf, std::uint32_t v) {
    buf.push_back(static_cast<unsigned char>(v >> 24));
    buf.push_back(static_cast<unsigned char>(v >> 16));
    buf.push_back(static_cast<unsigned char>(v >> 8));
    buf.push_back(static_cast<unsigned char>(v));
}

std::uint32_t get_u32be(const unsigned char* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void write_chunk(std::ofstream& out, const char type[4], const std::vector<unsigned char>& data) {
    std::vector<unsigned char> head;
    put_u32be(head, static_cast<std::uint32_t>(data.size()));
    out.write(reinterpret_cast<const char*>(head.data()), 4);
    out.write(type, 4);
    if (!data.empty()) out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    std::uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<unsigned char> crcb;
    put_u32be(crcb, crc);
    out.write(reinterpret_cast<const char*>(crcb.data()), 4);
}

unsigned char paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
    if (pb <= pc) return static_cast<unsigned char>(b);
    return static_cast<unsigned char>(c);
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("write_png: empty image");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_png: cannot open " + path);

    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<unsigned char> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32be(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(out, "IHDR", ihdr);

    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    std::vector<unsigned char> raw((stride + 1) * static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        unsigned char* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        row[0] = 0;  // filter: none
        for (std::size_t i = 0; i < stride; ++i) {
            const double v = img.pixels[static_cast<std::size_t>(y) * stride + i];
            row[1 + i] = static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
        }
    }

    uLongf comp_size = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_size);
    if (compress2(comp.data(), &comp_size, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("write_png: deflate failed");
    comp.resize(comp_size);
    write_chunk(out, "IDAT", comp);
    write_chunk(out, "IEND", {});
}

Image read_png(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_png: cannot open " + path);
    std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
        throw std::runtime_error("read_png: not a PNG file: " + path);

    std::uint32_t width = 0, height = 0;
    int color_type = -1;
    std::vector<unsigned char> idat;
    std::size_t off = 8;
    while (off + 8 <= file.size()) {
        const std::uint32_t len = get_u32be(file.data() + off);
        if (off + 12 + len > file.size()) throw std::runtime_error("read_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(file.data() + off + 4);
        const unsigned char* data = file.data() + off + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            width = get_u32be(data);
            height = get_u32be(data + 4);
            const int bit_depth = data[8];
            color_type = data[9];
            if (bit_depth != 8 || (color_type != 2 && color_type != 6) || data[12] != 0)
                throw std::runtime_error("read_png: only 8-bit non-interlaced RGB/RGBA is supported");
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        off += 12 + len;
    }
    if (width == 0 || height == 0 || idat.empty()) throw std::runtime_error("read_png: missing image data");

    const int bpp = color_type == 6 ? 4 : 3;
    const std::size_t stride = static_cast<std::size_t>(width) * static_cast<std::size_t>(bpp);
    std::vector<unsigned char> raw((stride + 1) * height);
    uLongf raw_size = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        raw_size != raw.size())
        throw std::runtime_error("read_png: inflate failed");

    // Undo per-row filtering in place.
    std::vector<unsigned char> pixels(stride * height);
    for (std::uint32_t y = 0; y < height; ++y) {
        const unsigned char filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
        const unsigned char* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
        unsigned char* dst = pixels.data() + static_cast<std::size_t>(y) * stride;
        const unsigned char* prev = y > 0 ? pixels.data() + static_cast<std::size_t>(y - 1) * stride : nullptr;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            const int b = prev ? prev[i] : 0;
            const int c = (prev && i >= static_cast<std::size_t>(bpp)) ? prev[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw std::runtime_error("read_png: unknown filter type");
            }
            dst[i] = static_cast<unsigned char>(v & 0xff);
        }
    }

    Image img(static_cast<int>(width), static_cast<int>(height));
    for (std::size_t p = 0; p < static_cast<std::size_t>(width) * height; ++p)
        for (int ch = 0; ch < 3; ++ch)
            img.pixels[p * 3 + ch] = pixels[p * static_cast<std::size_t>(bpp) + ch] / 255.0;
    return img;
}

void write_pfm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pfm: cannot open " + path);
    out << "PF\n" << img.width << " " << img.height << "\n-1.0\n";
    // PFM stores rows bottom-up.
    std::vector<float> row(static_cast<std::size_t>(img.width) * 3);
    for (int y = img.height - 1; y >= 0; --y) {
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                row[static_cast<std::size_t>(x) * 3 + c] = static_cast<float>(img.at(x, y, c));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
}

Image read_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pfm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    if (magic != "PF" || w <= 0 || h <= 0 || scale >= 0.0)
        throw std::runtime_error("read_pfm: unsupported header (need little-endian color PFM)");
    in.get();  // single whitespace after the header
    Image img(w, h);
    std::vector<float> row(static_cast<std::size_t>(w) * 3);
    for (int y = h - 1; y >= 0; --y) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw std::runtime_error("read_pfm: truncated data");
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(x, y, c) = row[static_cast<std::size_t>(x) * 3 + c];
    }
    return img;
}

}  // namespace deg
