#include "kt/image_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "kt/error.hpp"

namespace kt {

namespace {

// Reads one whitespace-delimited token, skipping '#' comment lines.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) continue;
        tok.push_back(static_cast<char>(c));
        while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
        break;
    }
    return tok;
}

int parse_int(const std::string& tok, const std::string& what, const std::string& path) {
    try {
        size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad " + what + " in " + path + ": '" + tok + "'");
    }
}

static_assert(std::endian::native == std::endian::little,
              "PFM writer assumes a little-endian host");

}  // namespace

void write_pgm(const std::string& path, const MaskGrid& mask) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P5\n" << mask.cols() << " " << mask.rows() << "\n255\n";
    std::vector<unsigned char> row(mask.cols());
    for (int i = 0; i < mask.rows(); ++i) {
        for (int j = 0; j < mask.cols(); ++j) row[j] = mask(i, j) ? 255 : 0;
        f.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!f) throw IoError("write failed: " + path);
}

MaskGrid read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    const std::string magic = next_token(f);
    if (magic != "P5") throw FormatError("not a binary PGM (P5): " + path);
    const int cols = parse_int(next_token(f), "width", path);
    const int rows = parse_int(next_token(f), "height", path);
    const int maxval = parse_int(next_token(f), "maxval", path);
    if (cols <= 0 || rows <= 0) throw FormatError("non-positive PGM dimensions in " + path);
    if (maxval != 255) throw FormatError("PGM maxval must be 255, got " + std::to_string(maxval) + " in " + path);
    // next_token consumed the single whitespace after maxval; pixels start here
    MaskGrid mask(rows, cols);
    std::vector<unsigned char> row(cols);
    for (int i = 0; i < rows; ++i) {
        f.read(reinterpret_cast<char*>(row.data()), row.size());
        if (f.gcount() != static_cast<std::streamsize>(row.size()))
            throw FormatError("truncated PGM pixel data: " + path);
        for (int j = 0; j < cols; ++j) {
            if (row[j] != 0 && row[j] != 255)
                throw FormatError("PGM pixel values must be 0 or 255: " + path);
            mask(i, j) = row[j] ? kMaterial : kVoid;
        }
    }
    return mask;
}

void write_pfm(const std::string& path, const Grid<double>& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "Pf\n" << img.cols() << " " << img.rows() << "\n-1.0\n";
    std::vector<float> row(img.cols());
    for (int i = img.rows() - 1; i >= 0; --i) {  // bottom-to-top
        for (int j = 0; j < img.cols(); ++j) row[j] = static_cast<float>(img(i, j));
        f.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(float));
    }
    if (!f) throw IoError("write failed: " + path);
}

Grid<double> read_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    const std::string magic = next_token(f);
    if (magic != "Pf") throw FormatError("not a grayscale PFM (Pf): " + path);
    const int cols = parse_int(next_token(f), "width", path);
    const int rows = parse_int(next_token(f), "height", path);
    const std::string scale_tok = next_token(f);
    double scale = 0.0;
    try {
        scale = std::stod(scale_tok);
    } catch (const std::exception&) {
        throw FormatError("bad PFM scale in " + path);
    }
    if (scale >= 0.0) throw FormatError("big-endian PFM not supported: " + path);
    if (cols <= 0 || rows <= 0) throw FormatError("non-positive PFM dimensions in " + path);
    Grid<double> img(rows, cols);
    std::vector<float> row(cols);
    for (int i = rows - 1; i >= 0; --i) {
        f.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(float));
        if (f.gcount() != static_cast<std::streamsize>(row.size() * sizeof(float)))
            throw FormatError("truncated PFM pixel data: " + path);
        for (int j = 0; j < cols; ++j) img(i, j) = row[j];
    }
    return img;
}

std::string sidecar_path(const std::string& image_path) {
    const size_t slash = image_path.find_last_of('/');
    const size_t dot = image_path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return image_path + ".meta.json";
    return image_path.substr(0, dot) + ".meta.json";
}

}  // namespace kt
