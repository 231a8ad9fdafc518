#include <doctest.h>

#include <kt/error.hpp>
#include <kt/image_io.hpp>
#include <kt/plot.hpp>
#include <kt/png.hpp>
#include <kt/rng.hpp>

#include <cmath>
#include <fstream>
#include <string>

#include "test_util.hpp"

using kt_test::TempDir;

namespace {

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string read_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("pgm round-trips a random mask") {
    TempDir td("pgm");
    kt::Rng rng(21);
    kt::MaskGrid mask(17, 23);
    for (auto& v : mask.data()) v = rng.uniform() < 0.4 ? kt::kVoid : kt::kMaterial;
    const std::string path = td.file("m.pgm");
    kt::write_pgm(path, mask);
    CHECK(read_bytes(path).substr(0, 2) == "P5");
    CHECK(kt::read_pgm(path) == mask);
}

TEST_CASE("pgm rejects wrong maxval, values, magic, and truncation") {
    TempDir td("pgm_bad");
    const std::string ok_pixels(6, char(0));

    write_bytes(td.file("maxval.pgm"), "P5\n3 2\n64\n" + ok_pixels);
    CHECK_THROWS_AS(kt::read_pgm(td.file("maxval.pgm")), kt::FormatError);

    std::string gray = "P5\n3 2\n255\n";
    gray += std::string(5, char(0)) + char(128);
    write_bytes(td.file("gray.pgm"), gray);
    CHECK_THROWS_AS(kt::read_pgm(td.file("gray.pgm")), kt::FormatError);

    write_bytes(td.file("ascii.pgm"), "P2\n3 2\n255\n0 0 0 0 0 0\n");
    CHECK_THROWS_AS(kt::read_pgm(td.file("ascii.pgm")), kt::FormatError);

    write_bytes(td.file("short.pgm"), "P5\n3 2\n255\n" + std::string(4, char(0)));
    CHECK_THROWS_AS(kt::read_pgm(td.file("short.pgm")), kt::FormatError);

    CHECK_THROWS_AS(kt::read_pgm(td.file("absent.pgm")), kt::IoError);
}

TEST_CASE("pfm round-trips f32-exact values and NaN voids") {
    TempDir td("pfm");
    kt::Grid<double> img(5, 4);
    kt::Rng rng(22);
    for (auto& v : img.data()) v = double(float(rng.uniform(-10, 10)));
    img(2, 1) = std::numeric_limits<double>::quiet_NaN();
    img(0, 0) = 1.5;
    img(4, 3) = -3.75;

    const std::string path = td.file("f.pfm");
    kt::write_pfm(path, img);
    const kt::Grid<double> back = kt::read_pfm(path);
    REQUIRE(back.same_shape(img));
    for (int i = 0; i < img.rows(); ++i)
        for (int j = 0; j < img.cols(); ++j) {
            if (std::isnan(img(i, j)))
                CHECK(std::isnan(back(i, j)));
            else
                CHECK(back(i, j) == img(i, j));
        }
}

TEST_CASE("pfm narrows doubles to f32 on write") {
    TempDir td("pfm_f32");
    kt::Grid<double> img(8, 8, 0.1);  // 0.1 is not representable in f32
    const std::string path = td.file("n.pfm");
    kt::write_pfm(path, img);
    const kt::Grid<double> back = kt::read_pfm(path);
    CHECK(back(0, 0) == double(float(0.1)));
    CHECK(back(0, 0) != 0.1);
}

TEST_CASE("pfm rejects color, big-endian, and truncated files") {
    TempDir td("pfm_bad");
    write_bytes(td.file("color.pfm"), "PF\n2 2\n-1.0\n" + std::string(48, char(0)));
    CHECK_THROWS_AS(kt::read_pfm(td.file("color.pfm")), kt::FormatError);

    write_bytes(td.file("be.pfm"), "Pf\n2 2\n1.0\n" + std::string(16, char(0)));
    CHECK_THROWS_AS(kt::read_pfm(td.file("be.pfm")), kt::FormatError);

    write_bytes(td.file("short.pfm"), "Pf\n2 2\n-1.0\n" + std::string(10, char(0)));
    CHECK_THROWS_AS(kt::read_pfm(td.file("short.pfm")), kt::FormatError);

    CHECK_THROWS_AS(kt::read_pfm(td.file("absent.pfm")), kt::IoError);
}

TEST_CASE("sidecar path replaces the extension next to the image") {
    CHECK(kt::sidecar_path("a/b/x.pgm") == "a/b/x.meta.json");
    CHECK(kt::sidecar_path("x.pfm") == "x.meta.json");
    CHECK(kt::sidecar_path("noext") == "noext.meta.json");
    CHECK(kt::sidecar_path("dir.v1/file") == "dir.v1/file.meta.json");
}

TEST_CASE("png round-trips the subset it writes") {
    TempDir td("png");
    kt::Rng rng(23);
    kt::ImageRgb8 img(9, 13);
    for (auto& v : img.px) v = uint8_t(rng.next_u64() & 0xff);
    const std::string path = td.file("i.png");
    kt::write_png(path, img);
    const kt::ImageRgb8 back = kt::read_png(path);
    REQUIRE(back.rows == img.rows);
    REQUIRE(back.cols == img.cols);
    CHECK(back.px == img.px);
    CHECK(read_bytes(path).substr(1, 3) == "PNG");
}

TEST_CASE("png reader rejects non-png bytes") {
    TempDir td("png_bad");
    write_bytes(td.file("no.png"), "definitely not a png file");
    CHECK_THROWS_AS(kt::read_png(td.file("no.png")), kt::FormatError);
    CHECK_THROWS_AS(kt::read_png(td.file("absent.png")), kt::IoError);
}

TEST_CASE("svg plots are self-contained and drop unplottable points") {
    TempDir td("svg");
    kt::PlotSeries s;
    s.label = "curve-a";
    s.x = {1.0, 2.0, 3.0, 4.0};
    s.y = {1.0, 0.0, std::numeric_limits<double>::quiet_NaN(), 8.0};
    kt::PlotOptions opt;
    opt.title = "demo";
    opt.logy = true;  // drops the 0.0 and NaN points
    const std::string path = td.file("p.svg");
    kt::write_svg_plot(path, {s}, opt);
    const std::string svg = read_bytes(path);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("curve-a") != std::string::npos);
    CHECK(svg.find("demo") != std::string::npos);
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(svg.find("NaN") == std::string::npos);
    CHECK(svg.find("href=\"http") == std::string::npos);
}
