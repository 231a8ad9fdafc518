#include "kt/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "kt/error.hpp"

namespace kt {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

// Round ticks: 1-2-5 progression on linear axes, decades on log axes.
std::vector<double> linear_ticks(double lo, double hi) {
    const double span = hi - lo;
    if (!(span > 0)) return {lo};
    const double raw = span / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    std::vector<double> t;
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
        t.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
    return t;
}

std::vector<double> log_ticks(double lo, double hi) {
    std::vector<double> t;
    for (int e = int(std::floor(std::log10(lo))); e <= int(std::ceil(std::log10(hi))); ++e) {
        const double v = std::pow(10.0, e);
        if (v >= lo / 1.001 && v <= hi * 1.001) t.push_back(v);
    }
    if (t.empty()) t = {lo, hi};
    return t;
}

}  // namespace

void write_svg_plot(const std::string& path, const std::vector<PlotSeries>& series,
                    const PlotOptions& opt) {
    if (series.empty()) throw ParamError("plot needs at least one series");
    for (const PlotSeries& s : series)
        if (s.x.size() != s.y.size()) throw ParamError("series x/y lengths differ");

    auto usable = [&](double x, double y) {
        if (!std::isfinite(x) || !std::isfinite(y)) return false;
        if (opt.logx && !(x > 0)) return false;
        if (opt.logy && !(y > 0)) return false;
        return true;
    };

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const PlotSeries& s : series)
        for (size_t i = 0; i < s.x.size(); ++i)
            if (usable(s.x[i], s.y[i])) {
                xmin = std::min(xmin, s.x[i]);
                xmax = std::max(xmax, s.x[i]);
                ymin = std::min(ymin, s.y[i]);
                ymax = std::max(ymax, s.y[i]);
            }
    if (!(xmin <= xmax)) throw ParamError("plot has no drawable points");
    if (opt.identity || opt.band > 1.0) {
        const double lo = std::min(xmin, ymin), hi = std::max(xmax, ymax);
        xmin = ymin = lo;
        xmax = ymax = hi;
    }
    auto widen = [](double& lo, double& hi, bool logscale) {
        if (logscale) {
            lo /= 1.15;
            hi *= 1.15;
        } else {
            const double m = hi > lo ? 0.05 * (hi - lo) : std::max(1.0, std::abs(hi)) * 0.1;
            lo -= m;
            hi += m;
        }
    };
    widen(xmin, xmax, opt.logx);
    widen(ymin, ymax, opt.logy);

    const double ml = 70, mr = 20, mt = opt.title.empty() ? 16 : 40, mb = 52;
    const double pw = opt.width - ml - mr, phh = opt.height - mt - mb;
    auto tx = [&](double x) {
        const double u = opt.logx ? (std::log10(x) - std::log10(xmin)) /
                                        (std::log10(xmax) - std::log10(xmin))
                                  : (x - xmin) / (xmax - xmin);
        return ml + u * pw;
    };
    auto ty = [&](double y) {
        const double u = opt.logy ? (std::log10(y) - std::log10(ymin)) /
                                        (std::log10(ymax) - std::log10(ymin))
                                  : (y - ymin) / (ymax - ymin);
        return mt + (1.0 - u) * phh;
    };

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\""
        << opt.height << "\" viewBox=\"0 0 " << opt.width << " " << opt.height << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!opt.title.empty())
        out << "<text x=\"" << opt.width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
               "font-family=\"sans-serif\" font-size=\"16\">"
            << xml_escape(opt.title) << "</text>\n";

    // Axes, ticks, grid.
    const std::vector<double> xt = opt.logx ? log_ticks(xmin, xmax) : linear_ticks(xmin, xmax);
    const std::vector<double> yt = opt.logy ? log_ticks(ymin, ymax) : linear_ticks(ymin, ymax);
    for (double v : xt) {
        const double px = tx(v);
        out << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(px)
            << "\" y2=\"" << fmt(mt + phh) << "\" stroke=\"#e0e0e0\"/>\n"
            << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(mt + phh + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << (opt.logx ? ("1e" + fmt(std::log10(v))) : fmt(v)) << "</text>\n";
    }
    for (double v : yt) {
        const double py = ty(v);
        out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(ml + pw)
            << "\" y2=\"" << fmt(py) << "\" stroke=\"#e0e0e0\"/>\n"
            << "<text x=\"" << fmt(ml - 6) << "\" y=\"" << fmt(py + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
            << (opt.logy ? ("1e" + fmt(std::log10(v))) : fmt(v)) << "</text>\n";
    }
    out << "<rect x=\"" << fmt(ml) << "\" y=\"" << fmt(mt) << "\" width=\"" << fmt(pw)
        << "\" height=\"" << fmt(phh) << "\" fill=\"none\" stroke=\"black\"/>\n";
    if (!opt.xlabel.empty())
        out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(opt.height - 12)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
            << xml_escape(opt.xlabel) << "</text>\n";
    if (!opt.ylabel.empty())
        out << "<text x=\"18\" y=\"" << fmt(mt + phh / 2)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
               "transform=\"rotate(-90 18 "
            << fmt(mt + phh / 2) << ")\">" << xml_escape(opt.ylabel) << "</text>\n";

    // Scatter band around y = x (drawn in data space, clipped by the viewport).
    if (opt.band > 1.0) {
        out << "<polygon points=\"";
        out << fmt(tx(xmin)) << "," << fmt(ty(std::clamp(xmin * opt.band, ymin, ymax))) << " "
            << fmt(tx(xmax)) << "," << fmt(ty(std::clamp(xmax * opt.band, ymin, ymax))) << " "
            << fmt(tx(xmax)) << "," << fmt(ty(std::clamp(xmax / opt.band, ymin, ymax))) << " "
            << fmt(tx(xmin)) << "," << fmt(ty(std::clamp(xmin / opt.band, ymin, ymax)));
        out << "\" fill=\"#c8e6c9\" fill-opacity=\"0.5\" stroke=\"none\"/>\n";
    }
    if (opt.identity)
        out << "<line x1=\"" << fmt(tx(xmin)) << "\" y1=\"" << fmt(ty(xmin)) << "\" x2=\""
            << fmt(tx(xmax)) << "\" y2=\"" << fmt(ty(xmax))
            << "\" stroke=\"#555\" stroke-dasharray=\"5,4\"/>\n";

    for (size_t si = 0; si < series.size(); ++si) {
        const PlotSeries& s = series[si];
        const std::string color =
            !s.color.empty() ? s.color : kPalette[si % (sizeof kPalette / sizeof *kPalette)];
        if (s.line) {
            out << "<polyline fill=\"none\" stroke=\"" << color
                << "\" stroke-width=\"1.8\" points=\"";
            for (size_t i = 0; i < s.x.size(); ++i)
                if (usable(s.x[i], s.y[i]))
                    out << fmt(tx(s.x[i])) << "," << fmt(ty(s.y[i])) << " ";
            out << "\"/>\n";
        } else {
            for (size_t i = 0; i < s.x.size(); ++i)
                if (usable(s.x[i], s.y[i]))
                    out << "<circle cx=\"" << fmt(tx(s.x[i])) << "\" cy=\"" << fmt(ty(s.y[i]))
                        << "\" r=\"3.2\" fill=\"" << color << "\" fill-opacity=\"0.8\"/>\n";
        }
        if (!s.label.empty()) {
            const double lx = ml + pw - 150, ly = mt + 16 + 18 * double(si);
            out << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(ly - 9)
                << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n"
                << "<text x=\"" << fmt(lx + 18) << "\" y=\"" << fmt(ly + 1)
                << "\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(s.label)
                << "</text>\n";
        }
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace kt
