#include "prototsnet/svg.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace prototsnet {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string palette_color(int i) {
    static const std::array<const char*, 8> colors{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return colors[static_cast<std::size_t>(i) % colors.size()];
}

SvgDocument::SvgDocument(double width, double height) : width_(width), height_(height) {}

void SvgDocument::rect(double x, double y, double w, double h, const std::string& fill, double opacity,
                       const std::string& attrs) {
    body_ += "  <rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" + num(h) +
             "\" fill=\"" + fill + "\" fill-opacity=\"" + num(opacity) + "\"" + (attrs.empty() ? "" : " " + attrs) + "/>\n";
}

void SvgDocument::line(double x1, double y1, double x2, double y2, const std::string& stroke, double width) {
    body_ += "  <line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) + "\" y2=\"" + num(y2) +
             "\" stroke=\"" + stroke + "\" stroke-width=\"" + num(width) + "\"/>\n";
}

void SvgDocument::polyline(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& stroke,
                           const std::string& attrs) {
    if (xs.size() != ys.size()) throw std::invalid_argument("polyline coordinate count mismatch");
    std::string pts;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) pts += ' ';
        pts += num(xs[i]) + "," + num(ys[i]);
    }
    body_ += "  <polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.5\"" +
             (attrs.empty() ? "" : " " + attrs) + "/>\n";
}

void SvgDocument::text(double x, double y, const std::string& content, double size, const std::string& anchor) {
    body_ += "  <text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) + "\" text-anchor=\"" + anchor +
             "\" font-family=\"sans-serif\">" + xml_escape(content) + "</text>\n";
}

std::string SvgDocument::str() const {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) +
           "\" height=\"" + num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " + num(height_) + "\">\n" + body_ + "</svg>\n";
}

void SvgDocument::save(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << str();
    if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

}  // namespace prototsnet
