#pragma once

#include <string>
#include <vector>

namespace prototsnet {

std::string xml_escape(const std::string& s);

// Minimal SVG document builder.
class SvgDocument {
public:
    SvgDocument(double width, double height);

    void rect(double x, double y, double w, double h, const std::string& fill, double opacity = 1.0,
              const std::string& attrs = "");
    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0);
    void polyline(const std::vector<double>& xs, const std::vector<double>& ys, const std::string& stroke,
                  const std::string& attrs = "");
    void text(double x, double y, const std::string& content, double size = 11.0, const std::string& anchor = "start");

    std::string str() const;
    void save(const std::string& path) const;

private:
    double width_, height_;
    std::string body_;
};

// Colour for series index i from a fixed qualitative palette.
std::string palette_color(int i);

}  // namespace prototsnet
