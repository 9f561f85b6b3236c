#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "difflab/dataset.hpp"
#include "difflab/sampler.hpp"

namespace difflab {

struct PlotBounds {
  double xmin = -1.0, xmax = 1.0, ymin = -1.0, ymax = 1.0;
};

struct QuiverArrow {
  Vec pos;  // data coordinates
  Vec dir;  // field value at pos
};

// Evaluate a vector field on a regular grid: the geometry behind a quiver
// plot, exposed so tests can assert on what gets drawn.
inline std::vector<QuiverArrow> quiver_geometry(
    const std::function<Vec(const Vec&)>& field, const PlotBounds& b, int nx, int ny) {
  require(nx >= 2 && ny >= 2, "quiver_geometry: grid too small");
  std::vector<QuiverArrow> arrows;
  arrows.reserve(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      Vec p = {b.xmin + (b.xmax - b.xmin) * ix / (nx - 1.0),
               b.ymin + (b.ymax - b.ymin) * iy / (ny - 1.0)};
      Vec v = field(p);
      require(v.size() == 2, "quiver_geometry: field must be 2-D");
      arrows.push_back({std::move(p), std::move(v)});
    }
  return arrows;
}

// Contour polylines of a scalar field by marching squares (per-cell
// segments; linear interpolation along edges).
inline std::vector<std::vector<Vec>> contour_geometry(
    const std::function<double(const Vec&)>& f, const PlotBounds& b, int n,
    const std::vector<double>& levels) {
  require(n >= 2, "contour_geometry: grid too small");
  std::vector<std::vector<double>> grid(n, std::vector<double>(n));
  for (int iy = 0; iy < n; ++iy)
    for (int ix = 0; ix < n; ++ix)
      grid[iy][ix] = f({b.xmin + (b.xmax - b.xmin) * ix / (n - 1.0),
                        b.ymin + (b.ymax - b.ymin) * iy / (n - 1.0)});
  auto gx = [&](int ix) { return b.xmin + (b.xmax - b.xmin) * ix / (n - 1.0); };
  auto gy = [&](int iy) { return b.ymin + (b.ymax - b.ymin) * iy / (n - 1.0); };

  std::vector<std::vector<Vec>> segments;
  for (double level : levels) {
    for (int iy = 0; iy + 1 < n; ++iy)
      for (int ix = 0; ix + 1 < n; ++ix) {
        const double v00 = grid[iy][ix], v10 = grid[iy][ix + 1];
        const double v01 = grid[iy + 1][ix], v11 = grid[iy + 1][ix + 1];
        std::vector<Vec> pts;
        auto cross = [&](double a, double va, double bb, double vb, bool horizontal, double fixed) {
          if ((va < level) == (vb < level)) return;
          const double t = (level - va) / (vb - va);
          const double c = a + t * (bb - a);
          pts.push_back(horizontal ? Vec{c, fixed} : Vec{fixed, c});
        };
        cross(gx(ix), v00, gx(ix + 1), v10, true, gy(iy));          // bottom
        cross(gx(ix), v01, gx(ix + 1), v11, true, gy(iy + 1));      // top
        cross(gy(iy), v00, gy(iy + 1), v01, false, gx(ix));         // left
        cross(gy(iy), v10, gy(iy + 1), v11, false, gx(ix + 1));     // right
        if (pts.size() >= 2) segments.push_back({pts[0], pts[1]});
        if (pts.size() == 4) segments.push_back({pts[2], pts[3]});
      }
  }
  return segments;
}

// Deterministic SVG canvas over a fixed data window. All numbers go
// through the shortest-round-trip formatter, so identical inputs yield
// identical bytes.
class SvgPlot {
 public:
  SvgPlot(const PlotBounds& bounds, int width = 640, int height = 640, int margin = 40)
      : b_(bounds), w_(width), h_(height), m_(margin) {
    require(b_.xmax > b_.xmin && b_.ymax > b_.ymin, "SvgPlot: degenerate bounds");
    body_ += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(w_) + "\" height=\"" +
             std::to_string(h_) + "\" fill=\"white\"/>\n";
    axes();
  }

  void add_scatter(const std::vector<Vec>& pts, const std::vector<int>* labels = nullptr,
                   double radius = 2.0, const std::string& color = "#1f77b4") {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      require(pts[i].size() == 2, "add_scatter: 2-D points required");
      const std::string c = labels ? palette((*labels)[i]) : color;
      body_ += "<circle cx=\"" + fx(pts[i][0]) + "\" cy=\"" + fy(pts[i][1]) + "\" r=\"" +
               format_double(radius) + "\" fill=\"" + c + "\" fill-opacity=\"0.7\"/>\n";
    }
  }

  void add_quiver(const std::vector<QuiverArrow>& arrows, double scale = 0.3,
                  const std::string& color = "#888888") {
    for (const QuiverArrow& a : arrows) {
      require(a.pos.size() == 2 && a.dir.size() == 2, "add_quiver: 2-D arrows required");
      const double norm = std::sqrt(a.dir[0] * a.dir[0] + a.dir[1] * a.dir[1]);
      if (norm < 1e-12) continue;
      // Cap the drawn length so dense score fields stay readable.
      const double len = scale * norm / (1.0 + 0.5 * norm);
      const double ux = a.dir[0] / norm, uy = a.dir[1] / norm;
      const double x2 = a.pos[0] + len * ux, y2 = a.pos[1] + len * uy;
      body_ += "<line x1=\"" + fx(a.pos[0]) + "\" y1=\"" + fy(a.pos[1]) + "\" x2=\"" + fx(x2) +
               "\" y2=\"" + fy(y2) + "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
      // Arrow head: two short back-strokes.
      const double hx = -0.25 * len, hy = 0.12 * len;
      for (int sgn : {-1, 1}) {
        const double ax = x2 + hx * ux - sgn * hy * uy;
        const double ay = y2 + hx * uy + sgn * hy * ux;
        body_ += "<line x1=\"" + fx(x2) + "\" y1=\"" + fy(y2) + "\" x2=\"" + fx(ax) + "\" y2=\"" +
                 fy(ay) + "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
      }
    }
  }

  void add_trajectory(const Trajectory& t, const std::string& color = "#d62728",
                      double width = 1.5) {
    require(!t.states.empty(), "add_trajectory: empty trajectory");
    std::string pts;
    for (const TrajState& st : t.states) {
      require(st.x.size() == 2, "add_trajectory: 2-D states required");
      if (!pts.empty()) pts += ' ';
      pts += fx(st.x[0]) + ',' + fy(st.x[1]);
    }
    body_ += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
             "\" stroke-width=\"" + format_double(width) + "\" stroke-opacity=\"0.9\"/>\n";
    body_ += "<circle cx=\"" + fx(t.states.front().x[0]) + "\" cy=\"" +
             fy(t.states.front().x[1]) + "\" r=\"4\" fill=\"" + color + "\"/>\n";
  }

  void add_contours(const std::vector<std::vector<Vec>>& polylines,
                    const std::string& color = "#2ca02c") {
    for (const auto& line : polylines) {
      std::string pts;
      for (const Vec& p : line) {
        require(p.size() == 2, "add_contours: 2-D points required");
        if (!pts.empty()) pts += ' ';
        pts += fx(p[0]) + ',' + fy(p[1]);
      }
      body_ += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
               "\" stroke-width=\"1\" stroke-opacity=\"0.8\"/>\n";
    }
  }

  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w_) +
           "\" height=\"" + std::to_string(h_) + "\" viewBox=\"0 0 " + std::to_string(w_) + " " +
           std::to_string(h_) + "\">\n" + body_ + "</svg>\n";
  }

  void write(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << str();
    if (!f) throw IoError("write failed: " + path);
  }

  static std::string palette(int label) {
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    return kColors[label >= 0 ? label % 8 : 0];
  }

 private:
  std::string fx(double x) const {
    return format_double(m_ + (x - b_.xmin) / (b_.xmax - b_.xmin) * (w_ - 2 * m_));
  }
  std::string fy(double y) const {
    return format_double(h_ - m_ - (y - b_.ymin) / (b_.ymax - b_.ymin) * (h_ - 2 * m_));
  }

  void axes() {
    body_ += "<rect x=\"" + std::to_string(m_) + "\" y=\"" + std::to_string(m_) + "\" width=\"" +
             std::to_string(w_ - 2 * m_) + "\" height=\"" + std::to_string(h_ - 2 * m_) +
             "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double x = b_.xmin + (b_.xmax - b_.xmin) * i / 4.0;
      const double y = b_.ymin + (b_.ymax - b_.ymin) * i / 4.0;
      body_ += "<line x1=\"" + fx(x) + "\" y1=\"" + std::to_string(h_ - m_) + "\" x2=\"" + fx(x) +
               "\" y2=\"" + std::to_string(h_ - m_ + 5) + "\" stroke=\"black\"/>\n";
      body_ += "<text x=\"" + fx(x) + "\" y=\"" + std::to_string(h_ - m_ + 18) +
               "\" font-size=\"10\" text-anchor=\"middle\">" + format_double(x) + "</text>\n";
      body_ += "<line x1=\"" + std::to_string(m_ - 5) + "\" y1=\"" + fy(y) + "\" x2=\"" +
               std::to_string(m_) + "\" y2=\"" + fy(y) + "\" stroke=\"black\"/>\n";
      body_ += "<text x=\"" + std::to_string(m_ - 8) + "\" y=\"" + fy(y) +
               "\" font-size=\"10\" text-anchor=\"end\" dominant-baseline=\"middle\">" +
               format_double(y) + "</text>\n";
    }
  }

  PlotBounds b_;
  int w_, h_, m_;
  std::string body_;
};

}  // namespace difflab
