#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "clab/sysid/margins.hpp"

namespace clab::sysid {

namespace detail {

inline std::string polyline(const std::vector<double>& w, const std::vector<double>& y, double wlo, double whi, double ylo,
                            double yhi, double x0, double y0, double width, double height, const char* color) {
    std::string pts;
    char buf[64];
    for (std::size_t i = 0; i < w.size(); ++i) {
        double x = x0 + width * (std::log10(w[i]) - std::log10(wlo)) / (std::log10(whi) - std::log10(wlo));
        double v = std::clamp(y[i], ylo, yhi);
        double yy = y0 + height * (yhi - v) / (yhi - ylo);
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, yy);
        pts += buf;
    }
    return "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
}

} // namespace detail

// Two-panel magnitude/phase plot. Phase uses the [-270, 90] deg window; an optional reference curve is drawn dashed-gray.
inline std::string bode_svg(const BodeData& measured, const BodeData* reference = nullptr) {
    validate(measured);
    const double W = 720, H = 260, L = 60, T = 20, gap = 40;
    double wlo = measured.omega.front(), whi = measured.omega.back();
    auto [mn, mx] = std::minmax_element(measured.mag_db.begin(), measured.mag_db.end());
    double ylo = std::floor(*mn / 10) * 10, yhi = std::ceil(*mx / 10) * 10;
    if (yhi <= ylo) yhi = ylo + 10;
    auto ph = display_phase_window(measured);
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(int(W + L + 20)) + "\" height=\"" +
                    std::to_string(int(2 * H + T + gap + 40)) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    char buf[160];
    for (int panel = 0; panel < 2; ++panel) {
        double y0 = T + panel * (H + gap);
        std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", L, y0, W, H);
        s += buf;
        double lo = panel ? ph.axis_lo : ylo, hi = panel ? ph.axis_hi : yhi;
        std::snprintf(buf, sizeof buf, "<text x=\"4\" y=\"%g\" font-size=\"11\">%g</text><text x=\"4\" y=\"%g\" font-size=\"11\">%g</text>\n",
                      y0 + 10, hi, y0 + H, lo);
        s += buf;
        s += std::string("<text x=\"") + std::to_string(int(L + 4)) + "\" y=\"" + std::to_string(int(y0 + 14)) +
             "\" font-size=\"12\">" + (panel ? "phase (deg)" : "magnitude (dB)") + "</text>\n";
    }
    if (reference) {
        auto rph = display_phase_window(*reference);
        s += detail::polyline(reference->omega, reference->mag_db, wlo, whi, ylo, yhi, L, T, W, H, "#999999");
        s += detail::polyline(reference->omega, rph.data.phase_deg, wlo, whi, ph.axis_lo, ph.axis_hi, L, T + H + gap, W, H, "#999999");
    }
    s += detail::polyline(measured.omega, measured.mag_db, wlo, whi, ylo, yhi, L, T, W, H, "#1f5fbf");
    s += detail::polyline(measured.omega, ph.data.phase_deg, wlo, whi, ph.axis_lo, ph.axis_hi, L, T + H + gap, W, H, "#1f5fbf");
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"11\">%g rad/s</text><text x=\"%g\" y=\"%g\" font-size=\"11\">%g rad/s</text>\n",
                  L, 2 * H + T + gap + 16, wlo, L + W - 70, 2 * H + T + gap + 16, whi);
    s += buf;
    return s + "</svg>\n";
}

} // namespace clab::sysid
