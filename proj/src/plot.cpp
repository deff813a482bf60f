#include "ecg/plot.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <limits>

namespace ecg::plot {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string escape(std::string_view s) {
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

struct Series {
    std::string name;
    std::string color;
    std::vector<double> values;
};

constexpr double kPanelW = 360, kPanelH = 240, kMargin = 48;

std::string panel(double x0, double y0, const std::string& title, const std::vector<std::size_t>& epochs,
                  const std::array<Series, 2>& series) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& s : series) {
        for (double v : s.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (!(lo <= hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double e_lo = epochs.empty() ? 1.0 : double(epochs.front());
    const double e_hi = epochs.empty() ? 1.0 : double(epochs.back());
    const double e_span = e_hi > e_lo ? e_hi - e_lo : 1.0;
    const double pw = kPanelW - 2 * kMargin, ph = kPanelH - 2 * kMargin;
    auto px = [&](double e) { return x0 + kMargin + (e - e_lo) / e_span * pw; };
    auto py = [&](double v) { return y0 + kMargin + (hi - v) / (hi - lo) * ph; };

    std::string out;
    out += "<g class=\"panel\">\n";
    out += "<text x=\"" + num(x0 + kPanelW / 2) + "\" y=\"" + num(y0 + 24) +
           "\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) + "</text>\n";
    out += "<rect x=\"" + num(x0 + kMargin) + "\" y=\"" + num(y0 + kMargin) + "\" width=\"" + num(pw) + "\" height=\"" +
           num(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
    out += "<text x=\"" + num(x0 + kMargin - 4) + "\" y=\"" + num(y0 + kMargin + 4) +
           "\" text-anchor=\"end\" font-size=\"10\">" + label(hi) + "</text>\n";
    out += "<text x=\"" + num(x0 + kMargin - 4) + "\" y=\"" + num(y0 + kMargin + ph) +
           "\" text-anchor=\"end\" font-size=\"10\">" + label(lo) + "</text>\n";
    out += "<text x=\"" + num(x0 + kMargin) + "\" y=\"" + num(y0 + kMargin + ph + 14) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + label(e_lo) + "</text>\n";
    out += "<text x=\"" + num(x0 + kMargin + pw) + "\" y=\"" + num(y0 + kMargin + ph + 14) +
           "\" text-anchor=\"middle\" font-size=\"10\">" + label(e_hi) + "</text>\n";
    out += "<text x=\"" + num(x0 + kMargin + pw / 2) + "\" y=\"" + num(y0 + kMargin + ph + 30) +
           "\" text-anchor=\"middle\" font-size=\"11\">epoch</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::string points;
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (i) points += ' ';
            points += num(px(double(epochs[i]))) + "," + num(py(s.values[i]));
        }
        out += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
        const double ly = y0 + kMargin + 12 + 14 * double(k);
        out += "<text x=\"" + num(x0 + kMargin + pw - 4) + "\" y=\"" + num(ly) + "\" text-anchor=\"end\" font-size=\"10\" fill=\"" +
               s.color + "\">" + escape(s.name) + "</text>\n";
    }
    out += "</g>\n";
    return out;
}

std::string svg_open(double w, double h) {
    return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) +
           "\" height=\"" + num(h) + "\" viewBox=\"0 0 " + num(w) + " " + num(h) + "\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

}  // namespace

std::string training_curves_svg(const std::vector<training::EpochLog>& history) {
    std::vector<std::size_t> epochs;
    std::array<std::vector<double>, 6> v;
    for (const auto& e : history) {
        epochs.push_back(e.epoch);
        v[0].push_back(e.train_loss);
        v[1].push_back(e.val_loss);
        v[2].push_back(e.train_acc);
        v[3].push_back(e.val_acc);
        v[4].push_back(e.val_precision);
        v[5].push_back(e.val_recall);
    }
    const std::string train_color = "#1f77b4", val_color = "#d62728";
    std::string out = svg_open(3 * kPanelW, kPanelH);
    out += panel(0, 0, "Loss", epochs, {Series{"train", train_color, v[0]}, Series{"validation", val_color, v[1]}});
    out += panel(kPanelW, 0, "Binary accuracy", epochs,
                 {Series{"train", train_color, v[2]}, Series{"validation", val_color, v[3]}});
    out += panel(2 * kPanelW, 0, "Validation precision / recall", epochs,
                 {Series{"precision", "#2ca02c", v[4]}, Series{"recall", "#9467bd", v[5]}});
    out += "</svg>\n";
    return out;
}

std::string confusion_svg(std::string_view title, const evaluation::ClassConfusion& counts) {
    const std::array<std::array<std::size_t, 2>, 2> cells = {{{counts.tn, counts.fp}, {counts.fn, counts.tp}}};
    const std::size_t peak = std::max({counts.tn, counts.fp, counts.fn, counts.tp, std::size_t{1}});
    constexpr double cell = 110, x0 = 90, y0 = 60;
    std::string out = svg_open(x0 + 2 * cell + 30, y0 + 2 * cell + 50);
    out += "<text x=\"" + num(x0 + cell) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) +
           "</text>\n";
    out += "<text x=\"" + num(x0 + cell) + "\" y=\"" + num(y0 + 2 * cell + 36) +
           "\" text-anchor=\"middle\" font-size=\"12\">predicted</text>\n";
    out += "<text x=\"20\" y=\"" + num(y0 + cell) + "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 20 " +
           num(y0 + cell) + ")\">actual</text>\n";
    for (int k = 0; k < 2; ++k) {
        out += "<text x=\"" + num(x0 + cell * (k + 0.5)) + "\" y=\"" + num(y0 + 2 * cell + 18) +
               "\" text-anchor=\"middle\" font-size=\"11\">" + std::to_string(k) + "</text>\n";
        out += "<text x=\"" + num(x0 - 8) + "\" y=\"" + num(y0 + cell * (k + 0.5) + 4) +
               "\" text-anchor=\"end\" font-size=\"11\">" + std::to_string(k) + "</text>\n";
    }
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            const double frac = double(cells[r][c]) / double(peak);
            const int shade = 255 - static_cast<int>(frac * 200.0 + 0.5);
            char color[16];
            std::snprintf(color, sizeof color, "#%02x%02xff", shade, shade);
            out += "<rect x=\"" + num(x0 + c * cell) + "\" y=\"" + num(y0 + r * cell) + "\" width=\"" + num(cell) +
                   "\" height=\"" + num(cell) + "\" fill=\"" + color + "\" stroke=\"#333\"/>\n";
            out += "<text x=\"" + num(x0 + (c + 0.5) * cell) + "\" y=\"" + num(y0 + (r + 0.5) * cell + 6) +
                   "\" text-anchor=\"middle\" font-size=\"18\" fill=\"" + (frac > 0.6 ? "white" : "black") + "\">" +
                   std::to_string(cells[r][c]) + "</text>\n";
        }
    }
    out += "</svg>\n";
    return out;
}

evaluation::ClassConfusion aggregate_confusion(const evaluation::ConfusionCounts& counts) {
    evaluation::ClassConfusion sum;
    for (const auto& c : counts.classes) {
        sum.tn += c.tn;
        sum.fp += c.fp;
        sum.fn += c.fn;
        sum.tp += c.tp;
    }
    return sum;
}

}  // namespace ecg::plot
