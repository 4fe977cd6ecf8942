#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lanerob/common.hpp"

namespace lanerob {

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '&': o += "&amp;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline std::string header(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
         std::to_string(h) + "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

inline std::string text(double x, double y, const std::string& s, const char* anchor = "start") {
  return "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" text-anchor=\"" + anchor + "\">" + escape(s) + "</text>\n";
}

// white -> dark red
inline std::string heat(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int g = static_cast<int>(std::lround(255 * (1.0 - v)));
  const int r = static_cast<int>(std::lround(255 - 100 * v));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, g);
  return buf;
}

}  // namespace svg

/// Lateral deviation over time for every attack row of one scenario, with the threshold band.
inline std::string deviation_plot(const std::string& title, const std::vector<std::pair<std::string, Json>>& series,
                                  double threshold) {
  const int W = 640, H = 360, L = 60, R = 170, T = 30, B = 40;
  double tmax = 1.0, dmax = threshold * 1.5;
  for (const auto& [_, pts] : series) {
    for (const auto& p : pts) {
      tmax = std::max(tmax, p.at(0).get<double>());
      dmax = std::max(dmax, std::abs(p.at(1).get<double>()));
    }
  }
  const double pw = W - L - R, ph = H - T - B;
  auto X = [&](double t) { return L + pw * t / tmax; };
  auto Y = [&](double d) { return T + ph * (0.5 - d / (2 * dmax)); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  std::string s = svg::header(W, H);
  s += svg::text(W / 2.0, 18, title, "middle");
  s += "<rect x=\"" + svg::num(L) + "\" y=\"" + svg::num(T) + "\" width=\"" + svg::num(pw) + "\" height=\"" +
       svg::num(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double d : {threshold, -threshold}) {
    s += "<line x1=\"" + svg::num(L) + "\" x2=\"" + svg::num(L + pw) + "\" y1=\"" + svg::num(Y(d)) + "\" y2=\"" +
         svg::num(Y(d)) + "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  }
  s += svg::text(L - 6, Y(dmax) + 4, svg::num(dmax), "end");
  s += svg::text(L - 6, Y(0) + 4, "0", "end");
  s += svg::text(L - 6, Y(-dmax) + 4, svg::num(-dmax), "end");
  s += svg::text(L + pw / 2, H - 8, "time [s]", "middle");
  s += svg::text(L + pw, H - 22, svg::num(tmax), "end");
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* c = colors[i % 8];
    std::string pts;
    for (const auto& p : series[i].second) {
      pts += svg::num(X(p.at(0).get<double>())) + "," + svg::num(Y(p.at(1).get<double>())) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(c) + "\" stroke-width=\"1.2\" points=\"" + pts + "\"/>\n";
    const double ly = T + 14.0 * (i + 1);
    s += "<line x1=\"" + svg::num(W - R + 8) + "\" x2=\"" + svg::num(W - R + 24) + "\" y1=\"" + svg::num(ly - 4) +
         "\" y2=\"" + svg::num(ly - 4) + "\" stroke=\"" + c + "\"/>\n";
    s += svg::text(W - R + 28, ly, series[i].first);
  }
  return s + "</svg>\n";
}

/// Grid of values in [0,1] with row and column labels.
inline std::string heat_map(const std::string& title, const std::vector<std::string>& rows,
                            const std::vector<std::string>& cols, const std::vector<std::vector<double>>& v) {
  const int cw = 90, ch = 28, L = 130, T = 50;
  const int W = L + cw * static_cast<int>(cols.size()) + 20;
  const int H = T + ch * static_cast<int>(rows.size()) + 20;
  std::string s = svg::header(W, H);
  s += svg::text(W / 2.0, 18, title, "middle");
  for (std::size_t j = 0; j < cols.size(); ++j) s += svg::text(L + cw * (j + 0.5), T - 8, cols[j], "middle");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    s += svg::text(L - 6, T + ch * (i + 0.5) + 4, rows[i], "end");
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double x = v[i][j];
      s += "<rect x=\"" + svg::num(L + cw * j) + "\" y=\"" + svg::num(T + ch * i) + "\" width=\"" + svg::num(cw) +
           "\" height=\"" + svg::num(ch) + "\" fill=\"" + svg::heat(x) + "\" stroke=\"#666\"/>\n";
      s += svg::text(L + cw * (j + 0.5), T + ch * (i + 0.5) + 4, svg::num(x), "middle");
    }
  }
  return s + "</svg>\n";
}

/// SVG files (name -> contents) summarizing a report. Reports without rows yield nothing.
inline std::map<std::string, std::string> report_plots(const Json& report) {
  std::map<std::string, std::string> out;
  if (!report.contains("rows") || report.at("rows").empty()) return out;
  const auto kind = report.at("metadata").at("kind").get<std::string>();
  const double thr = report.at("metadata").at("spec").value("metrics", Json::object()).value("deviation_threshold", 0.735);

  if (kind == "end_to_end") {
    std::map<std::string, std::vector<std::pair<std::string, Json>>> by_scenario;
    for (const auto& r : report.at("rows")) {
      if (r.at("attack") == "benign" || !r.contains("deviation") || r.at("deviation").empty()) continue;
      std::string label = r.at("detector").get<std::string>() + " " + r.at("attack").get<std::string>() + " " +
                          r.at("direction").get<std::string>();
      by_scenario[r.at("scenario").get<std::string>()].push_back({label, r.at("deviation")});
    }
    for (const auto& [name, series] : by_scenario) out["deviation_" + name + ".svg"] = deviation_plot(name, series, thr);
  }

  if ((kind == "end_to_end" || kind == "conventional") && report.contains("aggregates")) {
    std::vector<std::string> dets, atks;
    for (const auto& a : report.at("aggregates")) {
      const auto d = a.at("detector").get<std::string>();
      const auto k = a.at("attack").get<std::string>();
      if (k == "benign" && kind == "end_to_end") continue;
      if (std::find(dets.begin(), dets.end(), d) == dets.end()) dets.push_back(d);
      if (std::find(atks.begin(), atks.end(), k) == atks.end()) atks.push_back(k);
    }
    if (!dets.empty()) {
      const char* metric = kind == "end_to_end" ? "untargeted_rate" : "accuracy";
      std::vector<std::vector<double>> v(dets.size(), std::vector<double>(atks.size(), 0.0));
      for (const auto& a : report.at("aggregates")) {
        if (!a.contains(metric)) continue;
        const auto i = std::find(dets.begin(), dets.end(), a.at("detector").get<std::string>()) - dets.begin();
        const auto j = std::find(atks.begin(), atks.end(), a.at("attack").get<std::string>()) - atks.begin();
        if (i < static_cast<long>(dets.size()) && j < static_cast<long>(atks.size())) v[i][j] = a.at(metric).get<double>();
      }
      out[std::string(kind == "end_to_end" ? "success" : "accuracy") + "_heatmap.svg"] =
          heat_map(kind == "end_to_end" ? "untargeted success rate" : "lane accuracy", dets, atks, v);
    }
  }

  if (kind == "transfer") {
    const auto dets = report.at("detectors").get<std::vector<std::string>>();
    for (const auto& [atk, m] : report.at("matrix").items()) {
      out["transfer_" + atk + ".svg"] = heat_map("transfer " + atk + " (source rows, target columns)", dets, dets,
                                                 m.at("untargeted").get<std::vector<std::vector<double>>>());
    }
  }
  return out;
}

}  // namespace lanerob
