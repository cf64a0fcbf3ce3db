#include "fds/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "fds/error.hpp"

namespace fds {
namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string report_to_json(const MetricReport& report, double threshold) {
  json j;
  j["threshold"] = threshold;
  json cats = json::object();
  for (const auto& [name, s] : report.per_category) {
    cats[name] = {{"mean_iou", s.mean_iou}, {"std_iou", s.std_iou}, {"mean_dc", s.mean_dc},
                  {"std_dc", s.std_dc},     {"images", s.images},   {"runs", s.runs}};
  }
  j["per_category"] = cats;
  j["overall"] = {{"mean_iou", report.overall_mean_iou}, {"mean_dc", report.overall_mean_dc}};
  json pts = json::array();
  for (const auto& p : report.anomaly.roc_points) pts.push_back({p.fpr, p.tpr});
  j["anomaly"] = {{"available", report.anomaly.available},
                  {"acc", report.anomaly.acc},
                  {"auc", report.anomaly.auc},
                  {"roc_points", pts}};
  return j.dump(2) + "\n";
}

MetricReport report_from_json(const std::string& text) {
  MetricReport r;
  try {
    const json j = json::parse(text);
    for (const auto& [name, s] : j.at("per_category").items()) {
      CategoryStats c;
      c.mean_iou = s.at("mean_iou");
      c.std_iou = s.at("std_iou");
      c.mean_dc = s.at("mean_dc");
      c.std_dc = s.at("std_dc");
      c.images = s.at("images");
      c.runs = s.at("runs");
      r.per_category[name] = c;
    }
    r.overall_mean_iou = j.at("overall").at("mean_iou");
    r.overall_mean_dc = j.at("overall").at("mean_dc");
    const json& a = j.at("anomaly");
    r.anomaly.available = a.at("available");
    r.anomaly.acc = a.at("acc");
    r.anomaly.auc = a.at("auc");
    for (const auto& p : a.at("roc_points")) r.anomaly.roc_points.push_back({p.at(0), p.at(1)});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed report JSON: ") + e.what());
  }
  return r;
}

std::string report_to_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "scope,metric,value\n";
  for (const auto& [name, s] : report.per_category) {
    out << name << ",mean_iou," << fmt_double(s.mean_iou) << "\n";
    out << name << ",std_iou," << fmt_double(s.std_iou) << "\n";
    out << name << ",mean_dc," << fmt_double(s.mean_dc) << "\n";
    out << name << ",std_dc," << fmt_double(s.std_dc) << "\n";
    out << name << ",images," << s.images << "\n";
  }
  out << "overall,mean_iou," << fmt_double(report.overall_mean_iou) << "\n";
  out << "overall,mean_dc," << fmt_double(report.overall_mean_dc) << "\n";
  if (report.anomaly.available) {
    out << "anomaly,acc," << fmt_double(report.anomaly.acc) << "\n";
    out << "anomaly,auc," << fmt_double(report.anomaly.auc) << "\n";
  }
  return out.str();
}

std::string roc_to_svg(const AnomalyStats& anomaly) {
  constexpr double kSize = 320, kPad = 40, kPlot = kSize - 2 * kPad;
  const auto px = [&](double fpr) { return kPad + fpr * kPlot; };
  const auto py = [&](double tpr) { return kSize - kPad - tpr * kPlot; };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSize << "\" height=\"" << kSize
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<rect x=\"" << kPad << "\" y=\"" << kPad << "\" width=\"" << kPlot << "\" height=\"" << kPlot
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
    << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
  if (anomaly.available && !anomaly.roc_points.empty()) {
    s << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\" points=\"";
    for (const auto& p : anomaly.roc_points) s << px(p.fpr) << "," << py(p.tpr) << " ";
    s << "\"/>\n";
    char auc[64];
    std::snprintf(auc, sizeof(auc), "AUC = %.4f", anomaly.auc);
    s << "<text x=\"" << px(0.55) << "\" y=\"" << py(0.08) << "\">" << auc << "</text>\n";
  } else {
    s << "<text x=\"" << px(0.2) << "\" y=\"" << py(0.5) << "\">ROC unavailable</text>\n";
  }
  s << "<text x=\"" << kSize / 2 - 60 << "\" y=\"" << kSize - 10 << "\">false positive rate</text>\n";
  s << "<text transform=\"translate(14," << kSize / 2 + 50 << ") rotate(-90)\">true positive rate</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string to_jsonl(const IterationRecord& r) {
  json j = {{"type", "step"},  {"iteration", r.iteration}, {"branch", to_string(r.branch)},
            {"nbr", r.nbr},    {"seg", r.seg},             {"total", r.total},
            {"lambdas", r.lambdas}};
  return j.dump() + "\n";
}

std::string to_jsonl(const EvalSnapshot& s) {
  json j = {{"type", "eval"}, {"iteration", s.iteration}, {"mean_iou", s.mean_iou}};
  return j.dump() + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fds
