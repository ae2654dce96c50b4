#include "protofuse/evaluate/report.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace protofuse::evaluate {

using nlohmann::json;

namespace {

std::string number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> read_optional(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json report_json(const EvaluationReport& r) {
  json cells = json::array();
  for (const auto& c : r.cells) {
    json cell{{"k", c.k}, {"seed", c.seed}, {"f1", optional_number(c.f1)}, {"missing", !c.f1}};
    if (!c.error.empty()) cell["error"] = c.error;
    cells.push_back(std::move(cell));
  }
  json summary = json::array();
  for (const auto& s : r.summary) {
    summary.push_back(
        json{{"k", s.k}, {"mean", optional_number(s.mean)}, {"std", optional_number(s.std)}, {"n", s.n}});
  }
  return json{{"recipe", r.recipe},
              {"domain", r.domain_id},
              {"config", r.config},
              {"config_hash", config_hash(r.config)},
              {"cells", std::move(cells)},
              {"summary", std::move(summary)}};
}

EvaluationReport report_from_json(const json& j) {
  EvaluationReport r;
  try {
    r.recipe = j.at("recipe").get<std::string>();
    r.domain_id = j.value("domain", std::string());
    r.config = j.value("config", json::object());
    for (const auto& c : j.at("cells")) {
      r.cells.push_back(Cell{c.at("k").get<std::size_t>(), c.at("seed").get<std::uint64_t>(),
                             read_optional(c, "f1"), c.value("error", std::string())});
    }
    for (const auto& s : j.at("summary")) {
      r.summary.push_back(SummaryRow{s.at("k").get<std::size_t>(), read_optional(s, "mean"),
                                     read_optional(s, "std"), s.value("n", std::size_t{0})});
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("report: malformed document: ") + e.what());
  }
  return r;
}

std::string report_csv(const EvaluationReport& r) {
  std::ostringstream os;
  os << "k,seed,macro_f1\n";
  for (const auto& c : r.cells) {
    os << c.k << ',' << c.seed << ',' << (c.f1 ? number(*c.f1) : std::string()) << '\n';
  }
  return os.str();
}

std::string report_svg(const EvaluationReport& r) {
  const double width = 520, height = 340, left = 60, right = 20, top = 40, bottom = 50;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  const std::size_t n = r.summary.size();
  auto x_of = [&](std::size_t i) {
    return n <= 1 ? left + plot_w / 2 : left + plot_w * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  auto y_of = [&](double v) { return top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"14\">"
     << r.domain_id << " / " << r.recipe << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\""
     << top + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << y_of(v) << "\" x2=\"" << left + plot_w << "\" y2=\""
       << y_of(v) << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << left - 8 << "\" y=\"" << y_of(v) + 4
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fixed(v, 1) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    os << "<text x=\"" << x_of(i) << "\" y=\"" << top + plot_h + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << r.summary[i].k
       << "</text>\n";
  }
  os << "<text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">K</text>\n";
  os << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 " << top + plot_h / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">macro-F1</text>\n";

  std::string points;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = r.summary[i];
    if (!s.mean) continue;
    const double x = x_of(i);
    const double sd = s.std.value_or(0.0);
    os << "<line x1=\"" << fixed(x, 2) << "\" y1=\"" << fixed(y_of(*s.mean - sd), 2) << "\" x2=\"" << fixed(x, 2)
       << "\" y2=\"" << fixed(y_of(*s.mean + sd), 2) << "\" stroke=\"#1f77b4\"/>\n";
    os << "<circle cx=\"" << fixed(x, 2) << "\" cy=\"" << fixed(y_of(*s.mean), 2)
       << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    points += fixed(x, 2) + "," + fixed(y_of(*s.mean), 2) + " ";
  }
  if (!points.empty()) {
    points.pop_back();
    os << "<polyline points=\"" << points << "\" fill=\"none\" stroke=\"#1f77b4\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

ReportFiles emit_report(const EvaluationReport& report, const std::filesystem::path& out_dir) {
  if (report.cells.empty()) throw std::invalid_argument("report has no cells");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir.string() + ": " + ec.message());
  const std::string stem =
      (report.domain_id.empty() ? std::string("domain") : report.domain_id) + "_" + report.recipe;
  ReportFiles files{out_dir / (stem + ".json"), out_dir / (stem + ".csv"), out_dir / (stem + ".svg")};
  write_file(files.json, report_json(report).dump(2) + "\n");
  write_file(files.csv, report_csv(report));
  write_file(files.plot, report_svg(report));
  return files;
}

}  // namespace protofuse::evaluate
