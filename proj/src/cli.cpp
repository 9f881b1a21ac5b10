#include "manelab/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace manelab::cli {

using nlohmann::json;
namespace fs = std::filesystem;

// ------------------------------------------------------------------- config

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config", "expected an object");
  for (const auto& [k, v] : j.items())
    if (k != "schema" && k != "seed" && k != "output" && k != "pipeline") throw ConfigError(k, "unknown key");
  ExperimentConfig c;
  if (j.contains("schema")) {
    if (!j["schema"].is_number_integer()) throw ConfigError("schema", "expected an integer");
    c.schema = j["schema"].get<int>();
    if (c.schema != kSchemaVersion)
      throw ConfigError("schema", "unsupported version " + std::to_string(c.schema) + "; expected " +
                                      std::to_string(kSchemaVersion));
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0) throw ConfigError("seed", "expected a nonnegative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("output")) {
    if (!j["output"].is_string()) throw ConfigError("output", "expected a string");
    c.output = j["output"].get<std::string>();
  }
  if (!j.contains("pipeline")) throw ConfigError("pipeline", "required");
  if (!j["pipeline"].is_array()) throw ConfigError("pipeline", "expected an array of stages");
  for (std::size_t i = 0; i < j["pipeline"].size(); ++i) {
    const std::string path = "pipeline[" + std::to_string(i) + "]";
    const json& s = j["pipeline"][i];
    if (!s.is_object()) throw ConfigError(path, "expected a stage object");
    for (const auto& [k, v] : s.items())
      if (k != "module" && k != "op" && k != "params") throw ConfigError(path + "." + k, "unknown key");
    for (const char* k : {"module", "op"}) {
      if (!s.contains(k)) throw ConfigError(path + "." + k, "required");
      if (!s[k].is_string()) throw ConfigError(path + "." + k, "expected a string");
    }
    Stage st{s["module"].get<std::string>(), s["op"].get<std::string>(), s.value("params", json::object())};
    validate_params(st, path);
    c.pipeline.push_back(std::move(st));
  }
  return c;
}

// --------------------------------------------------------------------- csv

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace {

std::string csv_field(const json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return v.dump();
  if (v.is_number()) return format_double(v.get<double>());
  const std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return q + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') field += '"', ++i;
      else if (ch == '"') quoted = false;
      else field += ch;
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(field);
      field.clear();
    } else if (ch == '\n') {
      row.push_back(field);
      field.clear();
      rows.push_back(row);
      row.clear();
    } else {
      field += ch;
    }
  }
  if (!field.empty() || !row.empty()) row.push_back(field), rows.push_back(row);
  return rows;
}

std::string table_file(const StageResult& r, const Table& t) {
  char idx[16];
  std::snprintf(idx, sizeof idx, "%02d", r.index);
  return std::string(idx) + "_" + r.stage.module + "_" + r.stage.op + "_" + t.name + ".csv";
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

void Table::add(std::vector<json> row) {
  if (row.size() != columns.size())
    throw std::logic_error("table " + name + ": row has " + std::to_string(row.size()) + " fields, expected " +
                           std::to_string(columns.size()));
  rows.push_back(std::move(row));
}

std::string Table::csv(const std::string& module, const std::string& op) const {
  std::string out = "module,op";
  for (const auto& c : columns) out += "," + c;
  out += "\n";
  for (const auto& row : rows) {
    out += module + "," + op;
    for (const auto& v : row) out += "," + csv_field(v);
    out += "\n";
  }
  return out;
}

// ------------------------------------------------------------------ running

bool StageResult::passed() const {
  return ok && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

std::mt19937_64 stage_rng(std::uint64_t seed, int index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

int RunSummary::exit_code() const {
  return std::all_of(stages.begin(), stages.end(), [](const StageResult& r) { return r.passed(); }) ? 0 : 3;
}

int workers_from_env() {
  if (const char* w = std::getenv("MANELAB_WORKERS")) {
    const int n = std::atoi(w);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

RunSummary run(const ExperimentConfig& config, const fs::path& dir, int workers) {
  RunSummary summary;
  fs::create_directories(dir);
  const int n = static_cast<int>(config.pipeline.size());
  if (n == 0) return summary;
  summary.stages.resize(n);
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < n; i = next++) summary.stages[i] = run_stage(config.pipeline[i], config.seed, i);
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < std::clamp(workers, 1, n); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  // Files go out in pipeline order once every stage is done.
  for (const auto& r : summary.stages)
    for (const auto& t : r.tables) {
      const std::string name = table_file(r, t);
      write_file(dir / name, t.csv(r.stage.module, r.stage.op));
      summary.files.push_back(name);
    }
  summary.files.push_back("summary.json");
  write_file(dir / "summary.json", summary_json(config, summary).dump(2) + "\n");
  return summary;
}

json summary_json(const ExperimentConfig& config, const RunSummary& summary) {
  json stages = json::array();
  for (const auto& r : summary.stages) {
    json checks = json::array(), files = json::array();
    for (const auto& c : r.checks)
      checks.push_back({{"name", c.name}, {"criterion", c.criterion}, {"pass", c.pass}, {"detail", c.detail}});
    for (const auto& t : r.tables) files.push_back(table_file(r, t));
    stages.push_back({{"index", r.index},
                      {"module", r.stage.module},
                      {"op", r.stage.op},
                      {"params", r.stage.params},
                      {"ok", r.ok},
                      {"error", r.error},
                      {"passed", r.passed()},
                      {"values", r.values},
                      {"checks", checks},
                      {"files", files}});
  }
  return {{"schema", kSchemaVersion},
          {"seed", config.seed},
          {"stages", stages},
          {"exit_code", summary.exit_code()}};
}

// ------------------------------------------------------------------- plots

std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                     const std::vector<Series>& series, bool logx, bool logy) {
  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  auto tx = [&](double x) { return logx ? std::log10(x) : x; };
  auto ty = [&](double y) { return logy ? std::log10(y) : y; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!logx || x > 0) && (!logy || y > 0);
  };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (usable(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i])), x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
      }
  if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  auto px = [&](double x) { return L + (tx(x) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.3g", v);
    return std::string(b);
  };
  auto esc = [](const std::string& s) {
    std::string o;
    for (char ch : s) o += ch == '<' ? "&lt;" : ch == '>' ? "&gt;" : ch == '&' ? "&amp;" : std::string(1, ch);
    return o;
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << esc(title) << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4, fy = y0 + (y1 - y0) * k / 4;
    const double gx = L + (W - L - R) * k / 4, gy = H - B - (H - T - B) * k / 4;
    o << "<text x=\"" << gx << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">"
      << num(logx ? std::pow(10.0, fx) : fx) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">" << num(logy ? std::pow(10.0, fy) : fy)
      << "</text>\n";
    o << "<line x1=\"" << L << "\" x2=\"" << W - R << "\" y1=\"" << gy << "\" y2=\"" << gy
      << "\" stroke=\"#ddd\"/>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << esc(xlabel)
    << (logx ? " (log)" : "") << "</text>\n";
  o << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << esc(ylabel) << (logy ? " (log)" : "") << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* col = colors[k % 8];
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (usable(s.x[i], s.y[i])) pts += num(px(s.x[i])) + "," + num(py(s.y[i])) + " ";
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"" << pts << "\"/>\n";
    if (s.x.size() <= 30)
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (usable(s.x[i], s.y[i]))
          o << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"2.5\" fill=\"" << col
            << "\"/>\n";
    const double ly = T + 14 + 16.0 * k;
    o << "<line x1=\"" << W - R + 10 << "\" x2=\"" << W - R + 28 << "\" y1=\"" << ly - 4 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 32 << "\" y=\"" << ly << "\">" << esc(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// ------------------------------------------------------------------ report

namespace {

// Columns of a written CSV by name.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : static_cast<int>(it - header.begin());
  }
  std::vector<double> numbers(const std::string& name) const {
    std::vector<double> out;
    const int c = col(name);
    for (const auto& r : rows) out.push_back(c < 0 || r[c].empty() ? NAN : std::strtod(r[c].c_str(), nullptr));
    return out;
  }
};

CsvData load_csv(const fs::path& p) {
  auto rows = parse_csv(read_file(p));
  CsvData d;
  if (rows.empty()) return d;
  d.header = rows.front();
  d.rows.assign(rows.begin() + 1, rows.end());
  return d;
}

// Rows grouped by the value of one column, in first-seen order.
std::vector<std::pair<std::string, Series>> group(const CsvData& d, const std::string& key, const std::string& x,
                                                  const std::string& y) {
  std::vector<std::pair<std::string, Series>> out;
  const int k = d.col(key), cx = d.col(x), cy = d.col(y);
  if (k < 0 || cx < 0 || cy < 0) return out;
  for (const auto& r : d.rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const auto& p) { return p.first == r[k]; });
    if (it == out.end()) {
      out.push_back({r[k], Series{key + " = " + r[k], {}, {}}});
      it = out.end() - 1;
    }
    it->second.x.push_back(std::strtod(r[cx].c_str(), nullptr));
    it->second.y.push_back(std::strtod(r[cy].c_str(), nullptr));
  }
  return out;
}

std::string fixed(double v, const char* f = "%.4g") {
  char b[32];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

}  // namespace

Report report(const fs::path& dir) {
  Report rep;
  const fs::path summary_path = dir / "summary.json";
  if (!fs::exists(summary_path)) {
    const bool empty = !fs::exists(dir) || fs::is_empty(dir);
    if (empty) {
      rep.empty = true;
      rep.table = "Empty run: no stages were executed.\n";
      if (fs::exists(dir)) write_file(dir / "report.md", "# Run report\n\n" + rep.table);
      return rep;
    }
    rep.missing.push_back("summary.json");
    return rep;
  }
  const json s = json::parse(read_file(summary_path));
  std::ostringstream md;
  md << "# Run report\n\nseed " << s.value("seed", 0) << "\n\n";
  md << "| stage | module | op | status | checks |\n|---|---|---|---|---|\n";
  std::map<int, std::pair<int, int>> crit;  // criterion -> (passed, total)
  std::ostringstream detail;
  for (const auto& st : s["stages"]) {
    int pass = 0, total = 0;
    for (const auto& c : st["checks"]) {
      ++total;
      pass += c["pass"].get<bool>();
      const int k = c["criterion"].get<int>();
      if (k > 0) {
        crit[k].first += c["pass"].get<bool>();
        crit[k].second += 1;
      }
    }
    const std::string status = !st["ok"].get<bool>() ? "error" : st["passed"].get<bool>() ? "pass" : "FAIL";
    md << "| " << st["index"].get<int>() << " | " << st["module"].get<std::string>() << " | "
       << st["op"].get<std::string>() << " | " << status << " | " << pass << "/" << total << " |\n";
    for (const auto& f : st["files"])
      if (!fs::exists(dir / f.get<std::string>())) rep.missing.push_back(f.get<std::string>());

    detail << "\n## " << st["index"].get<int>() << " " << st["module"].get<std::string>() << " "
           << st["op"].get<std::string>() << "\n\n";
    if (!st["ok"].get<bool>()) detail << "error: " << st["error"].get<std::string>() << "\n\n";
    for (const auto& c : st["checks"]) {
      detail << "- " << (c["pass"].get<bool>() ? "pass" : "FAIL") << ": " << c["name"].get<std::string>();
      if (!c["detail"].get<std::string>().empty()) detail << " (" << c["detail"].get<std::string>() << ")";
      detail << "\n";
    }
    if (!st["values"].empty()) {
      detail << "\n| value | |\n|---|---|\n";
      for (const auto& [k, v] : st["values"].items())
        detail << "| " << k << " | " << (v.is_number_float() ? format_double(v.get<double>()) : v.dump()) << " |\n";
    }

    // Plots from the stage tables.
    const std::string mod = st["module"], op = st["op"];
    char idx[16];
    std::snprintf(idx, sizeof idx, "%02d", st["index"].get<int>());
    const std::string prefix = std::string(idx) + "_" + mod + "_" + op;
    auto file = [&](const std::string& table) { return dir / (prefix + "_" + table + ".csv"); };
    auto emit = [&](const std::string& name, const std::string& svg) {
      write_file(dir / name, svg);
      rep.plots.push_back(name);
      detail << "\n![" << name << "](" << name << ")\n";
    };
    if (mod == "shadowing" && op == "shadow_suite" && fs::exists(file("decay"))) {
      const auto d = load_csv(file("decay"));
      const Series worst{"worst error", d.numbers("delta"), d.numbers("worst_error")};
      Series ref{"1.7 delta", worst.x, {}};
      for (double x : worst.x) ref.y.push_back(1.7 * x);
      const double slope = st["values"].value("slope", 0.0);
      emit(prefix + ".svg", svg_plot("Shadow error against jump size, slope " + fixed(slope), "delta", "sup error",
                                     {worst, ref}, true, true));
    }
    if (mod == "shadowing" && op == "closeness" && fs::exists(file("profiles"))) {
      const auto d = load_csv(file("profiles"));
      std::vector<Series> ser;
      for (auto& [key, sr] : group(d, "L", "s", "distance")) {
        // First pair of each window: s increases until the next pair starts.
        Series first{sr.label, {}, {}};
        for (std::size_t i = 0; i < sr.x.size() && (i == 0 || sr.x[i] > sr.x[i - 1]); ++i)
          first.x.push_back(sr.x[i]), first.y.push_back(sr.y[i]);
        ser.push_back(first);
      }
      const double rate = st["values"].value("min_rate", 0.0);
      emit(prefix + ".svg", svg_plot("Closeness profiles, min rate " + fixed(rate) + ", log lambda " +
                                         fixed(st["values"].value("log_lambda", 0.0)),
                                     "s", "distance", ser, false, true));
    }
    if (mod == "sft" && op == "specification" && fs::exists(file("specifications"))) {
      const auto d = load_csv(file("specifications"));
      std::string title = "Largest jump against horizon";
      if (st["values"].contains("decay_rate")) title += ", rate " + fixed(st["values"]["decay_rate"].get<double>());
      emit(prefix + ".svg", svg_plot(title, "T", "max jump", {{"max jump", d.numbers("T"), d.numbers("max_jump")}},
                                     false, true));
    }
    if (mod == "orbitlab" && op == "palga" && fs::exists(file("palga"))) {
      const auto d = load_csv(file("palga"));
      emit(prefix + ".svg",
           svg_plot("Final orbit against horizon", "T", "value",
                    {{"action", d.numbers("T"), d.numbers("action")},
                     {"distance to Aubry", d.numbers("T"), d.numbers("aubry_distance")},
                     {"log P_T / T", d.numbers("T"), d.numbers("log_PT_over_T")}},
                    false, false));
    }
    if (mod == "weakkam" && op == "field" && fs::exists(file("field"))) {
      const auto d = load_csv(file("field"));
      const auto x2 = d.numbers("x2");
      if (std::all_of(x2.begin(), x2.end(), [](double v) { return v == 0.0; })) {
        std::vector<Series> ser{{"u", d.numbers("x1"), d.numbers("u")}};
        const auto ex = d.numbers("exact");
        if (std::any_of(ex.begin(), ex.end(), [](double v) { return std::isfinite(v); }))
          ser.push_back({"4(1 - cos(x/2))", d.numbers("x1"), ex});
        emit(prefix + ".svg", svg_plot("Lax-Oleinik field", "x", "u", ser, false, false));
      }
    }
    if (mod == "ergopt" && op == "lock_suite") {
      const auto& v = st["values"];
      detail << "\nlocked " << v.value("locked", 0) << " of " << v.value("completed", 0) << " completed runs ("
             << v.value("instances", 0) << " instances); " << v.value("certified_failures", 0)
             << " failures carry competitor certificates, " << v.value("unexplained_failures", 0)
             << " are unexplained.\n";
    }
  }
  if (!crit.empty()) {
    md << "\n## Criteria\n\n";
    for (const auto& [k, pt] : crit) {
      const std::string line = "criterion " + std::to_string(k) + ": " + (pt.first == pt.second ? "PASS" : "FAIL");
      rep.criteria.push_back(line);
      md << "- " << line << " (" << pt.first << "/" << pt.second << " checks)\n";
    }
  }
  if (!rep.missing.empty()) {
    md << "\n## Missing artifacts\n\n";
    for (const auto& m : rep.missing) md << "- " << m << "\n";
  }
  md << detail.str();
  rep.table = md.str();
  write_file(dir / "report.md", rep.table);
  return rep;
}

}  // namespace manelab::cli
