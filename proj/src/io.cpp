#include "ivqr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ivqr::io {

namespace {

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::invalid_argument, "cannot open " + path.string());
  return in;
}

std::string percent(double rate) {
  if (std::isnan(rate)) return "";
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(1);
  s << 100.0 * rate;
  return s.str();
}

Json warnings_json(const Warnings& w) { return Json(w); }

}  // namespace

std::string_view to_string(Format format) { return format == Format::json ? "json" : "csv"; }

Format parse_format(std::string_view text) {
  if (text == "json") return Format::json;
  if (text == "csv") return Format::csv;
  throw Error(ErrorCode::invalid_argument, "unknown format '" + std::string(text) + "'");
}

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error(ErrorCode::invalid_argument, "cannot format number");
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::size_t line) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0.0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty())
    throw Error(ErrorCode::parse_error, at_line(line) + "not a number: '" + std::string(text) + "'");
  if (!std::isfinite(value)) throw Error(ErrorCode::non_finite, at_line(line) + "non-finite value");
  return value;
}

ClusteredDataset read_csv(std::istream& in, const CsvOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") != std::string::npos) break;
  }
  if (line_no == 0 || line.find_first_not_of(" \t\r") == std::string::npos)
    throw Error(ErrorCode::parse_error, "empty file");
  const auto header = split(line);
  std::map<std::string, std::size_t, std::less<>> col;
  for (std::size_t k = 0; k < header.size(); ++k) col.emplace(std::string(header[k]), k);
  auto need = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw Error(ErrorCode::missing_column, "missing column '" + name + "'");
    return it->second;
  };
  const std::size_t c_cluster = need("cluster"), c_y = need("y"), c_x = need("x");
  std::vector<std::size_t> c_w, c_z;
  for (int k = 1; col.count("w_" + std::to_string(k)); ++k) c_w.push_back(col.at("w_" + std::to_string(k)));
  for (int k = 1; col.count("z_" + std::to_string(k)); ++k) c_z.push_back(col.at("z_" + std::to_string(k)));
  if (c_z.empty()) need("z_1");
  if (!options.intercept && c_w.empty()) need("w_1");
  const auto v_it = col.find("v");
  const bool has_v = v_it != col.end();

  std::vector<std::string> labels;
  std::map<std::string, int, std::less<>> label_index;
  std::vector<int> cluster;
  std::vector<double> y, x, v, w, z;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split(line);
    if (f.size() != header.size())
      throw Error(ErrorCode::parse_error, at_line(line_no) + "expected " + std::to_string(header.size()) +
                                              " fields, found " + std::to_string(f.size()));
    const std::string_view label = f[c_cluster];
    if (label.empty()) throw Error(ErrorCode::parse_error, at_line(line_no) + "empty cluster label");
    auto it = label_index.find(label);
    if (it == label_index.end()) it = label_index.emplace(std::string(label), static_cast<int>(label_index.size())).first;
    cluster.push_back(it->second);
    y.push_back(parse_double(f[c_y], line_no));
    x.push_back(parse_double(f[c_x], line_no));
    for (std::size_t c : c_w) w.push_back(parse_double(f[c], line_no));
    for (std::size_t c : c_z) z.push_back(parse_double(f[c], line_no));
    if (has_v) v.push_back(parse_double(f[v_it->second], line_no));
  }
  const auto n = static_cast<Index>(y.size());
  if (n == 0) throw Error(ErrorCode::parse_error, "no data rows");
  const auto dw = static_cast<Index>(c_w.size()), dz = static_cast<Index>(c_z.size());
  const Index offset = options.intercept ? 1 : 0;
  ClusteredDataset d;
  d.y = Eigen::Map<Vector>(y.data(), n);
  d.x = Eigen::Map<Vector>(x.data(), n);
  d.w.resize(n, dw + offset);
  if (options.intercept) d.w.col(0).setOnes();
  d.z.resize(n, dz);
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < dw; ++k) d.w(i, k + offset) = w[static_cast<std::size_t>(i * dw + k)];
    for (Index k = 0; k < dz; ++k) d.z(i, k) = z[static_cast<std::size_t>(i * dz + k)];
  }
  d.cluster = std::move(cluster);
  if (has_v) d.v = Eigen::Map<Vector>(v.data(), n);
  d.validate();
  return d;
}

ClusteredDataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  auto in = open_in(path);
  return read_csv(in, options);
}

void write_csv(std::ostream& out, const ClusteredDataset& data, const CsvOptions& options) {
  const Index offset = options.intercept ? 1 : 0;
  if (options.intercept && (data.w.cols() == 0 || !data.w.col(0).isOnes()))
    throw Error(ErrorCode::invalid_argument, "first control is not an intercept");
  out << "cluster,y,x";
  for (Index k = offset; k < data.w.cols(); ++k) out << ",w_" << k - offset + 1;
  for (Index k = 0; k < data.z.cols(); ++k) out << ",z_" << k + 1;
  const bool has_v = data.v.size() != 0;
  if (has_v) out << ",v";
  out << '\n';
  for (Index i = 0; i < data.n(); ++i) {
    out << data.cluster[static_cast<std::size_t>(i)] << ',' << format_double(data.y(i)) << ','
        << format_double(data.x(i));
    for (Index k = offset; k < data.w.cols(); ++k) out << ',' << format_double(data.w(i, k));
    for (Index k = 0; k < data.z.cols(); ++k) out << ',' << format_double(data.z(i, k));
    if (has_v) out << ',' << format_double(data.v(i));
    out << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const ClusteredDataset& data, const CsvOptions& options) {
  std::ostringstream s;
  write_csv(s, data, options);
  write_file(path, s.str());
}

network::Network read_edges(std::istream& in, Index nodes) {
  network::Network net;
  std::string line;
  std::size_t line_no = 0;
  Index max_id = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split(line);
    if (f.size() < 2) throw Error(ErrorCode::parse_error, at_line(line_no) + "expected two node ids");
    Index ids[2];
    bool ok = true;
    for (int k = 0; k < 2; ++k) {
      auto [end, ec] = std::from_chars(f[k].data(), f[k].data() + f[k].size(), ids[k]);
      ok = ok && ec == std::errc() && end == f[k].data() + f[k].size() && !f[k].empty() && ids[k] >= 0;
    }
    if (!ok) {
      if (line_no == 1) continue;  // header
      throw Error(ErrorCode::parse_error, at_line(line_no) + "bad node id");
    }
    net.edges.emplace_back(ids[0], ids[1]);
    max_id = std::max({max_id, ids[0], ids[1]});
  }
  net.n = std::max(nodes, max_id + 1);
  net.validate();
  return net;
}

network::Network load_edges(const std::filesystem::path& path, Index nodes) {
  auto in = open_in(path);
  return read_edges(in, nodes);
}

void write_labels(std::ostream& out, const network::Partition& partition) {
  out << "node,label\n";
  for (std::size_t i = 0; i < partition.labels.size(); ++i) out << i << ',' << partition.labels[i] << '\n';
}

Json to_json(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  return value;
}

double double_from_json(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
  }
  throw Error(ErrorCode::parse_error, "expected a number");
}

Json to_json(const bootstrap::TestResult& r) {
  Json j;
  j["method"] = bootstrap::to_string(r.method);
  j["taus"] = r.taus;
  Json b0 = Json::array();
  for (double b : r.beta0) b0.push_back(to_json(b));
  j["beta0"] = b0;
  j["statistic"] = to_json(r.statistic);
  j["critical_value"] = to_json(r.critical_value);
  j["p_value"] = to_json(r.p_value);
  j["alpha"] = r.alpha;
  j["reject"] = r.reject;
  j["n_sign_vectors"] = r.n_sign_vectors;
  j["mode"] = bootstrap::to_string(r.mode);
  j["excluded_draws"] = r.excluded_draws;
  j["boundary_hits"] = r.boundary_hits;
  j["warnings"] = warnings_json(r.warnings);
  return j;
}

bootstrap::TestResult test_result_from_json(const Json& j) {
  try {
    bootstrap::TestResult r;
    r.method = bootstrap::parse_method(j.at("method").get<std::string>());
    r.taus = j.at("taus").get<std::vector<double>>();
    for (const auto& b : j.at("beta0")) r.beta0.push_back(double_from_json(b));
    r.statistic = double_from_json(j.at("statistic"));
    r.critical_value = double_from_json(j.at("critical_value"));
    r.p_value = double_from_json(j.at("p_value"));
    r.alpha = j.at("alpha").get<double>();
    r.reject = j.at("reject").get<bool>();
    r.n_sign_vectors = j.at("n_sign_vectors").get<std::size_t>();
    r.mode = bootstrap::parse_mode(j.at("mode").get<std::string>());
    r.excluded_draws = j.at("excluded_draws").get<std::size_t>();
    r.boundary_hits = j.at("boundary_hits").get<std::size_t>();
    r.warnings = j.at("warnings").get<Warnings>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::parse_error, e.what());
  }
}

Json to_json(const bootstrap::ConfidenceSet& set) {
  Json j;
  j["method"] = bootstrap::to_string(set.method);
  j["tau"] = set.tau;
  j["alpha"] = set.alpha;
  j["step"] = set.step;
  j["length"] = set.length();
  Json iv = Json::array();
  for (const auto& [lo, hi] : set.intervals) iv.push_back({lo, hi});
  j["intervals"] = iv;
  Json acc = Json::array();
  for (std::size_t k = 0; k < set.grid.size(); ++k) acc.push_back({{"beta0", set.grid[k]}, {"accepted", set.accepted[k] != 0}});
  j["grid"] = acc;
  return j;
}

Json to_json(const estimation::TauFit& fit) {
  Json j;
  j["tau"] = fit.tau;
  j["beta"] = fit.beta;
  j["gamma"] = std::vector<double>(fit.gamma.data(), fit.gamma.data() + fit.gamma.size());
  j["theta"] = std::vector<double>(fit.theta.data(), fit.theta.data() + fit.theta.size());
  j["a1"] = fit.a1;
  j["boundary"] = fit.boundary;
  j["warnings"] = warnings_json(fit.warnings);
  return j;
}

Json to_json(const sim::McTable& table) {
  Json cells = Json::array();
  for (const auto& c : table.cells) {
    Json j;
    j["hypothesis"] = sim::to_string(c.hypothesis);
    j["method"] = bootstrap::to_string(c.method);
    j["tau"] = c.tau;
    j["rejections"] = c.rejections;
    j["successes"] = c.successes;
    j["failures"] = c.failures;
    j["rate"] = to_json(c.rate());
    Json reasons = Json::object();
    for (const auto& [k, v] : c.failure_reasons) reasons[k] = v;
    j["failure_reasons"] = reasons;
    cells.push_back(j);
  }
  return cells;
}

Json document(std::string_view command, const Json& config, Json results) {
  Json doc;
  doc["schema"] = schema_tag;
  doc["command"] = command;
  doc["config"] = config;
  doc["results"] = std::move(results);
  return doc;
}

std::string emit_results(const std::vector<bootstrap::TestResult>& results, Format format, const Json& config) {
  if (format == Format::json) {
    Json arr = Json::array();
    for (const auto& r : results) arr.push_back(to_json(r));
    return document("test", config, arr).dump(2) + "\n";
  }
  std::ostringstream s;
  s << "# schema=" << schema_tag << "\n";
  s << "method,taus,beta0,statistic,critical_value,p_value,alpha,reject,n_sign_vectors,mode,excluded_draws\n";
  auto join = [](const std::vector<double>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ";" : "") + format_double(v[k]);
    return out;
  };
  for (const auto& r : results)
    s << bootstrap::to_string(r.method) << ',' << join(r.taus) << ',' << join(r.beta0) << ','
      << format_double(r.statistic) << ',' << format_double(r.critical_value) << ',' << format_double(r.p_value)
      << ',' << format_double(r.alpha) << ',' << (r.reject ? 1 : 0) << ',' << r.n_sign_vectors << ','
      << bootstrap::to_string(r.mode) << ',' << r.excluded_draws << '\n';
  return s.str();
}

std::string emit_confidence_sets(const std::vector<bootstrap::ConfidenceSet>& sets, Format format,
                                 const Json& config) {
  if (format == Format::json) {
    Json arr = Json::array();
    for (const auto& c : sets) arr.push_back(to_json(c));
    return document("ci", config, arr).dump(2) + "\n";
  }
  std::ostringstream s;
  s << "# schema=" << schema_tag << "\n";
  s << "method,tau,beta0,accepted\n";
  for (const auto& c : sets)
    for (std::size_t k = 0; k < c.grid.size(); ++k)
      s << bootstrap::to_string(c.method) << ',' << format_double(c.tau) << ',' << format_double(c.grid[k]) << ','
        << (c.accepted[k] ? 1 : 0) << '\n';
  return s.str();
}

std::string emit_fit(const estimation::IvqrFit& fit, Format format, const Json& config) {
  if (format == Format::json) {
    Json arr = Json::array();
    for (const auto& t : fit.taus) arr.push_back(to_json(t));
    return document("fit", config, arr).dump(2) + "\n";
  }
  std::ostringstream s;
  s << "# schema=" << schema_tag << "\n";
  const Index dw = fit.taus.empty() ? 0 : fit.taus.front().gamma.size();
  s << "tau,beta";
  for (Index k = 0; k < dw; ++k) s << ",gamma_" << k;
  s << ",theta,boundary\n";
  for (const auto& t : fit.taus) {
    s << format_double(t.tau) << ',' << format_double(t.beta);
    for (Index k = 0; k < t.gamma.size(); ++k) s << ',' << format_double(t.gamma(k));
    s << ',' << format_double(t.theta(0)) << ',' << (t.boundary ? 1 : 0) << '\n';
  }
  return s.str();
}

std::string emit_table(const sim::McTable& table, Format format, const Json& config) {
  std::vector<sim::Hypothesis> panels;
  std::vector<bootstrap::Method> methods;
  std::vector<double> taus;
  for (const auto& c : table.cells) {
    if (std::find(panels.begin(), panels.end(), c.hypothesis) == panels.end()) panels.push_back(c.hypothesis);
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
    if (std::find(taus.begin(), taus.end(), c.tau) == taus.end()) taus.push_back(c.tau);
  }
  if (format == Format::json) {
    Json layout = Json::object();
    for (auto h : panels) {
      Json panel = Json::object();
      for (auto m : methods) {
        Json row = Json::array();
        for (double t : taus) row.push_back(to_json(100.0 * table.at(m, t, h).rate()));
        panel[std::string(bootstrap::to_string(m))] = row;
      }
      layout[std::string(sim::to_string(h))] = panel;
    }
    Json results;
    results["taus"] = taus;
    results["panels"] = layout;
    results["cells"] = to_json(table);
    return document("simulate", config, results).dump(2) + "\n";
  }
  std::ostringstream s;
  s << "# schema=" << schema_tag << "\n";
  s << "panel,method";
  for (double t : taus) s << ",tau=" << format_double(t);
  s << '\n';
  for (auto h : panels)
    for (auto m : methods) {
      s << sim::to_string(h) << ',' << bootstrap::to_string(m);
      for (double t : taus) s << ',' << percent(table.at(m, t, h).rate());
      s << '\n';
    }
  return s.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
  out << contents;
  if (!out) throw Error(ErrorCode::invalid_argument, "write failed for " + path.string());
}

}  // namespace ivqr::io
