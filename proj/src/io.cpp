#include "nit/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace nit {

namespace {

std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_number(const std::string& text, double& value) {
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto res = std::from_chars(begin, end, value);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(value);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

Dataset parse_dataset(std::istream& in, const DatasetSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset: empty input, expected a header row");
  std::vector<std::string> header = split_record(line);
  for (auto& h : header) h = trim(h);

  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw InvalidInput("dataset: unknown column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t ycol = column_of(schema.y_column);
  std::vector<std::string> aux = schema.aux_columns;
  if (aux.empty())
    for (const auto& h : header)
      if (h != schema.y_column) aux.push_back(h);
  for (const auto& c : schema.categorical_columns) {
    if (c == schema.y_column) throw InvalidInput("dataset: the primary column cannot be categorical");
    if (std::find(aux.begin(), aux.end(), c) == aux.end())
      throw InvalidInput("dataset: categorical column '" + c + "' is not among the auxiliary columns");
  }

  std::vector<std::size_t> aux_idx;
  std::vector<ColumnKind> kinds;
  for (const auto& a : aux) {
    if (a == schema.y_column) throw InvalidInput("dataset: column '" + a + "' is both primary and auxiliary");
    aux_idx.push_back(column_of(a));
    const bool cat = std::find(schema.categorical_columns.begin(), schema.categorical_columns.end(), a) !=
                     schema.categorical_columns.end();
    kinds.push_back(cat ? ColumnKind::categorical : ColumnKind::continuous);
  }

  const std::size_t k = aux.size();
  std::vector<double> y;
  std::vector<std::vector<double>> s(k);
  std::vector<std::map<std::string, double>> dictionaries(k);
  std::vector<std::vector<std::string>> labels(k);
  std::vector<std::size_t> missing_rows;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_record(line);
    if (cells.size() != header.size())
      throw InvalidInput("dataset: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                         " fields, header has " + std::to_string(header.size()));
    for (auto& c : cells) c = trim(c);

    bool missing = cells[ycol].empty();
    for (std::size_t a : aux_idx) missing = missing || cells[a].empty();
    if (missing) {
      missing_rows.push_back(line_no);
      continue;
    }

    double v;
    if (!parse_number(cells[ycol], v))
      throw InvalidInput("dataset: line " + std::to_string(line_no) + ", column '" + schema.y_column +
                         "': non-numeric value '" + cells[ycol] + "'");
    y.push_back(v);
    for (std::size_t j = 0; j < k; ++j) {
      const std::string& cell = cells[aux_idx[j]];
      if (kinds[j] == ColumnKind::categorical) {
        auto [it, inserted] = dictionaries[j].try_emplace(cell, static_cast<double>(labels[j].size()));
        if (inserted) labels[j].push_back(cell);
        s[j].push_back(it->second);
      } else {
        if (!parse_number(cell, v))
          throw InvalidInput("dataset: line " + std::to_string(line_no) + ", continuous column '" + aux[j] +
                             "': non-numeric value '" + cell + "'");
        s[j].push_back(v);
      }
    }
  }

  if (!missing_rows.empty()) {
    std::string rows;
    for (std::size_t i = 0; i < missing_rows.size() && i < 20; ++i)
      rows += (i ? ", " : "") + std::to_string(missing_rows[i]);
    if (missing_rows.size() > 20) rows += ", ...";
    throw InvalidInput("dataset: missing values on line(s) " + rows);
  }
  if (y.size() < 2) throw InvalidInput("dataset: need at least 2 usable rows");

  Dataset d;
  const auto n = static_cast<Index>(y.size());
  d.y = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  d.s.resize(n, static_cast<Index>(k));
  for (std::size_t j = 0; j < k; ++j) d.s.col(static_cast<Index>(j)) = Eigen::Map<Eigen::VectorXd>(s[j].data(), n);
  d.aux_kinds = kinds;
  d.sigma = schema.sigma;
  d.aux_names = aux;
  d.aux_labels = labels;
  d.validate();
  return d;
}

Dataset read_dataset(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("dataset: cannot open '" + path + "'");
  return parse_dataset(in, schema);
}

void write_estimates(const EstimateResult& result, const Dataset& data, const std::string& path,
                     const EstimateMeta& meta) {
  if (result.delta.size() != data.size()) throw InvalidInput("write_estimates: result does not match data");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_estimates: cannot write '" + path + "'");
  out << "index,y,delta,score_h\n";
  for (Index i = 0; i < data.size(); ++i) {
    const double h = result.score.h.size() == data.size() ? result.score.h(i) : std::nan("");
    out << i << ',' << format_double(data.y(i)) << ',' << format_double(result.delta(i)) << ','
        << format_double(h) << '\n';
  }
  if (!out) throw Error("write_estimates: write to '" + path + "' failed");

  nlohmann::ordered_json j;
  j["lambda_hat"] = result.lambda_hat;
  j["alpha"] = meta.alpha;
  j["seed"] = meta.seed;
  j["replicates"] = meta.replicates;
  j["sigma"] = data.sigma;
  j["n"] = data.size();
  j["cov_ridge"] = meta.cov_ridge;
  j["ridge"] = meta.ridge;
  j["constraints"] = {{"zero_sum", meta.constraints.zero_sum},
                      {"box", meta.constraints.box_bounds ? "explicit"
                              : meta.constraints.box == BoxMode::automatic ? "auto"
                                                                          : "off"},
                      {"monotone", meta.constraints.monotone}};
  j["grid"] = result.grid;
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (double lambda : result.grid) {
    nlohmann::ordered_json point{{"lambda", lambda}, {"loss", nullptr}};
    for (const auto& p : result.loss_curve)
      if (p.lambda == lambda) point["loss"] = p.loss;
    for (const auto& f : result.failed)
      if (f.lambda == lambda) point["failure"] = f.reason;
    curve.push_back(std::move(point));
  }
  j["loss_curve"] = std::move(curve);
  j["solver"] = {{"objective", result.score.objective},
                 {"kkt_residual", result.score.kkt_residual},
                 {"iterations", result.score.iterations}};
  j["diagnostics"] = result.diagnostics;

  std::ofstream side(path + ".meta.json", std::ios::binary);
  if (!side) throw Error("write_estimates: cannot write '" + path + ".meta.json'");
  side << j.dump(2) << '\n';
  if (!side) throw Error("write_estimates: write to '" + path + ".meta.json' failed");
}

void write_study(const StudyResult& result, std::ostream& out) {
  out << "family,n,params,method,mse,std_error,reps,failed,first_failure\n";
  for (const auto& c : result.cells) {
    std::string reason;
    for (const auto& f : c.failures)
      if (!f.empty()) {
        reason = f;
        break;
      }
    out << c.family << ',' << c.n << ',' << csv_field(c.params) << ',' << c.method << ',' << format_double(c.mse())
        << ',' << format_double(c.std_error()) << ',' << c.completed() << ',' << (c.losses.size() - c.completed())
        << ',' << csv_field(reason) << '\n';
  }
}

void write_study(const StudyResult& result, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("write_study: cannot write '" + path + "'");
  write_study(result, out);
  if (!out) throw Error("write_study: write to '" + path + "' failed");
}

}  // namespace nit
