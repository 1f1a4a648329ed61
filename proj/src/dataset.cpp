#include "cels/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cels/kernels.hpp"
#include "cels/rng.hpp"

namespace cels {

namespace {

char resolve_delim(Delimiter d, const std::string& first_line) {
  switch (d) {
    case Delimiter::Tab: return '\t';
    case Delimiter::Comma: return ',';
    case Delimiter::Auto: break;
  }
  return first_line.find('\t') != std::string::npos ? '\t' : ',';
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n") == std::string::npos;
}

double parse_value(const std::string& tok, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw ParseError("line " + std::to_string(line_no) +
                     ": non-numeric token '" + tok + "'");
  if (!std::isfinite(v))
    throw ParseError("line " + std::to_string(line_no) +
                     ": non-finite value '" + tok + "'");
  return v;
}

long long parse_label(const std::string& tok, std::size_t line_no) {
  const double v = parse_value(tok, line_no);
  const double r = std::round(v);
  if (std::abs(v - r) > 1e-9)
    throw ParseError("line " + std::to_string(line_no) +
                     ": label '" + tok + "' is not an integer");
  return static_cast<long long>(r);
}

std::string stem_of(const std::string& path) {
  const auto slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const auto dot = base.find_last_of('.');
  return dot == std::string::npos ? base : base.substr(0, dot);
}

}  // namespace

std::vector<SeriesRow> load_series_rows(const std::string& path,
                                        Delimiter delim) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::vector<SeriesRow> rows;
  std::string line;
  std::size_t line_no = 0;
  char sep = '\0';
  std::size_t expected_len = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (blank(line)) continue;
    if (sep == '\0') sep = resolve_delim(delim, line);

    std::vector<std::string> toks;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(sep, start);
      toks.push_back(line.substr(start, pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (toks.size() < 3)
      throw ParseError("line " + std::to_string(line_no) +
                       ": expected a label and at least 2 values");

    const std::size_t len = toks.size() - 1;
    if (expected_len == 0) {
      expected_len = len;
    } else if (len != expected_len) {
      throw ParseError("line " + std::to_string(line_no) + ": ragged row (" +
                       std::to_string(len) + " values, expected " +
                       std::to_string(expected_len) + ")");
    }

    SeriesRow row;
    row.raw_label = parse_label(toks[0], line_no);
    row.values.reserve(len);
    for (std::size_t i = 1; i < toks.size(); ++i)
      row.values.push_back(parse_value(toks[i], line_no));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("'" + path + "' contains no data");
  return rows;
}

LabeledDataset load_ucr(const std::string& path, Delimiter delim,
                        const std::string& name) {
  const auto rows = load_series_rows(path, delim);

  LabeledDataset ds;
  ds.name = name.empty() ? stem_of(path) : name;

  std::unordered_map<long long, int> remap;
  for (const auto& row : rows) {
    auto [it, inserted] =
        remap.emplace(row.raw_label, static_cast<int>(ds.label_map.size()));
    if (inserted) ds.label_map.push_back(row.raw_label);
    TimeSeries ts;
    ts.label = it->second;
    ts.values = row.values;
    ds.series.push_back(std::move(ts));
  }

  if (ds.label_map.size() < 2)
    throw ParseError("'" + path + "' contains a single class; need >= 2");

  ds.length = static_cast<int>(rows[0].values.size());
  ds.num_classes = static_cast<int>(ds.label_map.size());
  return ds;
}

void save_ucr(const LabeledDataset& ds, const std::string& path,
              Delimiter delim) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const char sep = delim == Delimiter::Comma ? ',' : '\t';

  char buf[64];
  for (const auto& ts : ds.series) {
    long long raw = 0;
    if (ts.label) {
      const int id = *ts.label;
      raw = id >= 0 && id < static_cast<int>(ds.label_map.size())
                ? ds.label_map[id]
                : id;
    }
    out << raw;
    for (const double v : ts.values) {
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      out << sep << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<double> z_normalize(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<double> out(n, 0.0);
  if (n == 0) return out;

  const double mean = kern::ops().sum(values.data(), n) / static_cast<double>(n);
  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = values[i] - mean;
  const double var = kern::ops().sumsq(dev.data(), n) / static_cast<double>(n);
  const double sigma = std::sqrt(var);
  if (sigma <= 1e-12 * std::max(1.0, std::abs(mean))) return out;  // constant

  for (std::size_t i = 0; i < n; ++i) out[i] = dev[i] / sigma;
  return out;
}

LabeledDataset z_normalize(const LabeledDataset& ds) {
  LabeledDataset out = ds;
  for (auto& ts : out.series) ts.values = z_normalize(ts.values);
  return out;
}

std::vector<std::size_t> subsample_indices(std::size_t population, std::size_t n,
                                           std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("subsample: n must be >= 1");
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n >= population) return idx;

  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(population - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

LabeledDataset subsample(const LabeledDataset& ds, std::size_t n,
                         std::uint64_t seed) {
  const auto idx = subsample_indices(ds.size(), n, seed);
  if (idx.size() == ds.size()) return ds;

  LabeledDataset out;
  out.num_classes = ds.num_classes;
  out.length = ds.length;
  out.name = ds.name;
  out.label_map = ds.label_map;
  out.series.reserve(idx.size());
  for (const std::size_t i : idx) out.series.push_back(ds.series[i]);
  return out;
}

LabeledDataset relabel(const LabeledDataset& ds,
                       const std::vector<long long>& label_map) {
  std::unordered_map<long long, int> lookup;
  for (std::size_t i = 0; i < label_map.size(); ++i)
    lookup.emplace(label_map[i], static_cast<int>(i));

  LabeledDataset out = ds;
  out.label_map = label_map;
  out.num_classes = static_cast<int>(label_map.size());
  for (auto& ts : out.series) {
    if (!ts.label) continue;
    const long long raw = ds.label_map[*ts.label];
    const auto it = lookup.find(raw);
    if (it == lookup.end())
      throw std::runtime_error("relabel: label " + std::to_string(raw) +
                               " not present in the reference label map");
    ts.label = it->second;
  }
  return out;
}

}  // namespace cels
