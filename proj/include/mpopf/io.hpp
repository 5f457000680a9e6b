#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpopf/engine.hpp"
#include "mpopf/network.hpp"
#include "mpopf/verification.hpp"

namespace mpopf {

using json = nlohmann::json;

class FeederParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw FeederParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw FeederParseError(where + ": missing field \"" + key + "\"");
  return *it;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) throw FeederParseError(where + ": expected a number");
  return j.get<double>();
}

inline double bound(const json& j, double if_null, const std::string& where) {
  if (j.is_null()) return if_null;
  return number(j, where);
}

inline int integer(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw FeederParseError(where + ": expected an integer");
  return j.get<int>();
}

inline const json& array(const json& j, const std::string& where) {
  if (!j.is_array()) throw FeederParseError(where + ": expected an array");
  return j;
}

inline json bound_to_json(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline json complex_to_json(complex c) { return {{"re", c.real()}, {"im", c.imag()}}; }

inline complex complex_from_json(const json& j, const std::string& where) {
  return {number(require(j, "re", where), where + ".re"), number(require(j, "im", where), where + ".im")};
}

inline json matrix_to_json(const CMatrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(complex_to_json(m(r, c)));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline CMatrix matrix_from_json(const json& j, const std::string& where) {
  array(j, where);
  const auto rows = static_cast<int>(j.size());
  if (rows > 6) throw FeederParseError(where + ": matrices are limited to 6x6");
  CMatrix m(rows, rows);
  for (int r = 0; r < rows; ++r) {
    const std::string rw = where + "[" + std::to_string(r) + "]";
    const json& row = array(j[r], rw);
    if (static_cast<int>(row.size()) != rows)
      throw FeederParseError(rw + ": matrix is not square (" + std::to_string(row.size()) + " columns, " +
                             std::to_string(rows) + " rows)");
    for (int c = 0; c < rows; ++c) m(r, c) = complex_from_json(row[c], rw + "[" + std::to_string(c) + "]");
  }
  return m;
}

inline std::vector<double> numbers(const json& j, const std::string& where) {
  array(j, where);
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], where + "[" + std::to_string(k) + "]"));
  return out;
}

inline InjectionRegion region_from_json(const json& j, const std::string& where) {
  const json& type = require(j, "type", where);
  if (type == "box") {
    const json& p = array(require(j, "p", where), where + ".p");
    const json& q = array(require(j, "q", where), where + ".q");
    if (p.size() != 2 || q.size() != 2) throw FeederParseError(where + ": box bounds must be [lo, hi] pairs");
    return BoxRegion{bound(p[0], -kInf, where + ".p[0]"), bound(p[1], kInf, where + ".p[1]"),
                     bound(q[0], -kInf, where + ".q[0]"), bound(q[1], kInf, where + ".q[1]")};
  }
  if (type == "disk") return DiskRegion{number(require(j, "smax", where), where + ".smax")};
  throw FeederParseError(where + ".type: expected \"box\" or \"disk\"");
}

inline json region_to_json(const InjectionRegion& r) {
  if (const auto* box = std::get_if<BoxRegion>(&r))
    return {{"type", "box"},
            {"p", {bound_to_json(box->p_lo), bound_to_json(box->p_hi)}},
            {"q", {bound_to_json(box->q_lo), bound_to_json(box->q_hi)}}};
  return {{"type", "disk"}, {"smax", std::get<DiskRegion>(r).s_max}};
}

inline std::string with_line_context(const std::string& text, std::size_t byte, const std::string& msg) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < std::min(byte, text.size()); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg;
}

inline json parse_json_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FeederParseError(with_line_context(text, e.byte, e.what()));
  }
}

}  // namespace detail

inline FeederSpec feeder_spec_from_json(const json& doc) {
  FeederSpec spec;
  const json& buses = detail::array(detail::require(doc, "buses", "document"), "buses");
  for (std::size_t k = 0; k < buses.size(); ++k) {
    const std::string where = "buses[" + std::to_string(k) + "]";
    const json& b = buses[k];
    BusSpec bus;
    bus.id = detail::integer(detail::require(b, "id", where), where + ".id");
    const json& ph = detail::require(b, "phases", where);
    if (!ph.is_string()) throw FeederParseError(where + ".phases: expected a string such as \"abc\"");
    try {
      bus.phases = PhaseSet::parse(ph.get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw FeederParseError(where + ".phases: " + e.what());
    }
    bus.v_lo = detail::numbers(detail::require(b, "vmin", where), where + ".vmin");
    bus.v_hi = detail::numbers(detail::require(b, "vmax", where), where + ".vmax");
    const json& regions = detail::array(detail::require(b, "region", where), where + ".region");
    for (std::size_t r = 0; r < regions.size(); ++r)
      bus.region.push_back(detail::region_from_json(regions[r], where + ".region[" + std::to_string(r) + "]"));
    const json& costs = detail::array(detail::require(b, "cost", where), where + ".cost");
    for (std::size_t r = 0; r < costs.size(); ++r) {
      const std::string cw = where + ".cost[" + std::to_string(r) + "]";
      bus.cost.push_back({detail::number(detail::require(costs[r], "alpha", cw), cw + ".alpha"),
                          detail::number(detail::require(costs[r], "beta", cw), cw + ".beta")});
    }
    spec.buses.push_back(std::move(bus));
  }
  const json& lines = detail::array(detail::require(doc, "lines", "document"), "lines");
  for (std::size_t k = 0; k < lines.size(); ++k) {
    const std::string where = "lines[" + std::to_string(k) + "]";
    LineSpec line;
    line.bus = detail::integer(detail::require(lines[k], "bus", where), where + ".bus");
    line.parent = detail::integer(detail::require(lines[k], "parent", where), where + ".parent");
    line.z = detail::matrix_from_json(detail::require(lines[k], "z", where), where + ".z");
    spec.lines.push_back(std::move(line));
  }
  return spec;
}

inline json feeder_to_json(const FeederSpec& spec) {
  json buses = json::array();
  for (const auto& b : spec.buses) {
    json regions = json::array(), costs = json::array();
    for (const auto& r : b.region) regions.push_back(detail::region_to_json(r));
    for (const auto& c : b.cost) costs.push_back({{"alpha", c.alpha}, {"beta", c.beta}});
    buses.push_back({{"id", b.id},
                     {"phases", b.phases.to_string()},
                     {"vmin", b.v_lo},
                     {"vmax", b.v_hi},
                     {"region", regions},
                     {"cost", costs}});
  }
  json lines = json::array();
  for (const auto& l : spec.lines)
    lines.push_back({{"bus", l.bus}, {"parent", l.parent}, {"z", detail::matrix_to_json(l.z)}});
  return {{"buses", buses}, {"lines", lines}};
}

/// Parses and validates a feeder-json document. Throws FeederParseError for
/// malformed input and ValidationError for structural violations.
inline FeederModel load_feeder(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return FeederModel(feeder_spec_from_json(detail::parse_json_text(text)));
}

inline FeederModel load_feeder_string(const std::string& text) {
  std::istringstream in(text);
  return load_feeder(in);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return text;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("error writing '" + path + "'");
}

/// Parse errors are prefixed with the path.
inline FeederModel load_feeder_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return FeederModel(feeder_spec_from_json(detail::parse_json_text(text)));
  } catch (const FeederParseError& e) {
    throw FeederParseError(path + ": " + e.what());
  }
}

inline void save_feeder(std::ostream& out, const FeederSpec& spec) { out << feeder_to_json(spec).dump(2) << '\n'; }

/// 64-bit FNV-1a of the canonical feeder document.
inline std::string model_hash(const FeederModel& model) {
  const std::string text = feeder_to_json(model.spec()).dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

// ---------------------------------------------------------------------------
// Solution documents

struct SolutionInfo {
  std::string status;
  int iterations = 0;
  double objective = 0.0;
};

/// The feeder document with v, s, S and l added to every bus, plus run
/// metadata at the top level. The result is itself a loadable feeder.
inline json solution_to_json(const std::vector<XBlock>& solution, const FeederModel& model, const SolutionInfo& info) {
  json doc = feeder_to_json(model.spec());
  for (auto& b : doc["buses"]) {
    const XBlock& x = solution[model.index_of(b["id"].get<int>())];
    b["v"] = detail::matrix_to_json(x.v.dense());
    json s = json::array();
    for (int k = 0; k < x.s.size(); ++k) s.push_back(detail::complex_to_json(x.s(k)));
    b["s"] = s;
    if (x.has_line()) {
      b["S"] = detail::matrix_to_json(x.S);
      b["l"] = detail::matrix_to_json(x.ell.dense());
    }
  }
  doc["status"] = info.status;
  doc["iterations"] = info.iterations;
  doc["objective"] = info.objective;
  return doc;
}

/// Reads a solution document back into per-bus blocks ordered like `model`.
/// Throws DimensionError when the document does not fit the network.
inline std::vector<XBlock> solution_from_json(const json& doc, const FeederModel& model) {
  const json& buses = detail::array(detail::require(doc, "buses", "solution"), "solution.buses");
  if (static_cast<int>(buses.size()) != model.size())
    throw DimensionError("solution has " + std::to_string(buses.size()) + " buses, network has " +
                         std::to_string(model.size()));
  std::vector<XBlock> out(model.size());
  std::vector<bool> seen(model.size(), false);
  for (std::size_t k = 0; k < buses.size(); ++k) {
    const std::string where = "solution.buses[" + std::to_string(k) + "]";
    const json& b = buses[k];
    const int id = detail::integer(detail::require(b, "id", where), where + ".id");
    int i = -1;
    try {
      i = model.index_of(id);
    } catch (const std::out_of_range&) {
      throw DimensionError(where + ": bus " + std::to_string(id) + " is not in the network");
    }
    if (seen[i]) throw DimensionError(where + ": bus " + std::to_string(id) + " appears twice");
    seen[i] = true;
    const int n = model.phases(i).size();
    const std::string bw = "bus " + std::to_string(id);
    XBlock x;
    const CMatrix v = detail::matrix_from_json(detail::require(b, "v", where), where + ".v");
    if (v.rows() != n) throw DimensionError(bw + ": v is " + std::to_string(v.rows()) + "x" + std::to_string(v.rows()) +
                                            ", expected " + std::to_string(n));
    x.v = HermitianMatrix::from_dense(v);
    const json& s = detail::array(detail::require(b, "s", where), where + ".s");
    if (static_cast<int>(s.size()) != n) throw DimensionError(bw + ": s has wrong length");
    x.s.resize(n);
    for (int p = 0; p < n; ++p) x.s(p) = detail::complex_from_json(s[p], where + ".s[" + std::to_string(p) + "]");
    if (model.parent(i) >= 0) {
      x.S = detail::matrix_from_json(detail::require(b, "S", where), where + ".S");
      const CMatrix l = detail::matrix_from_json(detail::require(b, "l", where), where + ".l");
      if (x.S.rows() != n || l.rows() != n) throw DimensionError(bw + ": S/l dimension mismatch");
      x.ell = HermitianMatrix::from_dense(l);
    } else {
      x.S.resize(0, 0);
    }
    out[i] = std::move(x);
  }
  return out;
}

inline void write_history_csv(std::ostream& out, const std::vector<IterationStats>& history) {
  out << "k,r,s,objective\n";
  out.precision(17);
  for (const auto& h : history) out << h.k << ',' << h.r << ',' << h.s << ',' << h.objective << '\n';
}

inline json bfm_report_to_json(const BfmReport& rep) {
  json buses = json::array();
  for (const auto& b : rep.buses)
    buses.push_back(
        {{"id", b.bus_id}, {"voltage_drop", b.voltage_drop}, {"power_balance", b.power_balance}, {"pass", b.pass}});
  return {{"pass", rep.pass}, {"tolerance", rep.tolerance}, {"max_residual", rep.max_residual}, {"buses", buses}};
}

inline json exactness_to_json(const ExactnessReport& rep) {
  json lines = json::array();
  for (const auto& l : rep.lines) lines.push_back({{"bus", l.bus_id}, {"ratio", l.ratio}});
  return {{"exact", rep.exact}, {"threshold", rep.threshold}, {"max_ratio", rep.max_ratio}, {"lines", lines}};
}

inline void write_bfm_report(std::ostream& out, const BfmReport& rep) {
  out << "BFM feasibility: " << (rep.pass ? "PASS" : "FAIL") << " (max residual " << rep.max_residual << ", tol "
      << rep.tolerance << ")\n";
  for (const auto& b : rep.buses)
    if (!b.pass)
      out << "  bus " << b.bus_id << ": voltage-drop " << b.voltage_drop << ", power-balance " << b.power_balance
          << "\n";
}

inline void write_exactness_report(std::ostream& out, const ExactnessReport& rep) {
  out << "Exactness: " << (rep.exact ? "rank-1" : "NOT rank-1") << " (max sigma2/sigma1 " << rep.max_ratio
      << ", threshold " << rep.threshold << ")\n";
  for (const auto& l : rep.lines)
    if (l.ratio > rep.threshold) out << "  line into bus " << l.bus_id << ": ratio " << l.ratio << "\n";
}

}  // namespace mpopf
