#pragma once

// Scenario files: INI-style sections with `key = value` lines.
//
//   [model]   n m r p q, A B C Fx Fy G, Q R S, x0_hat P0
//   [truth]   x0, u | u_sequence, fault.<i>, disturbance*, ...
//   [run]     horizon seed mode path montecarlo fault_windows rank_tol
//   [output]  directory emit_csv emit_svg emit_metrics
//
// Matrix values are bracketed row lists, `[[1, 2], [3, 4]]`; a flat list
// `[1, 2, 3]` is accepted where a single row or column is expected. The
// shorthands `eye(n)`, `diag(a, b, ...)` and `zeros(r, c)` may be prefixed
// with a scalar factor, e.g. `0.01 * eye(3)`. A bracketed value may span
// several lines. Fault channels are lists of `amplitude@onset` step terms.
// Keys are case-sensitive; unknown sections and keys are rejected.

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "umvf/filter.hpp"
#include "umvf/simulator.hpp"

namespace umvf::io {

enum class RunMode { covariance, sqrt, both };

inline const char* to_string(RunMode m) {
  switch (m) {
    case RunMode::covariance: return "covariance";
    case RunMode::sqrt: return "sqrt";
    case RunMode::both: return "both";
  }
  return "?";
}

/// Inclusive step window used for fault-bias metrics.
struct Window {
  long begin = 0;
  long end = 0;
};

struct RunOptions {
  long horizon = 100;
  std::optional<std::uint64_t> seed;
  RunMode mode = RunMode::sqrt;
  FilterPath path = FilterPath::automatic;
  long montecarlo = 0;
  std::vector<Window> fault_windows;  // one per fault channel, may be empty
  double rank_tol = FilterOptions{}.rank_tol;
};

struct OutputOptions {
  std::filesystem::path directory = "out";
  bool emit_csv = true;
  bool emit_svg = true;
  bool emit_metrics = true;
};

struct ScenarioConfig {
  SystemDims dims;
  MatrixBundle bundle;
  InitialCondition init;
  TruthSpec truth;
  RunOptions run;
  OutputOptions output;

  SystemModel model() const { return SystemModel::constant(dims, bundle); }

  FilterOptions filter_options(CovarianceMode mode) const {
    FilterOptions o;
    o.path = run.path;
    o.mode = mode;
    o.rank_tol = run.rank_tol;
    return o;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

struct Entry {
  std::string value;
  int line = 0;
};

using Section = std::map<std::string, Entry>;

[[noreturn]] inline void fail(const std::string& msg, int line = 0) {
  throw Error(ErrorKind::Config, line > 0 ? "line " + std::to_string(line) + ": " + msg : msg);
}

inline double parse_number(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.empty()) fail("empty number", line);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) fail("not a number: '" + s + "'", line);
  if (!std::isfinite(v)) fail("non-finite number: '" + s + "'", line);
  return v;
}

inline long parse_integer(const std::string& raw, int line) {
  const double v = parse_number(raw, line);
  if (v != std::floor(v) || std::abs(v) > 1e15) fail("not an integer: '" + trim(raw) + "'", line);
  return static_cast<long>(v);
}

inline bool parse_bool(const std::string& raw, int line) {
  const std::string s = lower(trim(raw));
  if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
  if (s == "false" || s == "no" || s == "0" || s == "off") return false;
  fail("not a boolean: '" + s + "'", line);
}

/// Splits on commas that are not nested inside brackets or parentheses.
inline std::vector<std::string> split_top(const std::string& s, int line) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (depth < 0) fail("unbalanced brackets", line);
    if (c == ',' && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (depth != 0) fail("unbalanced brackets", line);
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

/// Nested list value: either a flat list of numbers or a list of rows.
struct ListValue {
  std::vector<std::vector<double>> rows;
  bool nested = false;
};

inline ListValue parse_list(const std::string& raw, int line) {
  const std::string s = trim(raw);
  if (s.size() < 2 || s.front() != '[' || s.back() != ']') fail("expected a bracketed list", line);
  const std::string inner = trim(s.substr(1, s.size() - 2));
  ListValue out;
  if (inner.empty()) return out;
  const auto items = split_top(inner, line);
  out.nested = !items.empty() && !items.front().empty() && items.front().front() == '[';
  if (out.nested) {
    for (const auto& it : items) {
      ListValue row = parse_list(it, line);
      if (row.nested) fail("lists nest at most two levels", line);
      out.rows.push_back(row.rows.empty() ? std::vector<double>{} : row.rows.front());
    }
  } else {
    std::vector<double> row;
    for (const auto& it : items) row.push_back(parse_number(it, line));
    out.rows.push_back(std::move(row));
  }
  return out;
}

/// Parses a matrix value and checks it against the expected shape.
inline Matrix parse_matrix(const std::string& raw, Eigen::Index rows, Eigen::Index cols, const std::string& key,
                           int line) {
  std::string s = trim(raw);
  double factor = 1.0;
  // Optional "<scalar> *" prefix in front of a shorthand or list.
  if (const auto star = s.find('*'); star != std::string::npos) {
    factor = parse_number(s.substr(0, star), line);
    s = trim(s.substr(star + 1));
  }

  Matrix m;
  auto args = [&](const std::string& name) {
    const std::string inner = trim(s.substr(name.size()));
    if (inner.size() < 2 || inner.front() != '(' || inner.back() != ')') fail(key + ": malformed " + name + "(...)", line);
    return split_top(inner.substr(1, inner.size() - 2), line);
  };
  if (s.rfind("eye", 0) == 0) {
    const auto a = args("eye");
    if (a.size() != 1) fail(key + ": eye takes one argument", line);
    const long k = parse_integer(a[0], line);
    m = Matrix::Identity(k, k);
  } else if (s.rfind("diag", 0) == 0) {
    const auto a = args("diag");
    Vector d(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) d(static_cast<Eigen::Index>(i)) = parse_number(a[i], line);
    m = d.asDiagonal();
  } else if (s.rfind("zeros", 0) == 0) {
    const auto a = args("zeros");
    if (a.size() != 2) fail(key + ": zeros takes two arguments", line);
    m = Matrix::Zero(parse_integer(a[0], line), parse_integer(a[1], line));
  } else {
    const ListValue lv = parse_list(s, line);
    if (!lv.nested) {
      const auto& flat = lv.rows.empty() ? std::vector<double>{} : lv.rows.front();
      const auto len = static_cast<Eigen::Index>(flat.size());
      if (cols == 1 && len == rows) {
        m = Eigen::Map<const Vector>(flat.data(), len);
      } else if (rows == 1 && len == cols) {
        m = Eigen::Map<const Eigen::RowVectorXd>(flat.data(), len);
      } else if (len == 0 && rows * cols == 0) {
        m = Matrix(rows, cols);
      } else {
        fail(key + ": flat list of length " + std::to_string(len) + " does not fit " + std::to_string(rows) + "x" +
                 std::to_string(cols),
             line);
      }
    } else {
      const auto nr = static_cast<Eigen::Index>(lv.rows.size());
      const auto nc = nr == 0 ? 0 : static_cast<Eigen::Index>(lv.rows.front().size());
      m.resize(nr, nc);
      for (Eigen::Index i = 0; i < nr; ++i) {
        if (static_cast<Eigen::Index>(lv.rows[static_cast<std::size_t>(i)].size()) != nc) {
          fail(key + ": ragged rows", line);
        }
        for (Eigen::Index j = 0; j < nc; ++j) m(i, j) = lv.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      }
    }
  }
  if (m.rows() != rows || m.cols() != cols) {
    fail(key + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ", expected " +
             std::to_string(rows) + "x" + std::to_string(cols),
         line);
  }
  return factor * m;
}

/// List of vectors, one per row: `[[...], [...]]`.
inline std::vector<Vector> parse_vector_sequence(const std::string& raw, Eigen::Index len, const std::string& key,
                                                 int line) {
  const ListValue lv = parse_list(raw, line);
  std::vector<Vector> out;
  if (!lv.nested) {
    // A flat list is a sequence of scalars.
    if (len != 1) fail(key + ": expected a list of " + std::to_string(len) + "-vectors", line);
    for (double v : lv.rows.empty() ? std::vector<double>{} : lv.rows.front()) out.push_back(Vector::Constant(1, v));
    return out;
  }
  for (const auto& r : lv.rows) {
    if (static_cast<Eigen::Index>(r.size()) != len) fail(key + ": entries must have length " + std::to_string(len), line);
    out.push_back(Eigen::Map<const Vector>(r.data(), len));
  }
  return out;
}

inline std::vector<StepTerm> parse_fault_terms(const std::string& raw, int line) {
  std::vector<StepTerm> out;
  const std::string s = trim(raw);
  if (s.empty() || s == "none" || s == "0") return out;
  for (const auto& item : split_top(s, line)) {
    const auto at = item.find('@');
    if (at == std::string::npos) fail("fault term '" + item + "' must look like amplitude@onset", line);
    StepTerm t;
    t.amplitude = parse_number(item.substr(0, at), line);
    t.onset = parse_integer(item.substr(at + 1), line);
    if (t.onset < 0) fail("fault onset must be >= 0", line);
    out.push_back(t);
  }
  return out;
}

inline std::map<std::string, Section> tokenize(std::istream& in) {
  static const std::set<std::string> kSections = {"model", "truth", "run", "output"};
  std::map<std::string, Section> out;
  std::string current;
  std::string line_text;
  int line_no = 0;
  while (std::getline(in, line_text)) {
    ++line_no;
    if (const auto hash = line_text.find('#'); hash != std::string::npos) line_text.erase(hash);
    std::string line = trim(line_text);
    if (line.empty()) continue;

    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      current = lower(trim(line.substr(1, line.size() - 2)));
      if (!kSections.count(current)) fail("unknown section [" + current + "]", line_no);
      out[current];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value", line_no);
    if (current.empty()) fail("key outside of a section", line_no);
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const int start = line_no;

    // Continue bracketed values across lines.
    auto depth = [](const std::string& s) {
      int d = 0;
      for (char c : s) d += (c == '[' || c == '(') - (c == ']' || c == ')');
      return d;
    };
    while (depth(value) > 0 && std::getline(in, line_text)) {
      ++line_no;
      if (const auto hash = line_text.find('#'); hash != std::string::npos) line_text.erase(hash);
      value += " " + trim(line_text);
    }
    if (depth(value) != 0) fail("unbalanced brackets in '" + key + "'", start);
    if (out[current].count(key)) fail("duplicate key '" + key + "'", start);
    out[current][key] = Entry{value, start};
  }
  return out;
}

}  // namespace detail

/// Parses a scenario. Throws Error(Config) on any malformed or unknown entry
/// and Error(AssumptionViolated) when m < p + q.
inline ScenarioConfig parse_config(std::istream& in) {
  using namespace detail;
  auto sections = tokenize(in);
  ScenarioConfig cfg;

  auto take = [](Section& sec, const std::string& key) -> std::optional<Entry> {
    auto it = sec.find(key);
    if (it == sec.end()) return std::nullopt;
    Entry e = it->second;
    sec.erase(it);
    return e;
  };
  auto reject_leftovers = [](const Section& sec, const std::string& sname) {
    if (!sec.empty()) fail("unknown key '" + sec.begin()->first + "' in [" + sname + "]", sec.begin()->second.line);
  };

  // [model]
  Section& model = sections["model"];
  SystemDims& d = cfg.dims;
  auto dim = [&](const std::string& key, long fallback, bool required) {
    auto e = take(model, key);
    if (!e) {
      if (required) fail("missing [model] " + key);
      return fallback;
    }
    const long v = parse_integer(e->value, e->line);
    if (v < 0) fail(key + " must be >= 0", e->line);
    return v;
  };
  d.n = dim("n", 0, true);
  d.m = dim("m", 0, true);
  d.r = dim("r", 0, false);
  d.p = dim("p", 0, false);
  d.q = dim("q", 0, false);
  if (d.n < 1 || d.m < 1) fail("n and m must be >= 1");
  if (d.m < d.p + d.q) throw Error(ErrorKind::AssumptionViolated, "m ≥ p+q violated");

  auto mat = [&](const std::string& key, Eigen::Index rows, Eigen::Index cols, bool required) -> Matrix {
    auto e = take(model, key);
    if (!e) {
      if (required && rows * cols > 0) fail("missing [model] " + key);
      return Matrix::Zero(rows, cols);
    }
    return parse_matrix(e->value, rows, cols, key, e->line);
  };
  MatrixBundle& b = cfg.bundle;
  b.A = mat("A", d.n, d.n, true);
  b.B = mat("B", d.n, d.r, true);
  b.C = mat("C", d.m, d.n, true);
  b.Fx = mat("Fx", d.n, d.p, true);
  b.Fy = mat("Fy", d.m, d.p, true);
  b.G = mat("G", d.n, d.q, true);
  b.Q = mat("Q", d.n, d.n, false);
  b.R = mat("R", d.m, d.m, true);
  b.S = mat("S", d.n, d.m, false);
  cfg.init.x0_hat = mat("x0_hat", d.n, 1, false);
  cfg.init.P0 = mat("P0", d.n, d.n, true);
  reject_leftovers(model, "model");

  // [truth]
  Section& truth = sections["truth"];
  if (auto e = take(truth, "x0")) {
    cfg.truth.x0 = parse_matrix(e->value, d.n, 1, "x0", e->line);
  } else {
    cfg.truth.x0 = cfg.init.x0_hat;
  }
  auto u = take(truth, "u");
  auto useq = take(truth, "u_sequence");
  if (u && useq) fail("give either u or u_sequence, not both", u->line);
  if (u) cfg.truth.input.constant = parse_matrix(u->value, d.r, 1, "u", u->line);
  if (useq) cfg.truth.input.sequence = parse_vector_sequence(useq->value, d.r, "u_sequence", useq->line);
  if (!u && !useq) cfg.truth.input.constant = Vector::Zero(d.r);

  cfg.truth.faults.channels.assign(static_cast<std::size_t>(d.p), {});
  for (Eigen::Index i = 0; i < d.p; ++i) {
    if (auto e = take(truth, "fault." + std::to_string(i + 1))) {
      cfg.truth.faults.channels[static_cast<std::size_t>(i)] = parse_fault_terms(e->value, e->line);
    }
  }

  DisturbanceSpec& dist = cfg.truth.disturbance;
  std::string dmode = "none";
  int dline = 0;
  if (auto e = take(truth, "disturbance")) {
    dmode = lower(trim(e->value));
    dline = e->line;
  }
  auto drow = take(truth, "disturbance_row");
  auto da = take(truth, "disturbance_a_scale");
  auto db = take(truth, "disturbance_b_scale");
  auto dseq = take(truth, "disturbance_sequence");
  if (dmode == "none") {
    dist.mode = DisturbanceSpec::Mode::none;
  } else if (dmode == "parametric") {
    dist.mode = DisturbanceSpec::Mode::parametric;
    if (!drow) fail("parametric disturbance needs disturbance_row", dline);
    dist.row = parse_integer(drow->value, drow->line) - 1;
    dist.a_scale = da ? parse_number(da->value, da->line) : 0.0;
    dist.b_scale = db ? parse_number(db->value, db->line) : 0.0;
  } else if (dmode == "sequence") {
    dist.mode = DisturbanceSpec::Mode::sequence;
    if (!dseq) fail("sequence disturbance needs disturbance_sequence", dline);
    dist.sequence = parse_vector_sequence(dseq->value, d.q, "disturbance_sequence", dseq->line);
  } else {
    fail("disturbance must be none, parametric or sequence", dline);
  }
  reject_leftovers(truth, "truth");

  // [run]
  Section& run = sections["run"];
  if (auto e = take(run, "horizon")) cfg.run.horizon = parse_integer(e->value, e->line);
  if (cfg.run.horizon < 1) fail("horizon must be >= 1");
  if (auto e = take(run, "seed")) {
    const long s = parse_integer(e->value, e->line);
    if (s < 0) fail("seed must be >= 0", e->line);
    cfg.run.seed = static_cast<std::uint64_t>(s);
  }
  if (auto e = take(run, "mode")) {
    const std::string m = lower(trim(e->value));
    if (m == "covariance") cfg.run.mode = RunMode::covariance;
    else if (m == "sqrt") cfg.run.mode = RunMode::sqrt;
    else if (m == "both") cfg.run.mode = RunMode::both;
    else fail("mode must be covariance, sqrt or both", e->line);
  }
  if (auto e = take(run, "path")) {
    const std::string p = lower(trim(e->value));
    if (p == "auto") cfg.run.path = FilterPath::automatic;
    else if (p == "full-rank") cfg.run.path = FilterPath::full_rank;
    else if (p == "extended") cfg.run.path = FilterPath::extended;
    else fail("path must be auto, full-rank or extended", e->line);
  }
  if (auto e = take(run, "montecarlo")) cfg.run.montecarlo = parse_integer(e->value, e->line);
  if (auto e = take(run, "rank_tol")) cfg.run.rank_tol = parse_number(e->value, e->line);
  if (auto e = take(run, "fault_windows")) {
    for (const auto& item : split_top(e->value, e->line)) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) fail("fault window '" + item + "' must look like begin:end", e->line);
      Window w{parse_integer(item.substr(0, colon), e->line), parse_integer(item.substr(colon + 1), e->line)};
      if (w.begin < 0 || w.end < w.begin) fail("bad fault window '" + item + "'", e->line);
      cfg.run.fault_windows.push_back(w);
    }
    if (static_cast<Eigen::Index>(cfg.run.fault_windows.size()) != d.p) {
      fail("fault_windows needs one window per fault channel", e->line);
    }
  }
  reject_leftovers(run, "run");

  // [output]
  Section& output = sections["output"];
  if (auto e = take(output, "directory")) cfg.output.directory = trim(e->value);
  if (auto e = take(output, "emit_csv")) cfg.output.emit_csv = parse_bool(e->value, e->line);
  if (auto e = take(output, "emit_svg")) cfg.output.emit_svg = parse_bool(e->value, e->line);
  if (auto e = take(output, "emit_metrics")) cfg.output.emit_metrics = parse_bool(e->value, e->line);
  reject_leftovers(output, "output");

  return cfg;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Config, "cannot open config file " + path.string());
  return parse_config(in);
}

}  // namespace umvf::io
