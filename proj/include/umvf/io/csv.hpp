#pragma once

// trajectory.csv:
//   k,x_true_1..n,x_hat_1..n,f_true_1..p,f_hat_1..p,d_true_1..q,
//   trace_Px,trace_Pf,res_M11,res_M21
// Values are printed with 17 significant digits so a read-back reproduces
// the doubles exactly.

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "umvf/filter.hpp"
#include "umvf/simulator.hpp"

namespace umvf::io {

struct TrajectoryRow {
  long k = 0;
  Vector x_true, x_hat, f_true, f_hat, d_true;
  double trace_Px = 0.0;
  double trace_Pf = 0.0;
  double res_M11 = 0.0;
  double res_M21 = 0.0;

  bool operator==(const TrajectoryRow& o) const {
    return k == o.k && x_true == o.x_true && x_hat == o.x_hat && f_true == o.f_true && f_hat == o.f_hat &&
           d_true == o.d_true && trace_Px == o.trace_Px && trace_Pf == o.trace_Pf && res_M11 == o.res_M11 &&
           res_M21 == o.res_M21;
  }
};

inline std::vector<TrajectoryRow> make_rows(const std::vector<TruthRecord>& truth,
                                            const std::vector<StepRecord>& est) {
  if (truth.size() != est.size()) throw Error(ErrorKind::LengthMismatch, "truth and estimate sequences differ in length");
  std::vector<TrajectoryRow> rows;
  rows.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    TrajectoryRow r;
    r.k = truth[i].k;
    r.x_true = truth[i].x_true;
    r.x_hat = est[i].x_post;
    r.f_true = truth[i].f_true;
    r.f_hat = est[i].f_tracked;
    r.d_true = truth[i].d_true;
    r.trace_Px = est[i].trace_Px;
    r.trace_Pf = est[i].trace_Pf;
    r.res_M11 = est[i].res_M11;
    r.res_M21 = est[i].res_M21;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string csv_header(const SystemDims& d) {
  std::string h = "k";
  auto add = [&](const char* name, Eigen::Index count) {
    for (Eigen::Index i = 1; i <= count; ++i) h += std::string(",") + name + "_" + std::to_string(i);
  };
  add("x_true", d.n);
  add("x_hat", d.n);
  add("f_true", d.p);
  add("f_hat", d.p);
  add("d_true", d.q);
  h += ",trace_Px,trace_Pf,res_M11,res_M21";
  return h;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trajectory_csv(std::ostream& out, const SystemDims& d, const std::vector<TrajectoryRow>& rows) {
  out << csv_header(d) << '\n';
  for (const auto& r : rows) {
    out << r.k;
    for (const Vector* v : {&r.x_true, &r.x_hat, &r.f_true, &r.f_hat, &r.d_true}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) out << ',' << format_double((*v)(i));
    }
    for (double s : {r.trace_Px, r.trace_Pf, r.res_M11, r.res_M21}) out << ',' << format_double(s);
    out << '\n';
  }
}

/// Reads a file written by write_trajectory_csv. Dimensions are recovered
/// from the header.
inline std::vector<TrajectoryRow> read_trajectory_csv(std::istream& in, SystemDims* dims_out = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Config, "empty CSV");
  SystemDims d;
  {
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("x_true_", 0) == 0) ++d.n;
      else if (col.rfind("f_true_", 0) == 0) ++d.p;
      else if (col.rfind("d_true_", 0) == 0) ++d.q;
    }
  }
  if (csv_header(d) != line) throw Error(ErrorKind::Config, "unexpected CSV header: " + line);

  const Eigen::Index width = 1 + 2 * d.n + 2 * d.p + d.q + 4;
  std::vector<TrajectoryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::strtod(cell.c_str(), nullptr));
    if (static_cast<Eigen::Index>(vals.size()) != width) throw Error(ErrorKind::Config, "CSV row has wrong width");
    std::size_t at = 0;
    auto take = [&](Eigen::Index count) {
      Vector v(count);
      for (Eigen::Index i = 0; i < count; ++i) v(i) = vals[at++];
      return v;
    };
    TrajectoryRow r;
    r.k = static_cast<long>(vals[at++]);
    r.x_true = take(d.n);
    r.x_hat = take(d.n);
    r.f_true = take(d.p);
    r.f_hat = take(d.p);
    r.d_true = take(d.q);
    r.trace_Px = vals[at++];
    r.trace_Pf = vals[at++];
    r.res_M11 = vals[at++];
    r.res_M21 = vals[at++];
    rows.push_back(std::move(r));
  }
  if (dims_out) *dims_out = d;
  return rows;
}

}  // namespace umvf::io
