#include "fisher/trace_io.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fisher {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string trace_to_csv(const ConvergenceTrace& trace) {
  const int m = trace.rows.empty() ? 0 : static_cast<int>(trace.rows[0].p.size());
  const int n =
      trace.rows.empty() ? 0 : static_cast<int>(trace.rows[0].lambda.size());
  std::string out = "iter";
  for (int j = 0; j < m; ++j) out += ",p_" + std::to_string(j + 1);
  out += ",res_primal,res_clearing,res_dual,res_violation";
  if (trace.lambda_columns)
    for (int i = 0; i < n; ++i) out += ",lambda_" + std::to_string(i + 1);
  out += "\n";
  for (const TraceRow& r : trace.rows) {
    out += std::to_string(r.iter);
    for (int j = 0; j < m; ++j) out += "," + num(r.p[j]);
    out += "," + num(r.res_primal) + "," + num(r.res_clearing) + "," +
           num(r.res_dual) + "," + num(r.res_violation);
    if (trace.lambda_columns)
      for (int i = 0; i < n; ++i) out += "," + num(r.lambda[i]);
    out += "\n";
  }
  return out;
}

std::string trace_to_json(const ConvergenceTrace& trace, int indent) {
  nlohmann::json doc;
  doc["converged"] = trace.converged;
  doc["diverged"] = trace.diverged;
  if (!trace.divergence_reason.empty())
    doc["divergence_reason"] = trace.divergence_reason;
  if (trace.aborted) doc["abort_reason"] = trace.abort_reason;
  if (!trace.warnings.empty()) doc["warnings"] = trace.warnings;
  doc["rows"] = nlohmann::json::array();
  for (const TraceRow& r : trace.rows) {
    nlohmann::json jr;
    jr["iter"] = r.iter;
    jr["p"] = nlohmann::json::array();
    for (int j = 0; j < r.p.size(); ++j) jr["p"].push_back(r.p[j]);
    jr["res_primal"] = r.res_primal;
    jr["res_clearing"] = r.res_clearing;
    jr["res_dual"] = r.res_dual;
    jr["res_violation"] = r.res_violation;
    if (trace.lambda_columns) {
      jr["lambda"] = nlohmann::json::array();
      for (int i = 0; i < r.lambda.size(); ++i) jr["lambda"].push_back(r.lambda[i]);
    }
    doc["rows"].push_back(jr);
  }
  return doc.dump(indent);
}

std::string fixed_point_to_csv(const FixedPointResult& result) {
  std::string out = "iter,residual\n";
  for (std::size_t k = 0; k < result.residuals.size(); ++k)
    out += std::to_string(k) + "," + num(result.residuals[k]) + "\n";
  return out;
}

std::string fixed_point_to_json(const FixedPointResult& result, int indent) {
  nlohmann::json doc;
  doc["converged"] = result.converged;
  doc["iterations"] = result.iterations;
  doc["lambda"] = nlohmann::json::array();
  for (int i = 0; i < result.lambda.size(); ++i)
    doc["lambda"].push_back(result.lambda[i]);
  doc["residuals"] = result.residuals;
  if (result.solution) {
    nlohmann::json sol;
    sol["p"] = nlohmann::json::array();
    for (int j = 0; j < result.solution->p.size(); ++j)
      sol["p"].push_back(result.solution->p[j]);
    sol["objective"] = result.solution->objective;
    sol["relaxed_rows"] = result.solution->relaxed_rows;
    doc["solution"] = sol;
  }
  return doc.dump(indent);
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace fisher
