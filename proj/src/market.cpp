#include "fisher/market.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace fisher {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite(const Vec& v) { return v.allFinite(); }
}  // namespace

UtilitySpec UtilitySpec::linear(Vec c) {
  UtilitySpec s;
  s.kind = UtilityKind::Linear;
  s.coeffs = std::move(c);
  return s;
}

UtilitySpec UtilitySpec::cobb_douglas(Vec exponents) {
  UtilitySpec s;
  s.kind = UtilityKind::CobbDouglas;
  s.coeffs = std::move(exponents);
  return s;
}

UtilitySpec UtilitySpec::ces(Vec weights, double rho) {
  UtilitySpec s;
  s.kind = UtilityKind::Ces;
  s.coeffs = std::move(weights);
  s.rho = rho;
  return s;
}

double UtilitySpec::value(const Vec& x) const {
  if (x.size() != coeffs.size()) throw std::invalid_argument("utility: dimension mismatch");
  switch (kind) {
    case UtilityKind::Linear:
      return coeffs.dot(x);
    case UtilityKind::CobbDouglas: {
      double v = 1.0;
      for (int j = 0; j < x.size(); ++j) {
        if (coeffs[j] == 0.0) continue;
        v *= std::pow(x[j], coeffs[j]);
      }
      return v;
    }
    case UtilityKind::Ces: {
      if (rho == 1.0) return coeffs.dot(x);
      double s = 0.0;
      for (int j = 0; j < x.size(); ++j) s += coeffs[j] * std::pow(x[j], rho);
      return std::pow(s, 1.0 / rho);
    }
  }
  return 0.0;
}

Vec UtilitySpec::gradient(const Vec& x) const {
  if (x.size() != coeffs.size()) throw std::invalid_argument("utility: dimension mismatch");
  const int m = static_cast<int>(x.size());
  Vec g(m);
  switch (kind) {
    case UtilityKind::Linear:
      return coeffs;
    case UtilityKind::CobbDouglas: {
      const double v = value(x);
      for (int j = 0; j < m; ++j) {
        if (coeffs[j] == 0.0) {
          g[j] = 0.0;
        } else if (x[j] == 0.0) {
          g[j] = kInf;
        } else {
          // v may be 0 when another coordinate is 0; the marginal utility of
          // this coordinate is then 0 unless its own factor vanishes too.
          g[j] = coeffs[j] * v / x[j];
        }
      }
      return g;
    }
    case UtilityKind::Ces: {
      if (rho == 1.0) return coeffs;
      double s = 0.0;
      for (int j = 0; j < m; ++j) s += coeffs[j] * std::pow(x[j], rho);
      const double outer = std::pow(s, 1.0 / rho - 1.0);
      for (int j = 0; j < m; ++j) {
        if (coeffs[j] == 0.0) {
          g[j] = 0.0;
        } else if (x[j] == 0.0) {
          g[j] = kInf;  // x^{rho-1} diverges for rho < 1
        } else {
          g[j] = coeffs[j] * std::pow(x[j], rho - 1.0) * outer;
        }
      }
      return g;
    }
  }
  return g;
}

double UtilitySpec::log_value(const Vec& x) const {
  switch (kind) {
    case UtilityKind::Linear:
      return std::log(coeffs.dot(x));
    case UtilityKind::CobbDouglas: {
      double v = 0.0;
      for (int j = 0; j < x.size(); ++j)
        if (coeffs[j] != 0.0) v += coeffs[j] * std::log(x[j]);
      return v;
    }
    case UtilityKind::Ces: {
      if (rho == 1.0) return std::log(coeffs.dot(x));
      double s = 0.0;
      for (int j = 0; j < x.size(); ++j) s += coeffs[j] * std::pow(x[j], rho);
      return std::log(s) / rho;
    }
  }
  return 0.0;
}

Vec UtilitySpec::log_gradient(const Vec& x) const {
  const int m = static_cast<int>(x.size());
  switch (kind) {
    case UtilityKind::Linear:
      return coeffs / coeffs.dot(x);
    case UtilityKind::CobbDouglas: {
      Vec g(m);
      for (int j = 0; j < m; ++j) g[j] = coeffs[j] / x[j];
      return g;
    }
    case UtilityKind::Ces: {
      if (rho == 1.0) return coeffs / coeffs.dot(x);
      double s = 0.0;
      Vec pw(m);
      for (int j = 0; j < m; ++j) {
        pw[j] = coeffs[j] * std::pow(x[j], rho - 1.0);
        s += pw[j] * x[j];
      }
      return pw / s;
    }
  }
  return Vec::Zero(m);
}

Mat UtilitySpec::log_hessian(const Vec& x) const {
  const int m = static_cast<int>(x.size());
  switch (kind) {
    case UtilityKind::Linear: {
      const double ux = coeffs.dot(x);
      return -(coeffs * coeffs.transpose()) / (ux * ux);
    }
    case UtilityKind::CobbDouglas: {
      Mat h = Mat::Zero(m, m);
      for (int j = 0; j < m; ++j) h(j, j) = -coeffs[j] / (x[j] * x[j]);
      return h;
    }
    case UtilityKind::Ces: {
      if (rho == 1.0) {
        const double ux = coeffs.dot(x);
        return -(coeffs * coeffs.transpose()) / (ux * ux);
      }
      double s = 0.0;
      Vec pw(m);  // a_j x_j^{rho-1}
      for (int j = 0; j < m; ++j) {
        pw[j] = coeffs[j] * std::pow(x[j], rho - 1.0);
        s += pw[j] * x[j];
      }
      Mat h = -(rho / (s * s)) * (pw * pw.transpose());
      for (int j = 0; j < m; ++j)
        h(j, j) += (rho - 1.0) * coeffs[j] * std::pow(x[j], rho - 2.0) / s;
      return h;
    }
  }
  return Mat::Zero(m, m);
}

bool ConstraintSet::homogeneous() const {
  for (const auto& row : rows)
    if (row.rhs != 0.0) return false;
  return true;
}

Mat ConstraintSet::matrix(int goods) const {
  Mat a(size(), goods);
  for (int t = 0; t < size(); ++t) a.row(t) = rows[t].coeffs.transpose();
  return a;
}

Vec ConstraintSet::rhs() const {
  Vec b(size());
  for (int t = 0; t < size(); ++t) b[t] = rows[t].rhs;
  return b;
}

double Market::total_budget() const {
  double w = 0.0;
  for (const auto& a : agents) w += a.budget;
  return w;
}

bool Market::homogeneous() const {
  for (const auto& a : agents)
    if (!a.constraints.homogeneous()) return false;
  return true;
}

std::vector<Violation> validate_market(const Market& market) {
  std::vector<Violation> out;
  const int n = market.agent_count();
  const int m = market.good_count();
  if (n < 1) out.push_back({"market must have at least one agent", -1, -1});
  if (m < 1) out.push_back({"market must have at least one good", -1, -1});
  for (int j = 0; j < m; ++j) {
    if (!(market.capacities[j] > 0.0) || !std::isfinite(market.capacities[j]))
      out.push_back({"capacity must be > 0", -1, j});
  }
  for (int i = 0; i < n; ++i) {
    const Agent& a = market.agents[i];
    if (!std::isfinite(a.budget) || a.budget < 0.0)
      out.push_back({"budget must be finite and >= 0", i, -1});
    const UtilitySpec& u = a.utility;
    if (u.goods() != m) {
      out.push_back({"utility dimension must equal good count", i, -1});
      continue;
    }
    if (!finite(u.coeffs)) out.push_back({"utility parameters must be finite", i, -1});
    for (int j = 0; j < m; ++j)
      if (u.coeffs[j] < 0.0) out.push_back({"utility parameter must be >= 0", i, j});
    if (u.coeffs.maxCoeff() <= 0.0)
      out.push_back({"agent has zero utility for every good and cannot spend its budget", i, -1});
    if (u.kind == UtilityKind::CobbDouglas &&
        std::abs(u.coeffs.sum() - 1.0) > 1e-12)
      out.push_back({"CobbDouglas exponents must sum to 1", i, -1});
    if (u.kind == UtilityKind::Ces && !(u.rho > 0.0 && u.rho <= 1.0))
      out.push_back({"CES exponent must lie in (0, 1]", i, -1});
    for (int t = 0; t < a.constraints.size(); ++t) {
      const auto& row = a.constraints.rows[t];
      if (row.coeffs.size() != m)
        out.push_back({"constraint row width must equal good count", i, -1});
      else if (!finite(row.coeffs))
        out.push_back({"constraint coefficients must be finite", i, -1});
      if (!(row.rhs >= 0.0) || !std::isfinite(row.rhs))
        out.push_back({"constraint rhs must be >= 0 (nonnegative-rhs rule)", i, -1});
    }
  }
  return out;
}

std::pair<double, Vec> evaluate_utility(const UtilitySpec& spec, const Vec& x) {
  return {spec.value(x), spec.gradient(x)};
}

double SeededRng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t SeededRng::next_u64() {
  // splitmix64; tiny, portable, and well distributed.
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

void check_blocks(int goods, const std::vector<std::vector<int>>& blocks) {
  std::set<int> seen;
  for (const auto& block : blocks) {
    for (int j : block) {
      if (j < 0 || j >= goods) throw std::invalid_argument("knapsack block index out of range");
      if (!seen.insert(j).second) throw std::invalid_argument("knapsack blocks overlap");
    }
  }
}

}  // namespace

Market random_market(std::uint64_t seed, int agents, int goods,
                     const std::vector<std::vector<int>>& knapsack_blocks,
                     double capacity) {
  if (capacity <= 0.0) throw std::invalid_argument("capacity must be > 0");
  check_blocks(goods, knapsack_blocks);
  SeededRng rng(seed);
  Market mkt;
  mkt.capacities = Vec::Constant(goods, capacity);
  mkt.agents.reserve(agents);
  for (int i = 0; i < agents; ++i) {
    Agent a;
    a.budget = rng.next_unit();
    Vec u(goods);
    for (int j = 0; j < goods; ++j) u[j] = rng.next_unit();
    a.utility = UtilitySpec::linear(u);
    for (const auto& block : knapsack_blocks) {
      ConstraintRow row;
      row.coeffs = Vec::Zero(goods);
      for (int j : block) row.coeffs[j] = 1.0;
      row.rhs = 1.0;
      a.constraints.rows.push_back(std::move(row));
    }
    mkt.agents.push_back(std::move(a));
  }
  return mkt;
}

Market random_cobb_douglas_market(std::uint64_t seed, int agents, int goods,
                                  double capacity) {
  Market mkt = random_market(seed, agents, goods, {}, capacity);
  for (auto& a : mkt.agents) {
    Vec e = a.utility.coeffs;
    a.utility = UtilitySpec::cobb_douglas(e / e.sum());
  }
  return mkt;
}

namespace {

using nlohmann::json;

json vec_to_json(const Vec& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

}  // namespace

std::string market_to_json(const Market& market, int indent) {
  json doc;
  doc["capacities"] = vec_to_json(market.capacities);
  doc["agents"] = json::array();
  for (const auto& a : market.agents) {
    json ja;
    ja["budget"] = a.budget;
    json ju;
    switch (a.utility.kind) {
      case UtilityKind::Linear:
        ju["kind"] = "linear";
        ju["coeffs"] = vec_to_json(a.utility.coeffs);
        break;
      case UtilityKind::CobbDouglas:
        ju["kind"] = "cobb-douglas";
        ju["exponents"] = vec_to_json(a.utility.coeffs);
        break;
      case UtilityKind::Ces:
        ju["kind"] = "ces";
        ju["weights"] = vec_to_json(a.utility.coeffs);
        ju["rho"] = a.utility.rho;
        break;
    }
    ja["utility"] = ju;
    ja["constraints"] = json::array();
    for (const auto& row : a.constraints.rows) {
      json jr;
      jr["coeffs"] = vec_to_json(row.coeffs);
      jr["rhs"] = row.rhs;
      ja["constraints"].push_back(jr);
    }
    doc["agents"].push_back(ja);
  }
  return doc.dump(indent);
}

Market market_from_json(const std::string& text) {
  json doc = json::parse(text);
  Market mkt;
  mkt.capacities = vec_from_json(doc.at("capacities"));
  for (const auto& ja : doc.at("agents")) {
    Agent a;
    a.budget = ja.at("budget").get<double>();
    const json& ju = ja.at("utility");
    const std::string kind = ju.at("kind").get<std::string>();
    if (kind == "linear") {
      a.utility = UtilitySpec::linear(vec_from_json(ju.at("coeffs")));
    } else if (kind == "cobb-douglas") {
      a.utility = UtilitySpec::cobb_douglas(vec_from_json(ju.at("exponents")));
    } else if (kind == "ces") {
      a.utility = UtilitySpec::ces(vec_from_json(ju.at("weights")), ju.at("rho").get<double>());
    } else {
      throw std::invalid_argument("unknown utility kind: " + kind);
    }
    if (ja.contains("constraints")) {
      for (const auto& jr : ja.at("constraints")) {
        ConstraintRow row;
        row.coeffs = vec_from_json(jr.at("coeffs"));
        row.rhs = jr.at("rhs").get<double>();
        a.constraints.rows.push_back(std::move(row));
      }
    }
    mkt.agents.push_back(std::move(a));
  }
  return mkt;
}

}  // namespace fisher
