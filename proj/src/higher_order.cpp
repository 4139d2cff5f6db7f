#include "hj/higher_order.hpp"

#include <charconv>

namespace hj {

JetChart::JetChart(int n, int order) : n_(n), order_(order) {
  if (n < 1 || order < 0) throw DimensionMismatch("a jet chart needs n >= 1 and order >= 0");
  for (int i = 0; i <= order; ++i)
    for (int a = 1; a <= n; ++a) vars_.push_back(name(i, a));
}

std::string JetChart::name(int i, int a) { return "q" + std::to_string(i) + "_" + std::to_string(a); }

int JetChart::order_of(std::string_view name) {
  if (name.size() < 4 || name[0] != 'q') return -1;
  const auto us = name.find('_');
  if (us == std::string_view::npos || us < 2 || us + 1 >= name.size()) return -1;
  int order = -1, a = -1;
  auto r1 = std::from_chars(name.data() + 1, name.data() + us, order);
  auto r2 = std::from_chars(name.data() + us + 1, name.data() + name.size(), a);
  if (r1.ec != std::errc{} || r1.ptr != name.data() + us) return -1;
  if (r2.ec != std::errc{} || r2.ptr != name.data() + name.size() || a < 1) return -1;
  return order;
}

namespace {

std::pair<int, int> jet_index(std::string_view name) {
  const auto us = name.find('_');
  int order = 0, a = 0;
  std::from_chars(name.data() + 1, name.data() + us, order);
  std::from_chars(name.data() + us + 1, name.data() + name.size(), a);
  return {order, a};
}

}  // namespace

Expression total_derivative(const Expression& f) {
  Expression out;
  for (const std::string& v : free_variables(f)) {
    if (JetChart::order_of(v) < 0) throw Error("d_T applied to a non-jet variable '" + v + "'");
    auto [i, a] = jet_index(v);
    out = out + Expression::variable(JetChart::name(i + 1, a)) * diff(f, v);
  }
  return out;
}

ScalarField total_derivative(const ScalarField& f, const JetChart& chart) {
  JetChart up(chart.n(), chart.order() + 1);
  return ScalarField::from_expression(total_derivative(f.expression()), up.vars());
}

int max_jet_order(const ScalarField& f) {
  int m = 0;
  for (const std::string& v : free_variables(f.expression())) m = std::max(m, JetChart::order_of(v));
  return m;
}

namespace {

Expression iterate_dt(Expression e, int times) {
  for (int t = 0; t < times; ++t) e = total_derivative(e);
  return e;
}

Expression signed_term(const Expression& e, int l) { return l % 2 == 0 ? e : -e; }

}  // namespace

HigherLagrangian::HigherLagrangian(int n, int k, ScalarField lagrangian) : n_(n), k_(k), l_(std::move(lagrangian)) {
  if (k < 1 || k > 3) throw UnsupportedOrder(k);
  const JetChart chart(n, k);
  if (l_.vars() != chart.vars()) l_ = l_.over(chart.vars());
  const Expression& le = l_.expression();
  const JetChart odd(n, 2 * k - 1);
  const JetChart even(n, 2 * k);

  for (int i = 0; i < k; ++i) {
    for (int a = 1; a <= n; ++a) {
      Expression p;
      for (int l = 0; l <= k - i - 1; ++l)
        p = p + signed_term(iterate_dt(diff(le, JetChart::name(i + 1 + l, a)), l), l);
      momenta_.push_back(ScalarField::from_expression(p, odd.vars()));
    }
  }
  Expression e;
  for (int r = 1; r <= k; ++r)
    for (int a = 1; a <= n; ++a)
      e = e + Expression::variable(JetChart::name(r, a)) * momenta_[(r - 1) * n + (a - 1)].expression();
  energy_ = ScalarField::from_expression(e - le, odd.vars());

  for (int a = 1; a <= n; ++a) {
    Expression el;
    for (int i = 0; i <= k; ++i) el = el + signed_term(iterate_dt(diff(le, JetChart::name(i, a)), i), i);
    el_.push_back(ScalarField::from_expression(el, even.vars()));
  }
}

HigherLagrangian HigherLagrangian::parse(int n, int k, const std::string& text) {
  if (k < 1 || k > 3) throw UnsupportedOrder(k);
  return HigherLagrangian(n, k, ScalarField::compile(text, JetChart(n, k).vars()));
}

namespace {

// d2L/dq_k dq_k at a point of the order-k chart.
Matrix top_hessian(const HigherLagrangian& lag, const Vector& jet_k) {
  const int n = lag.n(), k = lag.k();
  std::vector<int> rows(n);
  for (int a = 0; a < n; ++a) rows[a] = k * n + a;
  Vector g;
  Matrix h;
  lag.lagrangian().partial_hessian(jet_k, rows, g, h);
  return h.rightCols(n);
}

constexpr double kSingularTop = 1e12;

}  // namespace

double HigherLagrangian::regularity_condition(const Vector& jet_k) const {
  return condition_number(top_hessian(*this, jet_k));
}

VectorFieldSection higher_el_field(const HigherLagrangian& lag) {
  const int n = lag.n(), k = lag.k();
  const Eigen::Index dim = 2 * k * n;
  const HigherLagrangian l = lag;
  return VectorFieldSection(SmoothMap(dim, dim, [l, n, k, dim](const Vector& x) -> Vector {
    Vector ext = Vector::Zero(dim + n);
    ext.head(dim) = x;
    Vector b(n);
    for (int a = 0; a < n; ++a) b[a] = l.euler_lagrange()[a].value(ext);
    Matrix m = top_hessian(l, x.head((k + 1) * n));
    const double c = condition_number(m);
    if (!(c <= kSingularTop)) throw SingularLegendre(c);
    if (k % 2 == 1) m = -m;
    Vector out(dim);
    out.head(dim - n) = x.tail(dim - n);
    out.tail(n) = m.fullPivLu().solve(-b);
    return out;
  }));
}

FlowResult higher_el_flow(const HigherLagrangian& lag, const Vector& x0, double t_end, double dt,
                          const FlowOptions& options) {
  if (x0.size() != 2 * lag.k() * lag.n()) throw DimensionMismatch("initial jet must list q_0 .. q_{2k-1}");
  return flow_rk4(higher_el_field(lag), x0, t_end, dt, options);
}

JetSection::JetSection(int n, int k, std::vector<ScalarField> components) : n_(n), k_(k) {
  if (k < 1 || k > 3) throw UnsupportedOrder(k);
  if (static_cast<int>(components.size()) != k * n) throw DimensionMismatch("a jet section has k*n components");
  const auto base = JetChart(n, k - 1).vars();
  for (auto& c : components)
    if (c.vars() != base) c = c.over(base);
  map_ = SmoothMap::from_fields(std::move(components));
}

JetSection JetSection::parse(int n, int k, const std::vector<std::string>& texts) {
  const auto base = JetChart(n, k - 1).vars();
  std::vector<ScalarField> comps;
  for (const auto& t : texts) comps.push_back(ScalarField::compile(t, base));
  return JetSection(n, k, std::move(comps));
}

Status HigherHJReport::status() const {
  std::vector<Status> parts{tangency.status(), closedness.status(), de.status()};
  if (pde) parts.push_back(pde->status());
  return combine(parts);
}

nlohmann::ordered_json HigherHJReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "higher_hj_residuals";
  j["tangency_defect"] = tangency.to_json();
  j["closedness_defect"] = closedness.to_json();
  j["dE_defect"] = de.to_json();
  if (pde) j["pde_defect"] = pde->to_json();
  j["notes"] = notes;
  j["status"] = to_string(status());
  return j;
}

HigherHJReport higher_hj_residuals(const HigherLagrangian& lag, const JetSection& s,
                                   const std::vector<Vector>& samples, double tolerance,
                                   const ScalarField* generating) {
  const int n = lag.n(), k = lag.k();
  if (s.n() != n || s.k() != k) throw DimensionMismatch("jet section and Lagrangian disagree on n or k");
  const Eigen::Index half = static_cast<Eigen::Index>(k) * n;
  if (generating && generating->arity() != half) throw DimensionMismatch("S must be a field over q_0 .. q_{k-1}");
  HigherHJReport out;
  out.tangency.op = "tangency_defect";
  out.closedness.op = "closedness_defect";
  out.de.op = "dE_defect";
  for (ResidualReport* r : {&out.tangency, &out.closedness, &out.de}) r->tolerance = tolerance;
  if (generating) {
    out.pde.emplace();
    out.pde->op = "pde_defect";
    out.pde->tolerance = tolerance;
  }
  const VectorFieldSection xl = higher_el_field(lag);

  for (const Vector& b : samples) {
    if (b.size() != half) throw DimensionMismatch("samples must be points of the order-(k-1) chart");
    try {
      Vector x(2 * half);
      x << b, s.map()(b);
      const Matrix js = s.map().jacobian(b);
      const Vector flow = xl(x);
      const Vector tangency = flow.tail(half) - js * flow.head(half);

      Vector beta(half);
      Matrix jbeta(half, half);
      for (Eigen::Index j = 0; j < half; ++j) {
        const ScalarField& p = lag.momenta()[static_cast<std::size_t>(j)];
        beta[j] = p.value(x);
        Vector g = p.gradient(x);
        jbeta.row(j) = g.head(half).transpose() + g.tail(half).transpose() * js;
      }
      const Matrix w = jbeta - jbeta.transpose();
      const Vector ge = lag.energy().gradient(x);
      const Vector grad_e = ge.head(half) + js.transpose() * ge.tail(half);

      out.tangency.add({b, tangency, tangency.lpNorm<Eigen::Infinity>()});
      out.closedness.add({b, Eigen::Map<const Vector>(w.data(), w.size()), max_abs(w)});
      out.de.add({b, grad_e, grad_e.norm()});
      if (generating) {
        Vector d = generating->gradient(b) - beta;
        out.pde->add({b, d, d.lpNorm<Eigen::Infinity>()});
      }
    } catch (const Error& e) {
      for (ResidualReport* r : {&out.tangency, &out.closedness, &out.de}) r->add_skip(b, e.what());
      if (generating) out.pde->add_skip(b, e.what());
    }
  }
  return out;
}

}  // namespace hj
