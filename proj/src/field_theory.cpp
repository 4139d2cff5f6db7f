#include "hj/field_theory.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>
#include <sstream>

#include "hj/newton.hpp"

namespace hj {

namespace {

constexpr double kSingularVelocityHessian = 1e12;
constexpr double kConstraintWarning = 1e-6;

Vector join(const Vector& a, const Vector& b) {
  Vector x(a.size() + b.size());
  x << a, b;
  return x;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

FieldChart::FieldChart(int m_, int n_) : m(m_), n(n_) {
  if (m < 1 || m > 2 || n < 1 || n > 2)
    throw DimensionMismatch("field theories are supported for m, n in {1, 2}, got m = " + std::to_string(m) +
                            ", n = " + std::to_string(n));
}

std::vector<std::string> FieldChart::base_vars() const { return configuration_vars(m, "x"); }
std::vector<std::string> FieldChart::fiber_vars() const { return configuration_vars(n, "y"); }

std::vector<std::string> FieldChart::velocity_vars() const {
  std::vector<std::string> v;
  for (int a = 1; a <= n; ++a)
    for (int i = 1; i <= m; ++i) v.push_back("y" + std::to_string(a) + "_" + std::to_string(i));
  return v;
}

std::vector<std::string> FieldChart::momentum_vars() const {
  std::vector<std::string> v;
  for (int a = 1; a <= n; ++a)
    for (int i = 1; i <= m; ++i) v.push_back("p" + std::to_string(a) + "_" + std::to_string(i));
  return v;
}

std::vector<std::string> FieldChart::total_vars() const { return concat(base_vars(), fiber_vars()); }
std::vector<std::string> FieldChart::lagrangian_vars() const { return concat(total_vars(), velocity_vars()); }
std::vector<std::string> FieldChart::hamiltonian_vars() const { return concat(total_vars(), momentum_vars()); }

AliasMap FieldChart::aliases() const {
  AliasMap a{{"t", "x1"}};
  if (m == 2) a["x"] = "x2";
  if (n == 1) {
    a["y"] = "y1";
    a["yt"] = "y1_1";
    a["pt"] = "p1_1";
    if (m == 2) {
      a["yx"] = "y1_2";
      a["px"] = "p1_2";
    }
  }
  return a;
}

FieldTheory FieldTheory::from_lagrangian(int m, int n, ScalarField lagrangian) {
  FieldTheory t(m, n);
  const auto vars = t.chart_.lagrangian_vars();
  t.lagrangian_ = lagrangian.vars() == vars ? std::move(lagrangian) : lagrangian.over(vars);
  return t;
}

FieldTheory FieldTheory::from_hamiltonian(int m, int n, SmoothFunction hamiltonian) {
  FieldTheory t(m, n);
  if (hamiltonian.arity() != static_cast<Eigen::Index>(t.chart_.hamiltonian_vars().size()))
    throw DimensionMismatch("H must be a function of (x, y, p)");
  t.hamiltonian_ = std::move(hamiltonian);
  return t;
}

FieldTheory FieldTheory::parse_lagrangian(int m, int n, const std::string& text) {
  FieldChart c(m, n);
  return from_lagrangian(m, n, ScalarField::compile(text, c.lagrangian_vars(), c.aliases()));
}

FieldTheory FieldTheory::parse_hamiltonian(int m, int n, const std::string& text) {
  FieldChart c(m, n);
  return from_hamiltonian(m, n, ScalarField::compile(text, c.hamiltonian_vars(), c.aliases()));
}

const ScalarField& FieldTheory::lagrangian() const {
  if (!lagrangian_) throw Error("this field theory has no Lagrangian");
  return *lagrangian_;
}

const SmoothFunction& FieldTheory::hamiltonian() const {
  if (!hamiltonian_) throw Error("this field theory has no Hamiltonian");
  return *hamiltonian_;
}

namespace {

// Rows of the velocity block of the Hessian of L, with the full gradient.
void velocity_rows(const FieldTheory& t, const Vector& point, Vector& grad, Matrix& rows) {
  const int k = t.m() + t.n();
  std::vector<int> idx(t.chart().mn());
  for (int r = 0; r < t.chart().mn(); ++r) idx[r] = k + r;
  t.lagrangian().partial_hessian(point, idx, grad, rows);
}

Matrix velocity_hessian(const FieldTheory& t, const Vector& point) {
  Vector g;
  Matrix rows;
  velocity_rows(t, point, g, rows);
  return rows.rightCols(t.chart().mn());
}

void check_point(const FieldTheory& t, const Vector& point) {
  const Eigen::Index want = t.m() + t.n() + t.chart().mn();
  if (point.size() != want) throw DimensionMismatch("expected a point of (x, y, velocities or momenta)");
}

}  // namespace

double FieldTheory::legendre_condition(const Vector& point) const {
  check_point(*this, point);
  return condition_number(velocity_hessian(*this, point));
}

Vector field_legendre(const FieldTheory& theory, const Vector& point) {
  check_point(theory, point);
  Vector g;
  Matrix rows;
  velocity_rows(theory, point, g, rows);
  const double c = condition_number(rows.rightCols(theory.chart().mn()));
  if (!(c <= kSingularVelocityHessian)) throw SingularLegendre(c);
  return g.tail(theory.chart().mn());
}

Vector field_legendre_inverse(const FieldTheory& theory, const Vector& xyp, const std::optional<Vector>& seed) {
  check_point(theory, xyp);
  const int k = theory.m() + theory.n();
  const int mn = theory.chart().mn();
  const Vector z = xyp.head(k);
  const Vector p = xyp.tail(mn);
  auto residual = [&](const Vector& v) -> Vector { return theory.lagrangian().gradient(join(z, v)).tail(mn) - p; };
  auto jacobian = [&](const Vector& v) -> Matrix { return velocity_hessian(theory, join(z, v)); };
  const Vector v0 = seed ? *seed : p;
  Vector v;
  try {
    v = newton_solve(residual, jacobian, v0, {}, "inverse field Legendre map").x;
  } catch (const NewtonDivergence&) {
    const double c = condition_number(velocity_hessian(theory, join(z, v0)));
    if (!(c <= kSingularVelocityHessian)) throw SingularLegendre(c);
    throw;
  }
  const Vector out = join(z, v);
  const double c = theory.legendre_condition(out);
  if (!(c <= kSingularVelocityHessian)) throw SingularLegendre(c);
  return out;
}

FieldTheory field_hamiltonian_from_lagrangian(const FieldTheory& theory) {
  const FieldTheory t = theory;
  const int k = t.m() + t.n();
  const int mn = t.chart().mn();
  auto value = [t, k, mn](const Vector& xyp) {
    const Vector xyv = field_legendre_inverse(t, xyp);
    return xyp.tail(mn).dot(xyv.tail(mn)) - t.lagrangian().value(xyv);
  };
  auto gradient = [t, k, mn](const Vector& xyp) -> Vector {
    const Vector xyv = field_legendre_inverse(t, xyp);
    return join(-t.lagrangian().gradient(xyv).head(k), xyv.tail(mn));
  };
  auto hessian = [t, k, mn](const Vector& xyp) -> Matrix {
    const Vector xyv = field_legendre_inverse(t, xyp);
    const Matrix h = t.lagrangian().hessian(xyv);
    const Matrix lzz = h.topLeftCorner(k, k);
    const Matrix lvz = h.bottomLeftCorner(mn, k);
    const Matrix winv = h.bottomRightCorner(mn, mn).inverse();
    Matrix out(k + mn, k + mn);
    out.topLeftCorner(k, k) = -lzz + lvz.transpose() * winv * lvz;
    out.bottomLeftCorner(mn, k) = -winv * lvz;
    out.topRightCorner(k, mn) = out.bottomLeftCorner(mn, k).transpose();
    out.bottomRightCorner(mn, mn) = winv;
    return 0.5 * (out + out.transpose());
  };
  return FieldTheory::from_hamiltonian(t.m(), t.n(), SmoothFunction(k + mn, value, gradient, hessian));
}

FieldHJCandidate FieldHJCandidate::parse(const FieldChart& chart, const std::vector<std::string>& w,
                                         const std::vector<std::string>& psi) {
  return parse(chart, w, psi, {}, {});
}

FieldHJCandidate FieldHJCandidate::parse(const FieldChart& chart, const std::vector<std::string>& w,
                                         const std::vector<std::string>& psi, const std::vector<std::string>& params,
                                         std::span<const double> values) {
  if (static_cast<int>(w.size()) != chart.m) throw DimensionMismatch("a field HJ candidate has m components W^i");
  if (!psi.empty() && static_cast<int>(psi.size()) != chart.mn())
    throw DimensionMismatch("a jet field psi has m*n components");
  const auto base = chart.total_vars();
  const auto vars = concat(base, params);
  const AliasMap aliases = chart.aliases();
  auto compile = [&](const std::string& text) {
    ScalarField f = ScalarField::compile(text, vars, aliases);
    return params.empty() ? f : f.bind(params, values).over(base);
  };
  FieldHJCandidate c;
  for (const auto& t : w) c.w.push_back(compile(t));
  for (const auto& t : psi) c.psi.push_back(compile(t));
  return c;
}

Vector induced_section(const FieldChart& chart, const FieldHJCandidate& cand, const Vector& xy) {
  Vector s(chart.mn());
  for (int i = 0; i < chart.m; ++i) {
    const Vector g = cand.w[static_cast<std::size_t>(i)].gradient(xy);
    for (int a = 0; a < chart.n; ++a) s[chart.jet_index(a, i)] = g[chart.m + a];
  }
  return s;
}

namespace {

void check_candidate(const FieldChart& chart, const FieldHJCandidate& cand) {
  if (static_cast<int>(cand.w.size()) != chart.m) throw DimensionMismatch("a field HJ candidate has m components W^i");
  const auto base = chart.total_vars();
  for (const auto& f : cand.w)
    if (f.vars() != base) throw DimensionMismatch("W^i must be fields over (x, y)");
  for (const auto& f : cand.psi)
    if (f.vars() != base) throw DimensionMismatch("psi must be a field over (x, y)");
}

double divergence(const FieldChart& chart, const FieldHJCandidate& cand, const Vector& xy) {
  double d = 0.0;
  for (int i = 0; i < chart.m; ++i) d += cand.w[static_cast<std::size_t>(i)].gradient(xy)[i];
  return d;
}

double lag_residual_at(const FieldTheory& theory, const FieldHJCandidate& cand, const Vector& xy, const Vector& psi) {
  const FieldChart& c = theory.chart();
  const Vector s = induced_section(c, cand, xy);
  return divergence(c, cand, xy) + psi.dot(s) - theory.lagrangian().value(join(xy, psi));
}

double ham_residual_at(const SmoothFunction& h, const FieldChart& c, const FieldHJCandidate& cand, const Vector& xy,
                       const Vector& s) {
  return divergence(c, cand, xy) + h(join(xy, s));
}

ResidualReport make_report(const std::string& op, double tolerance) {
  ResidualReport r;
  r.op = op;
  r.tolerance = tolerance;
  return r;
}

void check_node(const FieldChart& c, const Vector& xy) {
  if (xy.size() != c.m + c.n) throw DimensionMismatch("grid nodes must be points of (x, y)");
}

}  // namespace

ResidualReport lag_field_hj_residual(const FieldTheory& theory, const FieldHJCandidate& cand,
                                     const std::vector<Vector>& nodes, double tolerance) {
  const FieldChart& c = theory.chart();
  check_candidate(c, cand);
  if (cand.psi.empty()) throw Error("the Lagrangian field HJ residual needs a jet field psi");
  ResidualReport out = make_report("lag_field_hj_residual", tolerance);
  for (const Vector& xy : nodes) {
    check_node(c, xy);
    try {
      Vector psi(c.mn());
      for (int r = 0; r < c.mn(); ++r) psi[r] = cand.psi[static_cast<std::size_t>(r)].value(xy);
      const double r = lag_residual_at(theory, cand, xy, psi);
      out.add({xy, Vector::Constant(1, r), std::abs(r)});
    } catch (const Error& e) {
      out.add_skip(xy, e.what());
    }
  }
  return out;
}

nlohmann::ordered_json HamFieldHJReport::to_json() const {
  nlohmann::ordered_json j = residual.to_json();
  if (section_min.size() > 0) {
    j["section_min"] = vector_json(section_min);
    j["section_max"] = vector_json(section_max);
  }
  return j;
}

HamFieldHJReport ham_field_hj_residual(const FieldTheory& theory, const FieldHJCandidate& cand,
                                       const std::vector<Vector>& nodes, double tolerance) {
  const FieldChart& c = theory.chart();
  check_candidate(c, cand);
  HamFieldHJReport out;
  out.residual = make_report("ham_field_hj_residual", tolerance);
  for (const Vector& xy : nodes) {
    check_node(c, xy);
    try {
      const Vector s = induced_section(c, cand, xy);
      const double r = ham_residual_at(theory.hamiltonian(), c, cand, xy, s);
      out.residual.add({xy, Vector::Constant(1, r), std::abs(r)});
      if (out.section_min.size() == 0) {
        out.section_min = s;
        out.section_max = s;
      } else {
        out.section_min = out.section_min.cwiseMin(s);
        out.section_max = out.section_max.cwiseMax(s);
      }
    } catch (const Error& e) {
      out.residual.add_skip(xy, e.what());
    }
  }
  return out;
}

ResidualReport field_legendre_consistency(const FieldTheory& lagrangian, const FieldHJCandidate& cand,
                                          const std::vector<Vector>& nodes, double tolerance,
                                          const FieldTheory* hamiltonian) {
  const FieldChart& c = lagrangian.chart();
  check_candidate(c, cand);
  if (hamiltonian && (hamiltonian->m() != c.m || hamiltonian->n() != c.n))
    throw DimensionMismatch("the two theories have different dimensions");
  ResidualReport out = make_report("field_legendre_consistency", tolerance);
  for (const Vector& xy : nodes) {
    check_node(c, xy);
    try {
      const Vector s = induced_section(c, cand, xy);
      const Vector v = field_legendre_inverse(lagrangian, join(xy, s)).tail(c.mn());
      const double rl = lag_residual_at(lagrangian, cand, xy, v);
      const double rh = hamiltonian ? ham_residual_at(hamiltonian->hamiltonian(), c, cand, xy, s)
                                    : divergence(c, cand, xy) + s.dot(v) - lagrangian.lagrangian().value(join(xy, v));
      Vector both(2);
      both << rl, rh;
      out.add({xy, both, std::abs(rl - rh)});
    } catch (const Error& e) {
      out.add_skip(xy, e.what());
    }
  }
  return out;
}

Vector ham_field_residual_gradient(const FieldTheory& theory, const FieldHJCandidate& cand, const Vector& xy) {
  const FieldChart& c = theory.chart();
  check_candidate(c, cand);
  check_node(c, xy);
  const Vector s = induced_section(c, cand, xy);
  const Vector gh = theory.hamiltonian().gradient(join(xy, s));
  Vector out = gh.segment(c.m, c.n);
  for (int i = 0; i < c.m; ++i) {
    const Matrix hw = cand.w[static_cast<std::size_t>(i)].hessian(xy);
    for (int b = 0; b < c.n; ++b) {
      out[b] += hw(i, c.m + b);
      for (int a = 0; a < c.n; ++a) out[b] += gh[c.m + c.n + c.jet_index(a, i)] * hw(c.m + a, c.m + b);
    }
  }
  return out;
}

FieldTheory field_from_mechanics(const HamiltonianSystem& sys) {
  const int n = sys.n();
  const SmoothFunction h = sys.hamiltonian();
  if (const ScalarField* f = h.field()) {
    std::map<std::string, std::string, std::less<>> names;
    for (int a = 1; a <= n; ++a) {
      names["q" + std::to_string(a)] = "y" + std::to_string(a);
      names["p" + std::to_string(a)] = "p" + std::to_string(a) + "_1";
    }
    return FieldTheory::from_hamiltonian(1, n, f->rename(names).over(FieldChart(1, n).hamiltonian_vars()));
  }
  const Eigen::Index dim = 1 + 2 * n;
  auto value = [h](const Vector& z) { return h(z.tail(z.size() - 1)); };
  auto gradient = [h](const Vector& z) -> Vector { return join(Vector::Zero(1), h.gradient(z.tail(z.size() - 1))); };
  SmoothFunction::HessFn hessian;
  if (h.has_hessian())
    hessian = [h, dim](const Vector& z) -> Matrix {
      Matrix out = Matrix::Zero(dim, dim);
      out.bottomRightCorner(dim - 1, dim - 1) = h.hessian(z.tail(dim - 1));
      return out;
    };
  return FieldTheory::from_hamiltonian(1, n, SmoothFunction(dim, value, gradient, hessian));
}

nlohmann::ordered_json MechanicsReductionReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "mechanics_reduction";
  j["value_defect"] = value.to_json();
  j["gradient_defect"] = gradient.to_json();
  j["status"] = to_string(status());
  return j;
}

MechanicsReductionReport mechanics_reduction_defect(const HamiltonianSystem& sys, const GeneratingScalar& s,
                                                    double energy, const std::vector<Vector>& samples,
                                                    double tolerance) {
  const int n = sys.n();
  const FieldTheory theory = field_from_mechanics(sys);
  const FieldChart& c = theory.chart();
  std::map<std::string, std::string, std::less<>> names;
  for (int a = 1; a <= n; ++a) names["q" + std::to_string(a)] = "y" + std::to_string(a);
  const Expression w = s.field().rename(names).expression() - Expression::number(energy) * Expression::variable("x1");
  FieldHJCandidate cand{{ScalarField::from_expression(w, c.total_vars())}, {}};
  const OneFormSection alpha = s.differential();

  MechanicsReductionReport out;
  out.value = make_report("reduction_value_defect", tolerance);
  out.gradient = make_report("reduction_gradient_defect", tolerance);
  for (const Vector& q : samples) {
    if (q.size() != n) throw DimensionMismatch("samples must be points of Q");
    try {
      const Vector xy = join(Vector::Zero(1), q);
      const double field_r = ham_residual_at(theory.hamiltonian(), c, cand, xy, induced_section(c, cand, xy));
      const double mech_r = pulled_back_hamiltonian(sys, alpha, q) - energy;
      const Vector dv = ham_field_residual_gradient(theory, cand, xy) - pulled_back_hamiltonian_gradient(sys, alpha, q);
      out.value.add({q, Vector::Constant(1, field_r - mech_r), std::abs(field_r - mech_r)});
      out.gradient.add({q, dv, dv.lpNorm<Eigen::Infinity>()});
    } catch (const Error& e) {
      out.value.add_skip(q, e.what());
      out.gradient.add_skip(q, e.what());
    }
  }
  return out;
}

Vector PeriodicGrid::nodes() const {
  if (points < 3) throw DimensionMismatch("a periodic grid needs at least 3 points");
  Vector x(points);
  for (int j = 0; j < points; ++j) x[j] = origin + j * dx();
  return x;
}

Matrix centred_difference(const Matrix& f, double dx) {
  const Eigen::Index n = f.rows();
  Matrix d(n, f.cols());
  for (Eigen::Index j = 0; j < n; ++j) d.row(j) = (f.row((j + 1) % n) - f.row((j + n - 1) % n)) / (2 * dx);
  return d;
}

Matrix spectral_difference(const Matrix& f, double length) {
  const Eigen::Index n = f.rows();
  Eigen::FFT<double> fft;
  Matrix d(n, f.cols());
  for (Eigen::Index c = 0; c < f.cols(); ++c) {
    std::vector<double> column(f.col(c).data(), f.col(c).data() + n);
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, column);
    for (Eigen::Index k = 0; k < n; ++k) {
      // Signed wavenumber; the Nyquist mode of an even grid has no derivative.
      const Eigen::Index ks = k <= (n - 1) / 2 ? k : k - n;
      const double w = (n % 2 == 0 && k == n / 2) ? 0.0 : 2 * std::numbers::pi * static_cast<double>(ks) / length;
      spectrum[static_cast<std::size_t>(k)] *= std::complex<double>(0.0, w);
    }
    std::vector<double> out;
    fft.inv(out, spectrum);
    d.col(c) = Eigen::Map<const Vector>(out.data(), n);
  }
  return d;
}

FieldState sample_field_data(const FieldChart& chart, const PeriodicGrid& grid, const std::vector<std::string>& y,
                             const std::vector<std::string>& p0, const std::vector<std::string>& p1) {
  const int n = chart.n;
  if (static_cast<int>(y.size()) != n || static_cast<int>(p0.size()) != n || static_cast<int>(p1.size()) != n)
    throw DimensionMismatch("initial data needs n expressions for each of y, p0, p1");
  const Vector x = grid.nodes();
  const AliasMap aliases{{"x2", "x"}};
  auto sample = [&](const std::vector<std::string>& texts) {
    Matrix out(grid.points, n);
    for (int a = 0; a < n; ++a) {
      ScalarField f = ScalarField::compile(texts[static_cast<std::size_t>(a)], {"x"}, aliases);
      for (int j = 0; j < grid.points; ++j) out(j, a) = f.value(Vector::Constant(1, x[j]));
    }
    return out;
  };
  return FieldState{sample(y), sample(p0), sample(p1)};
}

namespace {

// Pointwise pieces of the De Donder-Weyl right-hand side.
struct FieldRates {
  FieldState rate;
  Vector energy_density;
  Matrix constraint;  // dH/dp1 - D_x y
};

class DdwOperator {
 public:
  DdwOperator(const FieldTheory& theory, const Vector& x, double dx) : h_(theory.hamiltonian()), x_(x), dx_(dx), n_(theory.n()) {
    for (int a = 0; a < n_; ++a) p1_rows_.push_back(2 + n_ + 2 * a + 1);
  }

  // H is a function of (t, x, y1..yn, p1_1, p1_2, ..., pn_1, pn_2).
  Vector point(double t, Eigen::Index j, const FieldState& s) const {
    Vector z(2 + 3 * n_);
    z[0] = t;
    z[1] = x_[j];
    for (int a = 0; a < n_; ++a) {
      z[2 + a] = s.y(j, a);
      z[2 + n_ + 2 * a] = s.p0(j, a);
      z[2 + n_ + 2 * a + 1] = s.p1(j, a);
    }
    return z;
  }

  FieldRates operator()(double t, const FieldState& s, bool with_rates = true) const {
    const Eigen::Index np = x_.size();
    const int n = n_;
    const int off = 2 + n;
    FieldRates out;
    Matrix hp0(np, n), hp1(np, n), hy(np, n);
    std::vector<Matrix> rows(static_cast<std::size_t>(np));  // the p1 rows of the Hessian of H
    out.energy_density.resize(np);
    for (Eigen::Index j = 0; j < np; ++j) {
      const Vector z = point(t, j, s);
      Vector g;
      if (!with_rates) {
        g = h_.gradient(z);
      } else if (const ScalarField* f = h_.field()) {
        f->partial_hessian(z, p1_rows_, g, rows[static_cast<std::size_t>(j)]);
      } else {
        g = h_.gradient(z);
        const Matrix full = h_.hessian(z);
        Matrix& r = rows[static_cast<std::size_t>(j)];
        r.resize(n, full.cols());
        for (int a = 0; a < n; ++a) r.row(a) = full.row(p1_rows_[static_cast<std::size_t>(a)]);
      }
      double e = h_(z);
      for (int a = 0; a < n; ++a) {
        hy(j, a) = g[2 + a];
        hp0(j, a) = g[off + 2 * a];
        hp1(j, a) = g[off + 2 * a + 1];
        e -= s.p1(j, a) * hp1(j, a);
      }
      out.energy_density[j] = e;
    }
    out.constraint = hp1 - centred_difference(s.y, dx_);
    if (!with_rates) return out;

    out.rate.y = hp0;
    out.rate.p0 = -hy - centred_difference(s.p1, dx_);
    const Matrix dx_yt = centred_difference(hp0, dx_);
    out.rate.p1.resize(np, n);
    for (Eigen::Index j = 0; j < np; ++j) {
      const Matrix& hm = rows[static_cast<std::size_t>(j)];
      Matrix a(n, n), by(n, n), bp0(n, n);
      Vector ht(n);
      for (int r = 0; r < n; ++r) {
        ht[r] = hm(r, 0);
        for (int c = 0; c < n; ++c) {
          a(r, c) = hm(r, off + 2 * c + 1);
          by(r, c) = hm(r, 2 + c);
          bp0(r, c) = hm(r, off + 2 * c);
        }
      }
      const double cond = condition_number(a);
      if (!(cond <= kSingularVelocityHessian)) throw SingularLegendre(cond);
      const Vector rhs = dx_yt.row(j).transpose() - ht - by * out.rate.y.row(j).transpose() -
                         bp0 * out.rate.p0.row(j).transpose();
      out.rate.p1.row(j) = a.fullPivLu().solve(rhs).transpose();
    }
    return out;
  }

 private:
  SmoothFunction h_;
  Vector x_;
  double dx_;
  int n_;
  std::vector<int> p1_rows_;
};

FieldState axpy(const FieldState& s, double h, const FieldState& k) {
  return FieldState{s.y + h * k.y, s.p0 + h * k.p0, s.p1 + h * k.p1};
}

bool all_finite(const FieldState& s) { return s.y.allFinite() && s.p0.allFinite() && s.p1.allFinite(); }

}  // namespace

nlohmann::ordered_json FieldFlowResult::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "ddw_evolve";
  j["grid_points"] = x.size();
  j["t_reached"] = t_reached;
  j["aborted"] = aborted;
  j["recorded_times"] = times.size();
  j["energy_initial"] = energy.empty() ? 0.0 : energy.front();
  j["energy_drift"] = energy_drift;
  j["initial_constraint"] = initial_constraint;
  j["constraint_drift"] = constraint_drift;
  j["warnings"] = warnings;
  return j;
}

FieldFlowResult ddw_evolve(const FieldTheory& theory, const PeriodicGrid& grid, FieldState initial, double t_end,
                           double dt, const FieldEvolveOptions& options) {
  if (theory.m() != 2) throw DimensionMismatch("ddw_evolve needs a base of dimension 2 (time and one space axis)");
  const Eigen::Index np = grid.points;
  for (const Matrix* f : {&initial.y, &initial.p0, &initial.p1})
    if (f->rows() != np || f->cols() != theory.n()) throw DimensionMismatch("initial data must be points x n");
  const int steps = step_count(t_end, dt);
  const double h = steps > 0 ? t_end / steps : 0.0;
  const int stride = std::max(1, options.record_stride);

  FieldFlowResult out;
  out.x = grid.nodes();
  const double dx = grid.dx();
  if (h > dx) {
    std::ostringstream os;
    os << "time step " << h << " exceeds the grid spacing " << dx << " (CFL heuristic)";
    out.warnings.push_back(os.str());
  }
  const DdwOperator op(theory, out.x, dx);

  Matrix constraint0;
  auto observe = [&](double t, const FieldState& s) {
    const FieldRates r = op(t, s, false);
    const double e = r.energy_density.sum() * dx;
    if (constraint0.size() == 0) constraint0 = r.constraint;
    out.times.push_back(t);
    out.states.push_back(s);
    out.energy.push_back(e);
    out.energy_drift = std::max(out.energy_drift, std::abs(e - out.energy.front()));
    out.constraint_drift = std::max(out.constraint_drift, max_abs(r.constraint - constraint0));
  };

  FieldState s = std::move(initial);
  observe(0.0, s);
  {
    // Consistency of the data itself, with a derivative that does not depend on the scheme.
    const FieldRates r = op(0.0, s, false);
    const Matrix hp1 = r.constraint + centred_difference(s.y, dx);
    out.initial_constraint = max_abs(hp1 - spectral_difference(s.y, grid.length));
  }
  if (out.initial_constraint > kConstraintWarning) {
    std::ostringstream os;
    os << "initial p1 violates dH/dp1 = dy/dx by " << out.initial_constraint;
    out.warnings.push_back(os.str());
  }
  out.t_reached = 0.0;
  for (int k = 0; k < steps; ++k) {
    const double t = k * h;
    FieldState next;
    try {
      const FieldState k1 = op(t, s).rate;
      const FieldState k2 = op(t + h / 2, axpy(s, h / 2, k1)).rate;
      const FieldState k3 = op(t + h / 2, axpy(s, h / 2, k2)).rate;
      const FieldState k4 = op(t + h, axpy(s, h, k3)).rate;
      next = FieldState{s.y + h / 6 * (k1.y + 2 * k2.y + 2 * k3.y + k4.y),
                        s.p0 + h / 6 * (k1.p0 + 2 * k2.p0 + 2 * k3.p0 + k4.p0),
                        s.p1 + h / 6 * (k1.p1 + 2 * k2.p1 + 2 * k3.p1 + k4.p1)};
    } catch (const Error& e) {
      out.aborted = true;
      std::ostringstream os;
      os << "evolution stopped at t = " << t << ": " << e.what();
      out.warnings.push_back(os.str());
      break;
    }
    if (!all_finite(next)) {
      out.aborted = true;
      std::ostringstream os;
      os << "non-finite field values at t = " << t + h << "; evolution stopped";
      out.warnings.push_back(os.str());
      break;
    }
    s = std::move(next);
    out.t_reached = k + 1 == steps ? t_end : (k + 1) * h;
    if ((k + 1) % stride == 0 || k + 1 == steps) observe(out.t_reached, s);
  }
  if (out.aborted && (out.times.empty() || out.times.back() != out.t_reached)) observe(out.t_reached, s);
  return out;
}

}  // namespace hj
