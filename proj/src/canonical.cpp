#include "hj/canonical.hpp"

#include <sstream>

#include "hj/newton.hpp"

namespace hj {

std::vector<std::string> two_point_vars(int n) {
  auto v = configuration_vars(n, "q");
  auto t = configuration_vars(n, "qt");
  v.insert(v.end(), t.begin(), t.end());
  return v;
}

namespace {

Vector join(const Vector& a, const Vector& b) {
  Vector x(a.size() + b.size());
  x << a, b;
  return x;
}

// Rows `first`..`first + n - 1` of the Hessian of S at (q, qt), with the gradient.
void hessian_rows(const ScalarField& s, const Vector& x, int first, int n, Vector& grad, Matrix& rows) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = first + i;
  s.partial_hessian(x, idx, grad, rows);
}

constexpr double kDegenerateCondition = 1e12;

}  // namespace

GeneratingFunction2Point::GeneratingFunction2Point(int n, ScalarField s) : n_(n), s_(std::move(s)) {
  if (n < 1) throw DimensionMismatch("a generating function needs n >= 1");
  if (s_.arity() != 2 * n) throw DimensionMismatch("S must depend on q1..qn and qt1..qtn");
}

GeneratingFunction2Point GeneratingFunction2Point::parse(int n, const std::string& text) {
  return GeneratingFunction2Point(n, ScalarField::compile(text, two_point_vars(n)));
}

Matrix GeneratingFunction2Point::mixed_hessian(const Vector& q, const Vector& qt) const {
  Vector g;
  Matrix rows;
  hessian_rows(s_, join(q, qt), 0, n_, g, rows);
  return rows.rightCols(n_);
}

Vector induced_transform(const GeneratingFunction2Point& g, const Vector& qp, const std::optional<Vector>& qt_guess) {
  const int n = g.n();
  if (qp.size() != 2 * n) throw DimensionMismatch("induced_transform expects a (q, p) point");
  const Vector q = qp.head(n);
  const Vector p = qp.tail(n);
  auto residual = [&](const Vector& qt) -> Vector { return g.field().gradient(join(q, qt)).head(n) - p; };
  auto jacobian = [&](const Vector& qt) -> Matrix { return g.mixed_hessian(q, qt); };
  const Vector guess = qt_guess ? *qt_guess : q;
  Vector qt;
  try {
    qt = newton_solve(residual, jacobian, guess, {}, "generating-function transform").x;
  } catch (const NewtonDivergence&) {
    const double c = condition_number(g.mixed_hessian(q, guess));
    if (!(c <= kDegenerateCondition)) throw DegenerateGenerator(c);
    throw;
  }
  const double c = condition_number(g.mixed_hessian(q, qt));
  if (!(c <= kDegenerateCondition)) throw DegenerateGenerator(c);
  return join(qt, -g.field().gradient(join(q, qt)).tail(n));
}

Vector inverse_transform(const GeneratingFunction2Point& g, const Vector& qtpt, const std::optional<Vector>& q_guess) {
  const int n = g.n();
  if (qtpt.size() != 2 * n) throw DimensionMismatch("inverse_transform expects a (qt, pt) point");
  const Vector qt = qtpt.head(n);
  const Vector pt = qtpt.tail(n);
  auto residual = [&](const Vector& q) -> Vector { return -g.field().gradient(join(q, qt)).tail(n) - pt; };
  auto jacobian = [&](const Vector& q) -> Matrix { return -g.mixed_hessian(q, qt).transpose(); };
  Vector q = newton_solve(residual, jacobian, q_guess ? *q_guess : qt, {}, "inverse generating-function transform").x;
  const double c = condition_number(g.mixed_hessian(q, qt));
  if (!(c <= kDegenerateCondition)) throw DegenerateGenerator(c);
  return join(q, g.field().gradient(join(q, qt)).head(n));
}

CanonicalMap::CanonicalMap(int n, std::function<Vector(const Vector&)> forward) : n_(n), forward_(std::move(forward)) {}

CanonicalMap CanonicalMap::from_generator(const GeneratingFunction2Point& g, TransformGuess guess) {
  return CanonicalMap(g.n(), [g, guess](const Vector& qp) {
    return guess ? induced_transform(g, qp, guess(qp)) : induced_transform(g, qp);
  });
}

ResidualReport symplectomorphism_defect(const CanonicalMap& map, const std::vector<Vector>& samples,
                                        double tolerance) {
  const int n = map.n();
  const Matrix omega = canonical_symplectic_matrix(n);
  constexpr double h = 1e-6;
  ResidualReport report;
  report.op = "symplectomorphism_defect";
  report.tolerance = tolerance;
  for (const Vector& x : samples) {
    try {
      Matrix j(2 * n, 2 * n);
      for (int i = 0; i < 2 * n; ++i) {
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        j.col(i) = (map(xp) - map(xm)) / (2 * h);
      }
      Matrix d = j.transpose() * omega * j - omega;
      report.add({x, Eigen::Map<const Vector>(d.data(), d.size()), max_abs(d)});
    } catch (const Error& e) {
      report.add_skip(x, e.what());
    }
  }
  return report;
}

std::string to_string(EquilibriumBlock b) {
  switch (b) {
    case EquilibriumBlock::Momenta: return "momenta";
    case EquilibriumBlock::Positions: return "positions";
    case EquilibriumBlock::Both: return "both";
  }
  return "unknown";
}

nlohmann::ordered_json EquilibriumReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = "equilibrium_defect";
  j["asserted_block"] = to_string(block);
  j["asserted"] = asserted.to_json();
  if (block != EquilibriumBlock::Both) {
    nlohmann::ordered_json other = not_asserted.to_json();
    other["asserted"] = false;
    j["not_asserted"] = other;
  }
  j["skipped_states"] = skipped_states;
  j["notes"] = notes;
  j["status"] = to_string(status());
  return j;
}

EquilibriumReport equilibrium_defect(const GeneratingFunction2Point& g, const HamiltonianSystem& sys,
                                     const std::vector<Vector>& starts, const EquilibriumOptions& options) {
  const int n = g.n();
  if (sys.n() != n) throw DimensionMismatch("generator and Hamiltonian have different dimensions");
  EquilibriumReport out;
  out.block = options.block;
  out.asserted.op = "equilibrium_drift_" + to_string(options.block);
  out.asserted.tolerance = options.tolerance;
  out.not_asserted.op = options.block == EquilibriumBlock::Momenta ? "equilibrium_drift_positions"
                                                                   : "equilibrium_drift_momenta";
  out.not_asserted.tolerance = options.tolerance;

  const VectorFieldSection z = hamiltonian_vector_field(sys);
  FlowOptions fo;
  fo.estimate_errors = false;
  fo.record_stride = options.record_stride;
  fo.truncate_on_failure = true;
  std::size_t truncated = 0;

  for (const Vector& start : starts) {
    Vector first;
    try {
      first = options.guess ? induced_transform(g, start, options.guess(start)) : induced_transform(g, start);
    } catch (const Error& e) {
      out.asserted.add_skip(start, e.what());
      out.not_asserted.add_skip(start, e.what());
      continue;
    }
    FlowResult flow = flow_rk4(z, start, options.t_end, options.dt, fo);
    if (flow.truncated) ++truncated;

    // Warm start: linear extrapolation of qt from the last two good states.
    Vector last = first.head(n), prev = last;
    double t_last = 0.0, t_prev = 0.0;
    Vector pos_drift = Vector::Zero(n), mom_drift = Vector::Zero(n);
    for (std::size_t k = 1; k < flow.states.size(); ++k) {
      const double t = flow.times[k];
      Vector guess = last;
      if (t_last > t_prev) guess += (last - prev) * ((t - t_last) / (t_last - t_prev));
      Vector cur;
      try {
        cur = induced_transform(g, flow.states[k], guess);
      } catch (const Error&) {
        ++out.skipped_states;
        continue;
      }
      prev = last;
      t_prev = t_last;
      last = cur.head(n);
      t_last = t;
      Vector dq = cur.head(n) - first.head(n), dp = cur.tail(n) - first.tail(n);
      if (dq.lpNorm<Eigen::Infinity>() > pos_drift.lpNorm<Eigen::Infinity>()) pos_drift = dq;
      if (dp.lpNorm<Eigen::Infinity>() > mom_drift.lpNorm<Eigen::Infinity>()) mom_drift = dp;
    }
    auto sample = [&](const Vector& v) { return SampleResult{start, v, v.lpNorm<Eigen::Infinity>()}; };
    switch (options.block) {
      case EquilibriumBlock::Momenta:
        out.asserted.add(sample(mom_drift));
        out.not_asserted.add(sample(pos_drift));
        break;
      case EquilibriumBlock::Positions:
        out.asserted.add(sample(pos_drift));
        out.not_asserted.add(sample(mom_drift));
        break;
      case EquilibriumBlock::Both: {
        Vector both = join(pos_drift, mom_drift);
        out.asserted.add(sample(both));
        break;
      }
    }
  }
  if (options.block != EquilibriumBlock::Both)
    out.notes.push_back("the " + std::string(options.block == EquilibriumBlock::Momenta ? "position" : "momentum") +
                        " block of the transformed coordinates is reported but not asserted");
  if (out.skipped_states > 0) {
    std::ostringstream os;
    os << out.skipped_states << " trajectory states could not be transformed (degenerate generator) and were skipped";
    out.notes.push_back(os.str());
  }
  if (truncated > 0) {
    std::ostringstream os;
    os << truncated << " trajectories stopped early at a domain boundary";
    out.notes.push_back(os.str());
  }
  return out;
}

ParamFamily GeneratingFamily::differential() const {
  std::vector<ScalarField> comps;
  const auto base = configuration_vars(n);
  for (const auto& v : base) comps.push_back(s.partial(v));
  return ParamFamily(base, param_names, std::move(comps));
}

GeneratingFamily make_generating_family(int n, const std::string& text, std::vector<std::string> param_names) {
  if (static_cast<int>(param_names.size()) != n) throw DimensionMismatch("a complete solution has n parameters");
  auto vars = configuration_vars(n);
  vars.insert(vars.end(), param_names.begin(), param_names.end());
  return GeneratingFamily{n, ScalarField::compile(text, vars), std::move(param_names)};
}

GeneratingFunction2Point complete_to_canonical(const GeneratingFamily& fam) {
  std::map<std::string, std::string, std::less<>> names;
  for (int i = 0; i < fam.n; ++i) names[fam.param_names[i]] = "qt" + std::to_string(i + 1);
  return GeneratingFunction2Point(fam.n, fam.s.rename(names).over(two_point_vars(fam.n)));
}

GeneratingFamily canonical_to_complete(const GeneratingFunction2Point& g, std::vector<std::string> param_names) {
  const int n = g.n();
  if (param_names.empty()) param_names = configuration_vars(n, "l");
  if (static_cast<int>(param_names.size()) != n) throw DimensionMismatch("a complete solution has n parameters");
  std::map<std::string, std::string, std::less<>> names;
  for (int i = 0; i < n; ++i) names["qt" + std::to_string(i + 1)] = param_names[i];
  auto vars = configuration_vars(n);
  vars.insert(vars.end(), param_names.begin(), param_names.end());
  return GeneratingFamily{n, g.field().rename(names).over(vars), std::move(param_names)};
}

}  // namespace hj
