#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>

#include "config.hpp"
#include "hj/canonical.hpp"
#include "hj/cli.hpp"
#include "hj/field_theory.hpp"
#include "hj/higher_order.hpp"
#include "hj/lagrangian.hpp"

namespace hj::cli {

namespace {

constexpr const char* kVersion = "1.0.0";

using json = nlohmann::ordered_json;

struct Check {
  std::string name;
  std::optional<double> max_defect;
  double tolerance = 0.0;
  Status status = Status::Inconclusive;
  json detail;

  json to_json() const {
    json j;
    j["name"] = name;
    j["max_defect"] = max_defect ? json(*max_defect) : json(nullptr);
    j["tolerance"] = tolerance;
    j["status"] = to_string(status);
    j["detail"] = detail;
    return j;
  }
};

struct Context {
  const Config& config;
  const Request& request;
  Section system;
  Section solution;
  Section check;
  std::uint64_t seed = 1;
  json sampling = json::object();
  json results = json::object();
  std::vector<Check> checks;
  std::vector<std::string> notes;
  std::vector<std::string> files;

  double tolerance(double fallback) const {
    return request.tolerance ? *request.tolerance : check.number("tolerance", fallback);
  }

  void add(const std::string& name, const ResidualReport& r) {
    checks.push_back({name, r.max_norm, r.tolerance, r.status(), r.to_json()});
  }

  void add_error(const std::string& name, const std::string& message) {
    json d;
    d["error"] = message;
    checks.push_back({name, std::nullopt, 0.0, Status::Fail, d});
  }
};

// ---------------------------------------------------------------------------
// Plumbing shared by the verbs.

Vector join(const Vector& a, const Vector& b) {
  Vector x(a.size() + b.size());
  x << a, b;
  return x;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::string number_text(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void write_csv(Context& c, const std::string& file, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::filesystem::path path = c.request.out / file;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << number_text(row[i]);
    out << "\n";
  }
  c.files.push_back(file);
}

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

void require_type(const Context& c, std::initializer_list<std::string_view> types) {
  const std::string type = c.system.string("type");
  for (auto t : types)
    if (type == t) return;
  std::string list;
  for (auto t : types) list += (list.empty() ? "" : " or ") + std::string("\"") + std::string(t) + "\"";
  c.system.fail("type", "verb " + c.request.verb + " needs a system of type " + list + ", got \"" + type + "\"");
}

int dimension(const Section& s, std::string_view key, int lo, int hi) {
  const long long v = s.integer(key);
  if (v < lo || v > hi) s.fail(key, "must be between " + std::to_string(lo) + " and " + std::to_string(hi));
  return static_cast<int>(v);
}

Vector box_bound(const Context& c, std::string_view key, Eigen::Index dim) {
  std::vector<double> v = c.check.numbers(key);
  if (static_cast<Eigen::Index>(v.size()) != dim)
    c.check.fail(key, "needs " + std::to_string(dim) + " entries, got " + std::to_string(v.size()));
  return Eigen::Map<const Vector>(v.data(), dim);
}

/// Sample points in the [check] box: a regular grid by default, or seeded
/// uniform random points when a sample count is requested.
std::vector<Vector> base_samples(Context& c, Eigen::Index dim, std::string_view prefix = "") {
  const std::string lo_key = std::string(prefix) + "lo", hi_key = std::string(prefix) + "hi";
  const std::string counts_key = std::string(prefix) + "counts";
  const Vector lo = box_bound(c, lo_key, dim), hi = box_bound(c, hi_key, dim);
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(lo[i] <= hi[i])) c.check.fail(lo_key, "lower bound exceeds upper bound");
  const long long random = c.request.samples ? *c.request.samples : c.check.integer("samples", 0);
  json s;
  if (random > 0) {
    s["kind"] = "random";
    s["count"] = random;
    s["prng"] = "mt19937_64";
    s["seed"] = c.seed;
    c.sampling[prefix.empty() ? "base" : std::string(prefix)] = s;
    return random_points(lo, hi, static_cast<int>(random), c.seed);
  }
  std::vector<double> counts = c.check.numbers(counts_key);
  if (counts.size() == 1 && dim > 1) counts.assign(static_cast<std::size_t>(dim), counts[0]);
  if (static_cast<Eigen::Index>(counts.size()) != dim) c.check.fail(counts_key, "needs one count per coordinate");
  Grid g{lo, hi, {}};
  for (double n : counts) {
    if (!(n >= 1) || n != std::floor(n)) c.check.fail(counts_key, "counts must be positive integers");
    g.counts.push_back(static_cast<int>(n));
  }
  s["kind"] = "grid";
  s["counts"] = g.counts;
  c.sampling[prefix.empty() ? "base" : std::string(prefix)] = s;
  return g.points();
}

struct ParamGrid {
  std::vector<std::string> names;
  std::vector<Vector> values;  // one entry (empty vector) when there are no parameters
};

/// Parameters come from [solution] params with boxes in [solution.box]; the
/// box is sampled by param_counts evenly spaced values per parameter.
ParamGrid param_grid(Context& c) {
  ParamGrid p;
  if (c.solution.has("params")) p.names = c.solution.strings("params");
  if (p.names.empty()) {
    p.values.push_back(Vector());
    return p;
  }
  const Section box = c.solution.table("box");
  const long long count = c.check.integer("param_counts", 3);
  if (count < 1) c.check.fail("param_counts", "must be positive");
  std::vector<std::vector<double>> axes;
  for (const auto& name : p.names) {
    if (!box.has(name)) box.fail(name, "parameter '" + name + "' needs a [lo, hi] box");
    std::vector<double> b = box.numbers(name);
    if (b.size() == 1) b.push_back(b[0]);
    if (b.size() != 2 || !(b[0] <= b[1])) box.fail(name, "a parameter box is [lo, hi] with lo <= hi");
    std::vector<double> axis;
    const int k = b[0] == b[1] ? 1 : static_cast<int>(count);
    for (int i = 0; i < k; ++i) axis.push_back(k == 1 ? b[0] : b[0] + (b[1] - b[0]) * i / (k - 1));
    axes.push_back(axis);
  }
  std::vector<std::size_t> idx(axes.size(), 0);
  while (true) {
    Vector v(static_cast<Eigen::Index>(axes.size()));
    for (std::size_t i = 0; i < axes.size(); ++i) v[static_cast<Eigen::Index>(i)] = axes[i][idx[i]];
    p.values.push_back(v);
    std::size_t d = axes.size();
    while (d > 0 && ++idx[d - 1] == axes[d - 1].size()) idx[--d] = 0;
    if (d == 0) break;
  }
  json s;
  s["names"] = p.names;
  s["values"] = json::array();
  for (const Vector& v : p.values) s["values"].push_back(to_std(v));
  c.sampling["params"] = s;
  return p;
}

std::vector<ScalarField> bind_all(const std::vector<ScalarField>& fields, const ParamGrid& p, const Vector& values,
                                  const std::vector<std::string>& base) {
  if (p.names.empty()) return fields;
  std::vector<ScalarField> out;
  for (const auto& f : fields) out.push_back(f.bind(p.names, std::span<const double>(values.data(), values.size())).over(base));
  return out;
}

/// Merge a per-parameter report into the running total; the argmax sample
/// is extended by the parameter values.
void absorb(ResidualReport& total, const ResidualReport& part, const Vector& params) {
  if (total.op.empty()) {
    total.op = part.op;
    total.tolerance = part.tolerance;
  }
  total.n_samples += part.n_samples;
  total.n_skipped += part.n_skipped;
  if (part.argmax_sample && (!total.argmax_sample || part.max_norm > total.max_norm)) {
    total.max_norm = part.max_norm;
    total.argmax_sample = join(*part.argmax_sample, params);
  }
  for (const auto& n : part.notes)
    if (std::find(total.notes.begin(), total.notes.end(), n) == total.notes.end()) total.notes.push_back(n);
}

ResidualReport named(std::string op, double tolerance) {
  ResidualReport r;
  r.op = std::move(op);
  r.tolerance = tolerance;
  return r;
}

/// Components of a 1-form over (q, params): either alpha = [...] or the
/// differential of S.
std::vector<ScalarField> one_form_components(Context& c, int n, const ParamGrid& p) {
  const auto base = configuration_vars(n);
  const auto vars = concat(base, p.names);
  if (c.solution.has("alpha")) {
    auto texts = c.solution.strings("alpha");
    if (static_cast<int>(texts.size()) != n) c.solution.fail("alpha", "needs n = " + std::to_string(n) + " components");
    return compile_expressions(c.solution, "alpha", texts, vars);
  }
  if (c.solution.has("S")) {
    ScalarField s = compile_expression(c.solution, "S", c.solution.string("S"), vars);
    std::vector<ScalarField> out;
    for (const auto& v : base) out.push_back(s.partial(v));
    return out;
  }
  c.solution.fail("", "needs alpha = [...] or a generating function S");
}

HamiltonianSystem hamiltonian_system(Context& c, int n) {
  return HamiltonianSystem(n, compile_expression(c.system, "H", c.system.string("H"), phase_space_vars(n)));
}

TrajectoryOptions trajectory_options(const Context& c) {
  TrajectoryOptions t;
  t.dt = c.check.number("dt", 1e-3);
  const std::string integrator = c.check.optional_string("integrator").value_or("rk4");
  if (integrator != "rk4" && integrator != "midpoint") c.check.fail("integrator", "must be \"rk4\" or \"midpoint\"");
  t.midpoint = integrator == "midpoint";
  return t;
}

std::vector<Vector> starts_of(const Context& c, Eigen::Index dim) {
  if (!c.check.has("starts")) return {};
  auto starts = c.check.points("starts");
  for (const auto& s : starts)
    if (s.size() != dim) c.check.fail("starts", "each start needs " + std::to_string(dim) + " coordinates");
  return starts;
}

// ---------------------------------------------------------------------------
// Verbs.

void verb_check_hj(Context& c) {
  require_type(c, {"hamiltonian"});
  const int n = dimension(c.system, "n", 1, 8);
  const HamiltonianSystem sys = hamiltonian_system(c, n);
  const ParamGrid p = param_grid(c);
  const auto comps = one_form_components(c, n, p);
  const auto samples = base_samples(c, n);
  const double tol = c.tolerance(1e-8);
  const auto starts = starts_of(c, n);
  const std::optional<double> t_end = c.check.optional_number("T");
  const double inv_tol = c.check.number("invariance_tolerance", 1e-6);
  const TrajectoryOptions traj = trajectory_options(c);

  ResidualReport closed, dh, gen, inv;
  for (const Vector& lambda : p.values) {
    const OneFormSection alpha = OneFormSection::from_fields(bind_all(comps, p, lambda, configuration_vars(n)));
    StandardHJReport s = standard_hj_residual(sys, alpha, samples, tol);
    absorb(closed, s.closedness, lambda);
    absorb(dh, s.dh, lambda);
    absorb(gen, generalized_hj_residual(sys, alpha, samples, tol), lambda);
    if (t_end && !starts.empty()) absorb(inv, invariance_defect(sys, alpha, starts, *t_end, inv_tol, traj), lambda);
  }
  c.add("closedness_defect", closed);
  c.add("dH_defect", dh);
  c.add("generalized_defect", gen);
  if (t_end && !starts.empty()) c.add("invariance_defect", inv);
}

void verb_check_lag_hj(Context& c) {
  require_type(c, {"lagrangian"});
  const int n = dimension(c.system, "n", 1, 8);
  const LagrangianSystem sys(n, compile_expression(c.system, "L", c.system.string("L"), velocity_phase_vars(n)));
  const ParamGrid p = param_grid(c);
  const auto base = configuration_vars(n);
  const auto vars = concat(base, p.names);
  auto x_texts = c.solution.strings("X");
  if (static_cast<int>(x_texts.size()) != n) c.solution.fail("X", "needs n = " + std::to_string(n) + " components");
  const auto x_comps = compile_expressions(c.solution, "X", x_texts, vars);
  std::optional<ScalarField> s_field;
  if (c.solution.has("S")) s_field = compile_expression(c.solution, "S", c.solution.string("S"), vars);
  const auto samples = base_samples(c, n);
  const double tol = c.tolerance(1e-8);
  const bool relation = c.check.boolean("relation", true);
  const double rel_tol = c.check.number("relation_tolerance", 1e-7);
  const HamiltonianSystem h = hamiltonian_from_lagrangian(sys);

  ResidualReport omega, de, gen, eq4, rel_closed, rel_dh;
  for (const Vector& lambda : p.values) {
    const auto x = VectorFieldSection::from_fields(bind_all(x_comps, p, lambda, base));
    std::optional<ScalarField> s;
    if (s_field) s = bind_all({*s_field}, p, lambda, base)[0];
    LagHJReport r = lag_hj_residuals(sys, x, samples, tol, s ? &*s : nullptr);
    absorb(omega, r.pullback_omega, lambda);
    absorb(de, r.de, lambda);
    absorb(gen, r.generalized, lambda);
    if (r.eq4) absorb(eq4, *r.eq4, lambda);
    if (relation) {
      StandardHJReport st = standard_hj_residual(h, to_one_form(sys, x), samples, rel_tol);
      absorb(rel_closed, st.closedness, lambda);
      absorb(rel_dh, st.dh, lambda);
    }
  }
  c.add("pullback_omega_defect", omega);
  c.add("dE_defect", de);
  c.add("generalized_defect", gen);
  if (s_field) c.add("eq4_defect", eq4);
  if (relation) {
    c.add("legendre_closedness_defect", rel_closed);
    c.add("legendre_dH_defect", rel_dh);
  }
}

void verb_reconstruct(Context& c) {
  require_type(c, {"hamiltonian"});
  const int n = dimension(c.system, "n", 1, 8);
  const HamiltonianSystem sys = hamiltonian_system(c, n);
  const ParamGrid p = param_grid(c);
  const auto comps = one_form_components(c, n, p);
  const auto starts = starts_of(c, n);
  if (starts.empty()) c.check.fail("starts", "reconstruct needs at least one start");
  const double t_end = c.check.number("T");
  const TrajectoryOptions traj = trajectory_options(c);
  const double gap_tol = c.request.tolerance ? *c.request.tolerance : c.check.number("gap_tolerance", 1e-6);

  std::vector<std::string> header{"t"};
  for (const auto& v : phase_space_vars(n)) header.push_back("lifted_" + v);
  for (const auto& v : phase_space_vars(n)) header.push_back("direct_" + v);

  ResidualReport gap = named("reconstruct_max_gap", gap_tol);
  json runs = json::array();
  for (std::size_t li = 0; li < p.values.size(); ++li) {
    const Vector& lambda = p.values[li];
    const OneFormSection alpha = OneFormSection::from_fields(bind_all(comps, p, lambda, configuration_vars(n)));
    for (std::size_t si = 0; si < starts.size(); ++si) {
      const Vector key = join(starts[si], lambda);
      try {
        ReconstructResult r = reconstruct(sys, alpha, starts[si], t_end, traj);
        gap.add({key, Vector::Constant(1, r.max_gap), r.max_gap});
        if (r.partial) gap.notes.push_back(r.note);
        std::vector<std::vector<double>> rows;
        const std::size_t len = std::min(r.lifted_curve.size(), r.direct_curve.states.size());
        for (std::size_t k = 0; k < len; ++k) {
          std::vector<double> row{r.base_curve.times[k]};
          for (double v : to_std(r.lifted_curve[k])) row.push_back(v);
          for (double v : to_std(r.direct_curve.states[k])) row.push_back(v);
          rows.push_back(std::move(row));
        }
        const std::string file = "reconstruct_" + std::to_string(li) + "_" + std::to_string(si) + ".csv";
        write_csv(c, file, header, rows);
        json j = r.to_json();
        j["start"] = to_std(starts[si]);
        j["params"] = to_std(lambda);
        j["csv"] = file;
        runs.push_back(j);
      } catch (const Error& e) {
        gap.add_skip(key, e.what());
      }
    }
  }
  c.results["runs"] = runs;
  c.add("reconstruct_max_gap", gap);
}

void verb_complete(Context& c) {
  require_type(c, {"hamiltonian"});
  const int n = dimension(c.system, "n", 1, 8);
  const HamiltonianSystem sys = hamiltonian_system(c, n);
  const ParamGrid p = param_grid(c);
  if (static_cast<int>(p.names.size()) != n) c.solution.fail("params", "a complete solution has n parameters");
  const auto base = configuration_vars(n);
  const auto comps = one_form_components(c, n, p);
  const ParamFamily family(base, p.names, comps);
  std::vector<Vector> nodes;
  for (const Vector& q : base_samples(c, n))
    for (const Vector& lambda : p.values) nodes.push_back(join(q, lambda));
  CompleteSolutionOptions o;
  o.tolerance = c.tolerance(1e-8);
  o.drift_tolerance = c.check.number("drift_tolerance", 1e-7);
  o.t_end = c.check.number("T", 1.0);
  o.dt = c.check.number("dt", 1e-2);
  const CompleteSolutionReport r = complete_solution_check(sys, family, nodes, o);
  c.add("closedness_defect", r.closedness);
  c.add("dH_defect", r.dh);
  json jac;
  jac["min_abs_det"] = r.min_abs_det;
  jac["singular_nodes"] = r.singular_nodes;
  // max_defect carries min |det|, which must stay above the singularity threshold
  c.checks.push_back({"family_jacobian", r.min_abs_det, kSingularDeterminant,
                      r.singular_nodes.empty() ? Status::Pass : Status::Fail, jac});
  c.add("constants_of_motion_drift", r.constants_drift);
  for (const auto& note : r.notes) c.notes.push_back(note);
}

void verb_canonical(Context& c) {
  const Section can = c.config.section("canonical");
  if (!can.present()) throw ConfigError("verb canonical needs a [canonical] table", 0);
  const int n = can.has("n") ? dimension(can, "n", 1, 8) : (c.system.has("n") ? dimension(c.system, "n", 1, 8) : 1);
  const auto qp_vars = phase_space_vars(n);

  std::optional<GeneratingFamily> family;
  std::vector<std::string> param_names;
  GeneratingFunction2Point g = [&] {
    if (can.has("S2"))
      return GeneratingFunction2Point(n, compile_expression(can, "S2", can.string("S2"), two_point_vars(n)));
    if (!can.has("family")) can.fail("", "needs S2 = \"...\" or family = \"...\" with params");
    param_names = can.strings("params");
    if (static_cast<int>(param_names.size()) != n) can.fail("params", "a complete solution has n parameters");
    family = GeneratingFamily{n, compile_expression(can, "family", can.string("family"),
                                                    concat(configuration_vars(n), param_names)),
                              param_names};
    return complete_to_canonical(*family);
  }();

  std::string h_text;
  const Section* h_section = &can;
  if (can.has("H")) {
    h_text = can.string("H");
  } else {
    h_text = c.system.string("H");
    h_section = &c.system;
  }
  const HamiltonianSystem sys(n, compile_expression(*h_section, "H", h_text, qp_vars));

  TransformGuess guess;
  if (can.has("guess")) {
    auto texts = can.strings("guess");
    if (static_cast<int>(texts.size()) != n) can.fail("guess", "needs n expressions in (q, p)");
    auto fields = compile_expressions(can, "guess", texts, qp_vars);
    guess = [fields](const Vector& qp) {
      Vector out(static_cast<Eigen::Index>(fields.size()));
      for (std::size_t i = 0; i < fields.size(); ++i) out[static_cast<Eigen::Index>(i)] = fields[i].value(qp);
      return out;
    };
  }
  const std::string block = can.optional_string("block").value_or("momenta");
  EquilibriumOptions eo;
  if (block == "momenta") eo.block = EquilibriumBlock::Momenta;
  else if (block == "positions") eo.block = EquilibriumBlock::Positions;
  else if (block == "both") eo.block = EquilibriumBlock::Both;
  else can.fail("block", "must be \"momenta\", \"positions\" or \"both\"");
  eo.t_end = c.check.number("T", 1.0);
  eo.dt = c.check.number("dt", 1e-3);
  eo.tolerance = c.request.tolerance ? *c.request.tolerance : c.check.number("equilibrium_tolerance", 1e-6);
  eo.guess = guess;

  const auto samples = base_samples(c, 2 * n);
  const double sym_tol = c.request.tolerance ? *c.request.tolerance : c.check.number("symplectic_tolerance", 1e-6);
  c.add("symplectomorphism_defect",
        symplectomorphism_defect(CanonicalMap::from_generator(g, guess), samples, sym_tol));

  const auto starts = starts_of(c, 2 * n);
  if (!starts.empty()) {
    EquilibriumReport eq = equilibrium_defect(g, sys, starts, eo);
    c.checks.push_back({"equilibrium_drift_" + to_string(eq.block), eq.asserted.max_norm, eq.asserted.tolerance,
                        eq.status(), eq.to_json()});
  }

  if (family) {
    const GeneratingFamily back = canonical_to_complete(g, param_names);
    const ParamFamily a = family->differential(), b = back.differential();
    ResidualReport rt = named("roundtrip_value_defect", c.check.number("roundtrip_tolerance", 1e-12));
    const Section box = can.table("box");
    std::vector<Vector> lambdas;
    if (box.present()) {
      Vector lo(n), hi(n);
      for (int i = 0; i < n; ++i) {
        auto b2 = box.numbers(param_names[static_cast<std::size_t>(i)]);
        if (b2.size() != 2) box.fail(param_names[static_cast<std::size_t>(i)], "a parameter box is [lo, hi]");
        lo[i] = b2[0];
        hi[i] = b2[1];
      }
      lambdas = Grid{lo, hi, std::vector<int>(static_cast<std::size_t>(n), 5)}.points();
    } else {
      can.fail("box", "a family needs a [canonical.box] table for the round-trip check");
    }
    for (const Vector& qp : samples)
      for (const Vector& lambda : lambdas) {
        const Vector x = join(qp.head(n), lambda);
        try {
          Vector d(1 + n);
          d[0] = back.s.value(x) - family->s.value(x);
          d.tail(n) = b.joint()(x) - a.joint()(x);
          rt.add({x, d, d.lpNorm<Eigen::Infinity>()});
        } catch (const Error& e) {
          rt.add_skip(x, e.what());
        }
      }
    c.add("roundtrip_value_defect", rt);
    c.results["generator"] = g.field().text();
  }
}

void verb_higher(Context& c) {
  require_type(c, {"higher"});
  const int n = dimension(c.system, "n", 1, 4);
  const long long k_raw = c.system.integer("k");
  if (k_raw < 1 || k_raw > 3) throw UnsupportedOrder(static_cast<int>(k_raw));
  const int k = static_cast<int>(k_raw);
  const HigherLagrangian lag(n, k, compile_expression(c.system, "L", c.system.string("L"), JetChart(n, k).vars()));
  const ParamGrid p = param_grid(c);
  const auto base = JetChart(n, k - 1).vars();
  const auto vars = concat(base, p.names);
  auto s_texts = c.solution.strings("s");
  if (static_cast<int>(s_texts.size()) != k * n) c.solution.fail("s", "a jet section has k*n = " + std::to_string(k * n) + " components");
  const auto s_comps = compile_expressions(c.solution, "s", s_texts, vars);
  std::optional<ScalarField> s_gen;
  if (c.solution.has("S")) s_gen = compile_expression(c.solution, "S", c.solution.string("S"), vars);
  const auto samples = base_samples(c, k * n);
  const double tol = c.tolerance(1e-9);

  ResidualReport tangency, closed, de, pde;
  for (const Vector& lambda : p.values) {
    const JetSection s(n, k, bind_all(s_comps, p, lambda, base));
    std::optional<ScalarField> gen;
    if (s_gen) gen = bind_all({*s_gen}, p, lambda, base)[0];
    HigherHJReport r = higher_hj_residuals(lag, s, samples, tol, gen ? &*gen : nullptr);
    absorb(tangency, r.tangency, lambda);
    absorb(closed, r.closedness, lambda);
    absorb(de, r.de, lambda);
    if (r.pde) absorb(pde, *r.pde, lambda);
  }
  c.add("tangency_defect", tangency);
  c.add("closedness_defect", closed);
  c.add("dE_defect", de);
  if (s_gen) c.add("pde_defect", pde);

  const auto starts = starts_of(c, 2 * k * n);
  if (!starts.empty()) {
    const double t_end = c.check.number("T");
    FlowOptions fo;
    fo.estimate_errors = false;
    ResidualReport drift = named("energy_drift", c.check.number("energy_tolerance", 1e-7));
    for (const Vector& x0 : starts) {
      try {
        FlowResult f = higher_el_flow(lag, x0, t_end, c.check.number("dt", 1e-3), fo);
        const double e0 = lag.energy().value(f.states.front());
        double worst = 0.0;
        for (const Vector& x : f.states) worst = std::max(worst, std::abs(lag.energy().value(x) - e0));
        drift.add({x0, Vector::Constant(1, worst), worst});
      } catch (const Error& e) {
        drift.add_skip(x0, e.what());
      }
    }
    c.add("energy_drift", drift);
  }
  json m = json::array();
  for (const auto& f : lag.momenta()) m.push_back(f.text());
  c.results["momenta"] = m;
  c.results["energy"] = lag.energy().text();
  c.notes.push_back("a complete solution of this system carries k*n = " + std::to_string(k * n) +
                    " parameters, the fibre dimension over the order-" + std::to_string(k - 1) + " chart");
}

struct FieldSetup {
  FieldChart chart;
  std::optional<FieldTheory> lagrangian;
  std::optional<FieldTheory> hamiltonian;
};

FieldSetup field_setup(Context& c, bool need_hamiltonian) {
  require_type(c, {"field"});
  const int m = dimension(c.system, "m", 1, 2);
  const int n = dimension(c.system, "n", 1, 2);
  FieldSetup f{FieldChart(m, n), std::nullopt, std::nullopt};
  const AliasMap aliases = f.chart.aliases();
  if (c.system.has("L"))
    f.lagrangian = FieldTheory::from_lagrangian(
        m, n, compile_expression(c.system, "L", c.system.string("L"), f.chart.lagrangian_vars(), aliases));
  if (c.system.has("H"))
    f.hamiltonian = FieldTheory::from_hamiltonian(
        m, n, compile_expression(c.system, "H", c.system.string("H"), f.chart.hamiltonian_vars(), aliases));
  if (!f.lagrangian && !f.hamiltonian) c.system.fail("", "a field theory needs L or H");
  if (need_hamiltonian && !f.hamiltonian) f.hamiltonian = field_hamiltonian_from_lagrangian(*f.lagrangian);
  return f;
}

void verb_field_check(Context& c) {
  FieldSetup f = field_setup(c, true);
  const FieldChart& ch = f.chart;
  const ParamGrid p = param_grid(c);
  const auto base = ch.total_vars();
  const auto vars = concat(base, p.names);
  const AliasMap aliases = ch.aliases();
  auto w_texts = c.solution.strings("W");
  if (static_cast<int>(w_texts.size()) != ch.m) c.solution.fail("W", "needs m = " + std::to_string(ch.m) + " components");
  const auto w = compile_expressions(c.solution, "W", w_texts, vars, aliases);
  std::vector<ScalarField> psi;
  if (c.solution.has("psi")) {
    auto texts = c.solution.strings("psi");
    if (static_cast<int>(texts.size()) != ch.mn()) c.solution.fail("psi", "needs m*n = " + std::to_string(ch.mn()) + " components");
    psi = compile_expressions(c.solution, "psi", texts, vars, aliases);
  }
  const auto samples = base_samples(c, ch.m + ch.n);
  const double tol = c.tolerance(1e-9);
  const bool explicit_h = c.system.has("H");

  ResidualReport lag, ham, cons;
  Vector smin, smax;
  for (const Vector& lambda : p.values) {
    FieldHJCandidate cand{bind_all(w, p, lambda, base), psi.empty() ? psi : bind_all(psi, p, lambda, base)};
    if (f.lagrangian && !psi.empty()) absorb(lag, lag_field_hj_residual(*f.lagrangian, cand, samples, tol), lambda);
    HamFieldHJReport h = ham_field_hj_residual(*f.hamiltonian, cand, samples, tol);
    absorb(ham, h.residual, lambda);
    if (h.section_min.size() > 0) {
      smin = smin.size() ? Vector(smin.cwiseMin(h.section_min)) : h.section_min;
      smax = smax.size() ? Vector(smax.cwiseMax(h.section_max)) : h.section_max;
    }
    if (f.lagrangian)
      absorb(cons,
             field_legendre_consistency(*f.lagrangian, cand, samples, tol, explicit_h ? &*f.hamiltonian : nullptr),
             lambda);
  }
  if (f.lagrangian && !psi.empty()) c.add("lag_field_hj_residual", lag);
  c.add("ham_field_hj_residual", ham);
  if (f.lagrangian) c.add("legendre_consistency", cons);
  if (smin.size() > 0) {
    c.results["section_min"] = to_std(smin);
    c.results["section_max"] = to_std(smax);
  }
  c.notes.push_back("a complete solution carries m*n = " + std::to_string(ch.mn()) +
                    " parameters; its leaves in the first jet bundle have dimension m + n = " +
                    std::to_string(ch.m + ch.n) + " (informational)");
}

void verb_field_evolve(Context& c) {
  FieldSetup f = field_setup(c, true);
  const FieldChart& ch = f.chart;
  if (ch.m != 2) c.system.fail("m", "field-evolve needs m = 2 (time and one space axis)");
  const Section ev = c.config.section("evolve");
  if (!ev.present()) throw ConfigError("verb field-evolve needs an [evolve] table", 0);
  PeriodicGrid grid;
  grid.points = static_cast<int>(ev.integer("points", 256));
  grid.length = ev.number("length", 2 * std::numbers::pi);
  grid.origin = ev.number("origin", 0.0);
  if (grid.points < 3) ev.fail("points", "a periodic grid needs at least 3 points");
  const double t_end = ev.number("T");
  const double dt = ev.number("dt", 1e-3);
  FieldEvolveOptions opts;
  opts.record_stride = static_cast<int>(ev.integer("record_stride", 100));
  auto y0 = ev.strings("y0"), p0 = ev.strings("p0"), p1 = ev.strings("p1");
  const std::vector<std::pair<std::string, const std::vector<std::string>*>> data{
      {"y0", &y0}, {"p0", &p0}, {"p1", &p1}};
  for (const auto& [key, v] : data) {
    if (static_cast<int>(v->size()) != ch.n) ev.fail(key, "needs n = " + std::to_string(ch.n) + " expressions in x");
    compile_expressions(ev, key, *v, {"x"});
  }

  std::vector<ScalarField> exact;
  if (ev.has("exact")) {
    auto texts = ev.strings("exact");
    if (static_cast<int>(texts.size()) != ch.n) ev.fail("exact", "needs n expressions in (t, x)");
    exact = compile_expressions(ev, "exact", texts, {"t", "x"});
  }
  // L-infinity over every node and every recorded time.
  auto exact_error = [&](const FieldFlowResult& r) {
    double err = 0.0;
    for (std::size_t k = 0; k < r.times.size(); ++k)
      for (Eigen::Index j = 0; j < r.x.size(); ++j) {
        const Vector tx = (Vector(2) << r.times[k], r.x[j]).finished();
        for (int a = 0; a < ch.n; ++a)
          err = std::max(err, std::abs(r.states[k].y(j, a) - exact[static_cast<std::size_t>(a)].value(tx)));
      }
    return err;
  };

  const FieldFlowResult r = ddw_evolve(*f.hamiltonian, grid, sample_field_data(ch, grid, y0, p0, p1), t_end, dt, opts);
  c.results["evolution"] = r.to_json();

  std::vector<std::string> header{"t", "x"};
  for (const auto& v : ch.fiber_vars()) header.push_back(v);
  for (int a = 1; a <= ch.n; ++a) header.push_back("p" + std::to_string(a) + "_1");
  for (int a = 1; a <= ch.n; ++a) header.push_back("p" + std::to_string(a) + "_2");
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < r.times.size(); ++k)
    for (Eigen::Index j = 0; j < r.x.size(); ++j) {
      std::vector<double> row{r.times[k], r.x[j]};
      for (const Matrix* m : {&r.states[k].y, &r.states[k].p0, &r.states[k].p1})
        for (int a = 0; a < ch.n; ++a) row.push_back((*m)(j, a));
      rows.push_back(std::move(row));
    }
  write_csv(c, "field.csv", header, rows);

  json completed;
  completed["t_reached"] = r.t_reached;
  completed["warnings"] = r.warnings;
  c.checks.push_back({"completed", r.aborted ? 1.0 : 0.0, 0.0, r.aborted ? Status::Fail : Status::Pass, completed});
  const double e_tol = c.request.tolerance ? *c.request.tolerance : ev.number("energy_tolerance", 1e-3);
  c.checks.push_back({"energy_drift", r.energy_drift, e_tol, r.energy_drift <= e_tol ? Status::Pass : Status::Fail,
                      json{{"initial_energy", r.energy.front()}}});
  const double c_tol = ev.number("constraint_tolerance", 1e-8);
  c.checks.push_back({"constraint_drift", r.constraint_drift, c_tol,
                      r.constraint_drift <= c_tol ? Status::Pass : Status::Fail,
                      json{{"initial_constraint", r.initial_constraint}}});
  if (!exact.empty()) {
    const double x_tol = ev.number("exact_tolerance", 5e-3);
    const double err = exact_error(r);
    c.checks.push_back({"exact_solution_error", err, x_tol, err <= x_tol ? Status::Pass : Status::Fail, json::object()});
    if (ev.has("convergence_points")) {
      std::vector<double> pts = ev.numbers("convergence_points");
      if (pts.size() < 2) ev.fail("convergence_points", "needs at least two grid sizes");
      const double target = ev.number("convergence_order", 2.0);
      const double rel = ev.number("convergence_tolerance", 0.3);
      json errs = json::array(), orders = json::array();
      std::vector<double> e;
      for (double np : pts) {
        PeriodicGrid g2 = grid;
        g2.points = static_cast<int>(np);
        FieldFlowResult r2 = ddw_evolve(*f.hamiltonian, g2, sample_field_data(ch, g2, y0, p0, p1), t_end, dt, opts);
        e.push_back(exact_error(r2));
        errs.push_back(e.back());
      }
      double worst = 0.0;
      for (std::size_t i = 1; i < e.size(); ++i) {
        const double order = std::log(e[i - 1] / e[i]) / std::log(pts[i] / pts[i - 1]);
        orders.push_back(order);
        worst = std::max(worst, std::abs(order - target) / target);
      }
      c.checks.push_back({"convergence_order", worst, rel, worst <= rel ? Status::Pass : Status::Fail,
                          json{{"points", pts}, {"errors", errs}, {"orders", orders}}});
    }
  }
}

void verb_legendre(Context& c) {
  const std::string type = c.system.string("type");
  const double tol = c.tolerance(1e-10);
  if (type == "lagrangian") {
    const int n = dimension(c.system, "n", 1, 8);
    const LagrangianSystem sys(n, compile_expression(c.system, "L", c.system.string("L"), velocity_phase_vars(n)));
    const auto samples = base_samples(c, 2 * n);
    ResidualReport fwd = named("forward_then_inverse", tol), inv = named("inverse_then_forward", tol);
    for (const Vector& z : samples) {
      try {
        const Vector d = legendre_inverse(sys, legendre(sys, z)) - z;
        fwd.add({z, d, d.lpNorm<Eigen::Infinity>()});
      } catch (const Error& e) {
        fwd.add_skip(z, e.what());
      }
      try {
        const Vector d = legendre(sys, legendre_inverse(sys, z)) - z;
        inv.add({z, d, d.lpNorm<Eigen::Infinity>()});
      } catch (const Error& e) {
        inv.add_skip(z, e.what());
      }
    }
    c.add("forward_then_inverse", fwd);
    c.add("inverse_then_forward", inv);
    const Section lg = c.config.section("legendre");
    if (lg.has("H")) {
      const ScalarField expected = compile_expression(lg, "H", lg.string("H"), phase_space_vars(n));
      const HamiltonianSystem h = hamiltonian_from_lagrangian(sys);
      ResidualReport hr = named("hamiltonian_defect", tol);
      for (const Vector& z : samples) {
        try {
          const Vector qp = legendre(sys, z);
          const double d = h.hamiltonian()(qp) - expected.value(qp);
          hr.add({qp, Vector::Constant(1, d), std::abs(d)});
        } catch (const Error& e) {
          hr.add_skip(z, e.what());
        }
      }
      c.add("hamiltonian_defect", hr);
    }
    return;
  }
  if (type != "field") c.system.fail("type", "verb legendre needs a system of type \"lagrangian\" or \"field\"");
  FieldSetup f = field_setup(c, false);
  if (!f.lagrangian) c.system.fail("L", "verb legendre needs a Lagrangian");
  const FieldChart& ch = f.chart;
  const int k = ch.m + ch.n;
  const auto samples = base_samples(c, k + ch.mn());
  ResidualReport fwd = named("forward_then_inverse", tol), inv = named("inverse_then_forward", tol);
  for (const Vector& z : samples) {
    try {
      const Vector d = field_legendre_inverse(*f.lagrangian, join(z.head(k), field_legendre(*f.lagrangian, z))) - z;
      fwd.add({z, d, d.lpNorm<Eigen::Infinity>()});
    } catch (const Error& e) {
      fwd.add_skip(z, e.what());
    }
    try {
      const Vector v = field_legendre_inverse(*f.lagrangian, z);
      const Vector d = field_legendre(*f.lagrangian, v) - z.tail(ch.mn());
      inv.add({z, d, d.lpNorm<Eigen::Infinity>()});
    } catch (const Error& e) {
      inv.add_skip(z, e.what());
    }
  }
  c.add("forward_then_inverse", fwd);
  c.add("inverse_then_forward", inv);
  const Section lg = c.config.section("legendre");
  if (lg.has("H")) {
    const ScalarField expected =
        compile_expression(lg, "H", lg.string("H"), ch.hamiltonian_vars(), ch.aliases());
    const FieldTheory h = field_hamiltonian_from_lagrangian(*f.lagrangian);
    ResidualReport hr = named("hamiltonian_defect", tol);
    for (const Vector& z : samples) {
      try {
        const Vector xyp = join(z.head(k), field_legendre(*f.lagrangian, z));
        const double d = h.hamiltonian()(xyp) - expected.value(xyp);
        hr.add({xyp, Vector::Constant(1, d), std::abs(d)});
      } catch (const Error& e) {
        hr.add_skip(z, e.what());
      }
    }
    c.add("hamiltonian_defect", hr);
  }
}

using VerbFn = void (*)(Context&);

const std::vector<std::pair<std::string, VerbFn>>& verb_table() {
  static const std::vector<std::pair<std::string, VerbFn>> table{
      {"check-hj", verb_check_hj},         {"check-lag-hj", verb_check_lag_hj}, {"reconstruct", verb_reconstruct},
      {"complete", verb_complete},         {"canonical", verb_canonical},       {"higher", verb_higher},
      {"field-check", verb_field_check},   {"field-evolve", verb_field_evolve}, {"legendre", verb_legendre},
  };
  return table;
}

int exit_code_for(Status s) {
  switch (s) {
    case Status::Pass: return kExitPass;
    case Status::Fail: return kExitFail;
    case Status::Inconclusive: return kExitInconclusive;
  }
  return kExitFail;
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace

const std::vector<std::string>& verbs() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, fn] : verb_table()) v.push_back(name);
    return v;
  }();
  return names;
}

std::string config_digest(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

Outcome run(const Request& request) {
  const auto started = std::chrono::steady_clock::now();
  Outcome outcome;
  json& report = outcome.report;
  report["tool"] = "hjkit";
  report["version"] = kVersion;
  report["verb"] = request.verb;
  report["config"] = request.config.filename().string();

  auto finish_files = [&](const json& timing) {
    std::error_code ec;
    std::filesystem::create_directories(request.out, ec);
    try {
      write_json(request.out / "report.json", report);
      write_json(request.out / "timing.json", timing);
    } catch (const std::exception& e) {
      if (outcome.error.empty()) outcome.error = e.what();
      if (outcome.exit_code == kExitPass) outcome.exit_code = kExitFail;
    }
  };
  auto config_failure = [&](const std::string& message, int line) {
    outcome.exit_code = kExitConfigError;
    outcome.error = request.config.string() + (line > 0 ? ":" + std::to_string(line) : "") + ": " + message;
    json e;
    e["message"] = message;
    e["line"] = line;
    report["error"] = e;
    report["status"] = "config_error";
    report["exit_code"] = kExitConfigError;
    finish_files(json{{"verb", request.verb}, {"seconds", 0.0}});
    if (!request.quiet) std::cerr << outcome.error << "\n";
    return outcome;
  };

  const auto& table = verb_table();
  auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == request.verb; });
  if (it == table.end()) return config_failure("unknown verb '" + request.verb + "'", 0);

  std::optional<Config> config;
  try {
    config = Config::load(request.config);
  } catch (const ConfigError& e) {
    return config_failure(e.what(), e.line());
  }
  Context c{*config,
            request,
            config->section("system"),
            config->section("solution"),
            config->section("check")};
  report["config_digest"] = "sha256:" + config_digest(config->bytes());

  std::error_code ec;
  std::filesystem::create_directories(request.out, ec);
  try {
    c.seed = request.seed ? *request.seed : static_cast<std::uint64_t>(c.check.integer("seed", 1));
    report["seed"] = c.seed;
    it->second(c);
  } catch (const ConfigError& e) {
    return config_failure(e.what(), e.line());
  } catch (const SyntaxError& e) {
    return config_failure(std::string("SyntaxError: ") + e.what(), 0);
  } catch (const UnknownIdentifier& e) {
    return config_failure(std::string("UnknownIdentifier: ") + e.what(), 0);
  } catch (const Error& e) {
    // Numerical failures are part of the result, not a crash.
    c.add_error("run", e.what());
  }

  std::vector<Status> statuses;
  json checks = json::array();
  for (const Check& ch : c.checks) {
    statuses.push_back(ch.status);
    checks.push_back(ch.to_json());
  }
  const Status overall = statuses.empty() ? Status::Inconclusive : combine(statuses);
  report["system"] = c.system.present() ? c.system.to_json() : config->section("canonical").to_json();
  report["sampling"] = c.sampling;
  report["checks"] = checks;
  if (!c.results.empty()) report["results"] = c.results;
  report["notes"] = c.notes;
  report["files"] = c.files;
  report["timing"] = "timing.json";
  report["status"] = to_string(overall);
  outcome.exit_code = exit_code_for(overall);
  report["exit_code"] = outcome.exit_code;

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  finish_files(json{{"verb", request.verb}, {"seconds", seconds}});

  if (!request.quiet) {
    for (const Check& ch : c.checks) {
      std::cout << ch.name << ": " << to_string(ch.status);
      if (ch.max_defect) std::cout << " (max " << *ch.max_defect << ", tolerance " << ch.tolerance << ")";
      if (ch.detail.contains("error")) std::cout << " error: " << ch.detail["error"].get<std::string>();
      std::cout << "\n";
    }
    std::cout << "status: " << to_string(overall) << " (exit " << outcome.exit_code << ")\n";
  }
  return outcome;
}

}  // namespace hj::cli
