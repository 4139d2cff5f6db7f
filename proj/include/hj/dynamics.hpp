#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hj/report.hpp"
#include "hj/smooth_map.hpp"

namespace hj {

/// A map between Euclidean charts, e.g. a section alpha: M -> P.
using ChartMap = SmoothMap;

/// Vector field on a chart of dimension dim. Fields produced by
/// hamiltonian_vector_field are tagged canonical; only those may be
/// integrated with the implicit midpoint rule.
class VectorFieldSection : public SmoothMap {
 public:
  VectorFieldSection() = default;
  explicit VectorFieldSection(SmoothMap map, bool canonical = false);

  static VectorFieldSection from_fields(std::vector<ScalarField> components);
  static VectorFieldSection zero(Eigen::Index dim, bool canonical = false);

  Eigen::Index dim() const { return in_dim(); }
  bool canonical() const { return canonical_; }

 private:
  bool canonical_ = false;
};

/// Sampled integral curve. step_errors[k] estimates the local error of the
/// step ending at times[k + 1] (step doubling).
struct FlowResult {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<double> step_errors;
  bool truncated = false;  // integration stopped early (see stop_reason)
  std::string stop_reason;

  const Vector& final_state() const { return states.back(); }
  double total_error_estimate() const;
};

struct FlowOptions {
  bool estimate_errors = true;
  int record_stride = 1;  // keep every n-th state (first and last are always kept)
  /// Return the curve up to the last good state instead of throwing when a
  /// step leaves the domain or fails to converge.
  bool truncate_on_failure = false;
};

/// Uniform steps of size t_end / ceil(t_end / dt) so that the curve ends at
/// t_end exactly.
int step_count(double t_end, double dt);

FlowResult flow_rk4(const VectorFieldSection& z, const Vector& x0, double t_end, double dt,
                    const FlowOptions& options = {});

/// Same integrator for a plain right-hand side.
FlowResult integrate_rk4(const std::function<Vector(const Vector&)>& rhs, const Vector& x0, double t_end, double dt,
                         const FlowOptions& options = {});

/// Implicit midpoint rule (symplectic). Each step solves
/// x1 = x0 + h Z((x0 + x1) / 2) by Newton (tolerance 1e-12, 50 iterations).
FlowResult flow_midpoint(const VectorFieldSection& z, const Vector& x0, double t_end, double dt,
                         const FlowOptions& options = {});

/// r(x) = J_alpha(x) X(x) - Z(alpha(x)) at every sample x of M.
ResidualReport slicing_residual(const ChartMap& alpha, const VectorFieldSection& x, const VectorFieldSection& z,
                                const std::vector<Vector>& samples, double tolerance = 1e-8);

/// Family of maps alpha_lambda: M -> P given by ScalarFields over the base
/// coordinates followed by the parameters.
class ParamFamily {
 public:
  ParamFamily() = default;
  ParamFamily(std::vector<std::string> base_vars, std::vector<std::string> param_names,
              std::vector<ScalarField> components);

  Eigen::Index base_dim() const { return static_cast<Eigen::Index>(base_vars_.size()); }
  Eigen::Index n_params() const { return static_cast<Eigen::Index>(param_names_.size()); }
  Eigen::Index out_dim() const { return static_cast<Eigen::Index>(components_.size()); }
  const std::vector<std::string>& base_vars() const { return base_vars_; }
  const std::vector<std::string>& param_names() const { return param_names_; }
  const std::vector<ScalarField>& components() const { return components_; }

  /// alpha_lambda as a map of the base coordinates.
  ChartMap slice(const Vector& lambda) const;
  /// (q, lambda) -> alpha_lambda(q).
  const SmoothMap& joint() const { return joint_; }

 private:
  std::vector<std::string> base_vars_;
  std::vector<std::string> param_names_;
  std::vector<ScalarField> components_;
  SmoothMap joint_;
};

struct CompleteSlicingReport {
  double min_abs_det = 0.0;
  std::vector<std::size_t> singular_nodes;
  ResidualReport residual;
  std::vector<std::string> notes;

  Status status() const;
  nlohmann::ordered_json to_json() const;
};

inline constexpr double kSingularDeterminant = 1e-10;

/// Local-diffeomorphism evidence for a complete slicing: the Jacobian of
/// (q, lambda) -> alpha_bar(q, lambda) at every node, plus the slicing
/// residual of each alpha_lambda. Nodes are (q, lambda) points. When x_family
/// is absent, X_lambda is the projection of Z(alpha_lambda(q)) onto the first
/// base_dim coordinates.
CompleteSlicingReport complete_slicing_check(const ParamFamily& family, const VectorFieldSection& z,
                                             const std::vector<Vector>& nodes, double tolerance = 1e-8,
                                             const ParamFamily* x_family = nullptr);

}  // namespace hj
