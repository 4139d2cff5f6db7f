#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hj/smooth_map.hpp"

namespace hj {

enum class Status { Pass, Fail, Inconclusive };

std::string to_string(Status s);

/// Fraction of skipped samples above which a report is Inconclusive.
inline constexpr double kInconclusiveSkipFraction = 0.2;

struct SampleResult {
  Vector point;
  Vector residual;  // empty when skipped
  double norm = 0.0;
  bool skipped = false;
  std::string note;
};

/// Max-norm summary of a residual evaluated over samples. Sample order is the
/// order in which samples were supplied.
struct ResidualReport {
  std::string op;
  double tolerance = 1e-8;
  std::size_t n_samples = 0;
  std::size_t n_skipped = 0;
  double max_norm = 0.0;
  std::optional<Vector> argmax_sample;
  std::vector<SampleResult> per_sample;
  std::vector<std::string> notes;
  bool keep_per_sample = false;

  void add(SampleResult s);
  void add_skip(const Vector& point, const std::string& why);

  Status status() const;
  bool passed() const { return status() == Status::Pass; }

  nlohmann::ordered_json to_json() const;
};

/// Status of several checks together: Fail dominates, then Inconclusive.
Status combine(std::initializer_list<Status> parts);
Status combine(const std::vector<Status>& parts);

nlohmann::ordered_json vector_json(const Vector& v);

/// Regular tensor grid over a box; points are produced in lexicographic order
/// with the last coordinate varying fastest.
struct Grid {
  Vector lo;
  Vector hi;
  std::vector<int> counts;

  std::vector<Vector> points() const;
};

std::vector<Vector> linspace_points(double lo, double hi, int count);

/// Uniform random points in a box from a seeded 64-bit Mersenne twister.
std::vector<Vector> random_points(const Vector& lo, const Vector& hi, int count, std::uint64_t seed);

}  // namespace hj
