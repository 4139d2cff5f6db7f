#include "hj/report.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace hj {

std::string to_string(Status s) {
  switch (s) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    case Status::Inconclusive: return "inconclusive";
  }
  return "?";
}

void ResidualReport::add(SampleResult s) {
  ++n_samples;
  if (s.skipped) {
    ++n_skipped;
  } else {
    if (std::isnan(s.norm)) s.norm = std::numeric_limits<double>::infinity();
    if (!argmax_sample || s.norm > max_norm) {
      max_norm = s.norm;
      argmax_sample = s.point;
    }
  }
  if (keep_per_sample) per_sample.push_back(std::move(s));
}

void ResidualReport::add_skip(const Vector& point, const std::string& why) {
  SampleResult s;
  s.point = point;
  s.skipped = true;
  s.note = why;
  add(std::move(s));
}

Status ResidualReport::status() const {
  if (n_samples == 0 || n_skipped == n_samples) return Status::Inconclusive;
  if (static_cast<double>(n_skipped) > kInconclusiveSkipFraction * static_cast<double>(n_samples))
    return Status::Inconclusive;
  return max_norm <= tolerance ? Status::Pass : Status::Fail;
}

nlohmann::ordered_json vector_json(const Vector& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::ordered_json ResidualReport::to_json() const {
  nlohmann::ordered_json j;
  j["op"] = op;
  j["tolerance"] = tolerance;
  j["n_samples"] = n_samples;
  j["n_skipped"] = n_skipped;
  j["max_norm"] = max_norm;
  j["argmax_sample"] = argmax_sample ? vector_json(*argmax_sample) : nlohmann::ordered_json(nullptr);
  j["status"] = to_string(status());
  if (!notes.empty()) j["notes"] = notes;
  if (keep_per_sample) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& s : per_sample) {
      nlohmann::ordered_json e;
      e["point"] = vector_json(s.point);
      if (s.skipped) {
        e["skipped"] = true;
        e["note"] = s.note;
      } else {
        e["residual"] = vector_json(s.residual);
        e["norm"] = s.norm;
      }
      arr.push_back(std::move(e));
    }
    j["per_sample"] = std::move(arr);
  }
  return j;
}

Status combine(const std::vector<Status>& parts) {
  bool inconclusive = false;
  for (Status s : parts) {
    if (s == Status::Fail) return Status::Fail;
    if (s == Status::Inconclusive) inconclusive = true;
  }
  return inconclusive ? Status::Inconclusive : Status::Pass;
}

Status combine(std::initializer_list<Status> parts) { return combine(std::vector<Status>(parts)); }

std::vector<Vector> Grid::points() const {
  const Eigen::Index d = lo.size();
  if (hi.size() != d || static_cast<Eigen::Index>(counts.size()) != d)
    throw DimensionMismatch("grid: lo, hi and counts must have equal length");
  std::vector<Vector> out;
  if (d == 0) return out;
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  while (true) {
    Vector p(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      const int n = counts[static_cast<std::size_t>(k)];
      p[k] = n <= 1 ? 0.5 * (lo[k] + hi[k]) : lo[k] + (hi[k] - lo[k]) * idx[static_cast<std::size_t>(k)] / (n - 1);
    }
    out.push_back(std::move(p));
    Eigen::Index k = d - 1;
    while (k >= 0) {
      auto& i = idx[static_cast<std::size_t>(k)];
      if (++i < std::max(counts[static_cast<std::size_t>(k)], 1)) break;
      i = 0;
      --k;
    }
    if (k < 0) break;
  }
  return out;
}

std::vector<Vector> linspace_points(double lo, double hi, int count) {
  Grid g{Vector::Constant(1, lo), Vector::Constant(1, hi), {count}};
  return g.points();
}

std::vector<Vector> random_points(const Vector& lo, const Vector& hi, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vector p(lo.size());
    for (Eigen::Index k = 0; k < lo.size(); ++k) {
      // Explicit mapping from raw 64-bit draws keeps results identical across standard libraries.
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      p[k] = lo[k] + (hi[k] - lo[k]) * u;
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace hj
