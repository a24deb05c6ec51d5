#include "fol/parameterization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fol/error.hpp"
#include "fol/rng.hpp"

namespace fol {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Stream offsets keep the different samplers independent for one seed.
constexpr std::uint64_t kEllipseStream = 0x1000000000ULL;
constexpr std::uint64_t kFourierStream = 0x2000000000ULL;
constexpr std::uint64_t kUnseenStream = 0x3000000000ULL;
constexpr std::uint64_t kBcStream = 0x4000000000ULL;

std::vector<Eigen::VectorXd> draw_uniform(int n, const std::vector<std::pair<double, double>>& ranges,
                                          std::uint64_t seed, std::uint64_t stream) {
  if (n < 0) throw ConfigError("sample count must be non-negative");
  for (const auto& [lo, hi] : ranges) {
    if (!(lo <= hi)) throw ConfigError("sampling range with lower bound above upper bound");
  }
  std::vector<Eigen::VectorXd> out(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    Rng rng(seed, stream + static_cast<std::uint64_t>(s));
    Eigen::VectorXd v(static_cast<Eigen::Index>(ranges.size()));
    for (std::size_t i = 0; i < ranges.size(); ++i) {
      v[static_cast<Eigen::Index>(i)] = rng.uniform(ranges[i].first, ranges[i].second);
    }
    out[static_cast<std::size_t>(s)] = std::move(v);
  }
  return out;
}

}  // namespace

void ProjectionSpec::validate() const {
  if (!(vmin < vmax)) throw ConfigError("projection requires vmin < vmax");
  if (!(beta > 0.0)) throw ConfigError("projection requires beta > 0");
}

double project(const ProjectionSpec& spec, double raw) {
  return (spec.vmax - spec.vmin) * sigmoid(spec.beta * (raw - 0.5)) + spec.vmin;
}

double project_derivative(const ProjectionSpec& spec, double raw) {
  const double s = sigmoid(spec.beta * (raw - 0.5));
  return (spec.vmax - spec.vmin) * spec.beta * s * (1.0 - s);
}

int FourierDesign::num_coefficients() const {
  const int pairs = static_cast<int>(fx.size() * fy.size());
  return (full_basis ? 4 * pairs : pairs) + (includes_constant ? 1 : 0);
}

void FourierDesign::validate() const {
  projection.validate();
  if (fx.empty() || fy.empty()) throw ConfigError("Fourier design needs frequencies on both axes");
  for (double f : fx) {
    if (!(f > 0.0)) throw ConfigError("Fourier frequencies must be positive");
  }
  for (double f : fy) {
    if (!(f > 0.0)) throw ConfigError("Fourier frequencies must be positive");
  }
  if (c.size() != num_coefficients()) {
    throw ConfigError("Fourier design expects " + std::to_string(num_coefficients()) +
                      " coefficients, got " + std::to_string(c.size()));
  }
}

Eigen::VectorXd fourier_basis(const FourierDesign& design, double x, double y) {
  Eigen::VectorXd b(design.num_coefficients());
  Eigen::Index m = 0;
  if (design.includes_constant) b[m++] = 1.0;
  for (double fx : design.fx) {
    for (double fy : design.fy) {
      const double cx = std::cos(fx * x);
      const double cy = std::cos(fy * y);
      if (design.full_basis) {
        const double sx = std::sin(fx * x);
        const double sy = std::sin(fy * y);
        b[m++] = sx * cy;
        b[m++] = cx * sy;
        b[m++] = sx * sy;
      }
      b[m++] = cx * cy;
    }
  }
  return b;
}

double fourier_field(const FourierDesign& design, double x, double y) {
  design.validate();
  return fourier_basis(design, x, y).dot(design.c);
}

NodalField design_to_nodal(const FourierDesign& design, const Mesh& mesh) {
  return source_field(design, mesh, design.projection);
}

NodalField design_to_nodal(const NodalDesign& design) {
  const auto n = design.k.size();
  return {design.k, Eigen::MatrixXd::Identity(n, n)};
}

NodalField source_field(const FourierDesign& design, const Mesh& mesh, const ProjectionSpec& q_spec) {
  design.validate();
  q_spec.validate();
  const int n = mesh.num_nodes();
  NodalField out{Eigen::VectorXd(n), Eigen::MatrixXd(n, design.num_coefficients())};
  for (int i = 0; i < n; ++i) {
    const auto& p = mesh.node(i);
    const Eigen::VectorXd b = fourier_basis(design, p.x, p.y);
    const double raw = b.dot(design.c);
    out.values[i] = project(q_spec, raw);
    out.tangent.row(i) = project_derivative(q_spec, raw) * b.transpose();
  }
  return out;
}

Eigen::VectorXd rasterize_ellipses(const std::vector<Ellipse>& ellipses, int fine_n,
                                   double k_low, double k_high) {
  Eigen::VectorXd k = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(fine_n) * fine_n, k_high);
  const double h = 1.0 / (fine_n - 1);
  for (int j = 0; j < fine_n; ++j) {
    for (int i = 0; i < fine_n; ++i) {
      const double x = i * h;
      const double y = j * h;
      for (const auto& el : ellipses) {
        const double dx = x - el.cx;
        const double dy = y - el.cy;
        const double ca = std::cos(el.angle);
        const double sa = std::sin(el.angle);
        const double u = (ca * dx + sa * dy) / el.outer_radius;
        const double v = (-sa * dx + ca * dy) / el.inner_radius;
        if (u * u + v * v <= 1.0) {
          k[static_cast<Eigen::Index>(j) * fine_n + i] = k_low;
          break;
        }
      }
    }
  }
  return k;
}

Eigen::VectorXd maxpool_downsample(const Eigen::VectorXd& fine, int fine_n, int coarse_n) {
  if (coarse_n < 2 || fine_n < coarse_n || (fine_n - 1) % (coarse_n - 1) != 0) {
    throw ConfigError("maxpool_downsample: incompatible resolutions " + std::to_string(fine_n) +
                      " -> " + std::to_string(coarse_n));
  }
  if (fine.size() != static_cast<Eigen::Index>(fine_n) * fine_n) {
    throw ConfigError("maxpool_downsample: field size does not match the fine grid");
  }
  const int s = (fine_n - 1) / (coarse_n - 1);
  const int lo_off = s / 2;
  const int hi_off = s - s / 2;  // exclusive
  Eigen::VectorXd out(static_cast<Eigen::Index>(coarse_n) * coarse_n);
  for (int J = 0; J < coarse_n; ++J) {
    for (int I = 0; I < coarse_n; ++I) {
      double m = -std::numeric_limits<double>::infinity();
      for (int j = std::max(0, s * J - lo_off); j < std::min(fine_n, s * J + hi_off); ++j) {
        for (int i = std::max(0, s * I - lo_off); i < std::min(fine_n, s * I + hi_off); ++i) {
          m = std::max(m, fine[static_cast<Eigen::Index>(j) * fine_n + i]);
        }
      }
      out[static_cast<Eigen::Index>(J) * coarse_n + I] = m;
    }
  }
  return out;
}

std::vector<EllipseSample> gen_ellipse_samples(int n_samples, const EllipseSamplerConfig& cfg,
                                               std::uint64_t seed) {
  if (n_samples < 0) throw ConfigError("sample count must be non-negative");
  if (cfg.min_ellipses < 0 || cfg.max_ellipses < cfg.min_ellipses) {
    throw ConfigError("ellipse count range is invalid");
  }
  std::vector<EllipseSample> out(static_cast<std::size_t>(n_samples));
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(seed, kEllipseStream + static_cast<std::uint64_t>(s));
    EllipseSample& smp = out[static_cast<std::size_t>(s)];
    const int count = cfg.min_ellipses +
                      static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_ellipses - cfg.min_ellipses + 1)));
    for (int e = 0; e < count; ++e) {
      Ellipse el;
      el.cx = rng.uniform();
      el.cy = rng.uniform();
      el.outer_radius = rng.uniform(cfg.min_outer, cfg.max_outer);
      el.inner_radius = rng.uniform(cfg.min_inner, cfg.max_inner);
      el.angle = rng.uniform(0.0, std::numbers::pi);
      smp.ellipses.push_back(el);
    }
    const Eigen::VectorXd fine = rasterize_ellipses(smp.ellipses, cfg.fine_n, cfg.k_low, cfg.k_high);
    smp.design.k = maxpool_downsample(fine, cfg.fine_n, cfg.coarse_n);
    smp.volume_fraction =
        static_cast<double>((smp.design.k.array() <= cfg.k_low).count()) / static_cast<double>(smp.design.k.size());
    if (smp.ellipses.size() >= 2) {
      double acc = 0.0;
      for (std::size_t a = 0; a < smp.ellipses.size(); ++a) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < smp.ellipses.size(); ++b) {
          if (a == b) continue;
          best = std::min(best, std::hypot(smp.ellipses[a].cx - smp.ellipses[b].cx,
                                           smp.ellipses[a].cy - smp.ellipses[b].cy));
        }
        acc += best;
      }
      smp.dispersion = acc / static_cast<double>(smp.ellipses.size());
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> gen_random_fourier_samples(
    int n, const std::vector<std::pair<double, double>>& ranges, std::uint64_t seed) {
  return draw_uniform(n, ranges, seed, kFourierStream);
}

std::vector<Eigen::VectorXd> gen_unseen_fourier_samples(int n, int num_coefficients,
                                                        std::uint64_t seed) {
  const std::vector<std::pair<double, double>> ranges(static_cast<std::size_t>(num_coefficients),
                                                      {5.0, 10.0});
  auto out = draw_uniform(n, ranges, seed, kUnseenStream);
  // Keep the open interval: a draw of exactly 5.0 is nudged inward.
  for (auto& v : out) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (v[i] <= 5.0) v[i] = std::nextafter(5.0, 10.0);
    }
  }
  return out;
}

std::vector<Eigen::VectorXd> gen_random_bc_samples(
    int n, const std::vector<std::pair<double, double>>& component_ranges, std::uint64_t seed) {
  return draw_uniform(n, component_ranges, seed, kBcStream);
}

}  // namespace fol
