#pragma once

// Test-side numerical oracles: finite differences, quadrature and the
// distribution functions the statistical checks need. Deliberately
// independent of the library implementation paths they verify.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

// ---------------------------------------------------------------------------
// Finite differences

inline double central_diff(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

inline Vec central_grad(const std::function<double(const Vec&)>& f, const Vec& x,
                        double h = 1e-5) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(double got, double want, double floor = 1e-8) {
  return std::fabs(got - want) / std::fmax(std::fabs(want), floor);
}

inline double max_rel_err(const Vec& got, const Vec& want, double floor = 1e-8) {
  double m = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) m = std::fmax(m, rel_err(got[i], want[i], floor));
  return m;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::fmax(m, std::fabs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Quadrature

struct GaussHermite {
  Vec nodes;    // roots of H_n
  Vec log_w;    // log weights for integrating f(u) e^{-u^2}
};

// Nodes/weights by Newton iteration on the orthonormal Hermite recurrence.
inline GaussHermite gauss_hermite(int n) {
  GaussHermite gh;
  gh.nodes.assign(n, 0.0);
  gh.log_w.assign(n, 0.0);
  const int m = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < m; ++i) {
    if (i == 0)
      z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
    else if (i == 1)
      z -= 1.14 * std::pow(n, 0.426) / z;
    else if (i == 2)
      z = 1.86 * z - 0.86 * gh.nodes[0];
    else if (i == 3)
      z = 1.91 * z - 0.91 * gh.nodes[1];
    else
      z = 2.0 * z - gh.nodes[i - 2];
    double pp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p1 = std::pow(M_PI, -0.25), p2 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt((j - 1.0) / j) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::fabs(z - z1) < 1e-14) break;
    }
    gh.nodes[i] = z;
    gh.nodes[n - 1 - i] = -z;
    const double lw = std::log(2.0) - 2.0 * std::log(std::fabs(pp));
    gh.log_w[i] = lw;
    gh.log_w[n - 1 - i] = lw;
  }
  return gh;
}

// Integral of exp(log_f(x)) over the real line, via GH quadrature centered
// at (center, scale): x = center + sqrt(2) * scale * u.
inline double gh_integrate_exp(const std::function<double(double)>& log_f, double center,
                               double scale, int n = 48) {
  GaussHermite gh = gauss_hermite(n);
  double acc = 0.0;
  const double lscale = std::log(std::sqrt(2.0) * scale);
  for (int i = 0; i < n; ++i) {
    const double u = gh.nodes[i];
    const double x = center + std::sqrt(2.0) * scale * u;
    acc += std::exp(gh.log_w[i] + u * u + lscale + log_f(x));
  }
  return acc;
}

inline double simpson(const std::function<double(double)>& f, double lo, double hi, int n) {
  if (n % 2 != 0) ++n;
  const double h = (hi - lo) / n;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) acc += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

// ---------------------------------------------------------------------------
// Sample statistics

inline double mean(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

inline double variance(const Vec& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}

inline double covariance(const Vec& a, const Vec& b) {
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (a.size() - 1);
}

inline double std_error_of_mean(const Vec& v) { return std::sqrt(variance(v) / v.size()); }

// ---------------------------------------------------------------------------
// Distribution functions (Numerical-Recipes style series/continued fractions)

inline double gammp(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::runtime_error("gammp: bad args");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  double b = x + 1.0 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return 1.0 - std::exp(-x + a * std::log(x) - gln) * h;
}

// Survival function of the chi-squared distribution with k dof.
inline double chi2_sf(double x, double k) { return 1.0 - gammp(k / 2.0, x / 2.0); }

inline double betacf(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < 1e-300) d = 1e-300;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = 1.0 + aa / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = 1.0 + aa / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return h;
}

inline double betai(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log(1.0 - x));
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// One-sided p-value for Student's t with nu dof (P[T > t]).
inline double t_sf(double t, double nu) {
  const double p = 0.5 * betai(nu / 2.0, 0.5, nu / (nu + t * t));
  return t >= 0.0 ? p : 1.0 - p;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Kolmogorov-Smirnov statistic of samples against a CDF.
inline double ks_statistic(Vec samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::fmax(d, std::fabs(f - i / n));
    d = std::fmax(d, std::fabs((i + 1) / n - f));
  }
  return d;
}

// Pitman-Morgan paired variance comparison: one-sided p-value for
// Var(a) < Var(b) from the correlation between (a+b) and (a-b).
inline double pitman_morgan_p(const Vec& a, const Vec& b) {
  const std::size_t n = a.size();
  Vec s(n), d(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = a[i] + b[i];
    d[i] = a[i] - b[i];
  }
  const double r = covariance(s, d) / std::sqrt(variance(s) * variance(d));
  const double nu = static_cast<double>(n - 2);
  const double t = r * std::sqrt(nu / (1.0 - r * r));
  // Var(a) < Var(b)  <=>  Corr(a+b, a-b) < 0.
  return t_sf(-t, nu);
}

}  // namespace oracle
