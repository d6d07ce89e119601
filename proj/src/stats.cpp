#include "datscore/stats.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "datscore/error.hpp"

namespace datscore::stats {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
// Below this argument erfc loses its last digits; switch to the asymptotic series.
constexpr double kTailSwitch = -35.0;

// Mills ratio Phi(-z)/phi(z) for large z by its asymptotic series.
double mills_asymptotic(double z) {
  const double z2 = z * z;
  double term = 1.0 / z;
  double sum = term;
  for (int k = 1; k <= 6; ++k) {
    term *= -(2.0 * k - 1.0) / z2;
    sum += term;
  }
  return sum;
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 20000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError(fmt::format("incomplete beta did not converge (a={}, b={}, x={})", a, b, x));
}

// I_x(a,b) given both x and y = 1 - x, so callers can pass an accurate complement.
double incomplete_beta_xy(double a, double b, double x, double y) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  const double log_front = a * std::log(x) + b * std::log(y) + std::lgamma(a + b) -
                           std::lgamma(a) - std::lgamma(b);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, y) / b;
}

const std::vector<double>& log_factorials() {
  static const std::vector<double> table = [] {
    std::vector<double> t(4096);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::lgamma(static_cast<double>(i) + 1.0);
    return t;
  }();
  return table;
}

inline double log_factorial(std::int64_t n) {
  const auto& t = log_factorials();
  if (static_cast<std::size_t>(n) < t.size()) return t[static_cast<std::size_t>(n)];
  return std::lgamma(static_cast<double>(n) + 1.0);
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double variance_of(std::span<const double> v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double log_normal_cdf(double x) {
  if (x > 0.0) return std::log1p(-0.5 * std::erfc(x * kInvSqrt2));
  if (x > kTailSwitch) return std::log(normal_cdf(x));
  return -0.5 * x * x - kLogSqrt2Pi + std::log(mills_asymptotic(-x));
}

double inverse_mills(double x) {
  if (x > kTailSwitch) return normal_pdf(x) / normal_cdf(x);
  return 1.0 / mills_asymptotic(-x);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0) || x < 0.0 || x > 1.0)
    throw ValidationError(fmt::format("incomplete_beta: invalid arguments a={} b={} x={}", a, b, x));
  return incomplete_beta_xy(a, b, x, 1.0 - x);
}

double student_t_upper(double t, double df) {
  if (!(df > 0.0)) throw ValidationError(fmt::format("student_t_upper: df must be > 0, got {}", df));
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (t == 0.0) return 0.5;
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double t2 = t * t;
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  const double tail = 0.5 * incomplete_beta_xy(0.5 * df, 0.5, x, y);
  return t > 0.0 ? tail : 1.0 - tail;
}

double student_t_two_sided(double t, double df) {
  if (!(df > 0.0))
    throw ValidationError(fmt::format("student_t_two_sided: df must be > 0, got {}", df));
  if (t == 0.0) return 1.0;
  if (std::isinf(t)) return 0.0;
  const double t2 = t * t;
  return std::min(1.0, incomplete_beta_xy(0.5 * df, 0.5, df / (df + t2), t2 / (df + t2)));
}

WelchResult welch_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2)
    throw ValidationError(
        fmt::format("welch_t_test needs >= 2 observations per sample ({} / {})", x.size(), y.size()));
  const double mx = mean_of(x);
  const double my = mean_of(y);
  const double vx = variance_of(x, mx);
  const double vy = variance_of(y, my);
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  const double sx = vx / nx;
  const double sy = vy / ny;
  const double se2 = sx + sy;

  WelchResult r;
  if (se2 == 0.0) {
    if (mx == my) return r;
    r.t = mx > my ? std::numeric_limits<double>::infinity()
                  : -std::numeric_limits<double>::infinity();
    r.df = nx + ny - 2.0;
    r.p_value = std::numeric_limits<double>::min();
    r.cohens_d = std::numeric_limits<double>::infinity();
    return r;
  }
  r.t = (mx - my) / std::sqrt(se2);
  r.df = se2 * se2 / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
  r.p_value = student_t_two_sided(r.t, r.df);
  const double pooled = std::sqrt(((nx - 1.0) * vx + (ny - 1.0) * vy) / (nx + ny - 2.0));
  r.cohens_d = std::abs(mx - my) / pooled;
  return r;
}

double cramers_v(const GenotypeTable& t) {
  const double r0 = static_cast<double>(t[0][0] + t[0][1] + t[0][2]);
  const double r1 = static_cast<double>(t[1][0] + t[1][1] + t[1][2]);
  const double n = r0 + r1;
  if (r0 == 0.0 || r1 == 0.0) return 0.0;
  double chi2 = 0.0;
  int nonzero = 0;
  for (int j = 0; j < 3; ++j) {
    const double c = static_cast<double>(t[0][j] + t[1][j]);
    if (c == 0.0) continue;
    ++nonzero;
    const double e0 = r0 * c / n;
    const double e1 = r1 * c / n;
    chi2 += (t[0][j] - e0) * (t[0][j] - e0) / e0 + (t[1][j] - e1) * (t[1][j] - e1) / e1;
  }
  if (nonzero < 2) return 0.0;
  // min(rows - 1, cols - 1) = 1 for two rows.
  return std::min(1.0, std::sqrt(chi2 / n));
}

FisherResult fisher_exact_test(const GenotypeTable& t) {
  for (const auto& row : t)
    for (auto v : row)
      if (v < 0) throw ValidationError("fisher_exact_test: negative count");
  const std::int64_t r0 = t[0][0] + t[0][1] + t[0][2];
  const std::int64_t r1 = t[1][0] + t[1][1] + t[1][2];
  if (r0 == 0 || r1 == 0) throw ValidationError("fisher_exact_test: empty class row");
  const std::array<std::int64_t, 3> c{t[0][0] + t[1][0], t[0][1] + t[1][1], t[0][2] + t[1][2]};

  FisherResult res;
  res.collapsed = c[0] == 0 || c[1] == 0 || c[2] == 0;
  res.cramers_v = cramers_v(t);

  auto log_weight = [&](std::int64_t a, std::int64_t b) {
    const std::int64_t d = r0 - a - b;
    return -(log_factorial(a) + log_factorial(b) + log_factorial(d) + log_factorial(c[0] - a) +
             log_factorial(c[1] - b) + log_factorial(c[2] - d));
  };

  // Tables are indexed by the first row's (a, b); the rest follows from the margins.
  const double observed = log_weight(t[0][0], t[0][1]);
  std::vector<double> weights;
  double max_w = observed;
  for (std::int64_t a = std::max<std::int64_t>(0, r0 - c[1] - c[2]); a <= std::min(r0, c[0]); ++a) {
    for (std::int64_t b = std::max<std::int64_t>(0, r0 - a - c[2]); b <= std::min(r0 - a, c[1]);
         ++b) {
      const double w = log_weight(a, b);
      weights.push_back(w);
      max_w = std::max(max_w, w);
    }
  }
  const double tie_tol = 1e-12 * std::max(1.0, std::abs(observed));
  double total = 0.0;
  double tail = 0.0;
  for (double w : weights) {
    const double p = std::exp(w - max_w);
    total += p;
    if (w <= observed + tie_tol) tail += p;
  }
  res.p_value = std::min(1.0, tail / total);
  return res;
}

}  // namespace datscore::stats
