#include "polydisp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "polydisp/errors.hpp"

namespace polydisp {

namespace {

// Lower regularized incomplete gamma P(a, x) by series; requires x < a + 1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 2000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper regularized incomplete gamma Q(a, x) by modified-Lentz continued
// fraction; requires x >= a + 1.
double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 2000; ++i) {
    const double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double poly(const double* coef, int n, double x) {
  double v = coef[n - 1];
  for (int i = n - 2; i >= 0; --i) v = v * x + coef[i];
  return v;
}

}  // namespace

double chisq_sf(double x, int df) {
  if (df < 1) throw std::invalid_argument("chisq_sf: df must be positive");
  if (!(x >= 0.0)) throw std::invalid_argument("chisq_sf: x must be >= 0");
  if (x == 0.0) return 1.0;
  const double a = 0.5 * df;
  const double h = 0.5 * x;
  if (h < a + 1.0) return 1.0 - gamma_p_series(a, h);
  return gamma_q_contfrac(a, h);
}

double normal_cdf(double z) {
  return 0.5 * std::erfc(-z * 0.7071067811865475244);
}

double normal_quantile(double p) {
  // Wichura (1988), algorithm AS 241, PPND16.
  if (!(p > 0.0 && p < 1.0)) {
    throw std::invalid_argument("normal_quantile: p must lie in (0, 1)");
  }
  static const double a[8] = {3.3871328727963666080e0, 1.3314166789178437745e2,
                              1.9715909503065514427e3, 1.3731693765509461125e4,
                              4.5921953931549871457e4, 6.7265770927008700853e4,
                              3.3430575583588128105e4, 2.5090809287301226727e3};
  static const double b[8] = {1.0, 4.2313330701600911252e1,
                              6.8718700749205790830e2, 5.3941960214247511077e3,
                              2.1213794301586595867e4, 3.9307895800092710610e4,
                              2.8729085735721942674e4, 5.2264952788528545610e3};
  static const double c[8] = {1.42343711074968357734e0, 4.63033784615654529590e0,
                              5.76949722146069140550e0, 3.64784832476320460504e0,
                              1.27045825245236838258e0, 2.41780725177450611770e-1,
                              2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static const double d[8] = {1.0, 2.05319162663775882187e0,
                              1.67638483018380384940e0, 6.89767334985100004550e-1,
                              1.48103976427480074590e-1, 1.51986665636164571966e-2,
                              5.47593808499534494600e-4, 1.05075007164441684324e-9};
  static const double e[8] = {6.65790464350110377720e0, 5.46378491116411436990e0,
                              1.78482653991729133580e0, 2.96560571828504891230e-1,
                              2.65321895265761230930e-2, 1.24266094738807843860e-3,
                              2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static const double f[8] = {1.0, 5.99832206555887937690e-1,
                              1.36929880922735805310e-1, 1.48753612908506148525e-2,
                              7.86869131145613259100e-4, 1.84631831751005468180e-5,
                              1.42151175831644588870e-7, 2.04426310338993978564e-15};

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * poly(a, 8, r) / poly(b, 8, r);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double value;
  if (r <= 5.0) {
    r -= 1.6;
    value = poly(c, 8, r) / poly(d, 8, r);
  } else {
    r -= 5.0;
    value = poly(e, 8, r) / poly(f, 8, r);
  }
  return q < 0.0 ? -value : value;
}

bool column_space_contained(const Eigen::MatrixXd& nested,
                            const Eigen::MatrixXd& full) {
  if (nested.rows() != full.rows()) return false;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(full);
  for (int c = 0; c < nested.cols(); ++c) {
    const Eigen::VectorXd col = nested.col(c);
    const Eigen::VectorXd residual = col - full * qr.solve(col);
    if (residual.norm() > 1e-8 * std::max(1.0, col.norm())) return false;
  }
  return true;
}

LrTestResult lr_test(const FitResult& nested, const FitResult& full) {
  if (nested.data_fingerprint != full.data_fingerprint) {
    throw std::invalid_argument("lr_test: fits come from different datasets");
  }
  if (!nested.converged) {
    throw UnconvergedError("lr_test: nested fit did not converge");
  }
  if (!full.converged) {
    throw UnconvergedError("lr_test: full fit did not converge");
  }
  if (!column_space_contained(nested.design, full.design)) {
    throw std::invalid_argument(
        "lr_test: nested model's design is not contained in the full model's");
  }
  LrTestResult out;
  out.df = full.n_parameters() - nested.n_parameters();
  if (out.df < 0) {
    throw std::invalid_argument("lr_test: full model has fewer parameters");
  }
  double diff = nested.deviance - full.deviance;
  if (diff < -1e-6) {
    throw OptimizerFailureError(
        "lr_test: nested model fits better than the full model beyond "
        "optimizer tolerance (deviance difference " +
        std::to_string(diff) + ")");
  }
  out.deviance_diff = std::max(diff, 0.0);
  out.p_value = out.df == 0 ? 1.0 : chisq_sf(out.deviance_diff, out.df);
  return out;
}

ShapiroWilkResult shapiro_wilk(const std::vector<double>& samples) {
  const int n = static_cast<int>(samples.size());
  if (n < 3 || n > 5000) {
    throw std::invalid_argument(
        "shapiro_wilk: sample size must be between 3 and 5000");
  }
  std::vector<double> x(samples);
  std::sort(x.begin(), x.end());
  if (x.front() == x.back()) {
    throw DegenerateSampleError("shapiro_wilk: sample is constant");
  }

  // Royston (1995), AS R94. Coefficients for the half-sample weights.
  const int n2 = n / 2;
  std::vector<double> w(n2);
  if (n == 3) {
    w[0] = std::sqrt(0.5);
  } else {
    std::vector<double> mm(n2);
    double summ2 = 0.0;
    for (int i = 0; i < n2; ++i) {
      mm[i] = normal_quantile((i + 1 - 0.375) / (n + 0.25));
      summ2 += mm[i] * mm[i];
    }
    summ2 *= 2.0;
    const double ssumm2 = std::sqrt(summ2);
    const double rsn = 1.0 / std::sqrt(static_cast<double>(n));
    static const double c1[6] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static const double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    const double w1 = poly(c1, 6, rsn) - mm[0] / ssumm2;
    if (n > 5) {
      const double w2 = poly(c2, 6, rsn) - mm[1] / ssumm2;
      const double fac = std::sqrt((summ2 - 2.0 * mm[0] * mm[0] - 2.0 * mm[1] * mm[1]) /
                                   (1.0 - 2.0 * w1 * w1 - 2.0 * w2 * w2));
      w[0] = w1;
      w[1] = w2;
      for (int i = 2; i < n2; ++i) w[i] = -mm[i] / fac;
    } else {
      const double fac = std::sqrt((summ2 - 2.0 * mm[0] * mm[0]) /
                                   (1.0 - 2.0 * w1 * w1));
      w[0] = w1;
      for (int i = 1; i < n2; ++i) w[i] = -mm[i] / fac;
    }
  }

  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ssq = 0.0;
  for (double xi : x) ssq += (xi - mean) * (xi - mean);
  double sb = 0.0;
  for (int i = 0; i < n2; ++i) sb += w[i] * (x[n - 1 - i] - x[i]);

  ShapiroWilkResult out;
  out.W = std::min(1.0, (sb * sb) / ssq);

  // P-value via Royston's normalizing transformations.
  if (n == 3) {
    const double pi6 = 6.0 / M_PI;
    const double stqr = std::asin(std::sqrt(0.75));
    double pw = pi6 * (std::asin(std::sqrt(out.W)) - stqr);
    out.p_value = std::clamp(pw, 0.0, 1.0);
    return out;
  }
  const double y = std::log1p(-out.W);
  double z;
  if (n <= 11) {
    const double an = static_cast<double>(n);
    const double gamma = -2.273 + 0.459 * an;
    const double mu = 0.5440 - 0.39978 * an + 0.025054 * an * an -
                      0.0006714 * an * an * an;
    const double sigma = std::exp(1.3822 - 0.77857 * an + 0.062767 * an * an -
                                  0.0020322 * an * an * an);
    if (gamma - y <= 0.0) {
      out.p_value = 0.0;  // W so small the transform degenerates
      return out;
    }
    z = (-std::log(gamma - y) - mu) / sigma;
  } else {
    const double ln_n = std::log(static_cast<double>(n));
    const double mu = -1.5861 - 0.31082 * ln_n - 0.083751 * ln_n * ln_n +
                      0.0038915 * ln_n * ln_n * ln_n;
    const double sigma = std::exp(-0.4803 - 0.082676 * ln_n +
                                  0.0030302 * ln_n * ln_n);
    z = (y - mu) / sigma;
  }
  out.p_value = 1.0 - normal_cdf(z);
  return out;
}

}  // namespace polydisp
