#include "polydisp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "polydisp/errors.hpp"

namespace polydisp {

namespace {

// Columns contributed by one side of a term: a numeric covariate yields one
// column, a factor yields an indicator per non-baseline level.
std::vector<std::pair<std::string, Eigen::VectorXd>> side_columns(
    const std::string& name, const GroupedLongitudinalDataset& data) {
  const int R = data.n_units() * data.n_times();
  if (const NumericCovariate* num = data.find_numeric(name)) {
    Eigen::VectorXd v(R);
    for (int r = 0; r < R; ++r) v[r] = num->value[r];
    return {{name, std::move(v)}};
  }
  if (const FactorCovariate* fac = data.find_factor(name)) {
    std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
    const int L = static_cast<int>(fac->level_labels.size());
    for (int lev = 1; lev < L; ++lev) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(R);
      for (int r = 0; r < R; ++r) {
        if (fac->level[r] == lev) v[r] = 1.0;
      }
      cols.emplace_back(name + "[" + fac->level_labels[lev] + "]", std::move(v));
    }
    return cols;
  }
  throw std::invalid_argument("model: unknown covariate '" + name + "'");
}

struct Engine {
  const GroupedLongitudinalDataset* data = nullptr;
  Eigen::MatrixXd X;    // R x P
  Eigen::MatrixXd Ynr;  // R x Q counts at non-reference categories
  std::vector<std::string> colnames;
  std::vector<int> nonref;  // category index per logit column
  int n = 0, T = 0, J = 0, m = 0, P = 0, Q = 0, ref = 0;
  bool use_u = true;

  int unit_of_row(int r) const { return r / T; }

  Engine(const ModelSpec& spec, const GroupedLongitudinalDataset& d) {
    data = &d;
    n = d.n_units();
    T = d.n_times();
    J = d.n_categories();
    m = d.group_size();
    ref = spec.reference_category;
    use_u = spec.random_intercept;
    if (ref < 0 || ref >= J) {
      throw std::invalid_argument("model: reference category out of range");
    }
    DesignMatrix dm = expand_design(spec, d);
    X = std::move(dm.X);
    colnames = std::move(dm.column_names);
    P = static_cast<int>(X.cols());
    Q = J - 1;
    for (int j = 0; j < J; ++j) {
      if (j != ref) nonref.push_back(j);
    }
    Ynr.resize(n * T, Q);
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) {
        for (int q = 0; q < Q; ++q) {
          Ynr(i * T + t, q) = d.count(i, nonref[q], t);
        }
      }
    }
  }

  // eta = X beta_q + u_i per non-reference logit.
  Eigen::MatrixXd eta(const Eigen::VectorXd& beta, const Eigen::VectorXd& u) const {
    Eigen::Map<const Eigen::MatrixXd> betaMat(beta.data(), P, Q);
    Eigen::MatrixXd E = X * betaMat;
    if (use_u) {
      for (int r = 0; r < E.rows(); ++r) E.row(r).array() += u[unit_of_row(r)];
    }
    return E;
  }

  // log(1 + sum_q exp(eta_rq)), max-shifted.
  static double log_partition(const Eigen::RowVectorXd& eta_row) {
    double zmax = 0.0;
    for (int q = 0; q < eta_row.size(); ++q) zmax = std::max(zmax, eta_row[q]);
    double s = std::exp(-zmax);
    for (int q = 0; q < eta_row.size(); ++q) s += std::exp(eta_row[q] - zmax);
    return zmax + std::log(s);
  }

  // Accumulated in extended precision: near the optimum the Newton steps
  // improve l by less than double rounding noise on a sum of this size, and
  // the line search must still be able to certify them.
  double l1_of_eta(const Eigen::MatrixXd& E) const {
    long double total = 0.0L;
    for (int r = 0; r < E.rows(); ++r) {
      long double row = -static_cast<long double>(m) * log_partition(E.row(r));
      for (int q = 0; q < Q; ++q) {
        row += static_cast<long double>(Ynr(r, q)) * E(r, q);
      }
      total += row;
    }
    return static_cast<double>(total);
  }

  double l2_of(const Eigen::VectorXd& u, double sigma2) const {
    return -0.5 * (n * std::log(2.0 * M_PI * sigma2) + u.squaredNorm() / sigma2);
  }

  double objective(const Eigen::VectorXd& beta, const Eigen::VectorXd& u,
                   double sigma2) const {
    const double l1 = l1_of_eta(eta(beta, u));
    return use_u ? l1 + l2_of(u, sigma2) : l1;
  }

  // Non-reference probabilities per row; pi_ref = 1 - rowwise sum.
  Eigen::MatrixXd probs(const Eigen::MatrixXd& E) const {
    Eigen::MatrixXd Pi(E.rows(), Q);
    for (int r = 0; r < E.rows(); ++r) {
      const double lse = log_partition(E.row(r));
      for (int q = 0; q < Q; ++q) Pi(r, q) = std::exp(E(r, q) - lse);
    }
    return Pi;
  }

  // Joint gradient (beta entries, then u when in use).
  Eigen::VectorXd gradient(const Eigen::MatrixXd& Pi, const Eigen::VectorXd& u,
                           double sigma2) const {
    const Eigen::MatrixXd Resid = Ynr - m * Pi;
    Eigen::MatrixXd Gb = X.transpose() * Resid;  // P x Q
    Eigen::VectorXd g(P * Q + (use_u ? n : 0));
    for (int q = 0; q < Q; ++q) g.segment(q * P, P) = Gb.col(q);
    if (use_u) {
      Eigen::VectorXd gu = Eigen::VectorXd::Zero(n);
      for (int r = 0; r < Resid.rows(); ++r) gu[unit_of_row(r)] += Resid.row(r).sum();
      gu -= u / sigma2;
      g.tail(n) = gu;
    }
    return g;
  }

  struct Hessian {
    Eigen::MatrixXd Bbb;  // negative Hessian, beta block
    Eigen::MatrixXd Bbu;  // (P*Q) x n
    Eigen::VectorXd Buu;  // diagonal
  };

  Hessian neg_hessian(const Eigen::MatrixXd& Pi, double sigma2) const {
    Hessian H;
    const int R = static_cast<int>(Pi.rows());
    H.Bbb = Eigen::MatrixXd::Zero(P * Q, P * Q);
    // Bbb block (q, q2) = X' diag(w) X with w_r = m * pi_q (delta - pi_q2).
    Eigen::VectorXd w(R);
    for (int q = 0; q < Q; ++q) {
      for (int q2 = q; q2 < Q; ++q2) {
        if (q == q2) {
          w = m * (Pi.col(q).array() * (1.0 - Pi.col(q).array()));
        } else {
          w = -m * (Pi.col(q).array() * Pi.col(q2).array());
        }
        const Eigen::MatrixXd block =
            X.transpose() * w.asDiagonal() * X;
        H.Bbb.block(q * P, q2 * P, P, P) = block;
        if (q2 != q) H.Bbb.block(q2 * P, q * P, P, P) = block.transpose();
      }
    }
    if (use_u) {
      H.Bbu = Eigen::MatrixXd::Zero(P * Q, n);
      H.Buu = Eigen::VectorXd::Constant(n, 1.0 / sigma2);
      for (int r = 0; r < R; ++r) {
        const int i = unit_of_row(r);
        const double S = Pi.row(r).sum();
        for (int q = 0; q < Q; ++q) {
          const double rs = m * Pi(r, q) * (1.0 - S);
          H.Bbu.col(i).segment(q * P, P) += rs * X.row(r).transpose();
        }
        H.Buu[i] += m * (S - S * S);
      }
    }
    return H;
  }
};

// Relative objective change used by the outer convergence test.
double rel_change(double now, double prev) {
  return std::abs(now - prev) / (1.0 + std::abs(prev));
}

}  // namespace

DesignMatrix expand_design(const ModelSpec& spec,
                           const GroupedLongitudinalDataset& data) {
  const int R = data.n_units() * data.n_times();
  std::vector<std::pair<std::string, Eigen::VectorXd>> cols;
  cols.emplace_back("(intercept)", Eigen::VectorXd::Ones(R));
  for (const Term& term : spec.terms) {
    switch (term.kind) {
      case Term::Kind::Continuous: {
        if (!data.find_numeric(term.name)) {
          throw std::invalid_argument("model: unknown numeric covariate '" +
                                      term.name + "'");
        }
        for (auto& c : side_columns(term.name, data)) cols.push_back(std::move(c));
        break;
      }
      case Term::Kind::Factor: {
        if (!data.find_factor(term.name)) {
          throw std::invalid_argument("model: unknown factor covariate '" +
                                      term.name + "'");
        }
        for (auto& c : side_columns(term.name, data)) cols.push_back(std::move(c));
        break;
      }
      case Term::Kind::Interaction: {
        const auto left = side_columns(term.name, data);
        const auto right = side_columns(term.name2, data);
        for (const auto& a : left) {
          for (const auto& b : right) {
            cols.emplace_back(a.first + ":" + b.first,
                              a.second.cwiseProduct(b.second));
          }
        }
        break;
      }
    }
  }
  DesignMatrix dm;
  dm.X.resize(R, static_cast<int>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) {
    dm.X.col(static_cast<int>(c)) = cols[c].second;
    dm.column_names.push_back(cols[c].first);
  }
  return dm;
}

Eigen::MatrixXd linear_predictor(const ModelSpec& spec,
                                 const Eigen::VectorXd& beta,
                                 const Eigen::VectorXd& u,
                                 const GroupedLongitudinalDataset& data) {
  Engine eng(spec, data);
  if (beta.size() != eng.P * eng.Q) {
    throw std::invalid_argument("linear_predictor: beta has wrong length");
  }
  if (eng.use_u && u.size() != eng.n) {
    throw std::invalid_argument("linear_predictor: u has wrong length");
  }
  return eng.eta(beta, u);
}

double penalized_loglik(const ModelSpec& spec, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& u, double sigma2,
                        const GroupedLongitudinalDataset& data) {
  if (sigma2 <= 0.0) {
    throw std::invalid_argument("penalized_loglik: sigma2 must be positive");
  }
  Engine eng(spec, data);
  if (beta.size() != eng.P * eng.Q || u.size() != eng.n) {
    throw std::invalid_argument("penalized_loglik: dimension mismatch");
  }
  return eng.l1_of_eta(eng.eta(beta, u)) + eng.l2_of(u, sigma2);
}

Eigen::VectorXd penalized_gradient(const ModelSpec& spec,
                                   const Eigen::VectorXd& beta,
                                   const Eigen::VectorXd& u, double sigma2,
                                   const GroupedLongitudinalDataset& data) {
  if (sigma2 <= 0.0) {
    throw std::invalid_argument("penalized_gradient: sigma2 must be positive");
  }
  Engine eng(spec, data);
  if (beta.size() != eng.P * eng.Q || u.size() != eng.n) {
    throw std::invalid_argument("penalized_gradient: dimension mismatch");
  }
  return eng.gradient(eng.probs(eng.eta(beta, u)), u, sigma2);
}

FitResult fit(const ModelSpec& spec, const GroupedLongitudinalDataset& data,
              const FitOptions& options) {
  Engine eng(spec, data);
  const int n = eng.n, T = eng.T, J = eng.J, m = eng.m, P = eng.P, Q = eng.Q;

  // A category that never occurs would silently distort the index's
  // J-average downstream; refuse to fit instead.
  for (int j = 0; j < J; ++j) {
    long long tot = 0;
    for (int i = 0; i < n; ++i) {
      for (int t = 0; t < T; ++t) tot += data.count(i, j, t);
    }
    if (tot == 0) {
      throw DegenerateCategoryError(
          "fit: category '" + data.category_label(j) + "' has zero total count",
          j, -1);
    }
  }

  // Aliased columns make the Hessian singular; report them by name.
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(eng.X);
    qr.setThreshold(1e-10);
    const int rank = static_cast<int>(qr.rank());
    if (rank < P) {
      std::vector<std::string> aliased;
      const auto& perm = qr.colsPermutation().indices();
      for (int k = rank; k < P; ++k) aliased.push_back(eng.colnames[perm[k]]);
      std::ostringstream msg;
      msg << "fit: design matrix is rank deficient; aliased columns:";
      for (const auto& c : aliased) msg << " " << c;
      throw RankDeficiencyError(msg.str(), aliased);
    }
  }

  if (spec.fixed_sigma2 && *spec.fixed_sigma2 <= 0.0) {
    throw std::invalid_argument("fit: fixed sigma2 must be positive");
  }

  // Starting values: pooled log-odds for the intercepts, zero elsewhere.
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(P * Q);
  {
    Eigen::VectorXd totals = Eigen::VectorXd::Zero(J);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < J; ++j) {
        for (int t = 0; t < T; ++t) totals[j] += data.count(i, j, t);
      }
    }
    for (int q = 0; q < Q; ++q) {
      beta[q * P] = std::log((totals[eng.nonref[q]] + 0.5) / (totals[eng.ref] + 0.5));
    }
  }
  Eigen::VectorXd u = Eigen::VectorXd::Zero(n);
  const bool use_u = eng.use_u;
  const bool free_sigma2 = use_u && !spec.fixed_sigma2;
  double sigma2 = use_u ? spec.fixed_sigma2.value_or(1.0) : 1.0;

  FitResult result;
  result.n_units = n;
  result.n_categories = J;
  result.n_times = T;
  result.group_size = m;
  result.reference_category = eng.ref;
  result.column_names = eng.colnames;
  result.design = eng.X;
  result.data_fingerprint = data.fingerprint();
  for (int q = 0; q < Q; ++q) {
    for (int p = 0; p < P; ++p) {
      result.parameter_names.push_back(data.category_label(eng.nonref[q]) + ":" +
                                       eng.colnames[p]);
    }
  }

  auto objective = [&](const Eigen::VectorXd& b, const Eigen::VectorXd& uu) {
    return use_u ? eng.l1_of_eta(eng.eta(b, uu)) + eng.l2_of(uu, sigma2)
                 : eng.l1_of_eta(eng.eta(b, uu));
  };

  Engine::Hessian hess;
  bool stalled = false;
  std::string stall_reason;

  // One Newton pass over (beta, u) at the current sigma2.
  auto inner_newton = [&]() {
    stalled = false;
    for (int it = 0; it < options.max_newton_iterations; ++it) {
      const Eigen::MatrixXd E = eng.eta(beta, u);
      const Eigen::MatrixXd Pi = eng.probs(E);
      const double l_cur =
          use_u ? eng.l1_of_eta(E) + eng.l2_of(u, sigma2) : eng.l1_of_eta(E);
      const Eigen::VectorXd g = eng.gradient(Pi, u, sigma2);
      if (g.lpNorm<Eigen::Infinity>() < options.gradient_tol) return;
      hess = eng.neg_hessian(Pi, sigma2);

      // Schur-complement solve; the u block is diagonal.
      Eigen::VectorXd db, du;
      const Eigen::VectorXd gb = g.head(P * Q);
      double ridge = 0.0;
      bool solved = false;
      for (int attempt = 0; attempt < 20 && !solved; ++attempt) {
        Eigen::MatrixXd S;
        Eigen::VectorXd rhs;
        if (use_u) {
          const Eigen::VectorXd gu = g.tail(n);
          const Eigen::VectorXd invBuu = hess.Buu.cwiseInverse();
          const Eigen::MatrixXd M = hess.Bbu * invBuu.asDiagonal();
          S = hess.Bbb - M * hess.Bbu.transpose();
          rhs = gb - M * gu;
          if (ridge > 0.0) S.diagonal().array() += ridge;
          Eigen::LLT<Eigen::MatrixXd> llt(S);
          if (llt.info() == Eigen::Success) {
            db = llt.solve(rhs);
            du = invBuu.cwiseProduct(gu - hess.Bbu.transpose() * db);
            solved = true;
          }
        } else {
          S = hess.Bbb;
          if (ridge > 0.0) S.diagonal().array() += ridge;
          Eigen::LLT<Eigen::MatrixXd> llt(S);
          if (llt.info() == Eigen::Success) {
            db = llt.solve(gb);
            solved = true;
          }
        }
        if (!solved) {
          ridge = (ridge == 0.0)
                      ? options.hessian_ridge * (1.0 + hess.Bbb.diagonal().maxCoeff())
                      : ridge * 10.0;
        }
      }
      if (!solved) {
        stalled = true;
        stall_reason = "Newton system could not be factorized";
        return;
      }

      double gd = gb.dot(db);
      if (use_u) gd += g.tail(n).dot(du);
      if (!std::isfinite(gd) || gd <= 0.0) {
        stalled = true;
        stall_reason = "non-ascent Newton direction";
        return;
      }

      // Step halving against the Armijo condition.
      double step = 1.0;
      bool accepted = false;
      for (int h = 0; h <= options.max_step_halvings; ++h) {
        const Eigen::VectorXd b_new = beta + step * db;
        const Eigen::VectorXd u_new = use_u ? (u + step * du).eval() : u;
        const double l_new = objective(b_new, u_new);
        if (std::isfinite(l_new) && l_new >= l_cur + 1e-4 * step * gd) {
          beta = b_new;
          if (use_u) u = u_new;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        stalled = true;
        stall_reason = "line search failed to improve the objective";
        return;
      }
    }
  };

  double l_prev = std::numeric_limits<double>::quiet_NaN();
  double gnorm = std::numeric_limits<double>::quiet_NaN();
  int outer = 0;
  for (outer = 1; outer <= options.max_outer_iterations; ++outer) {
    inner_newton();
    const double sigma2_old = sigma2;
    if (free_sigma2) {
      sigma2 = std::max(u.squaredNorm() / n, options.sigma2_floor);
    }
    const double l_now = objective(beta, u);
    gnorm = eng.gradient(eng.probs(eng.eta(beta, u)), u, sigma2)
                .lpNorm<Eigen::Infinity>();
    if (outer > 1 && rel_change(l_now, l_prev) < options.objective_rel_tol &&
        gnorm < options.gradient_tol) {
      result.converged = true;
      l_prev = l_now;
      break;
    }
    l_prev = l_now;
    if (stalled && std::abs(sigma2 - sigma2_old) <= 1e-14 * sigma2_old) {
      break;  // no further progress possible
    }
  }
  result.iterations = std::min(outer, options.max_outer_iterations);
  if (!result.converged) {
    std::ostringstream msg;
    msg << "fit did not converge after " << result.iterations
        << " outer iterations (gradient norm " << gnorm;
    if (!stall_reason.empty()) msg << "; " << stall_reason;
    msg << ")";
    result.message = msg.str();
  }

  // Final state.
  const Eigen::MatrixXd E = eng.eta(beta, u);
  const Eigen::MatrixXd Pi = eng.probs(E);
  result.beta = beta;
  result.u = use_u ? u : Eigen::VectorXd::Zero(n);
  result.sigma2 = use_u ? sigma2 : 0.0;
  result.loglik = eng.l1_of_eta(E);
  result.penalized_loglik =
      use_u ? result.loglik + eng.l2_of(u, sigma2) : result.loglik;
  result.deviance = -2.0 * result.loglik;

  result.fitted.assign(static_cast<std::size_t>(n) * J * T, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < T; ++t) {
      const int r = i * T + t;
      double ref_prob = 1.0;
      for (int q = 0; q < Q; ++q) ref_prob -= Pi(r, q);
      for (int q = 0; q < Q; ++q) {
        result.fitted[(static_cast<std::size_t>(i) * J + eng.nonref[q]) * T + t] =
            Pi(r, q);
      }
      result.fitted[(static_cast<std::size_t>(i) * J + eng.ref) * T + t] = ref_prob;
    }
  }

  // Standard errors from the beta block of the negative Hessian of l
  // (unridged; the penalty term does not involve beta).
  {
    const Engine::Hessian H = eng.neg_hessian(Pi, use_u ? sigma2 : 1.0);
    Eigen::LLT<Eigen::MatrixXd> llt(H.Bbb);
    if (llt.info() == Eigen::Success) {
      const Eigen::MatrixXd cov =
          llt.solve(Eigen::MatrixXd::Identity(P * Q, P * Q));
      result.se_beta = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    } else {
      result.se_beta =
          Eigen::VectorXd::Constant(P * Q, std::numeric_limits<double>::quiet_NaN());
      if (result.converged) {
        result.converged = false;
        result.message = "Hessian not positive definite at the optimum";
      }
    }
  }
  return result;
}

double deviance_of(const FitResult& result) {
  if (!result.converged) {
    throw UnconvergedError("deviance_of: fit did not converge: " + result.message);
  }
  return result.deviance;
}

}  // namespace polydisp
