#include "lgmatch/ot.hpp"

#include <cmath>

namespace lgmatch::ot {

Mat cosine_cost(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) throw Error("cosine_cost: dimension mismatch");
  if (!all_finite(a) || !all_finite(b)) throw Error("cosine_cost: non-finite input");
  const Mat an = l2_normalize_rows(a);
  const Mat bn = l2_normalize_rows(b);
  Mat c = matmul_nt(an, bn);
  for (double& x : c.data()) x = 1.0 - x;
  return c;
}

ad::Var cosine_cost_var(ad::Tape& t, ad::Var a, ad::Var b) {
  ad::Var sim = t.matmul_nt(t.l2_normalize_rows(a), t.l2_normalize_rows(b));
  return t.add_scalar(t.scale(sim, -1.0), 1.0);
}

std::vector<double> uniform_marginal(std::size_t n) {
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

namespace {

void check_marginals(const Mat& cost, const std::vector<double>& mu,
                     const std::vector<double>& nu, double epsilon) {
  if (mu.size() != cost.rows() || nu.size() != cost.cols())
    throw Error("sinkhorn: marginal sizes do not match cost shape");
  if (epsilon <= 0.0) throw Error("sinkhorn: epsilon must be > 0");
  auto check = [](const std::vector<double>& m, const char* name) {
    double s = 0.0;
    for (double x : m) {
      if (x <= 0.0) throw Error(std::string("sinkhorn: ") + name + " must be strictly positive");
      s += x;
    }
    if (std::fabs(s - 1.0) > 1e-9)
      throw Error(std::string("sinkhorn: ") + name + " must sum to 1");
  };
  check(mu, "mu");
  check(nu, "nu");
  if (!all_finite(cost)) throw Error("sinkhorn: non-finite cost");
}

}  // namespace

TransportPlan sinkhorn(const Mat& cost, const std::vector<double>& mu,
                       const std::vector<double>& nu, double epsilon, std::size_t iters) {
  check_marginals(cost, mu, nu, epsilon);
  const std::size_t ns = cost.rows(), nf = cost.cols();
  std::vector<double> log_mu(ns), log_nu(nf);
  for (std::size_t i = 0; i < ns; ++i) log_mu[i] = std::log(mu[i]);
  for (std::size_t j = 0; j < nf; ++j) log_nu[j] = std::log(nu[j]);

  // Potentials f, g with T = exp((f_i + g_j - C_ij) / eps).
  std::vector<double> f(ns, 0.0), g(nf, 0.0);
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < ns; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nf; ++j)
        mx = std::max(mx, (g[j] - cost(i, j)) / epsilon);
      double s = 0.0;
      for (std::size_t j = 0; j < nf; ++j)
        s += std::exp((g[j] - cost(i, j)) / epsilon - mx);
      f[i] = epsilon * (log_mu[i] - (mx + std::log(s)));
    }
    for (std::size_t j = 0; j < nf; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < ns; ++i)
        mx = std::max(mx, (f[i] - cost(i, j)) / epsilon);
      double s = 0.0;
      for (std::size_t i = 0; i < ns; ++i)
        s += std::exp((f[i] - cost(i, j)) / epsilon - mx);
      g[j] = epsilon * (log_nu[j] - (mx + std::log(s)));
    }
  }

  TransportPlan p;
  p.plan = Mat(ns, nf);
  for (std::size_t i = 0; i < ns; ++i)
    for (std::size_t j = 0; j < nf; ++j)
      p.plan(i, j) = std::exp((f[i] + g[j] - cost(i, j)) / epsilon);
  p.mu = mu;
  p.nu = nu;
  p.epsilon = epsilon;
  p.iters = iters;
  return p;
}

ad::Var sinkhorn_var(ad::Tape& t, ad::Var cost, const std::vector<double>& mu,
                     const std::vector<double>& nu, double epsilon, std::size_t iters) {
  const Mat& cv = t.val(cost);
  check_marginals(cv, mu, nu, epsilon);
  const std::size_t ns = cv.rows(), nf = cv.cols();
  Mat log_mu(ns, 1), log_nu_row(1, nf);
  for (std::size_t i = 0; i < ns; ++i) log_mu(i, 0) = epsilon * std::log(mu[i]);
  for (std::size_t j = 0; j < nf; ++j) log_nu_row(0, j) = epsilon * std::log(nu[j]);
  ad::Var eps_log_mu = t.constant(std::move(log_mu));
  ad::Var eps_log_nu = t.constant(std::move(log_nu_row));

  const double inv_eps = 1.0 / epsilon;
  ad::Var neg_c_over_eps = t.scale(cost, -inv_eps);
  ad::Var f;  // ns x 1 potential
  ad::Var g;  // 1 x nf potential
  for (std::size_t it = 0; it < iters; ++it) {
    ad::Var m_row = it == 0 ? neg_c_over_eps
                            : t.add(neg_c_over_eps,
                                    t.broadcast_row(t.scale(g, inv_eps), ns));
    f = t.sub(eps_log_mu, t.scale(t.row_logsumexp(m_row), epsilon));
    ad::Var m_col = t.add(neg_c_over_eps, t.broadcast_col(t.scale(f, inv_eps), nf));
    g = t.sub(eps_log_nu, t.scale(t.col_logsumexp(m_col), epsilon));
  }
  ad::Var logits = t.add(t.add(neg_c_over_eps, t.broadcast_col(t.scale(f, inv_eps), nf)),
                         t.broadcast_row(t.scale(g, inv_eps), ns));
  return t.exp_(logits);
}

double ot_similarity(const Mat& plan, const Mat& cost) { return -frobenius_dot(plan, cost); }

double ot_loss(const Mat& plan, const Mat& cost) { return frobenius_dot(plan, cost); }

double entropic_objective(const Mat& plan, const Mat& cost, double epsilon) {
  double h = 0.0;
  for (double x : plan.data())
    if (x > 0.0) h -= x * std::log(x);
  return frobenius_dot(plan, cost) - epsilon * h;
}

}  // namespace lgmatch::ot
