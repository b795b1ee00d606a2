#include "rdps/full.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include "rdps/errors.hpp"
#include "rdps/parallel.hpp"

namespace rdps {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Per-candidate augmented refits with the covariate-side work shared
// ---------------------------------------------------------------------------

Eigen::MatrixXd intercept_design(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

Eigen::MatrixXd laplacian(const Eigen::MatrixXd& x, double gamma) {
  Eigen::MatrixXd k(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      k(i, j) = std::exp(-(x.row(i) - x.row(j)).norm() / gamma);
  return k;
}

// Prediction differences d_i(y') = yhat'_{n+1} - yhat'_i of the model refit
// on the augmented data, one candidate outcome at a time.
class AugmentedFitter {
 public:
  AugmentedFitter(const Dataset& data, const RegressorSpec& spec,
                  const Eigen::RowVectorXd& x_new)
      : data_(data), spec_(spec), n_(data.size()) {
    aug_x_.resize(n_ + 1, data.dim());
    aug_x_.topRows(n_) = data.covariates();
    aug_x_.row(n_) = x_new;
    y0_.resize(n_ + 1);
    y0_.head(n_) = data.outcomes();
    y0_(n_) = 0.0;

    if (std::holds_alternative<OlsSpec>(spec)) {
      const Eigen::MatrixXd d = intercept_design(aug_x_);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU);
      const auto& s = svd.singularValues();
      if (!(s(s.size() - 1) / s(0) > 1e-12))
        throw numeric_error("augmented ols design rank-deficient");
      u_ = svd.matrixU();
    } else if (const auto* k = std::get_if<KrrSpec>(&spec)) {
      kernel_ = laplacian(aug_x_, k->gamma);
      Eigen::MatrixXd g = kernel_;
      g.diagonal().array() += k->lambda;
      llt_.compute(g);
      if (llt_.info() != Eigen::Success)
        throw numeric_error("augmented krr gram matrix is numerically singular");
    } else if (const auto* s = std::get_if<KernelSmootherSpec>(&spec)) {
      weights_ = laplacian(aug_x_, s->bandwidth);
      row_sums_ = weights_.rowwise().sum();
      Eigen::VectorXd cy = data.outcomes();
      for (Eigen::Index i = 0; i < cy.size(); ++i) cy(i) = clip(cy(i), *s);
      smoother_base_ = weights_.leftCols(n_) * cy;
    }
    // QuantileSgd and Deleted refit from scratch per candidate.
  }

  Eigen::VectorXd predictions(double y_prime) const {
    if (std::holds_alternative<OlsSpec>(spec_)) {
      Eigen::VectorXd y = y0_;
      y(n_) = y_prime;
      return u_ * (u_.transpose() * y);
    }
    if (std::holds_alternative<KrrSpec>(spec_)) {
      Eigen::VectorXd y = y0_;
      y(n_) = y_prime;
      return kernel_ * llt_.solve(y);
    }
    if (const auto* s = std::get_if<KernelSmootherSpec>(&spec_)) {
      return (smoother_base_ + clip(y_prime, *s) * weights_.col(n_))
          .cwiseQuotient(row_sums_);
    }
    if (const auto* q = std::get_if<QuantileSgdSpec>(&spec_)) {
      const double scale =
          q->step_scale ? *q->step_scale : 0.5 * training_sd();
      Eigen::VectorXd y = y0_;
      y(n_) = y_prime;
      const Eigen::MatrixXd design = intercept_design(aug_x_);
      const Eigen::VectorXd beta =
          run_quantile_sgd(design, y, q->tau, scale, q->n_passes, q->seed).beta;
      return design * beta;
    }
    const auto& del = std::get<DeletedSpec>(spec_);
    Eigen::VectorXd y = y0_;
    y(n_) = y_prime;
    const Dataset aug(aug_x_, y);
    return deleted_fit(aug, del.inner, del.trim_fraction).fitted();
  }

  Eigen::VectorXd diffs(double y_prime) const {
    const Eigen::VectorXd p = predictions(y_prime);
    return Eigen::VectorXd::Constant(n_, p(n_)) - p.head(n_);
  }

  int n() const { return n_; }

 private:
  static double clip(double y, const KernelSmootherSpec& s) {
    if (s.trim_hi) y = std::min(y, *s.trim_hi);
    if (s.trim_lo) y = std::max(y, *s.trim_lo);
    return y;
  }

  double training_sd() const {
    const auto& y = data_.outcomes();
    if (y.size() < 2) return 2.0;  // scale 1.0 after halving
    const double mean = y.mean();
    return std::sqrt((y.array() - mean).square().sum() /
                     static_cast<double>(y.size() - 1));
  }

  const Dataset& data_;
  RegressorSpec spec_;
  int n_;
  Eigen::MatrixXd aug_x_;
  Eigen::VectorXd y0_;
  Eigen::MatrixXd u_;        // OLS: thin U of the augmented design
  Eigen::MatrixXd kernel_;   // KRR
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::MatrixXd weights_;  // smoother
  Eigen::VectorXd row_sums_;
  Eigen::VectorXd smoother_base_;
};

// Fast deleted-fit profiles for OLS/KRR inners: the initial augmented-fit
// residual vector is affine in the candidate outcome, and refits are memoized
// per survivor set.
class DeletedGridFitter {
 public:
  DeletedGridFitter(const Dataset& data, const BaseSpec& inner, double q,
                    const Eigen::RowVectorXd& x_new)
      : n_(data.size()), q_(q), inner_(inner) {
    aug_x_.resize(n_ + 1, data.dim());
    aug_x_.topRows(n_) = data.covariates();
    aug_x_.row(n_) = x_new;
    y0_.resize(n_ + 1);
    y0_.head(n_) = data.outcomes();
    y0_(n_) = 0.0;
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n_ + 1);
    e(n_) = 1.0;

    if (std::holds_alternative<OlsSpec>(inner)) {
      design_ = intercept_design(aug_x_);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(design_, Eigen::ComputeThinU);
      const auto& s = svd.singularValues();
      if (!(s(s.size() - 1) / s(0) > 1e-12))
        throw numeric_error("augmented ols design rank-deficient");
      const Eigen::MatrixXd& u = svd.matrixU();
      r0_ = y0_ - u * (u.transpose() * y0_);
      r1_ = e - u * (u.transpose() * e);
      ols_ = true;
    } else if (const auto* k = std::get_if<KrrSpec>(&inner)) {
      lambda_ = k->lambda;
      kernel_ = laplacian(aug_x_, k->gamma);
      Eigen::MatrixXd g = kernel_;
      g.diagonal().array() += lambda_;
      Eigen::LLT<Eigen::MatrixXd> llt(g);
      if (llt.info() != Eigen::Success)
        throw numeric_error("augmented krr gram matrix is numerically singular");
      r0_ = y0_ - kernel_ * llt.solve(y0_);
      r1_ = e - kernel_ * llt.solve(e);
      ols_ = false;
    } else {
      throw capability_error("fast deleted grid supports ols and krr inners");
    }
  }

  static bool supports(const BaseSpec& inner) {
    return std::holds_alternative<OlsSpec>(inner) ||
           std::holds_alternative<KrrSpec>(inner);
  }

  Eigen::VectorXd diffs(double y_prime) {
    const Eigen::VectorXd res = r0_ + y_prime * r1_;
    const std::vector<int> survivors = deletion_survivors(res, q_);
    Refit& rf = refit_for(survivors);
    Eigen::VectorXd ys(survivors.size());
    for (std::size_t i = 0; i < survivors.size(); ++i)
      ys(i) = survivors[i] == n_ ? y_prime : y0_(survivors[i]);
    Eigen::VectorXd pred;
    if (ols_) {
      pred = design_ * rf.svd.solve(ys);
    } else {
      pred = rf.cross * rf.llt.solve(ys);
    }
    return Eigen::VectorXd::Constant(n_, pred(n_)) - pred.head(n_);
  }

 private:
  struct Refit {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd;  // OLS: subset design
    Eigen::LLT<Eigen::MatrixXd> llt;        // KRR: subset gram
    Eigen::MatrixXd cross;                  // KRR: kernel rows (all x survivors)
  };

  Refit& refit_for(const std::vector<int>& survivors) {
    auto it = cache_.find(survivors);
    if (it != cache_.end()) return it->second;
    Refit rf;
    if (ols_) {
      Eigen::MatrixXd sub(survivors.size(), design_.cols());
      for (std::size_t i = 0; i < survivors.size(); ++i)
        sub.row(i) = design_.row(survivors[i]);
      rf.svd.compute(sub, Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& s = rf.svd.singularValues();
      if (!(s(s.size() - 1) / s(0) > 1e-12))
        throw numeric_error("deleted refit design rank-deficient");
    } else {
      Eigen::MatrixXd sub(survivors.size(), survivors.size());
      rf.cross.resize(n_ + 1, survivors.size());
      for (std::size_t j = 0; j < survivors.size(); ++j) {
        rf.cross.col(j) = kernel_.col(survivors[j]);
        for (std::size_t i = 0; i < survivors.size(); ++i)
          sub(i, j) = kernel_(survivors[i], survivors[j]);
      }
      sub.diagonal().array() += lambda_;
      rf.llt.compute(sub);
      if (rf.llt.info() != Eigen::Success)
        throw numeric_error("deleted refit gram matrix is numerically singular");
    }
    return cache_.emplace(survivors, std::move(rf)).first->second;
  }

  int n_;
  double q_;
  BaseSpec inner_;
  bool ols_ = true;
  double lambda_ = 0.0;
  Eigen::MatrixXd aug_x_;
  Eigen::VectorXd y0_;
  Eigen::MatrixXd design_;  // OLS
  Eigen::MatrixXd kernel_;  // KRR
  Eigen::VectorXd r0_, r1_;  // initial-fit residuals: r0 + y' * r1
  std::map<std::vector<int>, Refit> cache_;
};

// ---------------------------------------------------------------------------
// Bound assembly from forecast profiles
// ---------------------------------------------------------------------------

// One candidate's forecast of the new outcome, as counts: G(y) =
// (base + #{atoms <= y}) / denom. Atoms pinned at -inf go into base; atoms
// pinned at +inf are simply omitted.
struct GridProfile {
  std::vector<double> atoms;
  int base = 0;
};

PredictiveSystem bounds_from_profiles(std::vector<GridProfile> profiles,
                                      int denom) {
  std::vector<double> breaks;
  for (const auto& p : profiles)
    breaks.insert(breaks.end(), p.atoms.begin(), p.atoms.end());
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  const std::size_t k = breaks.size() + 1;  // intervals, left tail first
  std::vector<int> lo(k, std::numeric_limits<int>::max());
  std::vector<int> up(k, std::numeric_limits<int>::min());
  for (auto& p : profiles) {
    std::sort(p.atoms.begin(), p.atoms.end());
    std::size_t pos = 0;
    int count = p.base;
    lo[0] = std::min(lo[0], count);
    up[0] = std::max(up[0], count);
    for (std::size_t j = 0; j < breaks.size(); ++j) {
      while (pos < p.atoms.size() && p.atoms[pos] <= breaks[j]) {
        ++pos;
        ++count;
      }
      lo[j + 1] = std::min(lo[j + 1], count);
      up[j + 1] = std::max(up[j + 1], count);
    }
  }
  return PredictiveSystem::from_counts(std::move(breaks), std::move(lo),
                                       std::move(up), denom);
}

// Candidate range wide enough that every indicator crossing relevant to the
// bounds lies inside it. A data-span grid undersamples affine backends badly:
// the crossing (y - btilde_i) / s_i sits far outside the outcome range when
// the slope s_i is small, and the count extrema live out there with it.
std::pair<double, double> crossing_covering_range(const Dataset& data,
                                                  const GridStrategy& g,
                                                  const LinearCoefficients& lc) {
  const int n = data.size();
  const double ymin = data.outcomes().minCoeff();
  const double ymax = data.outcomes().maxCoeff();
  const double r = std::max(ymax - ymin, 1.0);
  double e_lo = ymin - r, e_hi = ymax + r;
  for (int i = 0; i < n; ++i) {
    const double bt = lc.b(n) - lc.b(i) + data.outcome(i);
    e_lo = std::min(e_lo, bt - r);
    e_hi = std::max(e_hi, bt + r);
  }
  double lo = ymin - g.span_mult * r, hi = ymax + g.span_mult * r;
  for (int i = 0; i < n; ++i) {
    const double s = lc.a(n) - lc.a(i);
    if (s == 0.0) continue;
    const double bt = lc.b(n) - lc.b(i) + data.outcome(i);
    for (double e : {e_lo, e_hi}) {
      const double c = std::clamp((e - bt) / s, -1e8, 1e8);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  return {lo, hi};
}

// Analytic limit profiles for an affine backend. Slopes s_i = a_new - a_i,
// offsets delta_i = b_new - b_i: as the candidate outcome walks to -inf the
// i-th atom y_i + d_i goes to -inf whenever s_i > 0 (and the candidate's own
// atom contributes for every y), mirrored at +inf.
GridProfile profile_at_minus_inf(const Dataset& data, const LinearCoefficients& lc) {
  GridProfile p;
  const int n = data.size();
  p.base = 1;  // the candidate's own atom
  for (int i = 0; i < n; ++i) {
    const double s = lc.a(n) - lc.a(i);
    if (s > 0.0) ++p.base;
    else if (s == 0.0) p.atoms.push_back(data.outcome(i) + (lc.b(n) - lc.b(i)));
  }
  return p;
}

GridProfile profile_at_plus_inf(const Dataset& data, const LinearCoefficients& lc) {
  GridProfile p;
  const int n = data.size();
  for (int i = 0; i < n; ++i) {
    const double s = lc.a(n) - lc.a(i);
    if (s < 0.0) ++p.base;
    else if (s == 0.0) p.atoms.push_back(data.outcome(i) + (lc.b(n) - lc.b(i)));
  }
  return p;
}

template <typename DiffsFn>
std::vector<GridProfile> profiles_over_grid(const Dataset& data,
                                            const std::vector<double>& y_grid,
                                            bool parallel, DiffsFn&& diffs) {
  const int n = data.size();
  std::vector<GridProfile> profiles(y_grid.size());
  const int threads = parallel ? effective_threads(0) : 1;
  // A fit failure must not unwind through the worker loop; it is rethrown
  // after the loop drains.
  std::exception_ptr error;
  std::mutex error_mutex;
  parallel_for(static_cast<int>(y_grid.size()), threads, [&](int g) {
    try {
      const double yp = y_grid[static_cast<std::size_t>(g)];
      const Eigen::VectorXd d = diffs(yp);
      GridProfile& p = profiles[static_cast<std::size_t>(g)];
      p.atoms.resize(static_cast<std::size_t>(n) + 1);
      for (int i = 0; i < n; ++i)
        p.atoms[static_cast<std::size_t>(i)] = data.outcome(i) + d(i);
      p.atoms.back() = yp;  // the candidate's own atom
    } catch (...) {
      const std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  });
  if (error) std::rethrow_exception(error);
  return profiles;
}

// ---------------------------------------------------------------------------
// Exact min/max of the profile count over all candidate outcomes (affine case)
// ---------------------------------------------------------------------------

// The affine family p_k(y') = slope_k * y' + intercept_k whose values are the
// atom positions; the count at outcome y is #{k : p_k(y') <= y} and the
// bounds are its min/max over y'.
struct AffineFamily {
  std::vector<double> slope;      // includes the candidate's own atom (slope 1)
  std::vector<double> intercept;
};

AffineFamily affine_family(const Dataset& data, const LinearCoefficients& lc) {
  const int n = data.size();
  AffineFamily f;
  f.slope.resize(n + 1);
  f.intercept.resize(n + 1);
  for (int i = 0; i < n; ++i) {
    f.slope[i] = lc.a(n) - lc.a(i);
    f.intercept[i] = lc.b(n) - lc.b(i) + data.outcome(i);
  }
  f.slope[n] = 1.0;      // the candidate's own atom sits at y' itself
  f.intercept[n] = 0.0;
  return f;
}

// Common roots of pairs with opposite slope signs (the candidate's own atom
// counts with slope +1); see the grid construction in full_rdps.
std::vector<double> opposite_slope_roots(const Dataset& data,
                                         const LinearCoefficients& lc) {
  const AffineFamily f = affine_family(data, lc);
  std::vector<double> roots;
  for (std::size_t i = 0; i < f.slope.size(); ++i) {
    if (f.slope[i] <= 0.0) continue;
    for (std::size_t j = 0; j < f.slope.size(); ++j) {
      if (f.slope[j] >= 0.0) continue;
      const double yp = (f.intercept[j] - f.intercept[i]) / (f.slope[i] - f.slope[j]);
      if (std::isfinite(yp) && std::abs(yp) <= 1e8) roots.push_back(yp);
    }
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  return roots;
}

// For fixed y, each member is satisfied on a half line in y': left-closed
// (slope > 0), right-closed (slope < 0), or constantly (slope 0). The count
// is piecewise constant in y' with changes only at the half-line endpoints;
// min/max come from sweeping the endpoints, their gaps, and both tails.
std::pair<int, int> count_range_at(const AffineFamily& f, double y) {
  std::vector<double> left_closed;   // satisfied for y' <= c
  std::vector<double> right_closed;  // satisfied for y' >= c
  int base = 0;
  for (std::size_t k = 0; k < f.slope.size(); ++k) {
    const double s = f.slope[k];
    if (s > 0.0) left_closed.push_back((y - f.intercept[k]) / s);
    else if (s < 0.0) right_closed.push_back((y - f.intercept[k]) / s);
    else if (f.intercept[k] <= y) ++base;
  }
  std::sort(left_closed.begin(), left_closed.end());
  std::sort(right_closed.begin(), right_closed.end());

  std::vector<double> cand = left_closed;
  cand.insert(cand.end(), right_closed.begin(), right_closed.end());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

  const auto n_left_ge = [&](double v) {
    return static_cast<int>(left_closed.end() -
                            std::lower_bound(left_closed.begin(), left_closed.end(), v));
  };
  const auto n_right_le = [&](double v) {
    return static_cast<int>(std::upper_bound(right_closed.begin(),
                                             right_closed.end(), v) -
                            right_closed.begin());
  };

  int min_c = base + static_cast<int>(left_closed.size());  // y' -> -inf
  int max_c = min_c;
  const int at_plus_inf = base + static_cast<int>(right_closed.size());
  min_c = std::min(min_c, at_plus_inf);
  max_c = std::max(max_c, at_plus_inf);
  for (std::size_t j = 0; j < cand.size(); ++j) {
    const int at_point = base + n_left_ge(cand[j]) + n_right_le(cand[j]);
    min_c = std::min(min_c, at_point);
    max_c = std::max(max_c, at_point);
    // open gap to the next candidate (the tails are already covered)
    if (j + 1 < cand.size()) {
      const int in_gap = base + n_left_ge(cand[j + 1]) + n_right_le(cand[j]);
      min_c = std::min(min_c, in_gap);
      max_c = std::max(max_c, in_gap);
    }
  }
  return {min_c, max_c};
}

// Jump locations of the exact bounds: the k-th order statistic of the family
// is piecewise affine in y', so its extrema over y' sit at pairwise crossing
// values (or at the flat members' own levels). Evaluating the bounds at all
// of those, plus one probe below, reproduces them exactly.
std::vector<double> exact_eval_points(const AffineFamily& f) {
  std::vector<double> pts;
  const std::size_t m = f.slope.size();
  for (std::size_t i = 0; i < m; ++i) {
    pts.push_back(f.intercept[i]);
    for (std::size_t j = i + 1; j < m; ++j) {
      if (f.slope[i] == f.slope[j]) continue;
      const double yp = (f.intercept[j] - f.intercept[i]) / (f.slope[i] - f.slope[j]);
      if (!std::isfinite(yp)) continue;
      const double v = f.slope[i] * yp + f.intercept[i];
      if (std::isfinite(v)) pts.push_back(v);
    }
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

PredictiveSystem linear_exact_bounds(const Dataset& data,
                                     const LinearCoefficients& lc) {
  const AffineFamily fam = affine_family(data, lc);
  const std::vector<double> breaks = exact_eval_points(fam);
  const int denom = data.size() + 1;

  // Both bounds are nondecreasing in y with jumps only at the candidate
  // values, so interval interiors determine them. Interiors are probed at
  // midpoints rather than left endpoints: a candidate value computed through
  // two rounded operations can sit a few ulps shy of the true jump, and
  // evaluating exactly there would hold the pre-jump count for the whole
  // interval.
  std::vector<int> lo(breaks.size() + 1), up(breaks.size() + 1);
  std::tie(lo[0], up[0]) =
      count_range_at(fam, std::nextafter(breaks.front(), -kInf));
  for (std::size_t j = 0; j < breaks.size(); ++j) {
    double probe;
    if (j + 1 < breaks.size()) {
      probe = 0.5 * (breaks[j] + breaks[j + 1]);
      if (!(probe > breaks[j]) || !(probe < breaks[j + 1])) probe = breaks[j];
    } else {
      probe = breaks[j] + std::max(1.0, std::abs(breaks[j]) * 1e-9);
    }
    std::tie(lo[j + 1], up[j + 1]) = count_range_at(fam, probe);
  }
  return PredictiveSystem::from_counts(breaks, std::move(lo), std::move(up), denom);
}

// ---------------------------------------------------------------------------
// Conformity-score machinery (full CPS)
// ---------------------------------------------------------------------------

struct ScoreLines {
  // A_i(y) and A_new(y) are affine in y; their differences D_i = A_new - A_i
  // have slope sigma_i and intercept kappa_i.
  Eigen::VectorXd sigma;
  Eigen::VectorXd kappa;
};

ScoreLines score_lines(const Dataset& data, const LinearCoefficients& lc,
                       ConformityKind kind) {
  const int n = data.size();
  Eigen::VectorXd denom = Eigen::VectorXd::Ones(n + 1);
  if (kind == ConformityKind::studentised) {
    if (lc.leverage.size() != n + 1)
      throw capability_error("studentised conformity requires augmented leverage");
    for (int i = 0; i <= n; ++i) {
      const double h = lc.leverage(i);
      if (!(h < 1.0))
        throw capability_error("studentised conformity undefined at leverage 1");
      denom(i) = std::sqrt(1.0 - h);
    }
  }
  ScoreLines out;
  out.sigma.resize(n);
  out.kappa.resize(n);
  const double slope_new = (1.0 - lc.a(n)) / denom(n);
  const double icpt_new = -lc.b(n) / denom(n);
  for (int i = 0; i < n; ++i) {
    const double slope_i = -lc.a(i) / denom(i);
    const double icpt_i = (data.outcome(i) - lc.b(i)) / denom(i);
    out.sigma(i) = slope_new - slope_i;
    out.kappa(i) = icpt_new - icpt_i;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

double crossing_candidate(double a_new, double a_i, double btilde, double y) {
  return (y - btilde) / (a_new - a_i);
}

std::vector<double> default_y_grid(const Dataset& data, const GridStrategy& g) {
  if (g.points < 2) throw std::invalid_argument("grid needs at least 2 points");
  double lo, hi;
  if (g.range) {
    lo = g.range->first;
    hi = g.range->second;
    if (!(lo < hi)) throw std::invalid_argument("grid range out of order");
  } else {
    const double ymin = data.outcomes().minCoeff();
    const double ymax = data.outcomes().maxCoeff();
    const double range = ymax > ymin ? ymax - ymin : 1.0;
    lo = ymin - g.span_mult * range;
    hi = ymax + g.span_mult * range;
  }
  std::vector<double> grid(g.points);
  for (int i = 0; i < g.points; ++i)
    grid[i] = lo + (hi - lo) * static_cast<double>(i) /
                       static_cast<double>(g.points - 1);
  return grid;
}

PredictiveSystem full_cps(const Dataset& data, const RegressorSpec& spec,
                          ConformityKind kind, const Eigen::RowVectorXd& x_new) {
  const LinearCoefficients lc = linear_coefficients(spec, data, x_new);
  const ScoreLines lines = score_lines(data, lc, kind);
  const int n = data.size();

  // Indicator 1{A_i <= A_new} flips upward at the root of D_i when
  // sigma_i > 0; a negative slope flips it downward, which makes the
  // assembled bounds decrease: diagnosed rather than returned.
  std::vector<double> roots;
  int base_le = 0, base_lt = 0;
  double first_down = kInf;
  int down_count = 0;
  for (int i = 0; i < n; ++i) {
    if (lines.sigma(i) > 0.0) {
      roots.push_back(-lines.kappa(i) / lines.sigma(i));
    } else if (lines.sigma(i) < 0.0) {
      ++down_count;
      first_down = std::min(first_down, -lines.kappa(i) / lines.sigma(i));
    } else {
      if (lines.kappa(i) >= 0.0) ++base_le;
      if (lines.kappa(i) > 0.0) ++base_lt;
    }
  }
  if (down_count > 0) {
    double next_event = kInf;
    for (double r : roots)
      if (r > first_down) next_event = std::min(next_event, r);
    std::ostringstream msg;
    msg << "conformity bounds not monotone: " << down_count
        << " score difference(s) decrease in y; first drop after y = "
        << first_down;
    throw monotonicity_error(msg.str(), first_down, next_event,
                             static_cast<double>(down_count) / (n + 1));
  }

  std::sort(roots.begin(), roots.end());
  std::vector<double> breaks;
  std::vector<int> lo{base_lt}, up{1 + base_le};
  for (std::size_t j = 0; j < roots.size(); ++j) {
    if (j + 1 < roots.size() && roots[j + 1] == roots[j]) continue;
    breaks.push_back(roots[j]);
    const int c = static_cast<int>(j) + 1;
    lo.push_back(base_lt + c);
    up.push_back(1 + base_le + c);
  }
  return PredictiveSystem::from_counts(std::move(breaks), std::move(lo),
                                       std::move(up), n + 1);
}

MonotonicityReport monotonicity_check(const Dataset& data,
                                      const RegressorSpec& spec,
                                      ConformityKind kind,
                                      const Eigen::RowVectorXd& x_new,
                                      const std::vector<double>& y_grid) {
  if (y_grid.empty()) throw std::invalid_argument("empty grid");
  const int n = data.size();
  MonotonicityReport report;
  Eigen::VectorXd prev(n);
  for (std::size_t g = 0; g < y_grid.size(); ++g) {
    const double y = y_grid[g];
    const FittedRegressor m = fit(spec, data.augmented(x_new, y));
    Eigen::VectorXd denom = Eigen::VectorXd::Ones(n + 1);
    if (kind == ConformityKind::studentised) {
      const Eigen::MatrixXd& h = m.hat_matrix();
      for (int i = 0; i <= n; ++i) {
        if (!(h(i, i) < 1.0))
          throw capability_error("studentised conformity undefined at leverage 1");
        denom(i) = std::sqrt(1.0 - h(i, i));
      }
    }
    const Eigen::VectorXd& pred = m.fitted();
    const double a_new = (y - pred(n)) / denom(n);
    Eigen::VectorXd delta(n);
    for (int i = 0; i < n; ++i)
      delta(i) = a_new - (data.outcome(i) - pred(i)) / denom(i);
    if (g > 0) {
      for (int i = 0; i < n; ++i) {
        const double drop = prev(i) - delta(i);
        if (drop > 1e-9 * (1.0 + std::abs(prev(i))))
          report.violations.push_back({i, y_grid[g - 1], y, drop});
      }
    }
    prev = delta;
  }
  return report;
}

PredictiveSystem full_rdps(const Dataset& data, const RegressorSpec& spec,
                           const Eigen::RowVectorXd& x_new,
                           const FullStrategy& strategy) {
  const int denom = data.size() + 1;

  if (std::holds_alternative<LinearExactStrategy>(strategy)) {
    const LinearCoefficients lc = linear_coefficients(spec, data, x_new);
    return linear_exact_bounds(data, lc);
  }

  if (std::holds_alternative<MonotoneLimitsStrategy>(strategy)) {
    if (has_linear_coefficients(spec)) {
      const LinearCoefficients lc = linear_coefficients(spec, data, x_new);
      for (int i = 0; i < data.size(); ++i)
        if (lc.a(data.size()) - lc.a(i) < 0.0)
          throw capability_error(
              "prediction difference decreases in the candidate outcome; "
              "use LinearExact or Grid");
      std::vector<GridProfile> profiles{profile_at_minus_inf(data, lc),
                                        profile_at_plus_inf(data, lc)};
      return bounds_from_profiles(std::move(profiles), denom);
    }
    if (const auto* s = std::get_if<KernelSmootherSpec>(&spec);
        s && s->trim_lo && s->trim_hi) {
      // Clipping saturates at the trim thresholds, so fits at the thresholds
      // are the candidate limits; the candidate's own atom is handled
      // analytically (always counted at -inf, never at +inf).
      const AugmentedFitter fitter(data, spec, x_new);
      const Eigen::VectorXd d_lo = fitter.diffs(*s->trim_lo);
      const Eigen::VectorXd d_hi = fitter.diffs(*s->trim_hi);
      for (int i = 0; i < data.size(); ++i)
        if (d_hi(i) < d_lo(i) - 1e-12)
          throw capability_error(
              "prediction difference decreases in the candidate outcome; "
              "use Grid");
      GridProfile upper{{}, 1}, lower{{}, 0};
      for (int i = 0; i < data.size(); ++i) {
        upper.atoms.push_back(data.outcome(i) + d_lo(i));
        lower.atoms.push_back(data.outcome(i) + d_hi(i));
      }
      return bounds_from_profiles({std::move(lower), std::move(upper)}, denom);
    }
    throw capability_error(
        "monotone limits need linear coefficients or a trimmed smoother; "
        "use Grid");
  }

  const auto& g = std::get<GridStrategy>(strategy);
  if (g.points < 2) throw std::invalid_argument("grid needs at least 2 points");
  std::vector<double> grid;
  std::optional<LinearCoefficients> lc;
  if (has_linear_coefficients(spec)) {
    lc = linear_coefficients(spec, data, x_new);
    // The candidates where the profile count peaks or dips: every binding
    // window between a rising and a falling indicator contains the common
    // root of the two (both crossings move linearly away from it), so those
    // pairwise roots make the pointwise min/max exact. The uniform part of
    // the grid shrinks to keep the total candidate budget.
    std::vector<double> structural = opposite_slope_roots(data, *lc);
    GridStrategy effective = g;
    if (!g.range) effective.range = crossing_covering_range(data, g, *lc);
    effective.points = std::max(
        16, g.points - static_cast<int>(structural.size()));
    grid = default_y_grid(data, effective);
    grid.insert(grid.end(), structural.begin(), structural.end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  } else {
    grid = default_y_grid(data, g);
  }
  const AugmentedFitter fitter(data, spec, x_new);
  std::vector<GridProfile> profiles = profiles_over_grid(
      data, grid, g.parallel, [&](double yp) { return fitter.diffs(yp); });
  if (lc) {
    profiles.push_back(profile_at_minus_inf(data, *lc));
    profiles.push_back(profile_at_plus_inf(data, *lc));
  }
  return bounds_from_profiles(std::move(profiles), denom);
}

PredictiveSystem full_rdps_deleted(const Dataset& data, const BaseSpec& inner,
                                   double trim_fraction,
                                   const Eigen::RowVectorXd& x_new,
                                   const GridStrategy& strategy) {
  // ceil(q * (n+1)) == 0 makes the deletion a no-op: identical to the plain
  // system, including its analytic tail handling.
  if (std::ceil(trim_fraction * static_cast<double>(data.size() + 1) - 1e-9) < 1.0) {
    const RegressorSpec spec =
        std::visit([](const auto& s) { return RegressorSpec(s); }, inner);
    return full_rdps(data, spec, x_new, strategy);
  }
  const std::vector<double> grid = default_y_grid(data, strategy);
  const int denom = data.size() + 1;
  std::vector<GridProfile> profiles;
  if (DeletedGridFitter::supports(inner)) {
    DeletedGridFitter fitter(data, inner, trim_fraction, x_new);
    // The refit cache is shared and mutated, so this path stays serial; it is
    // already the fast route.
    profiles = profiles_over_grid(data, grid, /*parallel=*/false,
                                  [&](double yp) { return fitter.diffs(yp); });
  } else {
    const RegressorSpec spec = DeletedSpec{inner, trim_fraction};
    const AugmentedFitter fitter(data, spec, x_new);
    profiles = profiles_over_grid(data, grid, strategy.parallel,
                                  [&](double yp) { return fitter.diffs(yp); });
  }
  return bounds_from_profiles(std::move(profiles), denom);
}

InformativenessReport informativeness_envelope(const Dataset& data,
                                               const RegressorSpec& spec,
                                               const Eigen::RowVectorXd& x_new) {
  const int n = data.size();
  InformativenessReport report;
  report.rows.resize(n);
  if (has_linear_coefficients(spec)) {
    const LinearCoefficients lc = linear_coefficients(spec, data, x_new);
    report.approximate = false;
    for (int i = 0; i < n; ++i) {
      const double s = lc.a(n) - lc.a(i);
      if (s == 0.0) {
        const double d = lc.b(n) - lc.b(i);
        report.rows[i] = {d, d};
      } else {
        report.rows[i] = {-kInf, kInf};
      }
    }
  } else {
    report.approximate = true;
    const AugmentedFitter fitter(data, spec, x_new);
    const std::vector<double> grid = default_y_grid(data, GridStrategy{});
    for (int i = 0; i < n; ++i) report.rows[i] = {kInf, -kInf};
    for (double yp : grid) {
      const Eigen::VectorXd d = fitter.diffs(yp);
      for (int i = 0; i < n; ++i) {
        report.rows[i].inf_diff = std::min(report.rows[i].inf_diff, d(i));
        report.rows[i].sup_diff = std::max(report.rows[i].sup_diff, d(i));
      }
    }
  }
  report.informative = true;
  for (const auto& r : report.rows)
    if (std::isinf(r.inf_diff) || std::isinf(r.sup_diff))
      report.informative = false;
  return report;
}

PredictiveSystem quantile_sgd_full_rdps(const Dataset& data,
                                        const QuantileSgdSpec& spec,
                                        const Eigen::RowVectorXd& x_new) {
  const int n = data.size();
  // The step scale must not depend on the candidate outcome: derive the
  // default from the training outcomes only.
  double scale;
  if (spec.step_scale) {
    scale = *spec.step_scale;
  } else {
    const double mean = data.outcomes().mean();
    scale = n < 2 ? 1.0
                  : 0.5 * std::sqrt((data.outcomes().array() - mean).square().sum() /
                                    static_cast<double>(n - 1));
  }

  Eigen::MatrixXd design(n + 1, data.dim() + 1);
  design.col(0).setOnes();
  design.block(0, 1, n, data.dim()) = data.covariates();
  design.row(n).tail(data.dim()) = x_new;
  Eigen::VectorXd y(n + 1);
  y.head(n) = data.outcomes();
  y(n) = 0.0;  // never read: the tracked row's indicator is forced

  const QuantileSgdRun run0 = run_quantile_sgd(design, y, spec.tau, scale,
                                               spec.n_passes, spec.seed, n, 0);
  const QuantileSgdRun run1 = run_quantile_sgd(design, y, spec.tau, scale,
                                               spec.n_passes, spec.seed, n, 1);
  // Thresholds come from the pre-update trajectory, identical across branches.
  const double theta_min =
      *std::min_element(run0.thresholds.begin(), run0.thresholds.end());
  const double theta_max =
      *std::max_element(run0.thresholds.begin(), run0.thresholds.end());

  std::vector<double> atoms0(n), atoms1(n);
  for (int i = 0; i < n; ++i) {
    atoms0[i] = data.outcome(i) + (design.row(n) - design.row(i)) * run0.beta;
    atoms1[i] = data.outcome(i) + (design.row(n) - design.row(i)) * run1.beta;
  }
  std::sort(atoms0.begin(), atoms0.end());
  std::sort(atoms1.begin(), atoms1.end());

  std::vector<double> breaks = atoms0;
  breaks.insert(breaks.end(), atoms1.begin(), atoms1.end());
  breaks.push_back(theta_min);
  breaks.push_back(theta_max);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  const auto count_le = [](const std::vector<double>& v, double y) {
    return static_cast<int>(std::upper_bound(v.begin(), v.end(), y) - v.begin());
  };

  // Branch 0 is admissible for candidates <= theta_min, branch 1 above
  // theta_max. Within a branch only the candidate's own atom moves: its
  // sup/inf over the admissible region resolves to the indicator below.
  std::vector<int> lo(breaks.size() + 1), up(breaks.size() + 1);
  lo[0] = 0;
  up[0] = 1;
  for (std::size_t j = 0; j < breaks.size(); ++j) {
    const double yb = breaks[j];
    const int c0 = count_le(atoms0, yb);
    const int c1 = count_le(atoms1, yb);
    up[j + 1] = std::max(c0 + 1, c1 + (yb >= theta_max ? 1 : 0));
    lo[j + 1] = std::min(c0 + (yb >= theta_min ? 1 : 0), c1);
  }
  return PredictiveSystem::from_counts(std::move(breaks), std::move(lo),
                                       std::move(up), n + 1);
}

}  // namespace rdps
