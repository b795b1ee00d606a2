#include "rdps/regress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rdps/errors.hpp"
#include "rdps/rng.hpp"

namespace rdps {

namespace {

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

Eigen::MatrixXd laplacian_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                 double gamma) {
  Eigen::MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      k(i, j) = std::exp(-(a.row(i) - b.row(j)).norm() / gamma);
  return k;
}

double clipped(double y, const KernelSmootherSpec& s) {
  if (s.trim_hi) y = std::min(y, *s.trim_hi);
  if (s.trim_lo) y = std::max(y, *s.trim_lo);
  return y;
}

double sample_sd(const Eigen::VectorXd& y) {
  if (y.size() < 2) return 1.0;
  const double mean = y.mean();
  return std::sqrt((y.array() - mean).square().sum() / static_cast<double>(y.size() - 1));
}

int trim_count(double q, int n) {
  // ceil(q*n) with a guard against the product landing an ulp above an
  // integer (e.g. 0.2 * 5).
  return static_cast<int>(std::ceil(q * static_cast<double>(n) - 1e-9));
}

}  // namespace

namespace detail {

class FitImpl {
 public:
  virtual ~FitImpl() = default;
  virtual double predict(const Eigen::RowVectorXd& x) const = 0;
  virtual const Eigen::MatrixXd* hat() const { return nullptr; }

  Eigen::VectorXd fitted_;
  Eigen::VectorXd residuals_;
};

namespace {

class OlsFit : public FitImpl {
 public:
  OlsFit(const Dataset& data) {
    const Eigen::MatrixXd d = with_intercept(data.covariates());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double rcond = s(s.size() - 1) / s(0);
    if (!(rcond > 1e-12)) {
      int rank = 0;
      for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > 1e-12 * s(0)) ++rank;
      std::ostringstream msg;
      msg << "ols design rank-deficient: rank " << rank << " of " << d.cols()
          << " columns (rcond " << rcond << ")";
      throw numeric_error(msg.str());
    }
    beta_ = svd.solve(data.outcomes());
    const Eigen::MatrixXd& u = svd.matrixU();
    hat_ = u * u.transpose();
    fitted_ = d * beta_;
    residuals_ = data.outcomes() - fitted_;
  }

  double predict(const Eigen::RowVectorXd& x) const override {
    return beta_(0) + x * beta_.tail(beta_.size() - 1);
  }
  const Eigen::MatrixXd* hat() const override { return &hat_; }

 private:
  Eigen::VectorXd beta_;
  Eigen::MatrixXd hat_;
};

class KrrFit : public FitImpl {
 public:
  KrrFit(const Dataset& data, double gamma, double lambda)
      : x_(data.covariates()), gamma_(gamma) {
    if (!(gamma > 0.0) || !(lambda > 0.0))
      throw std::invalid_argument("krr requires gamma > 0 and lambda > 0");
    const Eigen::MatrixXd k = laplacian_kernel(x_, x_, gamma);
    Eigen::MatrixXd g = k;
    g.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success)
      throw numeric_error("krr regularized gram matrix is numerically singular");
    alpha_ = llt.solve(data.outcomes());
    smoother_ = llt.solve(k);  // G^{-1} K; symmetric up to roundoff
    fitted_ = k * alpha_;
    residuals_ = data.outcomes() - fitted_;
  }

  double predict(const Eigen::RowVectorXd& x) const override {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < x_.rows(); ++j)
      acc += std::exp(-(x - x_.row(j)).norm() / gamma_) * alpha_(j);
    return acc;
  }
  const Eigen::MatrixXd* hat() const override { return &smoother_; }

 private:
  Eigen::MatrixXd x_;
  double gamma_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd smoother_;
};

class SmootherFit : public FitImpl {
 public:
  SmootherFit(const Dataset& data, const KernelSmootherSpec& spec)
      : x_(data.covariates()), spec_(spec) {
    if (!(spec.bandwidth > 0.0))
      throw std::invalid_argument("kernel smoother requires bandwidth > 0");
    if (spec.trim_lo && spec.trim_hi && !(*spec.trim_lo <= *spec.trim_hi))
      throw std::invalid_argument("kernel smoother trim thresholds out of order");
    clipped_y_ = data.outcomes();
    for (Eigen::Index i = 0; i < clipped_y_.size(); ++i)
      clipped_y_(i) = clipped(clipped_y_(i), spec);

    const Eigen::MatrixXd w = laplacian_kernel(x_, x_, spec.bandwidth);
    const Eigen::VectorXd row_sums = w.rowwise().sum();
    fitted_ = (w * clipped_y_).cwiseQuotient(row_sums);
    residuals_ = data.outcomes() - fitted_;
    if (!spec.clipping()) {
      hat_ = w.array().colwise() / row_sums.array();
    }
  }

  double predict(const Eigen::RowVectorXd& x) const override {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < x_.rows(); ++j) {
      const double w = std::exp(-(x - x_.row(j)).norm() / spec_.bandwidth);
      num += w * clipped_y_(j);
      den += w;
    }
    return num / den;
  }
  const Eigen::MatrixXd* hat() const override {
    return spec_.clipping() ? nullptr : &hat_;
  }

 private:
  Eigen::MatrixXd x_;
  KernelSmootherSpec spec_;
  Eigen::VectorXd clipped_y_;
  Eigen::MatrixXd hat_;
};

class QuantileSgdFit : public FitImpl {
 public:
  QuantileSgdFit(const Dataset& data, const QuantileSgdSpec& spec) {
    if (!(spec.tau > 0.0 && spec.tau < 1.0))
      throw std::invalid_argument("quantile level must lie in (0,1)");
    if (spec.n_passes < 1) throw std::invalid_argument("n_passes must be positive");
    const double scale = spec.step_scale ? *spec.step_scale
                                         : 0.5 * sample_sd(data.outcomes());
    const Eigen::MatrixXd design = with_intercept(data.covariates());
    beta_ = run_quantile_sgd(design, data.outcomes(), spec.tau, scale,
                             spec.n_passes, spec.seed)
                .beta;
    fitted_ = design * beta_;
    residuals_ = data.outcomes() - fitted_;
  }

  double predict(const Eigen::RowVectorXd& x) const override {
    return beta_(0) + x * beta_.tail(beta_.size() - 1);
  }

 private:
  Eigen::VectorXd beta_;
};

class DeletedFit : public FitImpl {
 public:
  DeletedFit(const Dataset& data, const BaseSpec& inner, double q) {
    if (!(q >= 0.0 && q < 1.0))
      throw std::invalid_argument("trim fraction must lie in [0,1)");
    const RegressorSpec inner_spec = std::visit(
        [](const auto& s) { return RegressorSpec(s); }, inner);
    const FittedRegressor first = fit(inner_spec, data);
    const std::vector<int> survivors = deletion_survivors(first.residuals(), q);
    refit_ = std::make_unique<FittedRegressor>(fit(inner_spec, data.subset(survivors)));
    fitted_ = refit_->predict_all(data.covariates());
    residuals_ = data.outcomes() - fitted_;
  }

  double predict(const Eigen::RowVectorXd& x) const override {
    return refit_->predict(x);
  }

 private:
  std::unique_ptr<FittedRegressor> refit_;
};

}  // namespace
}  // namespace detail

FittedRegressor::FittedRegressor(std::shared_ptr<const detail::FitImpl> impl)
    : impl_(std::move(impl)) {}

double FittedRegressor::predict(const Eigen::RowVectorXd& x) const {
  return impl_->predict(x);
}

Eigen::VectorXd FittedRegressor::predict_all(const Eigen::MatrixXd& xs) const {
  Eigen::VectorXd out(xs.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) out(i) = impl_->predict(xs.row(i));
  return out;
}

const Eigen::VectorXd& FittedRegressor::fitted() const { return impl_->fitted_; }
const Eigen::VectorXd& FittedRegressor::residuals() const { return impl_->residuals_; }

bool FittedRegressor::has_hat_matrix() const { return impl_->hat() != nullptr; }

const Eigen::MatrixXd& FittedRegressor::hat_matrix() const {
  const Eigen::MatrixXd* h = impl_->hat();
  if (!h) throw capability_error("backend exposes no hat matrix");
  return *h;
}

FittedRegressor fit_ols(const Dataset& data) {
  return FittedRegressor(std::make_shared<detail::OlsFit>(data));
}

FittedRegressor fit_krr(const Dataset& data, double gamma, double lambda) {
  return FittedRegressor(std::make_shared<detail::KrrFit>(data, gamma, lambda));
}

FittedRegressor fit_quantile_sgd(const Dataset& data, const QuantileSgdSpec& spec) {
  return FittedRegressor(std::make_shared<detail::QuantileSgdFit>(data, spec));
}

FittedRegressor fit_kernel_smoother(const Dataset& data,
                                    const KernelSmootherSpec& spec) {
  return FittedRegressor(std::make_shared<detail::SmootherFit>(data, spec));
}

FittedRegressor deleted_fit(const Dataset& data, const BaseSpec& inner,
                            double trim_fraction) {
  return FittedRegressor(std::make_shared<detail::DeletedFit>(data, inner, trim_fraction));
}

std::vector<int> deletion_survivors(const Eigen::VectorXd& residuals,
                                    double trim_fraction) {
  const int n = static_cast<int>(residuals.size());
  const int drop = trim_count(trim_fraction, n);
  if (n - drop < 2) throw std::invalid_argument("too few samples survive trimming");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    const double ai = std::abs(residuals(i)), aj = std::abs(residuals(j));
    if (ai != aj) return ai > aj;
    return i > j;
  });
  std::vector<int> survivors(order.begin() + drop, order.end());
  std::sort(survivors.begin(), survivors.end());
  return survivors;
}

FittedRegressor fit(const RegressorSpec& spec, const Dataset& data) {
  return std::visit(
      [&](const auto& s) -> FittedRegressor {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, OlsSpec>) return fit_ols(data);
        else if constexpr (std::is_same_v<T, KrrSpec>) return fit_krr(data, s.gamma, s.lambda);
        else if constexpr (std::is_same_v<T, QuantileSgdSpec>) return fit_quantile_sgd(data, s);
        else if constexpr (std::is_same_v<T, KernelSmootherSpec>) return fit_kernel_smoother(data, s);
        else return deleted_fit(data, s.inner, s.trim_fraction);
      },
      spec);
}

FittedRegressor fit(const BaseSpec& spec, const Dataset& data) {
  return std::visit([&](const auto& s) { return fit(RegressorSpec(s), data); }, spec);
}

double cross_validate_lambda(const Dataset& data, double gamma,
                             const std::vector<double>& candidates, int k_folds,
                             uint64_t seed) {
  if (candidates.empty()) throw std::invalid_argument("no lambda candidates");
  if (k_folds < 2) throw std::invalid_argument("need at least 2 folds");
  if (data.size() < k_folds) throw std::invalid_argument("fewer samples than folds");
  if (candidates.size() == 1) return candidates[0];

  const int n = data.size();
  const std::vector<int> shuffled = Rng(seed).permutation(n);

  double best_lambda = candidates[0];
  double best_err = std::numeric_limits<double>::infinity();
  for (double lambda : candidates) {
    double total_sq = 0.0;
    for (int f = 0; f < k_folds; ++f) {
      const int lo = f * n / k_folds, hi = (f + 1) * n / k_folds;
      std::vector<int> train_idx, test_idx;
      for (int i = 0; i < n; ++i)
        (i >= lo && i < hi ? test_idx : train_idx).push_back(shuffled[i]);
      const FittedRegressor m = fit_krr(data.subset(train_idx), gamma, lambda);
      for (int i : test_idx) {
        const double e = data.outcome(i) - m.predict(data.covariate(i));
        total_sq += e * e;
      }
    }
    const double err = total_sq / static_cast<double>(n);
    if (err < best_err || (err == best_err && lambda > best_lambda)) {
      best_err = err;
      best_lambda = lambda;
    }
  }
  return best_lambda;
}

double median_heuristic_gamma(const Dataset& data) {
  const int n = data.size();
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dists.push_back((data.covariate(i) - data.covariate(j)).norm());
  if (dists.empty()) return 1.0;
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  const double med = dists[mid];
  return med > 0.0 ? med : 1.0;
}

bool has_linear_coefficients(const RegressorSpec& spec) {
  if (std::holds_alternative<OlsSpec>(spec) || std::holds_alternative<KrrSpec>(spec))
    return true;
  if (const auto* s = std::get_if<KernelSmootherSpec>(&spec)) return !s->clipping();
  return false;
}

LinearCoefficients linear_coefficients(const RegressorSpec& spec,
                                       const Dataset& data,
                                       const Eigen::RowVectorXd& x_new) {
  if (!has_linear_coefficients(spec))
    throw capability_error("backend prediction is not affine in the new outcome");

  const int n = data.size();
  const Dataset aug = data.augmented(x_new, 0.0);
  Eigen::VectorXd y0(n + 1);
  y0.head(n) = data.outcomes();
  y0(n) = 0.0;

  LinearCoefficients out;
  if (std::holds_alternative<OlsSpec>(spec)) {
    const Eigen::MatrixXd d = with_intercept(aug.covariates());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    if (!(s(s.size() - 1) / s(0) > 1e-12))
      throw numeric_error("augmented ols design rank-deficient");
    const Eigen::MatrixXd& u = svd.matrixU();
    out.a = u * u.row(n).transpose();
    out.b = u * (u.transpose() * y0);
    out.leverage = u.rowwise().squaredNorm();
  } else if (const auto* k = std::get_if<KrrSpec>(&spec)) {
    const Eigen::MatrixXd km = laplacian_kernel(aug.covariates(), aug.covariates(), k->gamma);
    Eigen::MatrixXd g = km;
    g.diagonal().array() += k->lambda;
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success)
      throw numeric_error("augmented krr gram matrix is numerically singular");
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n + 1);
    e(n) = 1.0;
    out.a = km * llt.solve(e);
    out.b = km * llt.solve(y0);
    out.leverage = llt.solve(km).diagonal();
  } else {
    const auto& s = std::get<KernelSmootherSpec>(spec);
    const Eigen::MatrixXd w =
        laplacian_kernel(aug.covariates(), aug.covariates(), s.bandwidth);
    const Eigen::VectorXd row_sums = w.rowwise().sum();
    out.a = w.col(n).cwiseQuotient(row_sums);
    out.b = (w.leftCols(n) * data.outcomes()).cwiseQuotient(row_sums);
    out.leverage = w.diagonal().cwiseQuotient(row_sums);
  }
  return out;
}

std::function<double(const Eigen::RowVectorXd&)> make_scale_fn(
    const ResidualTransform& transform, const RegressorSpec& spec,
    const Dataset& training, const FittedRegressor& fitted) {
  if (transform.kind == ResidualTransform::Kind::identity) return nullptr;
  if (transform.sigma) return transform.sigma;
  const Dataset abs_res = training.with_outcomes(fitted.residuals().cwiseAbs());
  FittedRegressor companion = fit(spec, abs_res);
  return [companion](const Eigen::RowVectorXd& x) {
    return std::max(companion.predict(x), 1e-6);
  };
}

QuantileSgdRun run_quantile_sgd(const Eigen::MatrixXd& design,
                                const Eigen::VectorXd& y, double tau,
                                double step_scale, int n_passes, uint64_t seed,
                                int tracked, int forced_value) {
  const int n = static_cast<int>(design.rows());
  QuantileSgdRun out;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(design.cols());
  for (int pass = 0; pass < n_passes; ++pass) {
    const std::vector<int> order =
        Rng(derive_seed(seed, static_cast<uint64_t>(pass))).permutation(n);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(design.cols());
    for (int t = 0; t < n; ++t) {
      const int i = order[t];
      const double eta = step_scale / std::sqrt(static_cast<double>(t + 1));
      const double pred = design.row(i) * beta;
      double indicator;
      if (i == tracked) {
        out.thresholds.push_back(pred);
        indicator = static_cast<double>(forced_value);
      } else {
        indicator = y(i) > pred ? 1.0 : 0.0;
      }
      beta -= eta * (tau - indicator) * design.row(i).transpose();
    }
    sum += beta;
  }
  out.beta = sum / static_cast<double>(n_passes);
  return out;
}

}  // namespace rdps
