#ifndef RDPS_DATASET_HPP_
#define RDPS_DATASET_HPP_

#include <Eigen/Dense>
#include <vector>

namespace rdps {

// An ordered set of covariate-outcome pairs. Covariates are rows of an
// n x p matrix; p = 0 is allowed (intercept-only fits). Immutable after
// construction; all entries must be finite.
class Dataset {
 public:
  Dataset(Eigen::MatrixXd covariates, Eigen::VectorXd outcomes);

  int size() const { return static_cast<int>(y_.size()); }
  int dim() const { return static_cast<int>(x_.cols()); }

  const Eigen::MatrixXd& covariates() const { return x_; }
  const Eigen::VectorXd& outcomes() const { return y_; }

  Eigen::RowVectorXd covariate(int i) const { return x_.row(i); }
  double outcome(int i) const { return y_(i); }

  // First count samples / the rest; used by the split-conformal machinery.
  Dataset head(int count) const;
  Dataset tail_from(int first) const;

  Dataset subset(const std::vector<int>& indices) const;
  Dataset permuted(const std::vector<int>& order) const;

  // Same covariates, different outcomes (absolute-residual companion fits).
  Dataset with_outcomes(Eigen::VectorXd outcomes) const;

  // Appends the pair (x_new, y_new) as the last sample.
  Dataset augmented(const Eigen::RowVectorXd& x_new, double y_new) const;

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
};

}  // namespace rdps

#endif  // RDPS_DATASET_HPP_
