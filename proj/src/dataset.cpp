#include "rdps/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace rdps {

Dataset::Dataset(Eigen::MatrixXd covariates, Eigen::VectorXd outcomes)
    : x_(std::move(covariates)), y_(std::move(outcomes)) {
  if (y_.size() < 1) throw std::invalid_argument("dataset requires at least one sample");
  if (x_.rows() != y_.size())
    throw std::invalid_argument("covariate rows and outcome count differ");
  if (!x_.allFinite() || !y_.allFinite())
    throw std::invalid_argument("dataset entries must be finite");
}

Dataset Dataset::head(int count) const {
  if (count < 1 || count > size()) throw std::invalid_argument("bad head count");
  return Dataset(x_.topRows(count), y_.head(count));
}

Dataset Dataset::tail_from(int first) const {
  if (first < 0 || first >= size()) throw std::invalid_argument("bad tail start");
  const int m = size() - first;
  return Dataset(x_.bottomRows(m), y_.tail(m));
}

Dataset Dataset::subset(const std::vector<int>& indices) const {
  Eigen::MatrixXd xs(indices.size(), dim());
  Eigen::VectorXd ys(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    xs.row(k) = x_.row(indices[k]);
    ys(k) = y_(indices[k]);
  }
  return Dataset(std::move(xs), std::move(ys));
}

Dataset Dataset::permuted(const std::vector<int>& order) const {
  if (static_cast<int>(order.size()) != size())
    throw std::invalid_argument("permutation size mismatch");
  return subset(order);
}

Dataset Dataset::with_outcomes(Eigen::VectorXd outcomes) const {
  return Dataset(x_, std::move(outcomes));
}

Dataset Dataset::augmented(const Eigen::RowVectorXd& x_new, double y_new) const {
  if (x_new.size() != dim()) throw std::invalid_argument("covariate dimension mismatch");
  if (!std::isfinite(y_new) || !x_new.allFinite())
    throw std::invalid_argument("augmented pair must be finite");
  Eigen::MatrixXd xs(size() + 1, dim());
  xs.topRows(size()) = x_;
  xs.row(size()) = x_new;
  Eigen::VectorXd ys(size() + 1);
  ys.head(size()) = y_;
  ys(size()) = y_new;
  return Dataset(std::move(xs), std::move(ys));
}

}  // namespace rdps
