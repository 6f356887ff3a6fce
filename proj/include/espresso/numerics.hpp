#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "espresso/error.hpp"
#include "espresso/mid_level.hpp"
#include "espresso/text_encoder.hpp"

namespace espresso {

using Vector8 = Eigen::Matrix<double, kMidLevelDims, 1>;

inline Vector8 to_eigen(const MidLevelVector& v) {
  return Eigen::Map<const Vector8>(v.values.data());
}

inline MidLevelVector from_eigen(const Vector8& v) {
  MidLevelVector out;
  Eigen::Map<Vector8>(out.values.data()) = v;
  return out;
}

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::non_finite, std::string(what) + " has non-finite entries");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PCA

struct PcaComponentCount {
  std::size_t count;
};
struct PcaVarianceFraction {
  double fraction;
};
using PcaTarget = std::variant<PcaComponentCount, PcaVarianceFraction>;

struct PcaTransform {
  Eigen::VectorXd mean;                      // length d
  Eigen::MatrixXd components;                // k x d, orthonormal rows
  Eigen::VectorXd explained_variance_ratio;  // length k, non-increasing

  std::size_t input_dimension() const { return static_cast<std::size_t>(mean.size()); }
  std::size_t output_dimension() const { return static_cast<std::size_t>(components.rows()); }
};

// Principal directions of the sample covariance of `X` (one observation per
// row). Components are sorted by decreasing variance, the number kept is
// capped at min(d, n-1), and each component is signed so that its entry of
// largest magnitude is positive.
inline PcaTransform fit_pca(const Eigen::MatrixXd& X, PcaTarget target) {
  const auto n = X.rows();
  const auto d = X.cols();
  if (n < 2) throw Error(ErrorCode::invalid_argument, "PCA needs at least 2 observations");
  if (d < 1) throw Error(ErrorCode::dimension, "PCA needs at least one input dimension");
  detail::require_finite(X, "PCA input");
  if (const auto* c = std::get_if<PcaComponentCount>(&target); c && c->count < 1) {
    throw Error(ErrorCode::invalid_argument, "PCA component count must be >= 1");
  }
  if (const auto* v = std::get_if<PcaVarianceFraction>(&target);
      v && !(v->fraction > 0.0 && v->fraction <= 1.0)) {
    throw Error(ErrorCode::invalid_argument, "PCA variance fraction must lie in (0, 1]");
  }

  PcaTransform pca;
  pca.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centered = X.rowwise() - pca.mean.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::invalid_argument, "covariance eigendecomposition failed");
  }
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd eigenvalues = solver.eigenvalues().reverse().cwiseMax(0.0);
  const Eigen::MatrixXd eigenvectors = solver.eigenvectors().rowwise().reverse();
  const double total = eigenvalues.sum();
  if (!(total > 0.0)) throw Error(ErrorCode::invalid_argument, "PCA input has zero variance");

  const auto cap = static_cast<std::size_t>(std::min<Eigen::Index>(d, n - 1));
  std::size_t k = 0;
  if (const auto* c = std::get_if<PcaComponentCount>(&target)) {
    k = std::min(c->count, cap);
  } else {
    const double wanted = std::get<PcaVarianceFraction>(target).fraction;
    double cumulative = 0.0;
    while (k < cap) {
      cumulative += eigenvalues[static_cast<Eigen::Index>(k)] / total;
      ++k;
      if (cumulative >= wanted - 1e-12) break;
    }
  }

  const auto kk = static_cast<Eigen::Index>(k);
  pca.components.resize(kk, d);
  pca.explained_variance_ratio.resize(kk);
  for (Eigen::Index i = 0; i < kk; ++i) {
    Eigen::VectorXd dir = eigenvectors.col(i);
    Eigen::Index argmax = 0;
    dir.cwiseAbs().maxCoeff(&argmax);
    if (dir[argmax] < 0.0) dir = -dir;
    pca.components.row(i) = dir.transpose();
    pca.explained_variance_ratio[i] = eigenvalues[i] / total;
  }
  return pca;
}

inline Eigen::VectorXd apply_pca(const PcaTransform& pca, const Eigen::VectorXd& x) {
  if (x.size() != pca.mean.size()) {
    throw Error(ErrorCode::dimension, "PCA input has length " + std::to_string(x.size()) +
                                          ", expected " + std::to_string(pca.mean.size()));
  }
  return pca.components * (x - pca.mean);
}

// Row-wise apply_pca for a batch of observations.
inline Eigen::MatrixXd apply_pca_rows(const PcaTransform& pca, const Eigen::MatrixXd& X) {
  if (X.cols() != pca.mean.size()) {
    throw Error(ErrorCode::dimension, "PCA input has " + std::to_string(X.cols()) +
                                          " columns, expected " + std::to_string(pca.mean.size()));
  }
  return (X.rowwise() - pca.mean.transpose()) * pca.components.transpose();
}

// ---------------------------------------------------------------------------
// Linear map

struct LinearMap {
  Eigen::MatrixXd weights;  // 8 x m
  Vector8 bias = Vector8::Zero();
  double ridge_lambda = 0.0;

  std::size_t input_dimension() const { return static_cast<std::size_t>(weights.cols()); }

  Vector8 apply(const Eigen::VectorXd& x) const {
    if (x.size() != weights.cols()) {
      throw Error(ErrorCode::dimension, "linear map input has length " + std::to_string(x.size()) +
                                            ", expected " + std::to_string(weights.cols()));
    }
    return weights * x + bias;
  }
};

// Minimizes sum_i ||Y_i - (W X_i + b)||^2 + lambda ||W||_F^2 with the bias
// unpenalized. Centering removes the bias from the problem; the remaining
// ridge system is solved through an SVD of the centered inputs, which also
// yields the minimum-norm solution when lambda = 0 and X is rank deficient.
inline LinearMap fit_linear(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double ridge_lambda) {
  const auto n = X.rows();
  if (n < 1) throw Error(ErrorCode::invalid_argument, "linear fit needs at least one sample");
  if (Y.rows() != n) {
    throw Error(ErrorCode::dimension, "inputs have " + std::to_string(n) + " rows but targets have " +
                                          std::to_string(Y.rows()));
  }
  if (Y.cols() != static_cast<Eigen::Index>(kMidLevelDims)) {
    throw Error(ErrorCode::dimension, "targets must have 8 columns, got " + std::to_string(Y.cols()));
  }
  if (X.cols() < 1) throw Error(ErrorCode::dimension, "inputs need at least one column");
  if (!std::isfinite(ridge_lambda) || ridge_lambda < 0.0) {
    throw Error(ErrorCode::invalid_argument, "ridge lambda must be finite and >= 0");
  }
  detail::require_finite(X, "regression inputs");
  detail::require_finite(Y, "regression targets");

  const Eigen::VectorXd x_mean = X.colwise().mean().transpose();
  const Vector8 y_mean = Y.colwise().mean().transpose();
  const Eigen::MatrixXd Xc = X.rowwise() - x_mean.transpose();
  const Eigen::MatrixXd Yc = Y.rowwise() - y_mean.transpose();

  Eigen::BDCSVD<Eigen::MatrixXd> svd(Xc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::VectorXd gain = Eigen::VectorXd::Zero(s.size());
  const double s_max = s.size() > 0 ? s[0] : 0.0;
  const double cutoff = static_cast<double>(std::max(Xc.rows(), Xc.cols())) *
                        std::numeric_limits<double>::epsilon() * s_max;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (ridge_lambda > 0.0) {
      gain[i] = s[i] / (s[i] * s[i] + ridge_lambda);
    } else if (s[i] > cutoff) {
      gain[i] = 1.0 / s[i];
    }
  }

  LinearMap map;
  map.ridge_lambda = ridge_lambda;
  map.weights = (svd.matrixV() * gain.asDiagonal() * svd.matrixU().transpose() * Yc).transpose();
  map.bias = y_mean - map.weights * x_mean;
  return map;
}

// ---------------------------------------------------------------------------
// Projection model

struct Standardization {
  Vector8 mean = Vector8::Zero();
  Vector8 std = Vector8::Ones();

  Vector8 forward(const Vector8& v) const { return (v - mean).cwiseQuotient(std); }
  Vector8 inverse(const Vector8& v) const { return v.cwiseProduct(std) + mean; }
};

// Per-dimension z-score statistics (population std). A constant dimension
// gets std = 1 so the transform stays defined.
inline Standardization fit_standardization(const Eigen::MatrixXd& Y) {
  if (Y.rows() < 1 || Y.cols() != static_cast<Eigen::Index>(kMidLevelDims)) {
    throw Error(ErrorCode::dimension, "standardization needs an n x 8 target matrix");
  }
  Standardization s;
  s.mean = Y.colwise().mean().transpose();
  for (Eigen::Index j = 0; j < s.std.size(); ++j) {
    const double var = (Y.col(j).array() - s.mean[j]).square().mean();
    const double sd = std::sqrt(var);
    s.std[j] = sd > 1e-12 * (1.0 + std::abs(s.mean[j])) ? sd : 1.0;
  }
  return s;
}

struct ProjectionModel {
  std::size_t input_dimension = 0;  // word-embedding dimension d
  Aggregate aggregate = Aggregate::sum;
  std::optional<PcaTransform> pca;
  LinearMap map;
  std::optional<Standardization> feature_standardization;
  std::string config_fingerprint;
  std::map<std::string, std::size_t> trained_on;  // pair counts per source, plus skipped

  // Throws if the dimensional chain d -> (k) -> 8 is broken.
  void validate() const {
    std::size_t into_map = input_dimension;
    if (pca) {
      if (pca->input_dimension() != input_dimension) {
        throw Error(ErrorCode::dimension, "PCA input dimension does not match the model input");
      }
      if (static_cast<std::size_t>(pca->components.cols()) != input_dimension ||
          static_cast<std::size_t>(pca->explained_variance_ratio.size()) != pca->output_dimension()) {
        throw Error(ErrorCode::dimension, "PCA block is internally inconsistent");
      }
      into_map = pca->output_dimension();
    }
    if (map.weights.rows() != static_cast<Eigen::Index>(kMidLevelDims) ||
        map.input_dimension() != into_map) {
      throw Error(ErrorCode::dimension, "linear map shape does not match the model chain");
    }
    if (!map.weights.allFinite() || !map.bias.allFinite()) {
      throw Error(ErrorCode::non_finite, "linear map has non-finite entries");
    }
    if (feature_standardization) {
      if (!(feature_standardization->std.array() > 0.0).all() ||
          !feature_standardization->std.allFinite() || !feature_standardization->mean.allFinite()) {
        throw Error(ErrorCode::invalid_argument, "standardization std entries must be positive");
      }
    }
  }

  bool standardized() const { return feature_standardization.has_value(); }

  // Observed features expressed in the space the model predicts into.
  Vector8 to_comparison_space(const MidLevelVector& features) const {
    const Vector8 v = to_eigen(features);
    return feature_standardization ? feature_standardization->forward(v) : v;
  }
};

inline Vector8 project_embedding(const ProjectionModel& model, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_dimension) {
    throw Error(ErrorCode::dimension, "text embedding has length " + std::to_string(x.size()) +
                                          ", model expects " + std::to_string(model.input_dimension));
  }
  return model.pca ? model.map.apply(apply_pca(*model.pca, x)) : model.map.apply(x);
}

// Output is in the model's comparison coordinates (standardized when the
// model carries feature statistics).
inline MidLevelVector project_text(const ProjectionModel& model, const TextEmbedding& e) {
  return from_eigen(project_embedding(model, e.vector));
}

}  // namespace espresso
