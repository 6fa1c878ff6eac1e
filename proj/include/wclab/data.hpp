#pragma once

#include <cstdint>
#include <string>

#include "wclab/model.hpp"
#include "wclab/util.hpp"

namespace wclab {

/// Labelled sample set. Rows of X are covariates, labels live in {-1,+1}.
struct Dataset {
  Matrix X;  // N x d
  Vector y;  // N, entries exactly -1 or +1
  std::string name;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  void validate() const;  // throws std::invalid_argument on broken invariants
  std::uint64_t content_hash() const;
};

struct CovarianceSummary {
  Matrix sigma_hat;      // d x d, symmetric PSD: X^T X / N
  double spectral_norm;  // largest eigenvalue
  double trace;
};

/// Teacher-network generator settings.
struct TeacherSpec {
  int M_star = 8;
  int d = 4;
  double mu = 0.0;    // in [0,1]; teacher satisfies ||A*||_F = M_star^(1/2 - mu)
  double c = 0.5;     // scaling in [1/2,1]
  std::uint64_t seed = 0;
  int N_train = 100;
  int N_test = 100;
  bool label_noise = false;  // sample y with P(+1) = sigmoid(f) instead of sign(f)
};

struct SynthResult {
  Dataset train;
  Dataset test;
  TwoLayerParams teacher;
};

Dataset load_csv(const std::string& path, int label_column, bool has_header);
void write_csv(const Dataset& ds, const std::string& path);

CovarianceSummary empirical_covariance(const Dataset& ds);

/// Gaussian covariates, Gaussian-then-rescaled teacher first layer with
/// ||A*||_F = M_star^(1/2-mu), +-1 second layer; deterministic in spec.seed.
SynthResult synth_teacher(const TeacherSpec& spec);

Dataset subsample(const Dataset& ds, int n, std::uint64_t seed);
Dataset standardize_columns(const Dataset& ds);

}  // namespace wclab
