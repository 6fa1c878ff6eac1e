#pragma once

#include <string>

#include "wclab/util.hpp"

namespace wclab {

/// Bounded smooth activation with cached derivative sup-bounds.
/// `linear` exists for the convex reference instances (sigma'' = 0); its
/// L_sigma is +inf since |u| is unbounded.
struct Activation {
  enum class Kind { sigmoid, tanh, linear };
  Kind kind = Kind::sigmoid;

  double value(double u) const;
  double d1(double u) const;
  double d2(double u) const;
  double d3(double u) const;

  double L_sigma() const;         // sup |sigma|
  double L_sigma_prime() const;   // sup |sigma'|
  double L_sigma_second() const;  // sup |sigma''|, grid-maximised once and cached
  double L_sigma_third() const;   // sup |sigma'''|, same

  static Activation parse(const std::string& name);
  std::string name() const;
};

/// f(x,w) = M^{-c} sum_j v_j sigma(<A_j, x>). Flat layout is row-major A
/// followed by v (v only when the second layer is trainable).
struct TwoLayerParams {
  Matrix A;  // M x d
  Vector v;  // M
  double c = 0.5;
  bool train_second_layer = true;

  Eigen::Index width() const { return A.rows(); }
  Eigen::Index input_dim() const { return A.cols(); }
  Eigen::Index flat_dim() const {
    return A.size() + (train_second_layer ? v.size() : 0);
  }
  double scale() const;  // M^{-c}
  void validate() const;
};

/// Three layers with the middle one fixed; trainable weights are (A1, v).
/// Flat layout is row-major A1 followed by v; A2 never enters the flat vector.
struct ThreeLayerParams {
  Matrix A1;  // M1 x d, trainable
  Matrix A2;  // M2 x M1, fixed
  Vector v;   // M2, trainable
  double c = 0.5;

  Eigen::Index flat_dim() const { return A1.size() + v.size(); }
  void validate() const;
};

double forward(const TwoLayerParams& p, const Activation& act, const Vector& x);
Vector grad_f(const TwoLayerParams& p, const Activation& act, const Vector& x);
Vector hvp_f(const TwoLayerParams& p, const Activation& act, const Vector& x, const Vector& u);

double forward(const ThreeLayerParams& p, const Activation& act, const Vector& x);
Vector grad_f(const ThreeLayerParams& p, const Activation& act, const Vector& x);
Vector hvp_f(const ThreeLayerParams& p, const Activation& act, const Vector& x, const Vector& u);

Vector flatten(const TwoLayerParams& p);
TwoLayerParams unflatten(const Vector& flat, const TwoLayerParams& shape);
Vector flatten(const ThreeLayerParams& p);
ThreeLayerParams unflatten(const Vector& flat, const ThreeLayerParams& shape);

// Checkpoint JSON: {M, d, c, train_second_layer, A (row-major), v}.
std::string to_checkpoint_json(const TwoLayerParams& p);
TwoLayerParams from_checkpoint_json(const std::string& text);
void save_checkpoint(const TwoLayerParams& p, const std::string& path);
TwoLayerParams load_checkpoint(const std::string& path);

}  // namespace wclab
