#include "wclab/model.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace wclab {

namespace {

double sigmoid(double u) {
  if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
  double e = std::exp(u);
  return e / (1.0 + e);
}

// sup over a dense grid on [-10,10]; both derivatives decay fast outside.
double grid_max(double (*f)(double)) {
  const int n = 10'000'000;
  const double lo = -10.0, hi = 10.0;
  double best = 0.0;
  for (int i = 0; i <= n; ++i) {
    double u = lo + (hi - lo) * static_cast<double>(i) / n;
    best = std::max(best, std::abs(f(u)));
  }
  return best;
}

double sigmoid_d2(double u) {
  double s = sigmoid(u);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}

double sigmoid_d3(double u) {
  double s = sigmoid(u);
  return s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s);
}

double tanh_d2(double u) {
  double t = std::tanh(u);
  return -2.0 * t * (1.0 - t * t);
}

double tanh_d3(double u) {
  double t = std::tanh(u);
  return -2.0 * (1.0 - t * t) * (1.0 - 3.0 * t * t);
}

}  // namespace

double Activation::value(double u) const {
  switch (kind) {
    case Kind::sigmoid: return sigmoid(u);
    case Kind::tanh: return std::tanh(u);
    case Kind::linear: return u;
  }
  throw std::logic_error("bad activation kind");
}

double Activation::d1(double u) const {
  switch (kind) {
    case Kind::sigmoid: {
      double s = sigmoid(u);
      return s * (1.0 - s);
    }
    case Kind::tanh: {
      double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case Kind::linear: return 1.0;
  }
  throw std::logic_error("bad activation kind");
}

double Activation::d2(double u) const {
  switch (kind) {
    case Kind::sigmoid: return sigmoid_d2(u);
    case Kind::tanh: return tanh_d2(u);
    case Kind::linear: return 0.0;
  }
  throw std::logic_error("bad activation kind");
}

double Activation::d3(double u) const {
  switch (kind) {
    case Kind::sigmoid: return sigmoid_d3(u);
    case Kind::tanh: return tanh_d3(u);
    case Kind::linear: return 0.0;
  }
  throw std::logic_error("bad activation kind");
}

double Activation::L_sigma() const {
  switch (kind) {
    case Kind::sigmoid: return 1.0;
    case Kind::tanh: return 1.0;
    case Kind::linear: return std::numeric_limits<double>::infinity();
  }
  throw std::logic_error("bad activation kind");
}

double Activation::L_sigma_prime() const {
  switch (kind) {
    case Kind::sigmoid: return 0.25;
    case Kind::tanh: return 1.0;
    case Kind::linear: return 1.0;
  }
  throw std::logic_error("bad activation kind");
}

double Activation::L_sigma_second() const {
  switch (kind) {
    case Kind::sigmoid: {
      static const double v = grid_max(&sigmoid_d2);
      return v;
    }
    case Kind::tanh: {
      static const double v = grid_max(&tanh_d2);
      return v;
    }
    case Kind::linear: return 0.0;
  }
  throw std::logic_error("bad activation kind");
}

double Activation::L_sigma_third() const {
  switch (kind) {
    case Kind::sigmoid: {
      static const double v = grid_max(&sigmoid_d3);
      return v;
    }
    case Kind::tanh: {
      static const double v = grid_max(&tanh_d3);
      return v;
    }
    case Kind::linear: return 0.0;
  }
  throw std::logic_error("bad activation kind");
}

Activation Activation::parse(const std::string& name) {
  if (name == "sigmoid") return Activation{Kind::sigmoid};
  if (name == "tanh") return Activation{Kind::tanh};
  if (name == "linear") return Activation{Kind::linear};
  throw std::invalid_argument("unknown activation: " + name);
}

std::string Activation::name() const {
  switch (kind) {
    case Kind::sigmoid: return "sigmoid";
    case Kind::tanh: return "tanh";
    case Kind::linear: return "linear";
  }
  throw std::logic_error("bad activation kind");
}

double TwoLayerParams::scale() const {
  return std::pow(static_cast<double>(width()), -c);
}

void TwoLayerParams::validate() const {
  if (A.rows() < 1 || A.cols() < 1) throw std::invalid_argument("two-layer: M >= 1 and d >= 1 required");
  if (v.size() != A.rows()) throw std::invalid_argument("two-layer: v length must equal width");
  if (!A.allFinite() || !v.allFinite()) throw std::invalid_argument("two-layer: non-finite weights");
}

void ThreeLayerParams::validate() const {
  if (A1.rows() < 1 || A1.cols() < 1 || A2.rows() < 1 || v.size() != A2.rows() ||
      A2.cols() != A1.rows())
    throw std::invalid_argument("three-layer: inconsistent dimensions");
  if (!A1.allFinite() || !A2.allFinite() || !v.allFinite())
    throw std::invalid_argument("three-layer: non-finite weights");
}

namespace {

void check_input(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    std::ostringstream os;
    os << what << ": length " << got << ", expected " << want;
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

double forward(const TwoLayerParams& p, const Activation& act, const Vector& x) {
  check_input(x.size(), p.input_dim(), "forward: input");
  const Vector z = p.A * x;
  double s = 0.0;
  for (Eigen::Index j = 0; j < p.width(); ++j) s += p.v[j] * act.value(z[j]);
  return p.scale() * s;
}

Vector grad_f(const TwoLayerParams& p, const Activation& act, const Vector& x) {
  check_input(x.size(), p.input_dim(), "grad_f: input");
  const Eigen::Index M = p.width(), d = p.input_dim();
  const double sc = p.scale();
  const Vector z = p.A * x;
  Vector g(p.flat_dim());
  for (Eigen::Index j = 0; j < M; ++j)
    g.segment(j * d, d) = (sc * p.v[j] * act.d1(z[j])) * x;
  if (p.train_second_layer)
    for (Eigen::Index j = 0; j < M; ++j) g[M * d + j] = sc * act.value(z[j]);
  return g;
}

// Blockwise product with the prediction Hessian: the A-A block is diagonal
// in the neuron index, the v-v block is zero, and the A-v cross block only
// appears when the second layer is trainable.
Vector hvp_f(const TwoLayerParams& p, const Activation& act, const Vector& x, const Vector& u) {
  check_input(x.size(), p.input_dim(), "hvp_f: input");
  check_input(u.size(), p.flat_dim(), "hvp_f: direction");
  const Eigen::Index M = p.width(), d = p.input_dim();
  const double sc = p.scale();
  const Vector z = p.A * x;
  Vector out = Vector::Zero(p.flat_dim());
  for (Eigen::Index j = 0; j < M; ++j) {
    const double pj = x.dot(u.segment(j * d, d));  // <A(u)_j, x>
    double coeff = p.v[j] * act.d2(z[j]) * pj;
    if (p.train_second_layer) {
      coeff += u[M * d + j] * act.d1(z[j]);
      out[M * d + j] = sc * act.d1(z[j]) * pj;
    }
    out.segment(j * d, d) = (sc * coeff) * x;
  }
  return out;
}

namespace {

// Middle-layer pre-activations z_i = M1^{-c} sum_s A2_{is} <A1_s, x>.
Vector three_layer_preact(const ThreeLayerParams& p, const Vector& x) {
  return std::pow(static_cast<double>(p.A1.rows()), -p.c) * (p.A2 * (p.A1 * x));
}

}  // namespace

double forward(const ThreeLayerParams& p, const Activation& act, const Vector& x) {
  check_input(x.size(), p.A1.cols(), "forward: input");
  const Vector z = three_layer_preact(p, x);
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) s += p.v[i] * act.value(z[i]);
  return std::pow(static_cast<double>(p.A2.rows()), -p.c) * s;
}

Vector grad_f(const ThreeLayerParams& p, const Activation& act, const Vector& x) {
  check_input(x.size(), p.A1.cols(), "grad_f: input");
  const Eigen::Index M1 = p.A1.rows(), M2 = p.A2.rows(), d = p.A1.cols();
  const double sc1 = std::pow(static_cast<double>(M1), -p.c);
  const double sc2 = std::pow(static_cast<double>(M2), -p.c);
  const Vector z = three_layer_preact(p, x);
  Vector g(p.flat_dim());
  // dL/dA1_{jk} = sc2 * sum_i v_i sigma'(z_i) A2_{ij} sc1 * x_k
  Vector w(M2);
  for (Eigen::Index i = 0; i < M2; ++i) w[i] = p.v[i] * act.d1(z[i]);
  const Vector col = sc1 * sc2 * (p.A2.transpose() * w);  // length M1
  for (Eigen::Index j = 0; j < M1; ++j) g.segment(j * d, d) = col[j] * x;
  for (Eigen::Index i = 0; i < M2; ++i) g[M1 * d + i] = sc2 * act.value(z[i]);
  return g;
}

Vector hvp_f(const ThreeLayerParams& p, const Activation& act, const Vector& x, const Vector& u) {
  check_input(x.size(), p.A1.cols(), "hvp_f: input");
  check_input(u.size(), p.flat_dim(), "hvp_f: direction");
  const Eigen::Index M1 = p.A1.rows(), M2 = p.A2.rows(), d = p.A1.cols();
  const double sc1 = std::pow(static_cast<double>(M1), -p.c);
  const double sc2 = std::pow(static_cast<double>(M2), -p.c);
  const Vector z = three_layer_preact(p, x);
  // q_j = <A1(u)_j, x>, b_i = sum_j A2_{ij} q_j
  Vector q(M1);
  for (Eigen::Index j = 0; j < M1; ++j) q[j] = x.dot(u.segment(j * d, d));
  const Vector b = p.A2 * q;
  const Eigen::Map<const Vector> vu(u.data() + M1 * d, M2);

  // A1-A1 block + cross block folded into per-middle-unit coefficients.
  Vector w(M2);
  for (Eigen::Index i = 0; i < M2; ++i)
    w[i] = sc1 * (p.v[i] * act.d2(z[i]) * sc1 * b[i] + vu[i] * act.d1(z[i]));
  const Vector col = sc2 * (p.A2.transpose() * w);
  Vector out(p.flat_dim());
  for (Eigen::Index j = 0; j < M1; ++j) out.segment(j * d, d) = col[j] * x;
  for (Eigen::Index i = 0; i < M2; ++i)
    out[M1 * d + i] = sc2 * act.d1(z[i]) * sc1 * b[i];
  return out;
}

Vector flatten(const TwoLayerParams& p) {
  Vector flat(p.flat_dim());
  const Eigen::Index M = p.width(), d = p.input_dim();
  for (Eigen::Index j = 0; j < M; ++j) flat.segment(j * d, d) = p.A.row(j).transpose();
  if (p.train_second_layer) flat.segment(M * d, M) = p.v;
  return flat;
}

TwoLayerParams unflatten(const Vector& flat, const TwoLayerParams& shape) {
  check_input(flat.size(), shape.flat_dim(), "unflatten: flat vector");
  TwoLayerParams p = shape;
  const Eigen::Index M = shape.width(), d = shape.input_dim();
  for (Eigen::Index j = 0; j < M; ++j) p.A.row(j) = flat.segment(j * d, d).transpose();
  if (shape.train_second_layer) p.v = flat.segment(M * d, M);
  return p;
}

Vector flatten(const ThreeLayerParams& p) {
  Vector flat(p.flat_dim());
  const Eigen::Index M1 = p.A1.rows(), d = p.A1.cols();
  for (Eigen::Index j = 0; j < M1; ++j) flat.segment(j * d, d) = p.A1.row(j).transpose();
  flat.segment(M1 * d, p.v.size()) = p.v;
  return flat;
}

ThreeLayerParams unflatten(const Vector& flat, const ThreeLayerParams& shape) {
  check_input(flat.size(), shape.flat_dim(), "unflatten: flat vector");
  ThreeLayerParams p = shape;
  const Eigen::Index M1 = shape.A1.rows(), d = shape.A1.cols();
  for (Eigen::Index j = 0; j < M1; ++j) p.A1.row(j) = flat.segment(j * d, d).transpose();
  p.v = flat.segment(M1 * d, shape.v.size());
  return p;
}

std::string to_checkpoint_json(const TwoLayerParams& p) {
  nlohmann::json j;
  j["M"] = p.width();
  j["d"] = p.input_dim();
  j["c"] = p.c;
  j["train_second_layer"] = p.train_second_layer;
  std::vector<double> a;
  a.reserve(p.A.size());
  for (Eigen::Index r = 0; r < p.A.rows(); ++r)
    for (Eigen::Index k = 0; k < p.A.cols(); ++k) a.push_back(p.A(r, k));
  j["A"] = a;
  j["v"] = std::vector<double>(p.v.data(), p.v.data() + p.v.size());
  return j.dump(2);
}

TwoLayerParams from_checkpoint_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TwoLayerParams p;
  const Eigen::Index M = j.at("M").get<Eigen::Index>();
  const Eigen::Index d = j.at("d").get<Eigen::Index>();
  p.c = j.at("c").get<double>();
  p.train_second_layer = j.at("train_second_layer").get<bool>();
  auto a = j.at("A").get<std::vector<double>>();
  auto v = j.at("v").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(a.size()) != M * d || static_cast<Eigen::Index>(v.size()) != M)
    throw std::invalid_argument("checkpoint: array lengths do not match M, d");
  p.A.resize(M, d);
  for (Eigen::Index r = 0; r < M; ++r)
    for (Eigen::Index k = 0; k < d; ++k) p.A(r, k) = a[r * d + k];
  p.v = Eigen::Map<const Vector>(v.data(), M);
  p.validate();
  return p;
}

void save_checkpoint(const TwoLayerParams& p, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << to_checkpoint_json(p) << "\n";
}

TwoLayerParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return from_checkpoint_json(os.str());
}

}  // namespace wclab
