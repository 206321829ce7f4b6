#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cfbeam/common.hpp"
#include "cfbeam/random.hpp"

namespace cfbeam::nn {

// Row-major dense array with an explicit shape.
struct Tensor {
  std::vector<Index> shape;
  VectorXd values;

  Tensor() = default;
  Tensor(std::vector<Index> shape_, VectorXd values_);
  static Tensor zeros(std::vector<Index> shape_);

  Index size() const { return values.size(); }
  // Throws ShapeError unless product(shape) == size and every value is finite.
  void validate() const;
};

enum class LayerKind { dense, conv2d, relu, flatten };

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  // Input and output shapes of this layer, excluding any batch dimension.
  std::vector<Index> in_shape;
  std::vector<Index> out_shape;
  // dense: out x in. conv2d: out_ch x in_ch x kh x kw.
  Index in_ch = 0, out_ch = 0, kh = 0, kw = 0;
  Index weight_offset = 0, weight_count = 0;
  Index bias_offset = 0, bias_count = 0;

  Index input_size() const;
  Index output_size() const;
  std::vector<Index> weight_shape() const;
};

// A feed-forward stack whose parameters live in one flat vector. Activations
// are matrices with one column per sample, each column the row-major
// flattening of the per-sample shape.
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Index> input_shape);

  Network& dense(Index out);
  // Stride 1, zero "same" padding; even kernels pad the extra row/column on the high side.
  Network& conv2d(Index out_ch, Index kh, Index kw);
  Network& relu();
  Network& flatten();

  // Uniform in +-sqrt(6/(fan_in+fan_out)), zero biases.
  void initialize(Rng& rng);

  const std::vector<Index>& input_shape() const { return input_shape_; }
  const std::vector<Index>& output_shape() const;
  Index input_size() const;
  Index output_size() const;
  const std::vector<LayerSpec>& layers() const { return layers_; }
  Index parameter_count() const { return params_.size(); }

  VectorXd& params() { return params_; }
  const VectorXd& params() const { return params_; }

  using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstRowMajorMap =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  // dense: out x in; conv2d: out_ch x (in_ch*kh*kw).
  RowMajorMap weight(std::size_t layer);
  ConstRowMajorMap weight(std::size_t layer) const;
  Eigen::Map<VectorXd> bias(std::size_t layer);
  Eigen::Map<const VectorXd> bias(std::size_t layer) const;

  struct Cache {
    std::vector<MatrixXd> inputs;  // input of every layer
    MatrixXd output;
  };

  MatrixXd forward(const MatrixXd& x) const;
  const MatrixXd& forward(const MatrixXd& x, Cache& cache) const;

  // Accumulates d(loss)/d(params) into grad (resized and zeroed when empty) and
  // optionally returns d(loss)/d(input).
  void backward(const Cache& cache, const MatrixXd& output_grad, VectorXd& grad,
                MatrixXd* input_grad = nullptr) const;

  // One tensor per parameter array, named "layer<i>.weight" / "layer<i>.bias".
  std::vector<std::pair<std::string, Tensor>> parameter_tensors() const;
  std::vector<std::pair<std::string, Tensor>> unpack(const VectorXd& flat) const;

  // Same layer stack and shapes; parameter values are not compared.
  bool same_architecture(const Network& other) const;

 private:
  void check_input(const MatrixXd& x) const;
  std::vector<Index> current_shape() const;
  void push(LayerSpec spec);

  std::vector<Index> input_shape_;
  std::vector<LayerSpec> layers_;
  VectorXd params_;
};

// Tensor-level entry points. x is either the network input shape or that shape
// with a leading batch dimension.
Tensor forward(const Network& net, const Tensor& x);
// Gradient of a loss whose derivative w.r.t. the output is loss_grad.
VectorXd backward(const Network& net, const Tensor& x, const Tensor& loss_grad);

double mse(const Tensor& pred, const Tensor& target);
double mse(const MatrixXd& pred, const MatrixXd& target);

struct StepDecay {
  int interval = 0;  // epochs between halvings; 0 disables decay
  double factor = 0.5;
};

// Classical momentum: v <- mu*v + g; p <- p - lr*v.
class Sgdm {
 public:
  Sgdm() = default;
  Sgdm(Index n_params, double learning_rate, double momentum, StepDecay decay = {});

  void step(VectorXd& params, const VectorXd& grad);
  // Advances the epoch counter and applies the step-decay schedule.
  void end_epoch();

  double learning_rate() const { return lr_; }
  double momentum() const { return momentum_; }
  const VectorXd& velocity() const { return velocity_; }
  // Rescale gradients whose L2 norm exceeds this value; 0 disables.
  void set_max_grad_norm(double v) { max_grad_norm_ = v; }

 private:
  VectorXd velocity_;
  double lr_ = 0.01;
  double momentum_ = 0.0;
  StepDecay decay_;
  int epoch_ = 0;
  double max_grad_norm_ = 0.0;
};

// Central differences of L = 0.5*||net(x)||^2 over every parameter.
VectorXd numeric_gradient(const Network& net, const MatrixXd& x, double eps);
VectorXd analytic_gradient(const Network& net, const MatrixXd& x);
// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
double max_relative_error(const VectorXd& analytic, const VectorXd& numeric, double floor = 1e-6);
double grad_check(const Network& net, const MatrixXd& x, double eps);

// Text persistence: "name d0 d1 ..." then the values, 17 significant digits.
void write_tensors(std::ostream& os, const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_tensors(std::istream& is);
void save_params(std::ostream& os, const Network& net, const std::string& prefix = "");
// Loads tensors written by save_params into an identically shaped network.
void load_params(std::istream& is, Network& net, const std::string& prefix = "");
void load_params(const std::vector<std::pair<std::string, Tensor>>& tensors, Network& net,
                 const std::string& prefix = "");

}  // namespace cfbeam::nn
