#include "cfbeam/neural.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace cfbeam::nn {

namespace {

Index product(const std::vector<Index>& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_str(const std::vector<Index>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// Rows: in_ch*kh*kw, columns: batch*H*W.
MatrixXd im2col(const LayerSpec& l, const MatrixXd& x) {
  const Index h = l.in_shape[1], w = l.in_shape[2], hw = h * w;
  const Index py = (l.kh - 1) / 2, px = (l.kw - 1) / 2;
  const Index n = x.cols();
  MatrixXd cols = MatrixXd::Zero(l.in_ch * l.kh * l.kw, n * hw);
  for (Index s = 0; s < n; ++s) {
    for (Index c = 0; c < l.in_ch; ++c) {
      for (Index i = 0; i < l.kh; ++i) {
        for (Index j = 0; j < l.kw; ++j) {
          const Index row = (c * l.kh + i) * l.kw + j;
          for (Index y = 0; y < h; ++y) {
            const Index sy = y + i - py;
            if (sy < 0 || sy >= h) continue;
            for (Index xx = 0; xx < w; ++xx) {
              const Index sx = xx + j - px;
              if (sx < 0 || sx >= w) continue;
              cols(row, s * hw + y * w + xx) = x(c * hw + sy * w + sx, s);
            }
          }
        }
      }
    }
  }
  return cols;
}

MatrixXd col2im(const LayerSpec& l, const MatrixXd& cols, Index n) {
  const Index h = l.in_shape[1], w = l.in_shape[2], hw = h * w;
  const Index py = (l.kh - 1) / 2, px = (l.kw - 1) / 2;
  MatrixXd dx = MatrixXd::Zero(l.in_ch * hw, n);
  for (Index s = 0; s < n; ++s) {
    for (Index c = 0; c < l.in_ch; ++c) {
      for (Index i = 0; i < l.kh; ++i) {
        for (Index j = 0; j < l.kw; ++j) {
          const Index row = (c * l.kh + i) * l.kw + j;
          for (Index y = 0; y < h; ++y) {
            const Index sy = y + i - py;
            if (sy < 0 || sy >= h) continue;
            for (Index xx = 0; xx < w; ++xx) {
              const Index sx = xx + j - px;
              if (sx < 0 || sx >= w) continue;
              dx(c * hw + sy * w + sx, s) += cols(row, s * hw + y * w + xx);
            }
          }
        }
      }
    }
  }
  return dx;
}

}  // namespace

Tensor::Tensor(std::vector<Index> shape_, VectorXd values_)
    : shape(std::move(shape_)), values(std::move(values_)) {
  validate();
}

Tensor Tensor::zeros(std::vector<Index> shape_) {
  const Index n = product(shape_);
  return Tensor(std::move(shape_), VectorXd::Zero(n));
}

void Tensor::validate() const {
  for (Index d : shape) {
    if (d <= 0) throw ShapeError("tensor extent must be positive, got shape " + shape_str(shape));
  }
  if (product(shape) != values.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  if (!values.allFinite()) throw ShapeError("tensor holds non-finite values");
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
  }
  return "?";
}

Index LayerSpec::input_size() const { return product(in_shape); }
Index LayerSpec::output_size() const { return product(out_shape); }

std::vector<Index> LayerSpec::weight_shape() const {
  switch (kind) {
    case LayerKind::dense: return {out_shape[0], input_size()};
    case LayerKind::conv2d: return {out_ch, in_ch, kh, kw};
    default: return {};
  }
}

Network::Network(std::vector<Index> input_shape) : input_shape_(std::move(input_shape)) {
  if (input_shape_.empty() || input_shape_.size() > 3) {
    throw ShapeError("network input must be rank 1 or rank 3 (channels, height, width)");
  }
  for (Index d : input_shape_) {
    if (d <= 0) throw ShapeError("network input extents must be positive");
  }
}

std::vector<Index> Network::current_shape() const {
  return layers_.empty() ? input_shape_ : layers_.back().out_shape;
}

const std::vector<Index>& Network::output_shape() const {
  return layers_.empty() ? input_shape_ : layers_.back().out_shape;
}

Index Network::input_size() const { return product(input_shape_); }
Index Network::output_size() const { return product(output_shape()); }

void Network::push(LayerSpec spec) {
  const Index base = params_.size();
  spec.weight_offset = base;
  spec.bias_offset = base + spec.weight_count;
  params_.conservativeResize(base + spec.weight_count + spec.bias_count);
  params_.tail(spec.weight_count + spec.bias_count).setZero();
  layers_.push_back(std::move(spec));
}

Network& Network::dense(Index out) {
  const auto in = current_shape();
  if (in.size() != 1) {
    throw ShapeError("layer " + std::to_string(layers_.size()) +
                     ": dense needs a flat input, insert flatten after " + shape_str(in));
  }
  if (out <= 0) throw ShapeError("dense output width must be positive");
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.in_shape = in;
  l.out_shape = {out};
  l.weight_count = out * in[0];
  l.bias_count = out;
  push(std::move(l));
  return *this;
}

Network& Network::conv2d(Index out_ch, Index kh, Index kw) {
  const auto in = current_shape();
  if (in.size() != 3) {
    throw ShapeError("layer " + std::to_string(layers_.size()) +
                     ": conv2d needs a (channels, height, width) input, got " + shape_str(in));
  }
  if (out_ch <= 0 || kh <= 0 || kw <= 0) throw ShapeError("conv2d extents must be positive");
  LayerSpec l;
  l.kind = LayerKind::conv2d;
  l.in_shape = in;
  l.out_shape = {out_ch, in[1], in[2]};
  l.in_ch = in[0];
  l.out_ch = out_ch;
  l.kh = kh;
  l.kw = kw;
  l.weight_count = out_ch * in[0] * kh * kw;
  l.bias_count = out_ch;
  push(std::move(l));
  return *this;
}

Network& Network::relu() {
  LayerSpec l;
  l.kind = LayerKind::relu;
  l.in_shape = l.out_shape = current_shape();
  push(std::move(l));
  return *this;
}

Network& Network::flatten() {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  l.in_shape = current_shape();
  l.out_shape = {product(l.in_shape)};
  push(std::move(l));
  return *this;
}

void Network::initialize(Rng& rng) {
  for (const auto& l : layers_) {
    Index fan_in = 0, fan_out = 0;
    if (l.kind == LayerKind::dense) {
      fan_in = l.input_size();
      fan_out = l.output_size();
    } else if (l.kind == LayerKind::conv2d) {
      fan_in = l.in_ch * l.kh * l.kw;
      fan_out = l.out_ch * l.kh * l.kw;
    } else {
      continue;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Index i = 0; i < l.weight_count; ++i) params_[l.weight_offset + i] = uniform(rng, -limit, limit);
    params_.segment(l.bias_offset, l.bias_count).setZero();
  }
}

Network::RowMajorMap Network::weight(std::size_t layer) {
  const auto& l = layers_.at(layer);
  const Index rows = l.kind == LayerKind::dense ? l.output_size() : l.out_ch;
  return RowMajorMap(params_.data() + l.weight_offset, rows, rows ? l.weight_count / rows : 0);
}

Network::ConstRowMajorMap Network::weight(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  const Index rows = l.kind == LayerKind::dense ? l.output_size() : l.out_ch;
  return ConstRowMajorMap(params_.data() + l.weight_offset, rows, rows ? l.weight_count / rows : 0);
}

Eigen::Map<VectorXd> Network::bias(std::size_t layer) {
  const auto& l = layers_.at(layer);
  return Eigen::Map<VectorXd>(params_.data() + l.bias_offset, l.bias_count);
}

Eigen::Map<const VectorXd> Network::bias(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return Eigen::Map<const VectorXd>(params_.data() + l.bias_offset, l.bias_count);
}

void Network::check_input(const MatrixXd& x) const {
  if (x.rows() != input_size()) {
    throw ShapeError("layer 0: expected input of " + std::to_string(input_size()) + " features " +
                     shape_str(input_shape_) + ", got " + std::to_string(x.rows()));
  }
}

MatrixXd Network::forward(const MatrixXd& x) const {
  Cache cache;
  forward(x, cache);
  return std::move(cache.output);
}

const MatrixXd& Network::forward(const MatrixXd& x, Cache& cache) const {
  check_input(x);
  cache.inputs.resize(layers_.size());
  MatrixXd cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    cache.inputs[i] = cur;
    switch (l.kind) {
      case LayerKind::dense:
        cur = (weight(i) * cache.inputs[i]).colwise() + bias(i);
        break;
      case LayerKind::conv2d: {
        const Index n = cur.cols(), hw = l.in_shape[1] * l.in_shape[2];
        const MatrixXd out = weight(i) * im2col(l, cache.inputs[i]);  // out_ch x (n*hw)
        cur.resize(l.out_ch * hw, n);
        for (Index s = 0; s < n; ++s) {
          for (Index o = 0; o < l.out_ch; ++o) {
            cur.col(s).segment(o * hw, hw) =
                out.row(o).segment(s * hw, hw).transpose().array() + bias(i)[o];
          }
        }
        break;
      }
      case LayerKind::relu:
        cur = cur.cwiseMax(0.0);
        break;
      case LayerKind::flatten:
        break;
    }
  }
  cache.output = std::move(cur);
  return cache.output;
}

void Network::backward(const Cache& cache, const MatrixXd& output_grad, VectorXd& grad,
                       MatrixXd* input_grad) const {
  if (grad.size() == 0) grad = VectorXd::Zero(params_.size());
  if (grad.size() != params_.size()) throw ShapeError("gradient buffer does not match parameters");
  if (cache.inputs.size() != layers_.size()) throw ShapeError("backward called without a forward cache");
  if (output_grad.rows() != output_size() || output_grad.cols() != cache.output.cols()) {
    throw ShapeError("output gradient shape does not match the cached forward output");
  }
  MatrixXd g = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const MatrixXd& x = cache.inputs[k];
    switch (l.kind) {
      case LayerKind::dense: {
        RowMajorMap dw(grad.data() + l.weight_offset, l.output_size(), l.input_size());
        dw.noalias() += g * x.transpose();
        grad.segment(l.bias_offset, l.bias_count) += g.rowwise().sum();
        if (k > 0 || input_grad) g = weight(k).transpose() * g;
        break;
      }
      case LayerKind::conv2d: {
        const Index n = x.cols(), hw = l.in_shape[1] * l.in_shape[2];
        MatrixXd gout(l.out_ch, n * hw);
        for (Index s = 0; s < n; ++s) {
          for (Index o = 0; o < l.out_ch; ++o) {
            gout.row(o).segment(s * hw, hw) = g.col(s).segment(o * hw, hw).transpose();
          }
        }
        const MatrixXd cols = im2col(l, x);
        RowMajorMap dw(grad.data() + l.weight_offset, l.out_ch, l.weight_count / l.out_ch);
        dw.noalias() += gout * cols.transpose();
        grad.segment(l.bias_offset, l.bias_count) += gout.rowwise().sum();
        if (k > 0 || input_grad) g = col2im(l, weight(k).transpose() * gout, n);
        break;
      }
      case LayerKind::relu:
        g = (x.array() > 0.0).select(g, 0.0);
        break;
      case LayerKind::flatten:
        break;
    }
  }
  if (input_grad) *input_grad = std::move(g);
}

std::vector<std::pair<std::string, Tensor>> Network::unpack(const VectorXd& flat) const {
  if (flat.size() != params_.size()) throw ShapeError("flat vector does not match parameter count");
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight_count == 0) continue;
    const std::string name = "layer" + std::to_string(i);
    out.emplace_back(name + ".weight", Tensor(l.weight_shape(), flat.segment(l.weight_offset, l.weight_count)));
    out.emplace_back(name + ".bias", Tensor({l.bias_count}, flat.segment(l.bias_offset, l.bias_count)));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> Network::parameter_tensors() const { return unpack(params_); }

bool Network::same_architecture(const Network& other) const {
  if (input_shape_ != other.input_shape_ || layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto &a = layers_[i], &b = other.layers_[i];
    if (a.kind != b.kind || a.in_shape != b.in_shape || a.out_shape != b.out_shape || a.kh != b.kh ||
        a.kw != b.kw) {
      return false;
    }
  }
  return true;
}

namespace {

MatrixXd as_batch(const Network& net, const Tensor& x) {
  x.validate();
  const auto& in = net.input_shape();
  Index batch = 1;
  if (x.shape == in) {
    batch = 1;
  } else if (x.shape.size() == in.size() + 1 && std::equal(in.begin(), in.end(), x.shape.begin() + 1)) {
    batch = x.shape[0];
  } else {
    throw ShapeError("layer 0: input shape " + shape_str(x.shape) + " does not match " + shape_str(in));
  }
  return Eigen::Map<const MatrixXd>(x.values.data(), net.input_size(), batch);
}

}  // namespace

Tensor forward(const Network& net, const Tensor& x) {
  const MatrixXd xb = as_batch(net, x);
  const MatrixXd y = net.forward(xb);
  std::vector<Index> shape = net.output_shape();
  if (x.shape != net.input_shape()) shape.insert(shape.begin(), xb.cols());
  return Tensor(std::move(shape), Eigen::Map<const VectorXd>(y.data(), y.size()));
}

VectorXd backward(const Network& net, const Tensor& x, const Tensor& loss_grad) {
  const MatrixXd xb = as_batch(net, x);
  if (loss_grad.size() != net.output_size() * xb.cols()) {
    throw ShapeError("loss gradient does not match the network output");
  }
  Network::Cache cache;
  net.forward(xb, cache);
  VectorXd grad;
  net.backward(cache, Eigen::Map<const MatrixXd>(loss_grad.values.data(), net.output_size(), xb.cols()), grad);
  return grad;
}

double mse(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ShapeError("mse: prediction and target shapes differ");
  }
  if (pred.size() == 0) return 0.0;
  return (pred - target).squaredNorm() / static_cast<double>(pred.size());
}

double mse(const Tensor& pred, const Tensor& target) {
  if (pred.shape != target.shape) {
    throw ShapeError("mse: shapes " + shape_str(pred.shape) + " and " + shape_str(target.shape) + " differ");
  }
  return mse(MatrixXd(pred.values), MatrixXd(target.values));
}

Sgdm::Sgdm(Index n_params, double learning_rate, double momentum, StepDecay decay)
    : velocity_(VectorXd::Zero(n_params)), lr_(learning_rate), momentum_(momentum), decay_(decay) {
  if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
}

void Sgdm::step(VectorXd& params, const VectorXd& grad) {
  if (grad.size() != velocity_.size() || params.size() != velocity_.size()) {
    throw ShapeError("optimizer state does not mirror the parameters");
  }
  double scale = 1.0;
  if (max_grad_norm_ > 0.0) {
    const double norm = grad.norm();
    if (norm > max_grad_norm_) scale = max_grad_norm_ / norm;
  }
  velocity_ = momentum_ * velocity_ + scale * grad;
  params -= lr_ * velocity_;
}

void Sgdm::end_epoch() {
  ++epoch_;
  if (decay_.interval > 0 && epoch_ % decay_.interval == 0) lr_ *= decay_.factor;
}

VectorXd analytic_gradient(const Network& net, const MatrixXd& x) {
  Network::Cache cache;
  const MatrixXd& y = net.forward(x, cache);
  VectorXd grad;
  net.backward(cache, y, grad);
  return grad;
}

VectorXd numeric_gradient(const Network& net, const MatrixXd& x, double eps) {
  Network probe = net;
  VectorXd grad(net.parameter_count());
  for (Index i = 0; i < grad.size(); ++i) {
    const double orig = probe.params()[i];
    probe.params()[i] = orig + eps;
    const double up = 0.5 * probe.forward(x).squaredNorm();
    probe.params()[i] = orig - eps;
    const double down = 0.5 * probe.forward(x).squaredNorm();
    probe.params()[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double max_relative_error(const VectorXd& analytic, const VectorXd& numeric, double floor) {
  if (analytic.size() != numeric.size()) throw ShapeError("gradient vectors differ in length");
  double worst = 0.0;
  for (Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double grad_check(const Network& net, const MatrixXd& x, double eps) {
  if (!(eps > 1e-8 && eps < 1e-3)) throw ConfigError("grad_check eps must lie in (1e-8, 1e-3)");
  return max_relative_error(analytic_gradient(net, x), numeric_gradient(net, x, eps));
}

void write_tensors(std::ostream& os, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  const auto old = os.precision(17);
  for (const auto& [name, t] : tensors) {
    os << name;
    for (Index d : t.shape) os << ' ' << d;
    os << '\n';
    for (Index i = 0; i < t.size(); ++i) os << (i ? " " : "") << t.values[i];
    os << '\n';
  }
  os.precision(old);
}

std::vector<std::pair<std::string, Tensor>> read_tensors(std::istream& is) {
  std::vector<std::pair<std::string, Tensor>> out;
  std::string header;
  while (std::getline(is, header)) {
    if (header.empty() || header[0] == '#') continue;
    std::istringstream hs(header);
    std::string name;
    hs >> name;
    std::vector<Index> shape;
    for (Index d; hs >> d;) shape.push_back(d);
    const Index n = product(shape);
    VectorXd values(n);
    for (Index i = 0; i < n; ++i) {
      if (!(is >> values[i])) throw ShapeError("tensor '" + name + "' is truncated");
    }
    is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    out.emplace_back(name, Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_params(std::ostream& os, const Network& net, const std::string& prefix) {
  auto tensors = net.parameter_tensors();
  for (auto& t : tensors) t.first = prefix + t.first;
  write_tensors(os, tensors);
}

void load_params(const std::vector<std::pair<std::string, Tensor>>& tensors, Network& net,
                 const std::string& prefix) {
  VectorXd flat = net.params();
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    if (l.weight_count == 0) continue;
    const std::string base = prefix + "layer" + std::to_string(i);
    auto find = [&](const std::string& name) -> const Tensor& {
      for (const auto& [n, t] : tensors) {
        if (n == name) return t;
      }
      throw ShapeError("checkpoint is missing tensor '" + name + "'");
    };
    const Tensor& w = find(base + ".weight");
    const Tensor& b = find(base + ".bias");
    if (w.shape != l.weight_shape() || b.size() != l.bias_count) {
      throw ShapeError("checkpoint tensor '" + base + "' has shape " + shape_str(w.shape) + ", expected " +
                       shape_str(l.weight_shape()));
    }
    flat.segment(l.weight_offset, l.weight_count) = w.values;
    flat.segment(l.bias_offset, l.bias_count) = b.values;
  }
  net.params() = flat;
}

void load_params(std::istream& is, Network& net, const std::string& prefix) {
  load_params(read_tensors(is), net, prefix);
}

}  // namespace cfbeam::nn
