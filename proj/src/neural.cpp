#include "safenav/neural.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "safenav/geometry.hpp"

namespace safenav {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

Gradients& Gradients::operator+=(const Gradients& other) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weights += other.layers[i].weights;
    layers[i].biases += other.layers[i].biases;
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& l : layers) {
    l.weights *= s;
    l.biases *= s;
  }
  return *this;
}

MlpNetwork::MlpNetwork(std::vector<DenseLayer> layers, Head head) : layers_(std::move(layers)), head_(head) {
  if (layers_.empty()) throw ContractError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].biases.size() != layers_[i].weights.rows()) {
      throw ContractError("layer " + std::to_string(i) + ": bias length does not match outputs");
    }
    if (i > 0 && layers_[i].inputs() != layers_[i - 1].outputs()) {
      throw ContractError("layer " + std::to_string(i) + ": inputs do not chain with previous outputs");
    }
  }
  if (head_ == Head::scalar_value && output_size() != 1) throw ContractError("value head must have one output");
  layers_.back().frozen = false;
}

MlpNetwork MlpNetwork::create(std::span<const int> sizes, Head head, Rng& rng) {
  if (sizes.size() < 2) throw ContractError("network shape needs at least input and output sizes");
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int in = sizes[i];
    const int out = sizes[i + 1];
    const bool last = i + 2 == sizes.size();
    const double gain = last ? (head == Head::softmax_policy ? 0.01 : 1.0) : std::sqrt(2.0);
    const double bound = gain * std::sqrt(3.0 / in);
    DenseLayer layer;
    layer.weights.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    }
    layer.biases = Eigen::VectorXd::Zero(out);
    layer.activation = last ? Activation::identity : Activation::tanh;
    layers.push_back(std::move(layer));
  }
  return MlpNetwork(std::move(layers), head);
}

std::vector<int> MlpNetwork::shape() const {
  std::vector<int> s{input_size()};
  for (const auto& l : layers_) s.push_back(l.outputs());
  return s;
}

ForwardCache MlpNetwork::forward(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_size()) throw ContractError("input size does not match network");
  if (!inputs.allFinite()) throw ContractError("non-finite network input");
  ForwardCache cache;
  cache.layer_inputs.reserve(layers_.size());
  Eigen::MatrixXd x = inputs;
  for (const DenseLayer& l : layers_) {
    Eigen::MatrixXd z = l.weights * x;
    z.colwise() += l.biases;
    if (l.activation == Activation::tanh) z = tanh_array(z.array()).matrix();
    cache.layer_inputs.push_back(std::move(x));
    x = std::move(z);
  }
  cache.raw = std::move(x);
  return cache;
}

Eigen::VectorXd MlpNetwork::logits(const Eigen::VectorXd& input) const { return forward(input).raw.col(0); }

Eigen::VectorXd MlpNetwork::output(const Eigen::VectorXd& input) const {
  Eigen::VectorXd raw = logits(input);
  return head_ == Head::softmax_policy ? softmax(raw) : raw;
}

Gradients MlpNetwork::backward(const ForwardCache& cache, const Eigen::MatrixXd& raw_grad) const {
  if (cache.layer_inputs.size() != layers_.size()) throw ContractError("forward cache does not match network");
  if (raw_grad.rows() != cache.raw.rows() || raw_grad.cols() != cache.raw.cols()) {
    throw ContractError("output gradient shape does not match forward cache");
  }
  Gradients grads = zero_gradients();

  // Nothing below the lowest trainable layer needs a gradient.
  int lowest = num_layers() - 1;
  for (int i = 0; i < num_layers(); ++i) {
    if (!layers_[static_cast<std::size_t>(i)].frozen) {
      lowest = i;
      break;
    }
  }

  Eigen::MatrixXd g = raw_grad;
  for (int i = num_layers() - 1; i >= lowest; --i) {
    const auto ui = static_cast<std::size_t>(i);
    const DenseLayer& l = layers_[ui];
    if (l.activation == Activation::tanh) {
      const Eigen::MatrixXd& out = ui + 1 < layers_.size() ? cache.layer_inputs[ui + 1] : cache.raw;
      g = (g.array() * (1.0 - out.array().square())).matrix();
    }
    if (!l.frozen) {
      grads.layers[ui].weights.noalias() = g * cache.layer_inputs[ui].transpose();
      grads.layers[ui].biases = g.rowwise().sum();
    }
    if (i > lowest) g = l.weights.transpose() * g;
  }
  return grads;
}

Gradients MlpNetwork::zero_gradients() const {
  Gradients g;
  for (const auto& l : layers_) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.outputs(), l.inputs()), Eigen::VectorXd::Zero(l.outputs())});
  }
  return g;
}

std::size_t MlpNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

double& MlpNetwork::parameter(std::size_t index) {
  for (auto& l : layers_) {
    const auto nw = static_cast<std::size_t>(l.weights.size());
    if (index < nw) return l.weights.data()[index];
    index -= nw;
    const auto nb = static_cast<std::size_t>(l.biases.size());
    if (index < nb) return l.biases.data()[index];
    index -= nb;
  }
  throw ContractError("parameter index out of range");
}

double MlpNetwork::parameter(std::size_t index) const { return const_cast<MlpNetwork*>(this)->parameter(index); }

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return logits.array() - lse;
}

void freeze_layers(MlpNetwork& net, int k) {
  if (k < 0 || k > net.num_hidden()) {
    throw ContractError("freeze count " + std::to_string(k) + " outside [0, " + std::to_string(net.num_hidden()) + "]");
  }
  for (int i = 0; i < net.num_layers(); ++i) net.layer(i).frozen = i < k;
}

AdamState AdamState::for_network(const MlpNetwork& net, AdamConfig config) {
  AdamState s;
  s.config = config;
  const Gradients zero = net.zero_gradients();
  s.m = zero.layers;
  s.v = zero.layers;
  return s;
}

void AdamState::reset_layer(int i) {
  const auto ui = static_cast<std::size_t>(i);
  m[ui].weights.setZero();
  m[ui].biases.setZero();
  v[ui].weights.setZero();
  v[ui].biases.setZero();
}

namespace {

template <typename Param, typename Grad, typename Moment>
void adam_update(Param& p, const Grad& g, Moment& m, Moment& v, const AdamConfig& c, double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
}

}  // namespace

void adam_step(MlpNetwork& net, const Gradients& grads, AdamState& state) {
  if (grads.layers.size() != static_cast<std::size_t>(net.num_layers()) || state.m.size() != grads.layers.size()) {
    throw ContractError("gradient / optimizer state does not match network");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.config.beta2, static_cast<double>(state.step));
  for (int i = 0; i < net.num_layers(); ++i) {
    DenseLayer& l = net.layer(i);
    if (l.frozen) continue;
    const auto ui = static_cast<std::size_t>(i);
    adam_update(l.weights, grads.layers[ui].weights, state.m[ui].weights, state.v[ui].weights, state.config, bc1, bc2);
    adam_update(l.biases, grads.layers[ui].biases, state.m[ui].biases, state.v[ui].biases, state.config, bc1, bc2);
  }
}

// ---- binary io -------------------------------------------------------------

namespace {

constexpr char kWeightMagic[8] = {'S', 'N', 'A', 'V', 'M', 'L', 'P', '\0'};
constexpr char kAdamMagic[8] = {'S', 'N', 'A', 'V', 'A', 'D', 'A', 'M'};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void i64(std::int64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  // Row-major, regardless of Eigen's storage order.
  void matrix(const Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
    }
  }
  void vector(const Eigen::VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw FormatError(path.string() + ": cannot open");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) throw FormatError(path_.string() + ": truncated file");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, sizeof v);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    bytes(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, sizeof v);
    return v;
  }
  Eigen::MatrixXd matrix(std::uint32_t rows, std::uint32_t cols) {
    Eigen::MatrixXd m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = f64();
    }
    return m;
  }
  Eigen::VectorXd vector(std::uint32_t n) {
    Eigen::VectorXd v(n);
    for (std::uint32_t i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  void expect_magic(const char (&magic)[8]) {
    char buf[8];
    bytes(buf, 8);
    if (std::memcmp(buf, magic, 8) != 0) throw FormatError(path_.string() + ": bad magic");
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw FormatError(path_.string() + ": trailing bytes");
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::ifstream in_;
  std::filesystem::path path_;
};

constexpr std::uint32_t kMaxDim = 1u << 20;

}  // namespace

void save_weights(const MlpNetwork& net, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kWeightMagic, 8);
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(net.head()));
  w.u32(static_cast<std::uint32_t>(net.num_layers()));
  for (const auto& l : net.layers()) {
    w.u32(static_cast<std::uint32_t>(l.inputs()));
    w.u32(static_cast<std::uint32_t>(l.outputs()));
    w.u32(static_cast<std::uint32_t>(l.activation));
    w.u32(l.frozen ? 1u : 0u);
  }
  for (const auto& l : net.layers()) {
    w.matrix(l.weights);
    w.vector(l.biases);
  }
  w.finish();
}

MlpNetwork load_weights(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic(kWeightMagic);
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw FormatError(path.string() + ": unsupported weight format version " + std::to_string(version));
  }
  const std::uint32_t head = r.u32();
  if (head > 1) throw FormatError(path.string() + ": unknown head type");
  const std::uint32_t count = r.u32();
  if (count == 0 || count > 64) throw FormatError(path.string() + ": implausible layer count");

  struct Header {
    std::uint32_t in, out, activation, frozen;
  };
  std::vector<Header> headers(count);
  for (auto& h : headers) {
    h = {r.u32(), r.u32(), r.u32(), r.u32()};
    if (h.in == 0 || h.out == 0 || h.in > kMaxDim || h.out > kMaxDim || h.activation > 1 || h.frozen > 1) {
      throw FormatError(path.string() + ": corrupt layer header");
    }
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < headers.size(); ++i) {
    if (i > 0 && headers[i].in != headers[i - 1].out) {
      throw FormatError(path.string() + ": layer shapes do not chain at layer " + std::to_string(i));
    }
    DenseLayer l;
    l.weights = r.matrix(headers[i].out, headers[i].in);
    l.biases = r.vector(headers[i].out);
    l.activation = static_cast<Activation>(headers[i].activation);
    l.frozen = headers[i].frozen != 0;
    layers.push_back(std::move(l));
  }
  r.expect_end();
  try {
    return MlpNetwork(std::move(layers), static_cast<Head>(head));
  } catch (const ContractError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void require_architecture(const MlpNetwork& net, std::span<const int> sizes, Head head) {
  const std::vector<int> actual = net.shape();
  if (net.head() != head || !std::equal(actual.begin(), actual.end(), sizes.begin(), sizes.end())) {
    std::string a, e;
    for (int s : actual) a += (a.empty() ? "" : "-") + std::to_string(s);
    for (int s : sizes) e += (e.empty() ? "" : "-") + std::to_string(s);
    throw FormatError("network shape mismatch: expected " + e + ", found " + a);
  }
}

void save_adam(const AdamState& state, const std::filesystem::path& path) {
  Writer w(path);
  w.bytes(kAdamMagic, 8);
  w.u32(kAdamFormatVersion);
  w.f64(state.config.lr);
  w.f64(state.config.beta1);
  w.f64(state.config.beta2);
  w.f64(state.config.epsilon);
  w.i64(state.step);
  w.u32(static_cast<std::uint32_t>(state.m.size()));
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    w.u32(static_cast<std::uint32_t>(state.m[i].weights.rows()));
    w.u32(static_cast<std::uint32_t>(state.m[i].weights.cols()));
    w.matrix(state.m[i].weights);
    w.vector(state.m[i].biases);
    w.matrix(state.v[i].weights);
    w.vector(state.v[i].biases);
  }
  w.finish();
}

AdamState load_adam(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic(kAdamMagic);
  const std::uint32_t version = r.u32();
  if (version != kAdamFormatVersion) {
    throw FormatError(path.string() + ": unsupported optimizer format version " + std::to_string(version));
  }
  AdamState s;
  s.config.lr = r.f64();
  s.config.beta1 = r.f64();
  s.config.beta2 = r.f64();
  s.config.epsilon = r.f64();
  s.step = r.i64();
  const std::uint32_t count = r.u32();
  if (count > 64) throw FormatError(path.string() + ": implausible layer count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    if (rows > kMaxDim || cols > kMaxDim) throw FormatError(path.string() + ": corrupt layer header");
    LayerGradient m{r.matrix(rows, cols), r.vector(rows)};
    LayerGradient v{r.matrix(rows, cols), r.vector(rows)};
    s.m.push_back(std::move(m));
    s.v.push_back(std::move(v));
  }
  r.expect_end();
  return s;
}

}  // namespace safenav
