#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "safenav/rng.hpp"

namespace safenav {

/// Unreadable or incompatible weight / optimizer file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Activation : std::uint32_t { tanh = 0, identity = 1 };
enum class Head : std::uint32_t { softmax_policy = 0, scalar_value = 1 };

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::tanh;
  bool frozen = false;

  int inputs() const { return static_cast<int>(weights.cols()); }
  int outputs() const { return static_cast<int>(weights.rows()); }
};

struct LayerGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

struct Gradients {
  std::vector<LayerGradient> layers;

  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

/// Activations of one batched forward pass; column j is sample j.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> layer_inputs;  // input to layer i
  Eigen::MatrixXd raw;                        // last layer output (logits or value)
};

/// Feed-forward network: hidden layers followed by one output layer. The
/// output layer is the head; it is never frozen.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  MlpNetwork(std::vector<DenseLayer> layers, Head head);

  /// Scaled-uniform init: U(-a, a), a = gain * sqrt(3 / fan_in), zero biases.
  /// Hidden gain sqrt(2); output gain 0.01 for policies and 1 for values.
  static MlpNetwork create(std::span<const int> sizes, Head head, Rng& rng);

  static std::vector<int> policy_shape(int inputs, int actions) { return {inputs, 64, 64, 64, actions}; }
  static std::vector<int> value_shape(int inputs) { return {inputs, 64, 64, 64, 1}; }

  Head head() const { return head_; }
  int input_size() const { return layers_.front().inputs(); }
  int output_size() const { return layers_.back().outputs(); }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  int num_hidden() const { return num_layers() - 1; }
  std::vector<int> shape() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  DenseLayer& layer(int i) { return layers_.at(static_cast<std::size_t>(i)); }
  const DenseLayer& layer(int i) const { return layers_.at(static_cast<std::size_t>(i)); }

  /// Batched forward; inputs is input_size x batch.
  ForwardCache forward(const Eigen::MatrixXd& inputs) const;

  Eigen::VectorXd logits(const Eigen::VectorXd& input) const;
  /// Softmax probabilities for a policy head, the raw value otherwise.
  Eigen::VectorXd output(const Eigen::VectorXd& input) const;

  /// Reverse-mode gradients of a loss given d(loss)/d(raw) for the batch.
  /// Frozen layers get zero blocks.
  Gradients backward(const ForwardCache& cache, const Eigen::MatrixXd& raw_grad) const;

  Gradients zero_gradients() const;

  // Flat parameter view (layer by layer, weights column-major then biases).
  std::size_t parameter_count() const;
  double& parameter(std::size_t index);
  double parameter(std::size_t index) const;

 private:
  std::vector<DenseLayer> layers_;
  Head head_ = Head::softmax_policy;
};

/// tanh as 1 - 2 / (exp(2x) + 1); vectorizes for doubles, unlike
/// Eigen's tanh. Absolute error is a few ulp.
template <typename Derived>
auto tanh_array(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

/// Marks hidden layers [0, k) frozen and every other layer trainable.
void freeze_layers(MlpNetwork& net, int k);

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<LayerGradient> m;
  std::vector<LayerGradient> v;

  static AdamState for_network(const MlpNetwork& net, AdamConfig config);
  void reset_layer(int i);
};

/// Bias-corrected Adam update; frozen layers are left untouched.
void adam_step(MlpNetwork& net, const Gradients& grads, AdamState& state);

// Binary formats are little-endian; layouts in docs/formats.md.
inline constexpr std::uint32_t kWeightFormatVersion = 1;
inline constexpr std::uint32_t kAdamFormatVersion = 1;

void save_weights(const MlpNetwork& net, const std::filesystem::path& path);
MlpNetwork load_weights(const std::filesystem::path& path);

/// Throws FormatError unless `net` has the given layer sizes and head.
void require_architecture(const MlpNetwork& net, std::span<const int> sizes, Head head);

void save_adam(const AdamState& state, const std::filesystem::path& path);
AdamState load_adam(const std::filesystem::path& path);

}  // namespace safenav
