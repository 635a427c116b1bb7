#include <cmath>
#include <fstream>

#include "doctest.h"
#include "safenav/neural.hpp"
#include "support.hpp"

using namespace safenav;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double linear_loss(const MlpNetwork& net, const MatrixXd& x, const MatrixXd& c) {
  return (net.forward(x).raw.array() * c.array()).sum();
}

// Max relative error of backward against central differences on `samples` coordinates.
double gradient_error(MlpNetwork net, Rng& rng, int samples) {
  const int batch = 4;
  MatrixXd x(net.input_size(), batch), c(net.output_size(), batch);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1, 1);
  const Gradients g = net.backward(net.forward(x), c);
  std::vector<double> flat;
  for (const auto& l : g.layers) {
    flat.insert(flat.end(), l.weights.data(), l.weights.data() + l.weights.size());
    flat.insert(flat.end(), l.biases.data(), l.biases.data() + l.biases.size());
  }
  REQUIRE(flat.size() == net.parameter_count());
  double worst = 0.0;
  const double h = 1e-5;
  for (int s = 0; s < samples; ++s) {
    const std::size_t k = rng.below(net.parameter_count());
    const double saved = net.parameter(k);
    net.parameter(k) = saved + h;
    const double up = linear_loss(net, x, c);
    net.parameter(k) = saved - h;
    const double down = linear_loss(net, x, c);
    net.parameter(k) = saved;
    const double fd = (up - down) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(flat[k]), 1e-7});
    worst = std::max(worst, std::abs(fd - flat[k]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("zero network gives a uniform policy") {
  Rng rng(1);
  MlpNetwork net = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
  for (int i = 0; i < net.num_layers(); ++i) {
    net.layer(i).weights.setZero();
    net.layer(i).biases.setZero();
  }
  const VectorXd p = net.output(VectorXd::Constant(53, 0.3));
  for (int i = 0; i < 7; ++i) CHECK(p(i) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
}

TEST_CASE("identity layer is a matrix-vector product") {
  DenseLayer l;
  l.weights = (MatrixXd(2, 2) << 1, 2, 3, 4).finished();
  l.biases = VectorXd::Zero(2);
  l.activation = Activation::identity;
  MlpNetwork net({l}, Head::softmax_policy);
  const VectorXd z = net.logits((VectorXd(2) << 5, 6).finished());
  CHECK(z(0) == 17.0);
  CHECK(z(1) == 39.0);
}

TEST_CASE("forward agrees with a direct evaluator") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const MlpNetwork net = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
    std::vector<double> x(53);
    for (double& v : x) v = rng.uniform();
    const std::vector<double> z = testing::naive_logits(net, x);
    const VectorXd p = net.output(Eigen::Map<const VectorXd>(x.data(), 53));
    double m = *std::max_element(z.begin(), z.end()), s = 0.0;
    for (double v : z) s += std::exp(v - m);
    for (int i = 0; i < 7; ++i) CHECK(std::abs(p(i) - std::exp(z[static_cast<std::size_t>(i)] - m) / s) < 1e-12);
  }
}

TEST_CASE("vectorized tanh stays within a few ulp") {
  Eigen::ArrayXd x = Eigen::ArrayXd::LinSpaced(200001, -20.0, 20.0);
  const Eigen::ArrayXd t = tanh_array(x);
  for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(std::abs(t(i) - std::tanh(x(i))) < 1e-15);
}

TEST_CASE("softmax keeps the logit argmax") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    VectorXd z(7);
    for (int i = 0; i < 7; ++i) z(i) = rng.uniform(-50, 50);
    Eigen::Index a, b;
    z.maxCoeff(&a);
    softmax(z).maxCoeff(&b);
    CHECK(a == b);
    CHECK(softmax(z).sum() == doctest::Approx(1.0));
    CHECK((log_softmax(z).array().exp() - softmax(z).array()).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("backward matches finite differences") {
  Rng rng(4);
  SUBCASE("policy") {
    const MlpNetwork net = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
    CHECK(gradient_error(net, rng, 300) < 1e-4);
  }
  SUBCASE("value") {
    const MlpNetwork net = MlpNetwork::create(MlpNetwork::value_shape(53), Head::scalar_value, rng);
    CHECK(gradient_error(net, rng, 300) < 1e-4);
  }
  SUBCASE("identity hidden layers") {
    MlpNetwork net = testing::random_net({5, 6, 4, 3}, Head::softmax_policy, rng, 0.5);
    net.layer(0).activation = Activation::identity;
    CHECK(gradient_error(net, rng, 100) < 1e-4);
  }
}

TEST_CASE("frozen layers and zero output gradients") {
  Rng rng(5);
  MlpNetwork net = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
  MatrixXd x = MatrixXd::Constant(53, 3, 0.5);
  const auto cache = net.forward(x);
  const Gradients zero = net.backward(cache, MatrixXd::Zero(7, 3));
  for (const auto& l : zero.layers) {
    CHECK(l.weights.isZero(0.0));
    CHECK(l.biases.isZero(0.0));
  }
  freeze_layers(net, 2);
  CHECK(net.layer(0).frozen);
  CHECK(net.layer(1).frozen);
  CHECK_FALSE(net.layer(2).frozen);
  CHECK_FALSE(net.layer(3).frozen);
  const Gradients g = net.backward(net.forward(x), MatrixXd::Ones(7, 3));
  CHECK(g.layers[0].weights.isZero(0.0));
  CHECK(g.layers[1].biases.isZero(0.0));
  CHECK_FALSE(g.layers[2].weights.isZero(0.0));
  CHECK_THROWS_AS(freeze_layers(net, 4), ContractError);
  CHECK_THROWS_AS(freeze_layers(net, -1), ContractError);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Rng rng(6);
    MlpNetwork net = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
    const MlpNetwork before = net;
    AdamState st = AdamState::for_network(net, {});
    adam_step(net, net.zero_gradients(), st);
    for (int i = 0; i < net.num_layers(); ++i) CHECK(net.layer(i).weights == before.layer(i).weights);
  }
  SUBCASE("first step moves by lr") {
    DenseLayer l;
    l.weights = MatrixXd::Constant(1, 1, 2.0);
    l.biases = VectorXd::Zero(1);
    l.activation = Activation::identity;
    MlpNetwork net({l}, Head::scalar_value);
    AdamState st = AdamState::for_network(net, {0.1, 0.9, 0.999, 1e-8});
    Gradients g = net.zero_gradients();
    g.layers[0].weights(0, 0) = 1.0;
    adam_step(net, g, st);
    // m_hat = 1, v_hat = 1: step = lr / (1 + eps).
    CHECK(net.layer(0).weights(0, 0) == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-14));
    CHECK(net.layer(0).biases(0) == 0.0);
  }
  SUBCASE("frozen layer is bit-identical") {
    Rng rng(7);
    MlpNetwork net = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
    freeze_layers(net, 1);
    const MatrixXd w0 = net.layer(0).weights;
    AdamState st = AdamState::for_network(net, {});
    Gradients g = net.backward(net.forward(MatrixXd::Constant(53, 2, 0.2)), MatrixXd::Ones(7, 2));
    g.layers[0].weights.setOnes();  // even a stray gradient must not move it
    for (int i = 0; i < 5; ++i) adam_step(net, g, st);
    CHECK(net.layer(0).weights == w0);
  }
}

TEST_CASE("weight files") {
  const auto dir = testing::temp_dir("neural_weights");
  Rng rng(8);
  MlpNetwork net = MlpNetwork::create(MlpNetwork::policy_shape(53, 7), Head::softmax_policy, rng);
  freeze_layers(net, 1);
  save_weights(net, dir / "p.bin");
  const MlpNetwork back = load_weights(dir / "p.bin");
  REQUIRE(back.num_layers() == net.num_layers());
  CHECK(back.head() == Head::softmax_policy);
  for (int i = 0; i < net.num_layers(); ++i) {
    CHECK(back.layer(i).weights == net.layer(i).weights);
    CHECK(back.layer(i).biases == net.layer(i).biases);
    CHECK(back.layer(i).frozen == net.layer(i).frozen);
  }
  CHECK_NOTHROW(require_architecture(back, MlpNetwork::policy_shape(53, 7), Head::softmax_policy));
  CHECK_THROWS_AS(require_architecture(back, MlpNetwork::policy_shape(53, 6), Head::softmax_policy), FormatError);
  CHECK_THROWS_AS(require_architecture(back, MlpNetwork::value_shape(53), Head::scalar_value), FormatError);

  // Truncation, bad magic and trailing bytes are rejected.
  std::ifstream in(dir / "p.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto write = [&](const std::string& b) {
    std::ofstream out(dir / "bad.bin", std::ios::binary);
    out << b;
  };
  write(bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_weights(dir / "bad.bin"), FormatError);
  write("XXXXXXXX" + bytes.substr(8));
  CHECK_THROWS_AS(load_weights(dir / "bad.bin"), FormatError);
  write(bytes + "z");
  CHECK_THROWS_AS(load_weights(dir / "bad.bin"), FormatError);
  std::string v2 = bytes;
  v2[8] = 2;
  write(v2);
  CHECK_THROWS_AS(load_weights(dir / "bad.bin"), FormatError);
  CHECK_THROWS_AS(load_weights(dir / "missing.bin"), FormatError);

  AdamState st = AdamState::for_network(net, {});
  adam_step(net, net.backward(net.forward(MatrixXd::Constant(53, 1, 0.1)), MatrixXd::Ones(7, 1)), st);
  save_adam(st, dir / "a.bin");
  const AdamState sb = load_adam(dir / "a.bin");
  CHECK(sb.step == st.step);
  CHECK(sb.config.lr == st.config.lr);
  for (std::size_t i = 0; i < st.m.size(); ++i) {
    CHECK(sb.m[i].weights == st.m[i].weights);
    CHECK(sb.v[i].biases == st.v[i].biases);
  }
}

TEST_CASE("network construction checks") {
  DenseLayer a, b;
  a.weights = MatrixXd::Zero(4, 3);
  a.biases = VectorXd::Zero(4);
  b.weights = MatrixXd::Zero(2, 5);
  b.biases = VectorXd::Zero(2);
  CHECK_THROWS_AS(MlpNetwork({a, b}, Head::softmax_policy), ContractError);
  b.weights = MatrixXd::Zero(2, 4);
  CHECK_THROWS_AS(MlpNetwork({a, b}, Head::scalar_value), ContractError);
  const MlpNetwork ok({a, b}, Head::softmax_policy);
  CHECK_THROWS_AS(ok.logits(VectorXd::Zero(2)), ContractError);
  VectorXd nan = VectorXd::Zero(3);
  nan(1) = std::nan("");
  CHECK_THROWS_AS(ok.logits(nan), ContractError);
}
