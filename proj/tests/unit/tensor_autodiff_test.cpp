// Copyright 2026 The pelab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>

#include "pelab/gradcheck.hpp"
#include "pelab/ops.hpp"
#include "test_util.hpp"

namespace pelab {
namespace {

using testing::cst;
using testing::dense_matrix;
using testing::inner;
using testing::max_abs_diff;
using testing::random_tensor;
using T = Tensor<double>;
using V = Var<double>;

TEST(Tensor, ShapeInvariants) {
  T t(Shape{2, 3});
  EXPECT_EQ(t.size(), 6);
  EXPECT_THROW(T(Shape{2, 0}), ShapeError);
  EXPECT_THROW(T(Shape{2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(T::scalar(2.5).item(), 2.5);
}

TEST(Matmul, IdentityAndHandProduct) {
  const T eye(Shape{2, 2}, {1, 0, 0, 1});
  const T v(Shape{2, 1}, {1, 2});
  EXPECT_EQ(matmul(cst(eye), cst(v)).value(), v);

  const T a(Shape{2, 2}, {1, 2, 3, 4});
  const T b(Shape{2, 1}, {5, 6});
  EXPECT_EQ(matmul(cst(a), cst(b)).value(), T(Shape{2, 1}, {17, 39}));

  const auto z = matmul(cst(T(Shape{3, 2})), cst(random_tensor({2, 4}, 1)));
  EXPECT_EQ(z.value(), T(Shape{3, 4}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(cst(T(Shape{2, 3})), cst(T(Shape{2, 3})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3] x [2,3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, BatchBroadcast) {
  const auto a = random_tensor({3, 2, 4}, 2);
  const auto b = random_tensor({4, 5}, 3);
  const auto y = matmul(cst(a), cst(b)).value();
  ASSERT_EQ(y.shape(), (Shape{3, 2, 5}));
  for (Index n = 0; n < 3; ++n) {
    const Eigen::MatrixXd expect = a.matrix(2, 4, n * 8) * b.matrix(4, 5);
    EXPECT_LT((y.matrix(2, 5, n * 10) - expect).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Conv1d, Examples) {
  const auto x = random_tensor({3, 7}, 4);
  T unit(Shape{3, 3, 1});
  for (Index c = 0; c < 3; ++c) unit.at({c, c, 0}) = 1.0;
  EXPECT_EQ(conv1d(cst(x), cst(unit)).value(), x);

  const T x3(Shape{1, 3}, {1, 2, 3});
  const T w2(Shape{1, 1, 2}, {1, 1});
  EXPECT_EQ(conv1d(cst(x3), cst(w2)).value(), T(Shape{1, 3}, {3, 5, 3}));

  EXPECT_EQ(conv1d(cst(T(Shape{2, 5})), cst(random_tensor({4, 2, 3}, 5))).value(), T(Shape{4, 5}));
}

TEST(Conv1d, StrideOutputLength) {
  EXPECT_EQ(conv_output_length(10, 4, 1), 10);
  EXPECT_EQ(conv_output_length(10, 4, 2), 5);
  EXPECT_EQ(conv_output_length(9, 3, 3), 3);
  const auto y = conv1d(cst(random_tensor({2, 10}, 6)), cst(random_tensor({3, 2, 4}, 7)), V{}, 2);
  EXPECT_EQ(y.shape(), (Shape{3, 5}));
  EXPECT_THROW(conv_output_length(5, 0, 1), ConfigError);
}

TEST(Conv1d, ChannelMismatchThrows) {
  EXPECT_THROW(conv1d(cst(T(Shape{2, 5})), cst(T(Shape{1, 3, 2}))), ShapeError);
}

class ConvAdjoint : public ::testing::TestWithParam<int> {};

TEST_P(ConvAdjoint, Conv1dAdjointIdentity) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  for (Index stride : {1, 2, 3}) {
    const Index len = 8;
    const auto w = random_tensor({3, 2, 4}, seed);
    const auto x = random_tensor({2, 2, len}, seed + 1);
    const Index out_len = conv_output_length(len, 4, stride);
    const auto y = random_tensor({2, 3, out_len}, seed + 2);
    const auto ax = conv1d(cst(x), cst(w), V{}, stride).value();
    const auto aty = conv_transpose1d(cst(y), cst(w), V{}, stride, len).value();
    EXPECT_NEAR(inner(ax, y), inner(x, aty), 1e-10);
  }
}

TEST_P(ConvAdjoint, Conv2dAdjointIdentity) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  const auto w = random_tensor({3, 2, 3, 2}, seed);
  const auto x = random_tensor({2, 5, 6}, seed + 1);
  const auto y = random_tensor({3, 5, 6}, seed + 2);
  const auto ax = conv2d(cst(x), cst(w)).value();
  const auto aty = conv_transpose2d(cst(y), cst(w)).value();
  EXPECT_NEAR(inner(ax, y), inner(x, aty), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Seeds, ConvAdjoint, ::testing::Range(0, 10));

TEST(Deconv1d, UnitKernelIsIdentity) {
  const auto x = random_tensor({2, 6}, 11);
  T unit(Shape{2, 2, 1});
  unit.at({0, 0, 0}) = unit.at({1, 1, 0}) = 1.0;
  EXPECT_EQ(conv_transpose1d(cst(x), cst(unit)).value(), x);
}

TEST(Deconv1d, MatchesDenseTranspose) {
  const auto w = random_tensor({3, 2, 5}, 12);
  const Index len = 8;
  for (Index stride : {1, 2}) {
    const Index out_len = conv_output_length(len, 5, stride);
    const auto a = dense_matrix([&](const T& x) { return conv1d(cst(x), cst(w), V{}, stride).value(); },
                                Shape{2, len});
    const auto y = random_tensor({3, out_len}, 13);
    const auto aty = conv_transpose1d(cst(y), cst(w), V{}, stride, len).value();
    const Eigen::VectorXd expect = a.transpose() * y.array().matrix();
    EXPECT_LT((aty.array().matrix() - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Conv2d, UnitKernelAndAveraging) {
  const auto x = random_tensor({1, 4, 5}, 14);
  EXPECT_EQ(conv2d(cst(x), cst(T(Shape{1, 1, 1, 1}, {1.0}))).value(), x);

  // 3x3 averaging on a constant 3x3 plane: zero padding attenuates the
  // border, leaving 9/9 at the centre, 6/9 on edges and 4/9 in corners.
  const T ones(Shape{1, 3, 3}, 1.0);
  const T avg(Shape{1, 1, 3, 3}, 1.0 / 9.0);
  const auto y = conv2d(cst(ones), cst(avg)).value();
  const T expect(Shape{1, 3, 3}, {4.0 / 9, 6.0 / 9, 4.0 / 9, 6.0 / 9, 1.0, 6.0 / 9, 4.0 / 9,
                                  6.0 / 9, 4.0 / 9});
  EXPECT_LT(max_abs_diff(y, expect), 1e-15);
}

TEST(Conv2d, DeconvMatchesDenseTranspose) {
  const auto w = random_tensor({2, 3, 3, 3}, 15);
  const auto a = dense_matrix([&](const T& x) { return conv2d(cst(x), cst(w)).value(); }, Shape{3, 4, 5});
  const auto y = random_tensor({2, 4, 5}, 16);
  const auto aty = conv_transpose2d(cst(y), cst(w)).value();
  const Eigen::VectorXd expect = a.transpose() * y.array().matrix();
  EXPECT_LT((aty.array().matrix() - expect).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Softmax, Examples) {
  const auto u = softmax(cst(T(Shape{3}, {0, 0, 0}))).value();
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(u[i], 1.0 / 3.0, 1e-15);
  const auto p = softmax(cst(T(Shape{2}, {0, std::log(3.0)}))).value();
  EXPECT_NEAR(p[0], 0.25, 1e-15);
  EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_tensor({4, 7}, seed, -20, 20);
    const auto y = softmax(cst(x)).value();
    for (Index r = 0; r < 4; ++r) EXPECT_NEAR(y.matrix(4, 7).row(r).sum(), 1.0, 1e-12);
    EXPECT_GE(y.array().minCoeff(), 0.0);
    const auto shifted = softmax(add_scalar(cst(x), 123.25)).value();
    EXPECT_LT(max_abs_diff(y, shifted), 1e-12);
  }
}

TEST(Softmax, NonLastAxis) {
  const auto x = random_tensor({3, 4}, 21);
  const auto y = softmax(cst(x), 0).value();
  for (Index c = 0; c < 4; ++c) EXPECT_NEAR(y.matrix(3, 4).col(c).sum(), 1.0, 1e-12);
}

TEST(Elementwise, SwishAndProducts) {
  EXPECT_EQ(swish(cst(T(Shape{1}, {0.0}))).value()[0], 0.0);
  EXPECT_NEAR(swish(cst(T(Shape{1}, {10.0}))).value()[0], 10.0 / (1.0 + std::exp(-10.0)), 1e-13);
  EXPECT_NEAR(swish(cst(T(Shape{1}, {10.0}))).value()[0], 9.99955, 1e-5);
  const auto a = random_tensor({3, 4}, 22);
  EXPECT_EQ(mul(cst(a), cst(T(Shape{3, 4}, 1.0))).value(), a);
}

TEST(Elementwise, BroadcastAddAndError) {
  const T a(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  const T b(Shape{3}, {10, 20, 30});
  EXPECT_EQ(add(cst(a), cst(b)).value(), T(Shape{2, 3}, {11, 22, 33, 14, 25, 36}));
  const T c(Shape{2, 1}, {100, 200});
  EXPECT_EQ(add(cst(a), cst(c)).value(), T(Shape{2, 3}, {101, 102, 103, 204, 205, 206}));
  EXPECT_THROW(add(cst(a), cst(T(Shape{2}))), ShapeError);
}

TEST(Elementwise, NonFiniteIsSurfaced) {
  EXPECT_THROW(log(cst(T(Shape{1}, {-1.0}))), NumericError);
  EXPECT_THROW(div(cst(T(Shape{1}, {1.0})), cst(T(Shape{1}, {0.0}))), NumericError);
}

TEST(Permute, IdentityRoundTripAndTranspose) {
  const auto x = random_tensor({2, 3, 4}, 23);
  EXPECT_EQ(permute(cst(x), {0, 1, 2}).value(), x);
  for (const std::vector<int>& order : {std::vector<int>{1, 0, 2}, {2, 0, 1}, {1, 2, 0}, {2, 1, 0}}) {
    const auto there = permute(cst(x), order);
    std::vector<int> inv(3);
    for (int i = 0; i < 3; ++i) inv[order[i]] = i;
    EXPECT_EQ(permute(there, inv).value(), x);  // bitwise
  }
  const T m(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(permute(cst(m), {1, 0}).value(), T(Shape{3, 2}, {1, 4, 2, 5, 3, 6}));
  EXPECT_THROW(permute(cst(m), {0, 0}), ShapeError);
  EXPECT_THROW(reshape(cst(m), {4}), ShapeError);
}

TEST(SliceConcat, InverseOfEachOther) {
  const auto x = random_tensor({2, 5, 3}, 24);
  const auto a = slice(cst(x), 1, 0, 2);
  const auto b = slice(cst(x), 1, 2, 3);
  EXPECT_EQ(concat<double>({a, b}, 1).value(), x);
  EXPECT_THROW(slice(cst(x), 1, 4, 2), ShapeError);
}

TEST(GlobalLayerNorm, Examples) {
  const T gain(Shape{2}, 1.0);
  const T bias(Shape{2}, 0.0);
  const auto zero = global_layer_norm(cst(T(Shape{2, 3, 4}, 5.0)), cst(gain), cst(bias)).value();
  EXPECT_EQ(zero.array().abs().maxCoeff(), 0.0);

  const auto flat = global_layer_norm(cst(T(Shape{2}, {1.0, 3.0})), cst(gain), cst(bias)).value();
  EXPECT_NEAR(flat[0], -1.0, 1e-5);
  EXPECT_NEAR(flat[1], 1.0, 1e-5);

  const auto x = random_tensor({2, 6, 5}, 25, -4, 4);
  const auto y = global_layer_norm(cst(x), cst(gain), cst(bias)).value();
  const double mu = y.array().mean();
  const double var = (y.array() - mu).square().mean();
  EXPECT_NEAR(mu, 0.0, 1e-6);
  EXPECT_NEAR(var, 1.0, 1e-5);
}

TEST(RmsGroupNorm, Examples) {
  const auto y = rms_group_norm(cst(T(Shape{2}, {3.0, 4.0})), 1, cst(T(Shape{2}, 1.0)), 0).value();
  EXPECT_NEAR(y[0], 3.0 / std::sqrt(12.5), 1e-6);
  EXPECT_NEAR(y[1], 4.0 / std::sqrt(12.5), 1e-6);
  EXPECT_NEAR(y[0], 0.8485, 1e-4);
  EXPECT_NEAR(y[1], 1.1314, 1e-4);

  // Already unit RMS per group (groups of two, unit-RMS pairs).
  const T unit(Shape{4, 1}, {1.0, -1.0, std::sqrt(2.0), 0.0});
  const auto same = rms_group_norm(cst(unit), 2, cst(T(Shape{4}, 1.0)), 0).value();
  EXPECT_LT(max_abs_diff(same, unit), 1e-5);

  EXPECT_THROW(rms_group_norm(cst(T(Shape{3, 2})), 2, cst(T(Shape{3}, 1.0)), 0), ConfigError);
}

TEST(Normalization, PositiveRescalingInvariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto x = random_tensor({2, 8, 5}, seed, 3.0, 5.0);
    auto signs = random_tensor({2, 8, 5}, seed + 100);
    x.array() *= signs.array().sign();
    for (double c : {2.0, 10.0, 100.0}) {
      T xc = x;
      xc.array() *= c;
      const T g8(Shape{8}, 1.0);
      const auto a = rms_group_norm(cst(x), 4, cst(g8), 1).value();
      const auto b = rms_group_norm(cst(xc), 4, cst(g8), 1).value();
      EXPECT_LT(max_abs_diff(a, b), 1e-6);
      const T g2(Shape{2}, 1.0);
      const T b2(Shape{2}, 0.0);
      const auto la = global_layer_norm(cst(x), cst(g2), cst(b2)).value();
      const auto lb = global_layer_norm(cst(xc), cst(g2), cst(b2)).value();
      EXPECT_LT(max_abs_diff(la, lb), 1e-6);
    }
  }
}

TEST(Backward, SumOfSquares) {
  const auto x0 = random_tensor({5}, 26);
  auto x = V::parameter(x0);
  backward(sum(square(x)));
  EXPECT_LT(max_abs_diff(x.grad(), T(Shape{5}, (2.0 * x0.array()).eval())), 1e-15);
}

TEST(Backward, MatmulGradientsMatchDenseFormula) {
  const auto a0 = random_tensor({3, 4}, 27);
  const auto b0 = random_tensor({4, 2}, 28);
  auto a = V::parameter(a0);
  auto b = V::parameter(b0);
  backward(sum(matmul(a, b)));
  // d/dA sum(AB) = 1 B^T, d/dB = A^T 1.
  const Eigen::MatrixXd ga = Eigen::MatrixXd::Ones(3, 2) * b0.matrix(4, 2).transpose();
  const Eigen::MatrixXd gb = a0.matrix(3, 4).transpose() * Eigen::MatrixXd::Ones(3, 2);
  EXPECT_LT((a.grad().matrix(3, 4) - ga).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((b.grad().matrix(4, 2) - gb).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Backward, ConstantLeafGetsNoGradient) {
  auto p = V::parameter(random_tensor({3}, 29));
  auto c = V::constant(random_tensor({3}, 30));
  backward(sum(mul(p, c)));
  EXPECT_TRUE(p.has_grad());
  EXPECT_FALSE(c.has_grad());
}

TEST(Backward, Errors) {
  auto p = V::parameter(random_tensor({3}, 31));
  EXPECT_THROW(backward(square(p)), GraphError);
  auto loss = sum(square(p));
  backward(loss);
  EXPECT_THROW(backward(loss), GraphError);
}

TEST(Backward, Deterministic) {
  auto run = [] {
    auto w = V::parameter(random_tensor({4, 3, 2}, 32));
    auto x = V::constant(random_tensor({2, 3, 6}, 33));
    backward(sum(swish(conv1d(x, w))));
    return w.grad();
  };
  EXPECT_EQ(run(), run());
}

TEST(NoGrad, GuardSuppressesRecording) {
  auto p = V::parameter(random_tensor({3}, 34));
  NoGradGuard guard;
  auto y = sum(square(p));
  EXPECT_FALSE(y.requires_grad());
}

TEST(FiniteDiff, LinearOpAtMachineNoise) {
  const auto w = random_tensor({3, 2, 3}, 35);
  const auto r = finite_diff_check(
      [&](const std::vector<V>& in) { return conv1d(in[0], cst(w)); }, {random_tensor({2, 6}, 36)});
  EXPECT_LT(r.max_relative_error, 1e-9);
}

TEST(FiniteDiff, SwishChain) {
  const auto r = finite_diff_check(
      [](const std::vector<V>& in) { return swish(mul(swish(in[0]), in[1])); },
      {random_tensor({4, 4}, 37, -3, 3), random_tensor({4, 4}, 38, -3, 3)});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

// Every differentiable op against central differences, 10 seeds, inputs of
// at most 64 elements.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, AllOps) {
  const auto s = static_cast<std::uint64_t>(GetParam()) * 97 + 1;
  auto check = [&](const char* name, const GradCheckFn& f, const std::vector<T>& in) {
    const auto r = finite_diff_check(f, in);
    EXPECT_LT(r.max_relative_error, 1e-4) << name << " input " << r.worst_input << " index "
                                          << r.worst_index << " analytic " << r.analytic
                                          << " numeric " << r.numeric;
  };
  check("add", [](const std::vector<V>& v) { return add(v[0], v[1]); },
        {random_tensor({3, 4}, s), random_tensor({4}, s + 1)});
  check("sub", [](const std::vector<V>& v) { return sub(v[0], v[1]); },
        {random_tensor({3, 1}, s), random_tensor({3, 4}, s + 1)});
  check("mul", [](const std::vector<V>& v) { return mul(v[0], v[1]); },
        {random_tensor({2, 3, 4}, s), random_tensor({3, 1}, s + 1)});
  check("div", [](const std::vector<V>& v) { return div(v[0], v[1]); },
        {random_tensor({3, 4}, s), random_tensor({3, 4}, s + 1, 0.5, 2.0)});
  check("scale", [](const std::vector<V>& v) { return scale(v[0], 0.7); }, {random_tensor({5}, s)});
  check("swish", [](const std::vector<V>& v) { return swish(v[0]); }, {random_tensor({16}, s, -4, 4)});
  check("sigmoid", [](const std::vector<V>& v) { return sigmoid(v[0]); }, {random_tensor({16}, s, -4, 4)});
  check("softplus", [](const std::vector<V>& v) { return softplus(v[0]); }, {random_tensor({16}, s, -4, 4)});
  check("log", [](const std::vector<V>& v) { return log(v[0]); }, {random_tensor({8}, s, 0.5, 3)});
  check("exp", [](const std::vector<V>& v) { return exp(v[0]); }, {random_tensor({8}, s)});
  check("sqrt", [](const std::vector<V>& v) { return sqrt(v[0]); }, {random_tensor({8}, s, 0.5, 3)});
  check("mean", [](const std::vector<V>& v) { return mean(v[0]); }, {random_tensor({8}, s)});
  check("matmul", [](const std::vector<V>& v) { return matmul(v[0], v[1]); },
        {random_tensor({2, 3, 4}, s), random_tensor({4, 2}, s + 1)});
  check("softmax", [](const std::vector<V>& v) { return softmax(v[0]); }, {random_tensor({4, 6}, s, -2, 2)});
  check("permute", [](const std::vector<V>& v) { return permute(v[0], {2, 0, 1}); },
        {random_tensor({2, 3, 4}, s)});
  check("slice+concat",
        [](const std::vector<V>& v) { return concat<double>({slice(v[0], 1, 1, 2), v[1]}, 1); },
        {random_tensor({2, 4}, s), random_tensor({2, 3}, s + 1)});
  check("conv1d", [](const std::vector<V>& v) { return conv1d(v[0], v[1], v[2], 2); },
        {random_tensor({2, 2, 7}, s), random_tensor({3, 2, 3}, s + 1), random_tensor({3}, s + 2)});
  check("conv_transpose1d",
        [](const std::vector<V>& v) { return conv_transpose1d(v[0], v[1], v[2], 1); },
        {random_tensor({2, 3, 5}, s), random_tensor({3, 2, 4}, s + 1), random_tensor({2}, s + 2)});
  check("conv2d", [](const std::vector<V>& v) { return conv2d(v[0], v[1], v[2]); },
        {random_tensor({2, 3, 4}, s), random_tensor({2, 2, 3, 3}, s + 1), random_tensor({2}, s + 2)});
  check("conv_transpose2d", [](const std::vector<V>& v) { return conv_transpose2d(v[0], v[1], v[2]); },
        {random_tensor({2, 3, 4}, s), random_tensor({2, 3, 3, 3}, s + 1), random_tensor({3}, s + 2)});
  check("global_layer_norm",
        [](const std::vector<V>& v) { return global_layer_norm(v[0], v[1], v[2]); },
        {random_tensor({3, 4, 5}, s, -2, 2), random_tensor({3}, s + 1), random_tensor({3}, s + 2)});
  check("rms_group_norm", [](const std::vector<V>& v) { return rms_group_norm(v[0], 2, v[1], 1); },
        {random_tensor({2, 4, 6}, s, -2, 2), random_tensor({4}, s + 1)});
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 10));

TEST(FloatPrecision, OpsInstantiateForFloat) {
  Var<float> x(Tensor<float>(Shape{2, 3}, {1, 2, 3, 4, 5, 6}), true);
  Var<float> w(Tensor<float>(Shape{2, 2, 1}, {1, 0, 0, 1}), true);
  auto y = sum(swish(conv1d(x, w)));
  backward(y);
  EXPECT_TRUE(w.has_grad());
}

}  // namespace
}  // namespace pelab
