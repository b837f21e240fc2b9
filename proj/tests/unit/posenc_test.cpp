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
#include "pelab/posenc.hpp"
#include "test_util.hpp"

namespace pelab {
namespace {

using testing::cst;
using testing::random_tensor;
using T = Tensor<double>;
using V = Var<double>;

// Independent evaluation of the sinusoid formula at 1-based row d.
double ape_formula(Index d, Index dim, Index i) {
  if (d % 2 == 0) return std::sin(std::pow(5000.0, -double(d) / double(dim)) * double(i));
  return std::cos(std::pow(5000.0, -double(d - 1) / double(dim)) * double(i));
}

TEST(PEKind, ParseAndName) {
  EXPECT_EQ(parse_pe_kind("ape"), PEKind::kAPE);
  EXPECT_EQ(parse_pe_kind("KERPLE"), PEKind::kKERPLE);
  EXPECT_EQ(parse_pe_kind("rope"), PEKind::kRoPE);
  EXPECT_EQ(parse_pe_kind("nope"), PEKind::kNoPE);
  EXPECT_THROW(parse_pe_kind("alibi"), ConfigError);
  for (auto k : {PEKind::kAPE, PEKind::kKERPLE, PEKind::kRoPE, PEKind::kNoPE}) {
    EXPECT_EQ(parse_pe_kind(pe_name(k)), k);
  }
}

TEST(ApeTable, PositionZero) {
  const auto t = ape_table<double>(6, 3);
  for (Index row = 0; row < 6; ++row) EXPECT_EQ(t.at({row, 0}), (row + 1) % 2 == 0 ? 0.0 : 1.0);
}

TEST(ApeTable, SpotValuesD4) {
  const auto t = ape_table<double>(4, 2);
  EXPECT_NEAR(t.at({0, 1}), 0.540302, 1e-6);
  EXPECT_NEAR(t.at({1, 1}), 0.014142, 1e-6);
  EXPECT_NEAR(t.at({2, 1}), 0.999900, 1e-6);
  EXPECT_NEAR(t.at({3, 1}), 0.000200, 1e-6);
  EXPECT_NEAR(t.at({0, 1}), std::cos(1.0), 1e-12);
  EXPECT_NEAR(t.at({1, 1}), std::sin(1.0 / std::sqrt(5000.0)), 1e-12);
  EXPECT_NEAR(t.at({2, 1}), std::cos(1.0 / std::sqrt(5000.0)), 1e-12);
  EXPECT_NEAR(t.at({3, 1}), std::sin(1.0 / 5000.0), 1e-12);
}

TEST(ApeTable, MatchesFormulaEverywhere) {
  for (Index dim : {1, 4, 7, 16}) {
    const auto t = ape_table<double>(dim, 50);
    for (Index row = 0; row < dim; ++row) {
      for (Index i = 0; i < 50; ++i) {
        EXPECT_NEAR(t.at({row, i}), ape_formula(row + 1, dim, i), 1e-12);
        EXPECT_LE(std::abs(t.at({row, i})), 1.0);
      }
    }
  }
  EXPECT_THROW(ape_table<double>(0, 3), ConfigError);
}

TEST(ApeTable, PrefixOfLongerTable) {
  const auto a = ape_table<double>(8, 20);
  const auto b = ape_table<double>(8, 40);
  for (Index row = 0; row < 8; ++row) {
    for (Index i = 0; i < 20; ++i) EXPECT_EQ(a.at({row, i}), b.at({row, i}));
  }
}

TEST(ApplyApe, ZeroInputAndTinyGrid) {
  const auto y = apply_ape(cst(T(Shape{4, 3, 5}))).value();
  const auto pt = ape_table<double>(4, 3);
  const auto pf = ape_table<double>(4, 5);
  for (Index d = 0; d < 4; ++d) {
    for (Index t = 0; t < 3; ++t) {
      for (Index f = 0; f < 5; ++f) EXPECT_NEAR(y.at({d, t, f}), pt.at({d, t}) + pf.at({d, f}), 1e-15);
    }
  }
  const auto one = apply_ape(cst(T(Shape{4, 1, 1}))).value();
  EXPECT_EQ(one, T(Shape{4, 1, 1}, {2.0, 0.0, 2.0, 0.0}));
  // D=4, t=1, f=0: time table column 1 plus frequency column 0.
  const auto spot = apply_ape(cst(T(Shape{4, 2, 1}))).value();
  EXPECT_NEAR(spot.at({0, 1, 0}), std::cos(1.0) + 1.0, 1e-12);
  EXPECT_NEAR(spot.at({1, 1, 0}), std::sin(1.0 / std::sqrt(5000.0)), 1e-12);
}

TEST(KerpleBias, Values) {
  const auto b = kerple_bias<double>(4, 1.0, 1.0);
  EXPECT_NEAR(b.at({0, 1}), -std::log(2.0), 1e-12);
  EXPECT_NEAR(b.at({0, 1}), -0.693147, 1e-6);
  const auto c = kerple_bias<double>(3, 2.0, 3.0);
  EXPECT_NEAR(c.at({2, 1}), -2.0 * std::log(4.0), 1e-12);
  EXPECT_NEAR(c.at({2, 1}), -2.772589, 1e-6);
  EXPECT_THROW(kerple_bias<double>(3, 0.0, 1.0), ConfigError);
}

TEST(KerpleBias, StructuralProperties) {
  for (double r1 : {0.1, 1.0, 4.0}) {
    for (double r2 : {0.05, 1.0, 7.0}) {
      const Index L = 12;
      const auto b = kerple_bias<double>(L, r1, r2);
      for (Index i = 0; i < L; ++i) {
        EXPECT_EQ(b.at({i, i}), 0.0);
        for (Index j = 0; j < L; ++j) {
          EXPECT_EQ(b.at({i, j}), b.at({j, i}));
          EXPECT_LE(b.at({i, j}), 0.0);
          if (j + 1 < L && j >= i) {
            EXPECT_LT(b.at({i, j + 1}), b.at({i, j}));
          }
        }
      }
      const auto big = kerple_bias<double>(2 * L, r1, r2);
      for (Index i = 0; i < L; ++i) {
        for (Index j = 0; j < L; ++j) EXPECT_EQ(b.at({i, j}), big.at({i, j}));
      }
    }
  }
}

TEST(KerpleBias, DifferentiableMatchesPlainAtInit) {
  KerpleParams<double> p{V::parameter(T(Shape{2}, kerple_init_value())),
                         V::parameter(T(Shape{2}, kerple_init_value()))};
  const auto b = kerple_bias(5, p).value();
  const auto ref = kerple_bias<double>(5, 1.0, 1.0);
  for (Index h = 0; h < 2; ++h) {
    for (Index i = 0; i < 25; ++i) EXPECT_NEAR(b[h * 25 + i], ref[i], 1e-14);
  }
  const auto r = finite_diff_check(
      [](const std::vector<V>& v) { return kerple_bias(4, KerpleParams<double>{v[0], v[1]}); },
      {random_tensor({3}, 1, -1, 1), random_tensor({3}, 2, -1, 1)});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Rope, PositionZeroIsIdentity) {
  const auto x = random_tensor({2, 1, 8}, 3);
  EXPECT_EQ(rope_rotate(cst(x)).value(), x);
}

TEST(Rope, SinglePair) {
  T x(Shape{1, 5, 2});
  for (Index i = 0; i < 5; ++i) x.at({0, i, 0}) = 1.0;
  const auto y = rope_rotate(cst(x)).value();
  for (Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(y.at({0, i, 0}), std::cos(double(i)), 1e-15);
    EXPECT_NEAR(y.at({0, i, 1}), std::sin(double(i)), 1e-15);
  }
}

TEST(Rope, IsometryPerPosition) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_tensor({3, 40, 8}, seed);
    const auto y = rope_rotate(cst(x)).value();
    for (Index r = 0; r < 3 * 40; ++r) {
      EXPECT_NEAR(y.matrix(120, 8).row(r).norm(), x.matrix(120, 8).row(r).norm(), 1e-12);
    }
  }
}

TEST(Rope, RelativeShiftInvariance) {
  // <rot(q,i), rot(k,j)> depends only on i - j.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index L = 64;
    const auto q1 = random_tensor({1, 8}, seed);
    const auto k1 = random_tensor({1, 8}, seed + 50);
    T q(Shape{L, 8}), k(Shape{L, 8});
    for (Index i = 0; i < L; ++i) {
      q.matrix(L, 8).row(i) = q1.matrix(1, 8).row(0);
      k.matrix(L, 8).row(i) = k1.matrix(1, 8).row(0);
    }
    const auto rq = rope_rotate(cst(q)).value();
    const auto rk = rope_rotate(cst(k)).value();
    auto dot = [&](Index i, Index j) { return rq.matrix(L, 8).row(i).dot(rk.matrix(L, 8).row(j)); };
    for (Index delta : {1, 7, 30}) {
      for (Index i = 0; i + delta < L; i += 5) {
        for (Index j = 0; j + delta < L; j += 3) EXPECT_NEAR(dot(i, j), dot(i + delta, j + delta), 1e-10);
      }
    }
  }
}

TEST(Rope, LengthIndependentBitwise) {
  const auto x = random_tensor({2, 64, 6}, 4);
  const auto full = rope_rotate(cst(x)).value();
  const auto prefix = rope_rotate(slice(cst(x), 1, 0, 20)).value();
  for (Index h = 0; h < 2; ++h) {
    for (Index i = 0; i < 20; ++i) {
      for (Index c = 0; c < 6; ++c) EXPECT_EQ(prefix.at({h, i, c}), full.at({h, i, c}));
    }
  }
}

TEST(Rope, OddHeadDimRejected) {
  EXPECT_THROW(rope_rotate(cst(T(Shape{2, 3}))), ConfigError);
}

TEST(Rope, Gradient) {
  const auto r = finite_diff_check([](const std::vector<V>& v) { return rope_rotate(v[0]); },
                                   {random_tensor({2, 5, 4}, 5)});
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(Attach, HookSelection) {
  KerpleParams<double> p{V::parameter(T(Shape{2}, 0.5)), V::parameter(T(Shape{2}, 0.5))};
  const auto ape = attach<double>(PEKind::kAPE);
  EXPECT_TRUE(ape.input_add && !ape.score_bias && !ape.qk_transform);
  const auto ker = attach<double>(PEKind::kKERPLE, &p);
  EXPECT_TRUE(!ker.input_add && ker.score_bias && !ker.qk_transform);
  EXPECT_EQ(ker.score_bias(3).shape(), (Shape{2, 3, 3}));
  const auto rope = attach<double>(PEKind::kRoPE);
  EXPECT_TRUE(!rope.input_add && !rope.score_bias && rope.qk_transform);
  const auto none = attach<double>(PEKind::kNoPE);
  EXPECT_TRUE(!none.input_add && !none.score_bias && !none.qk_transform);
  EXPECT_THROW(attach<double>(PEKind::kKERPLE), ConfigError);
}

}  // namespace
}  // namespace pelab
