#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "avr/errors.hpp"
#include "avr/sr_network.hpp"
#include "sr_oracle.hpp"
#include "test_util.hpp"

using namespace avr;
using namespace avr::sr;

namespace {

Matrix random_matrix(std::mt19937_64& rng, int r, int c, double a = 1.0) {
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = u(rng);
  return m;
}

SwinBlock random_block(std::mt19937_64& rng, int d, int h, double a = 0.5) {
  SwinBlock b;
  for (int i = 0; i < h; ++i) {
    b.heads.push_back({random_matrix(rng, d, d / h, a), random_matrix(rng, d, d / h, a),
                       random_matrix(rng, d, d / h, a), random_matrix(rng, d / h, d, a)});
  }
  b.ln_scale = random_matrix(rng, 1, d, 1.0).row(0);
  b.ln_offset = random_matrix(rng, 1, d, 1.0).row(0);
  return b;
}

SwinBlock zero_block(int d, int h) {
  SwinBlock b;
  for (int i = 0; i < h; ++i) {
    b.heads.push_back({Matrix::Zero(d, d / h), Matrix::Zero(d, d / h), Matrix::Zero(d, d / h),
                       Matrix::Zero(d / h, d)});
  }
  b.ln_scale = RowVector::Ones(d);
  b.ln_offset = RowVector::Zero(d);
  return b;
}

std::vector<double> oracle_ln(const std::vector<double>& x, double eps) {
  double m = 0;
  for (double v : x) m += v;
  m /= x.size();
  double var = 0;
  for (double v : x) var += (v - m) * (v - m);
  var /= x.size();
  std::vector<double> out;
  for (double v : x) out.push_back((v - m) / std::sqrt(var + eps));
  return out;
}

FeatureMap random_features(std::mt19937_64& rng, int h, int w, int c) {
  FeatureMap f(h, w, c);
  f.tokens = random_matrix(rng, h * w, c, 1.0);
  return f;
}

}  // namespace

TEST_CASE("layer norm examples") {
  const std::vector<double> x{1, 2, 3}, one{1, 1, 1}, zero{0, 0, 0};
  const auto y = layer_norm(x, one, zero, 1e-12);
  CHECK(y[0] == doctest::Approx(-1.2247).epsilon(1e-3));
  CHECK(y[1] == doctest::Approx(0).epsilon(1e-12));
  CHECK(y[2] == doctest::Approx(1.2247).epsilon(1e-3));
  const std::vector<double> c{4, 4, 4};
  for (double v : layer_norm(c, one, zero, 1e-5)) CHECK(v == 0);
  const std::vector<double> off{0.5, -2, 7};
  const auto s0 = layer_norm(x, zero, off, 1e-5);
  CHECK(s0 == off);
  CHECK_THROWS_AS(layer_norm(std::vector<double>{}, zero, zero, 1e-5), DomainError);
}

TEST_CASE("attention rows are stochastic and MSA matches the dense oracle") {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 3);
    const int d = h * (1 + static_cast<int>(rng() % 4));
    const int n = 1 + static_cast<int>(rng() % 16);
    const Matrix x = random_matrix(rng, n, d, 2.0);
    const SwinBlock b = random_block(rng, d, h, 1.0);
    for (const auto& head : b.heads) {
      const Matrix a = attention_weights(x, head);
      for (int i = 0; i < n; ++i) {
        CHECK(std::abs(a.row(i).sum() - 1.0) < 1e-12);
        CHECK(a.row(i).minCoeff() >= 0);
      }
    }
    const Matrix got = msa_forward(x, b);
    CHECK(got.rows() == n);
    CHECK(got.cols() == d);
    CHECK((got - test::oracle_msa(x, b)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("MSA examples") {
  std::mt19937_64 rng(7);
  const SwinBlock b = random_block(rng, 6, 2);
  const Matrix x = random_matrix(rng, 1, 6);
  Matrix expect = Matrix::Zero(1, 6);
  for (const auto& h : b.heads) expect += x * h.value * h.output;
  CHECK((msa_forward(x, b) - expect).cwiseAbs().maxCoeff() < 1e-12);

  CHECK(msa_forward(random_matrix(rng, 9, 4), zero_block(4, 2)).cwiseAbs().maxCoeff() == 0);
  CHECK_THROWS_AS(msa_forward(random_matrix(rng, 4, 5), b), DomainError);
}

TEST_CASE("feature aggregation") {
  std::mt19937_64 rng(3);
  const FeatureMap x = random_features(rng, 8, 8, 4);
  const FeatureMap same = feature_aggregate(x, {}, 4, 1e-5);
  CHECK(same.tokens == x.tokens);

  // Zero-attention blocks reduce to LN: B(X) = X + K LN(X) per token.
  FeatureMap one(1, 1, 3);
  one.tokens << 1, 2, 3;
  const double eps = 1e-5;
  const FeatureMap agg = feature_aggregate(one, {zero_block(3, 1), zero_block(3, 1)}, 1, eps);
  const double sd = std::sqrt(2.0 / 3.0 + eps);
  CHECK(agg.tokens(0, 0) == doctest::Approx(1 + 2 * (-1 / sd)).epsilon(1e-12));
  CHECK(agg.tokens(0, 1) == doctest::Approx(2).epsilon(1e-12));
  CHECK(agg.tokens(0, 2) == doctest::Approx(3 + 2 * (1 / sd)).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const int hh = 1 + static_cast<int>(rng() % 20), ww = 1 + static_cast<int>(rng() % 20);
    const int win = 1 + static_cast<int>(rng() % std::min(hh, ww));
    const FeatureMap f = random_features(rng, hh, ww, 4);
    const FeatureMap y = feature_aggregate(f, {random_block(rng, 4, 2), random_block(rng, 4, 2)}, win, eps);
    CHECK(y.height == hh);
    CHECK(y.width == ww);
    CHECK(y.channels() == 4);
    CHECK(y.all_finite());
  }
}

TEST_CASE("swin block equals per-window LN(MSA + X), reflect-padding uneven sides") {
  std::mt19937_64 rng(17);
  const int d = 4, win = 4;
  const SwinBlock b = random_block(rng, d, 2);
  const FeatureMap x = random_features(rng, 6, 7, d);  // padded to 8x8
  const FeatureMap y = swin_block_forward(x, b, win, 1e-5);
  REQUIRE(y.height == 6);
  REQUIRE(y.width == 7);

  auto refl = [](int i, int n) { return i < n ? i : 2 * (n - 1) - i; };
  for (int wy = 0; wy < 2; ++wy) {
    for (int wx = 0; wx < 2; ++wx) {
      Matrix tokens(win * win, d);
      for (int ty = 0; ty < win; ++ty)
        for (int tx = 0; tx < win; ++tx)
          for (int c = 0; c < d; ++c)
            tokens(ty * win + tx, c) = x.at(refl(wy * win + ty, 6), refl(wx * win + tx, 7), c);
      const Matrix pre = test::oracle_msa(tokens, b) + tokens;
      for (int ty = 0; ty < win; ++ty) {
        for (int tx = 0; tx < win; ++tx) {
          const int yy = wy * win + ty, xx = wx * win + tx;
          if (yy >= 6 || xx >= 7) continue;
          std::vector<double> row(d);
          for (int c = 0; c < d; ++c) row[c] = pre(ty * win + tx, c);
          const auto n = oracle_ln(row, 1e-5);
          for (int c = 0; c < d; ++c) {
            CHECK(std::abs(y.at(yy, xx, c) - (n[c] * b.ln_scale[c] + b.ln_offset[c])) < 1e-9);
          }
        }
      }
    }
  }
  CHECK_THROWS_AS(swin_block_forward(random_features(rng, 3, 3, d), b, 8, 1e-5), DomainError);
}

TEST_CASE("swin block: OpenMP windows match the serial reference bit for bit") {
  const int saved = omp_get_max_threads();
  omp_set_num_threads(4);
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    const SwinBlock b = random_block(rng, 8, 2);
    const FeatureMap x = random_features(rng, 13 + trial, 19, 8);
    const FeatureMap p = swin_block_forward(x, b, 4, 1e-5);
    const FeatureMap s = sr::serial::swin_block_forward(x, b, 4, 1e-5);
    CHECK(p.tokens == s.tokens);
  }
  omp_set_num_threads(saved);
}

TEST_CASE("pixel shuffle") {
  FeatureMap x(1, 1, 4);
  x.tokens << 1, 2, 3, 4;
  const FeatureMap y = pixel_shuffle(x, 2);
  REQUIRE(y.height == 2);
  REQUIRE(y.width == 2);
  CHECK(y.at(0, 0, 0) == 1);
  CHECK(y.at(0, 1, 0) == 2);
  CHECK(y.at(1, 0, 0) == 3);
  CHECK(y.at(1, 1, 0) == 4);

  std::mt19937_64 rng(5);
  const FeatureMap f = random_features(rng, 3, 5, 7);
  CHECK(pixel_shuffle(f, 1).tokens == f.tokens);
  CHECK_THROWS_AS(pixel_shuffle(f, 2), DomainError);

  for (int r = 2; r <= 4; ++r) {
    const FeatureMap g = random_features(rng, 4, 3, 3 * r * r);
    const FeatureMap s = pixel_shuffle(g, r);
    CHECK(s.height == 4 * r);
    CHECK(s.width == 3 * r);
    std::vector<double> a(g.tokens.data(), g.tokens.data() + g.tokens.size());
    std::vector<double> b(s.tokens.data(), s.tokens.data() + s.tokens.size());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("sr_forward shapes, determinism and finiteness") {
  std::mt19937_64 rng(9);
  for (int r = 2; r <= 4; ++r) {
    SRConfig cfg;
    cfg.scale = r;
    cfg.channels = 8;
    cfg.heads = 2;
    cfg.seed = static_cast<std::uint64_t>(r);
    const SRNetwork net = SRNetwork::seeded(cfg);
    for (auto [w, h] : {std::pair{16, 16}, {8, 8}, {13, 9}}) {
      const ImageFrame in = test::random_frame(rng, w, h);
      const ImageFrame out = sr_forward(in, net);
      CHECK(out.width() == r * w);
      CHECK(out.height() == r * h);
      CHECK(out.format() == in.format());
      CHECK(sr_forward(in, net) == out);
      CHECK(sr_features(in, net).all_finite());
    }
  }
  SRConfig cfg;
  const SRNetwork net = SRNetwork::seeded(cfg);
  CHECK_THROWS_AS(sr_forward(ImageFrame(7, 16, 3), net), DomainError);
  CHECK_THROWS_AS(sr_forward(ImageFrame(16, 16, 1), net), DomainError);
}

TEST_CASE("identity-configured network upsamples the embedded input by replication") {
  SRConfig cfg;
  cfg.channels = 3;
  cfg.heads = 1;
  cfg.window = 4;
  cfg.blocks = 0;
  cfg.scale = 2;
  SRNetwork net;
  net.config = cfg;
  net.embed = Matrix::Identity(3, 3);
  net.embed_bias = RowVector::Zero(3);
  net.head = zero_block(3, 1);
  net.upsample = Matrix::Zero(3, 12);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 4; ++k) net.upsample(c, c * 4 + k) = 1;
  net.upsample_bias = RowVector::Zero(12);

  std::mt19937_64 rng(4);
  const ImageFrame in = test::random_frame(rng, 8, 8);
  const FeatureMap out = sr_features(in, net);
  REQUIRE(out.height == 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      std::vector<double> px(3);
      for (int c = 0; c < 3; ++c) px[c] = in.at(x / 2, y / 2, c) / 255.0;
      const auto e = oracle_ln(px, cfg.ln_epsilon);
      for (int c = 0; c < 3; ++c) CHECK(std::abs(out.at(y, x, c) - e[c]) < 1e-12);
    }
  }
}

TEST_CASE("seeded weights are deterministic and survive save/load exactly") {
  SRConfig cfg;
  cfg.seed = 42;
  const SRNetwork a = SRNetwork::seeded(cfg);
  const SRNetwork b = SRNetwork::seeded(cfg);
  CHECK(a.embed == b.embed);
  CHECK(a.upsample_bias == b.upsample_bias);
  cfg.seed = 43;
  CHECK_FALSE(SRNetwork::seeded(cfg).embed == a.embed);

  test::TempDir dir("sr");
  save_weights(a, dir / "w.avrw");
  const SRNetwork c = load_weights(dir / "w.avrw");
  CHECK(c.config.seed == 42);
  CHECK(c.config.channels == a.config.channels);
  CHECK(c.embed == a.embed);
  CHECK(c.embed_bias == a.embed_bias);
  CHECK(c.head.heads[1].key == a.head.heads[1].key);
  CHECK(c.blocks[1].heads[3].output == a.blocks[1].heads[3].output);
  CHECK(c.blocks[0].ln_offset == a.blocks[0].ln_offset);
  CHECK(c.upsample == a.upsample);
  std::mt19937_64 rng(1);
  const ImageFrame in = test::random_frame(rng, 16, 16);
  CHECK(sr_forward(in, a) == sr_forward(in, c));

  {
    std::ofstream os(dir / "bad.avrw", std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS(load_weights(dir / "bad.avrw"));
  CHECK_THROWS_AS(load_weights(dir / "missing.avrw"), NotFoundError);
}

TEST_CASE("config validation") {
  SRConfig c;
  c.channels = 30;
  c.heads = 4;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = {};
  c.scale = 5;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = {};
  c.scale = 1;
  CHECK_THROWS_AS(c.validate(), DomainError);
  SRNetwork n = SRNetwork::seeded({});
  n.upsample = Matrix::Zero(32, 11);
  CHECK_THROWS_AS(n.validate(), DomainError);
}
