#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bevloc/bevloc.hpp"

using namespace bevloc;

namespace {

Tensor3 random_tensor(Rng& rng, std::size_t d0, std::size_t d1, std::size_t d2) {
  Tensor3 t(d0, d1, d2);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

BevGrid random_grid(Rng& rng, std::size_t h, std::size_t w, std::size_t c, double g) {
  BevGrid grid(h, w, c, g);
  for (std::size_t i = 0; i < grid.data.size(); ++i)
    grid.data.data()[i] = rng.uniform(-1.0, 1.0);
  return grid;
}

// independent bilinear read of a grid at fractional (row, col), clamped
double bilinear_at(const BevGrid& g, double u, double v, std::size_t c) {
  const auto clampi = [](long i, long n) { return std::min(std::max(i, 0L), n - 1); };
  const long i0 = static_cast<long>(std::floor(u)), j0 = static_cast<long>(std::floor(v));
  const double fu = u - std::floor(u), fv = v - std::floor(v);
  const long H = static_cast<long>(g.H()), W = static_cast<long>(g.W());
  auto val = [&](long i, long j) {
    return g.data.at(static_cast<std::size_t>(clampi(i, H)), static_cast<std::size_t>(clampi(j, W)), c);
  };
  return (1 - fu) * (1 - fv) * val(i0, j0) + (1 - fu) * fv * val(i0, j0 + 1) +
         fu * (1 - fv) * val(i0 + 1, j0) + fu * fv * val(i0 + 1, j0 + 1);
}

}  // namespace

TEST_CASE("circular shift identity and integer shifts") {
  Rng rng(3);
  const Tensor3 t = random_tensor(rng, 4, 1, 2);

  const Tensor3 zero = circular_shift(t, 0.0, 0);
  CHECK(max_abs_diff(zero, t) == 0.0);

  // rows [a, b, c, d] shifted by 1 -> [d, a, b, c]
  const Tensor3 one = circular_shift(t, 1.0, 0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(one.at(i, 0, k) == t.at((i + 3) % 4, 0, k));

  // full-length shift is the identity
  const Tensor3 full = circular_shift(t, 4.0, 0);
  CHECK(max_abs_diff(full, t) < 1e-9);

  // negative shifts wrap
  const Tensor3 neg = circular_shift(t, -1.0, 0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(neg.at(i, 0, k) == t.at((i + 1) % 4, 0, k));

  CHECK_THROWS_AS(circular_shift(t, std::numeric_limits<double>::quiet_NaN(), 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(circular_shift(t, 1.0, 3), std::invalid_argument);
}

TEST_CASE("circular shift half-bin blend matches the hand evaluation") {
  Tensor3 t(4, 1, 1);
  const double a = 1.0, b = 2.0, c = 4.0, d = 8.0;
  t.at(0, 0, 0) = a;
  t.at(1, 0, 0) = b;
  t.at(2, 0, 0) = c;
  t.at(3, 0, 0) = d;
  const Tensor3 half = circular_shift(t, 0.5, 0);
  CHECK(half.at(0, 0, 0) == Catch::Approx(0.5 * a + 0.5 * d));
  CHECK(half.at(1, 0, 0) == Catch::Approx(0.5 * b + 0.5 * a));
  CHECK(half.at(2, 0, 0) == Catch::Approx(0.5 * c + 0.5 * b));
  CHECK(half.at(3, 0, 0) == Catch::Approx(0.5 * d + 0.5 * c));
}

TEST_CASE("circular shift composition laws") {
  Rng rng(5);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + rng.uniform_index(8);
    const Tensor3 t = random_tensor(rng, n, 2, 3);
    const double ia = static_cast<double>(rng.uniform_index(2 * n)) - static_cast<double>(n);
    const double ib = static_cast<double>(rng.uniform_index(2 * n)) - static_cast<double>(n);

    // integer + integer composes exactly
    const Tensor3 lhs = circular_shift(circular_shift(t, ia, 0), ib, 0);
    const Tensor3 rhs = circular_shift(t, ia + ib, 0);
    CHECK(max_abs_diff(lhs, rhs) == 0.0);

    // fractional + integer composes within 1e-6
    const double f = rng.uniform(0.05, 0.95);
    const Tensor3 lf = circular_shift(circular_shift(t, f, 1), ib, 1);
    const Tensor3 rf = circular_shift(t, f + ib, 1);
    CHECK(max_abs_diff(lf, rf) < 1e-6);
  }
}

TEST_CASE("matrix circular shift agrees with the tensor form") {
  Rng rng(7);
  const std::size_t T = 6, C = 3;
  Tensor3 t = random_tensor(rng, T, 1, C);
  MatX m(T, C);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t c = 0; c < C; ++c) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = t.at(i, 0, c);

  for (const double phi : {0.0, 1.0, 2.5, -1.25, 11.0}) {
    const Tensor3 ts = circular_shift(t, phi, 0);
    const MatX ms = circular_shift(m, phi, 0);
    for (std::size_t i = 0; i < T; ++i)
      for (std::size_t c = 0; c < C; ++c)
        CHECK(ms(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) ==
              Catch::Approx(ts.at(i, 0, c)).margin(1e-12));
  }

  // column shifts move columns the same way rows move
  const MatX col = circular_shift(m, 1.0, 1);
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t c = 0; c < C; ++c)
      CHECK(col(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) ==
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>((c + C - 1) % C)));
}

TEST_CASE("polar transform of a constant grid is constant") {
  BevGrid g(32, 32, 2, 0.3);
  g.data.fill(0.75);
  const PolarGrid p = polar_transform(g, 24, 8);
  for (std::size_t i = 0; i < p.data.size(); ++i)
    CHECK(p.data.data()[i] == Catch::Approx(0.75).margin(1e-12));
  CHECK(p.radial_step_m == Catch::Approx(16.0 * 0.3 / 8.0));
}

TEST_CASE("polar transform matches an independent bilinear oracle") {
  Rng rng(9);
  const BevGrid g = random_grid(rng, 33, 29, 3, 0.25);
  const std::size_t T = 30, R = 7;
  const double step = 0.5;  // 7 * 0.5 = 3.5 <= 14.5 * 0.25
  const PolarGrid p = polar_transform(g, T, R, step);
  CHECK(p.T() == T);
  CHECK(p.R() == R);

  for (std::size_t t = 0; t < T; ++t) {
    const double a = (static_cast<double>(t) + 0.5) * 2.0 * kPi / static_cast<double>(T);
    for (std::size_t r = 0; r < R; ++r) {
      const double rho = (static_cast<double>(r) + 0.5) * step;
      const double x = rho * std::sin(a), y = rho * std::cos(a);
      for (std::size_t c = 0; c < 3; ++c) {
        const double expect = bilinear_at(g, g.x_to_row(x), g.y_to_col(y), c);
        CHECK(p.data.at(t, r, c) == Catch::Approx(expect).margin(1e-12));
      }
    }
  }

  CHECK_THROWS_AS(polar_transform(g, T, R, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(polar_transform(g, 0, R, step), std::invalid_argument);
}

TEST_CASE("single-cell grid produces a localized polar footprint") {
  BevGrid g(41, 41, 1, 0.3);
  g.data.fill(0.0);
  // cell at ego point x = (20 - 14) * 0.3 = 1.8, y = (20 - 26) * 0.3 = -1.8
  g.data.at(14, 26, 0) = 1.0;
  const PolarGrid p = polar_transform(g, 36, 10, 0.6);

  bool any = false;
  for (std::size_t t = 0; t < p.T(); ++t) {
    const double a = (static_cast<double>(t) + 0.5) * 2.0 * kPi / 36.0;
    for (std::size_t r = 0; r < p.R(); ++r) {
      const double rho = (static_cast<double>(r) + 0.5) * 0.6;
      const double u = g.x_to_row(rho * std::sin(a));
      const double v = g.y_to_col(rho * std::cos(a));
      const bool in_support = std::abs(u - 14.0) < 1.0 && std::abs(v - 26.0) < 1.0;
      if (p.data.at(t, r, 0) != 0.0) {
        any = true;
        CHECK(in_support);
      }
    }
  }
  CHECK(any);
}

TEST_CASE("rotating smooth content by one sector rolls the polar grid by one") {
  // smooth field sampled at cell centers keeps interpolation error well under
  // the 1e-3 relative tolerance
  const std::size_t H = 81, W = 81, C = 2, T = 24, R = 8;
  const double g = 0.125, step = 0.5;
  const double delta = 2.0 * kPi / static_cast<double>(T);

  auto field = [](double x, double y, std::size_t c) {
    const double b1 = std::exp(-((x - 1.2) * (x - 1.2) + (y - 0.4) * (y - 0.4)) / (2 * 4.0));
    const double b2 = std::exp(-((x + 0.9) * (x + 0.9) + (y + 1.6) * (y + 1.6)) / (2 * 4.0));
    return c == 0 ? b1 + 0.5 * b2 : 0.75 * b1 - b2;
  };

  BevGrid base(H, W, C, g), rotated(H, W, C, g);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const double x = base.row_to_x(static_cast<double>(i));
      const double y = base.col_to_y(static_cast<double>(j));
      // content rotation advances the angle measured from +y toward +x by
      // delta; the value at p comes from the pre-image of p
      const double xr = x * std::cos(delta) - y * std::sin(delta);
      const double yr = x * std::sin(delta) + y * std::cos(delta);
      for (std::size_t c = 0; c < C; ++c) {
        base.data.at(i, j, c) = field(x, y, c);
        rotated.data.at(i, j, c) = field(xr, yr, c);
      }
    }
  }

  const PolarGrid pa = polar_transform(base, T, R, step);
  const PolarGrid pb = polar_transform(rotated, T, R, step);
  const Tensor3 shifted = circular_shift(pa.data, 1.0, 0);

  double scale = 0.0;
  for (std::size_t i = 0; i < pa.data.size(); ++i)
    scale = std::max(scale, std::abs(pa.data.data()[i]));
  CHECK(max_abs_diff(pb.data, shifted) < 1e-3 * scale);
}

TEST_CASE("bev_pad identity and the one-cell trace") {
  Rng rng(13);
  const BevGrid g = random_grid(rng, 8, 8, 2, 0.3);
  const BevGrid same = bev_pad(g, 0.0, 0.0);
  CHECK(max_abs_diff(same.data, g.data) == 0.0);

  // 4x4 grid, g=0.3, forward step of one cell: rows shift up, last row -> 1
  BevGrid small(4, 4, 1, 0.3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      small.data.at(i, j, 0) = static_cast<double>(10 * i + j);
  const BevGrid padded = bev_pad(small, 0.3, 0.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(padded.data.at(i, j, 0) == small.data.at(i + 1, j, 0));
  for (std::size_t j = 0; j < 4; ++j) CHECK(padded.data.at(3, j, 0) == 1.0);

  // backward step pads the first row instead
  const BevGrid back = bev_pad(small, -0.3, 0.0);
  for (std::size_t j = 0; j < 4; ++j) CHECK(back.data.at(0, j, 0) == 1.0);
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(back.data.at(i, j, 0) == small.data.at(i - 1, j, 0));

  // leftward step pads the last columns
  const BevGrid left = bev_pad(small, 0.0, 0.6);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(left.data.at(i, 2, 0) == 1.0);
    CHECK(left.data.at(i, 3, 0) == 1.0);
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(left.data.at(i, j, 0) == small.data.at(i, j + 2, 0));
  }

  CHECK_THROWS_AS(bev_pad(small, 1.2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(bev_pad(small, 0.0, -1.3), std::invalid_argument);
  CHECK_THROWS_AS(bev_pad(small, std::numeric_limits<double>::infinity(), 0.0),
                  std::invalid_argument);
}

TEST_CASE("bev_pad composition restores the surviving interior") {
  Rng rng(17);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t H = 6 + rng.uniform_index(8);
    const BevGrid g = random_grid(rng, H, H, 2, 0.3);
    const std::size_t cells = 1 + rng.uniform_index(H / 2);
    const double d = static_cast<double>(cells) * 0.3;
    const BevGrid out = bev_pad(bev_pad(g, d, 0.0), -d, 0.0);
    // the first `cells` rows were destroyed by the second pad; the rest match
    for (std::size_t i = cells; i < H; ++i)
      for (std::size_t j = 0; j < H; ++j)
        for (std::size_t c = 0; c < 2; ++c)
          CHECK(out.data.at(i, j, c) == g.data.at(i, j, c));
  }
}

TEST_CASE("matching cost examples and oracle") {
  MatX a(1, 4), b(1, 4);
  a << 1, 0, 0, 0;
  b << 0, 1, 0, 0;
  CHECK(matching_cost(a, a) == 0.0);
  CHECK(matching_cost(a, b) == Catch::Approx(std::sqrt(2.0)));

  Rng rng(19);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index T = 2 + static_cast<Eigen::Index>(rng.uniform_index(10));
    const Eigen::Index C = 2 + static_cast<Eigen::Index>(rng.uniform_index(8));
    MatX x(T, C), y(T, C), z(T, C);
    for (Eigen::Index i = 0; i < T; ++i) {
      for (Eigen::Index j = 0; j < C; ++j) {
        x(i, j) = rng.normal();
        y(i, j) = rng.normal();
        z(i, j) = rng.normal();
      }
      x.row(i).normalize();
      y.row(i).normalize();
      z.row(i).normalize();
    }

    // independent scalar-loop evaluation
    double acc = 0.0;
    for (Eigen::Index i = 0; i < T; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < C; ++j) s += (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
      acc += std::sqrt(s);
    }
    const double oracle = acc / static_cast<double>(T);

    const double got = matching_cost(x, y);
    CHECK(std::abs(got - oracle) < 1e-9);
    CHECK(got == matching_cost(y, x));
    CHECK(got >= 0.0);
    CHECK(got <= 2.0 + 1e-12);
    CHECK(matching_cost(x, z) <= matching_cost(x, y) + matching_cost(y, z) + 1e-12);
  }

  MatX wrong(2, 4);
  CHECK_THROWS_AS(matching_cost(a, wrong), std::invalid_argument);
}
