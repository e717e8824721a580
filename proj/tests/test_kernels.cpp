#include <omp.h>

#include <limits>

#include "btk/kernels.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace btk;

namespace {

struct ThreadScope {
  explicit ThreadScope(int n) : saved(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadScope() { omp_set_num_threads(saved); }
  int saved;
};

}  // namespace

TEST_CASE("parallel kernels match their serial twins bit for bit") {
  Rng rng(11);
  for (int threads : {1, 3, 4}) {
    ThreadScope scope(threads);
    for (int trial = 0; trial < 40; ++trial) {
      const Extents e = fixture::random_extents(rng, 20);
      const Spacing s = {0.5 + rng.uniform(), 1.0, 0.7 + rng.uniform()};
      const auto g = make_geometry(e, s);
      const BinaryMask m = fixture::random_mask(g, rng.uniform(0.0, 0.6), rng);

      std::vector<double> a(m.size()), b(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) a[i] = b[i] = m[i] ? 0.0 : std::numeric_limits<double>::infinity();
      kernels::squared_edt(a, e, s);
      kernels::serial::squared_edt(b, e, s);
      CHECK(a == b);

      for (int conn : {6, 18, 26}) {
        std::vector<std::uint32_t> la(m.size()), lb(m.size());
        const auto ka = kernels::label_components(m.data, e, conn, la);
        const auto kb = kernels::serial::label_components(m.data, e, conn, lb);
        CHECK(ka == kb);
        CHECK(la == lb);
      }

      const std::size_t r = rng.below(4);
      std::vector<std::uint8_t> da(m.size()), db(m.size());
      kernels::box_dilate(m.data, e, r, da);
      kernels::serial::box_dilate(m.data, e, r, db);
      CHECK(da == db);

      std::vector<std::uint8_t> sa(m.size()), sb(m.size());
      kernels::surface(m.data, e, sa);
      kernels::serial::surface(m.data, e, sb);
      CHECK(sa == sb);

      std::vector<double> vals(m.size());
      for (auto& v : vals) v = rng.uniform();
      std::vector<std::int64_t> fa(m.size(), 0), fb(m.size(), 0);
      kernels::accumulate_fixed(vals, 0.3, fa);
      kernels::serial::accumulate_fixed(vals, 0.3, fb);
      CHECK(fa == fb);
    }
  }
}

TEST_CASE("component labels agree with flood fill") {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const auto g = make_geometry(fixture::random_extents(rng, 14));
    const BinaryMask m = fixture::random_mask(g, rng.uniform(0.1, 0.7), rng);
    for (int conn : {6, 18, 26}) {
      std::uint32_t expected_k = 0;
      const auto expected = oracle::components(m, conn, &expected_k);
      std::vector<std::uint32_t> got(m.size());
      CHECK(kernels::label_components(m.data, g.extents, conn, got) == expected_k);
      CHECK(got == expected);
    }
  }
}

TEST_CASE("unsupported connectivity is a contract error") {
  std::vector<std::uint8_t> m(8, 1);
  std::vector<std::uint32_t> l(8);
  CHECK_THROWS_AS(kernels::label_components(m, {2, 2, 2}, 4, l), ContractError);
}

TEST_CASE("box dilation matches a direct window scan") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = make_geometry(fixture::random_extents(rng, 12));
    const BinaryMask m = fixture::random_mask(g, 0.05, rng);
    const std::size_t r = rng.below(3);
    std::vector<std::uint8_t> out(m.size());
    kernels::box_dilate(m.data, g.extents, r, out);
    for (std::size_t i = 0; i < m.size(); ++i) {
      const auto c = g.coords(i);
      bool any = false;
      for (std::size_t j = 0; j < m.size() && !any; ++j) {
        if (!m[j]) continue;
        const auto d = g.coords(j);
        bool inside = true;
        for (int a = 0; a < 3; ++a) {
          const auto diff = c[a] > d[a] ? c[a] - d[a] : d[a] - c[a];
          inside = inside && diff <= r;
        }
        any = inside;
      }
      CHECK(out[i] == any);
    }
  }
}

TEST_CASE("fixed-point accumulation is exact for dyadic inputs") {
  std::vector<double> v = {1.0, 0.5, 0.25, 0.0};
  std::vector<std::int64_t> acc(4, 0);
  kernels::accumulate_fixed(v, 1.0, acc);
  CHECK(acc[0] == (std::int64_t{1} << kernels::kFixedPointBits));
  CHECK(acc[1] == (std::int64_t{1} << (kernels::kFixedPointBits - 1)));
  CHECK(acc[3] == 0);
}
