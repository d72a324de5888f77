#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "lfdepth/epi_depth.hpp"
#include "lfdepth/error.hpp"
#include "synthetic.hpp"

using namespace lfd;
using lfd::testing::Texture;

namespace {

double mean_slope_error(const Grid2D<double>& epi, double truth, int margin, double min_coherence, int& used) {
  const auto tensor = structure_tensor(epi, 0.8, 2.0);
  const auto slopes = slope_from_tensor(tensor);
  double sum = 0.0;
  used = 0;
  for (int a = 0; a < epi.height(); ++a) {
    for (int s = margin; s < epi.width() - margin; ++s) {
      const auto& e = slopes(s, a);
      if (!e.valid || e.coherence <= min_coherence) continue;
      sum += std::abs(e.slope - truth);
      ++used;
    }
  }
  return used ? sum / used : INFINITY;
}

}  // namespace

TEST_CASE("gaussian taps are normalized and the derivative has unit ramp response") {
  for (double sigma : {0.5, 0.8, 2.0}) {
    const auto g = gaussian_taps(sigma);
    const auto d = gaussian_derivative_taps(sigma);
    const int r = static_cast<int>(g.size() / 2);
    CHECK(r == std::max(1, static_cast<int>(std::ceil(3 * sigma))));
    CHECK(std::accumulate(g.begin(), g.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    double moment = 0.0, sum = 0.0;
    for (int k = -r; k <= r; ++k) {
      moment += d[k + r] * k;
      sum += d[k + r];
      CHECK(g[k + r] == g[r - k]);
      CHECK(d[k + r] == -d[r - k]);
    }
    CHECK(moment == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(sum) < 1e-15);
  }
  CHECK_THROWS_AS(gaussian_taps(0.0), ValidationError);
}

TEST_CASE("structure tensor rejects EPIs smaller than 3x3") {
  Grid2D<double> tiny(2, 9, 0.5);
  try {
    structure_tensor(tiny, 0.8, 2.0);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("3x3") != std::string::npos);
  }
}

TEST_CASE("constant EPI has zero tensor and no valid slope") {
  Grid2D<double> flat(20, 9, 0.731);
  const auto t = structure_tensor(flat, 0.8, 2.0);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    CHECK(t.j_ss.values()[i] == 0.0);
    CHECK(t.j_sa.values()[i] == 0.0);
    CHECK(t.j_aa.values()[i] == 0.0);
  }
  const auto est = slope_from_tensor(0.0, 0.0, 0.0);
  CHECK_FALSE(est.valid);
  CHECK(est.coherence == 0.0);
}

TEST_CASE("slope and coherence from hand tensors") {
  // Pure spatial gradient: iso-lines are vertical in the EPI, slope 0.
  auto e = slope_from_tensor(1.0, 0.0, 0.0);
  CHECK(e.valid);
  CHECK(e.slope == doctest::Approx(0.0));
  CHECK(e.coherence == doctest::Approx(1.0));
  // Gradient along (1, -1)/sqrt2: iso-lines along (1, 1), ds/da = 1.
  e = slope_from_tensor(0.5, -0.5, 0.5);
  CHECK(e.slope == doctest::Approx(1.0));
  CHECK(e.coherence == doctest::Approx(1.0));
  // Isotropic tensor: no orientation.
  e = slope_from_tensor(2.0, 0.0, 2.0);
  CHECK(e.coherence == 0.0);
  CHECK_FALSE(e.valid);
  // Gradient purely angular means infinite slope.
  e = slope_from_tensor(0.0, 0.0, 1.0);
  CHECK_FALSE(e.valid);
}

TEST_CASE("tensor slopes follow synthetic line orientations") {
  std::mt19937 rng(7);
  const Texture tex = Texture::random(rng, 5, 0.12);
  for (double m : {-1.5, -0.5, 0.0, 0.5, 1.5}) {
    CAPTURE(m);
    int used = 0;
    const double err = mean_slope_error(lfd::testing::synthetic_epi(96, 9, m, tex), m, 8, 0.9, used);
    CHECK(used > 200);
    CHECK(err <= 0.05);
  }
}

TEST_CASE("border angular rows stay accurate with odd extension") {
  std::mt19937 rng(3);
  const Texture tex = Texture::random(rng, 5, 0.12);
  const double m = 0.8;
  const auto epi = lfd::testing::synthetic_epi(80, 9, m, tex);
  const auto slopes = slope_from_tensor(structure_tensor(epi, 0.8, 2.0));
  double worst = 0.0;
  for (int a : {0, 8}) {
    for (int s = 10; s < 70; ++s) {
      if (slopes(s, a).coherence > 0.9) worst = std::max(worst, std::abs(slopes(s, a).slope - m));
    }
  }
  CHECK(worst < 0.1);
}

TEST_CASE("slopes are invariant to affine intensity changes") {
  std::mt19937 rng(11);
  const Texture tex = Texture::random(rng);
  const auto epi = lfd::testing::synthetic_epi(64, 9, 0.7, tex);
  Grid2D<double> scaled = epi;
  for (double& v : scaled.values()) v = 0.25 * v + 0.3;
  const auto a = slope_from_tensor(structure_tensor(epi, 0.8, 2.0));
  const auto b = slope_from_tensor(structure_tensor(scaled, 0.8, 2.0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.values()[i].valid == b.values()[i].valid);
    if (!a.values()[i].valid) continue;
    CHECK(b.values()[i].slope == doctest::Approx(a.values()[i].slope).epsilon(1e-9));
    CHECK(b.values()[i].coherence == doctest::Approx(a.values()[i].coherence).epsilon(1e-9));
  }
}

TEST_CASE("mirroring the spatial axis negates the slope") {
  std::mt19937 rng(5);
  const Texture tex = Texture::random(rng);
  const auto epi = lfd::testing::synthetic_epi(50, 9, 0.6, tex);
  Grid2D<double> mirrored(epi.width(), epi.height());
  for (int a = 0; a < epi.height(); ++a) {
    for (int s = 0; s < epi.width(); ++s) mirrored(s, a) = epi(epi.width() - 1 - s, a);
  }
  const auto a = slope_from_tensor(structure_tensor(epi, 0.8, 2.0));
  const auto b = slope_from_tensor(structure_tensor(mirrored, 0.8, 2.0));
  for (int y = 0; y < epi.height(); ++y) {
    for (int s = 0; s < epi.width(); ++s) {
      const auto& p = a(s, y);
      const auto& q = b(epi.width() - 1 - s, y);
      if (!p.valid) continue;
      CHECK(q.slope == doctest::Approx(-p.slope).epsilon(1e-9).scale(1.0));
      CHECK(q.coherence == doctest::Approx(p.coherence).epsilon(1e-9));
    }
  }
}

TEST_CASE("slope and depth conversions") {
  const double A = 2.0;
  for (double z : {0.5, 1.0, 3.0, 100.0}) {
    const double s = depth_to_slope(z, A);
    const auto back = slope_to_depth(s, A);
    CHECK(back.status == DepthStatus::kFinite);
    CHECK(back.depth == doctest::Approx(z).epsilon(1e-12));
  }
  CHECK(slope_to_depth(0.0, A).depth == A);
  CHECK(slope_to_depth(1.0, A).status == DepthStatus::kInfinite);
  CHECK(std::isinf(slope_to_depth(1.0, A).depth));
  CHECK(slope_to_depth(1.5, A).status == DepthStatus::kNonPhysical);
  CHECK(slope_to_depth(-1.0, A).depth == doctest::Approx(1.0));
}

TEST_CASE("initial disparity on a fronto-parallel plane") {
  lfd::testing::Scene scene;
  scene.views = 9;
  scene.width = 48;
  scene.height = 40;
  std::mt19937 rng(21);
  lfd::testing::PlaneLayer plane;
  plane.d0 = 0.6;
  plane.texture = Texture::random(rng);
  scene.layers = {plane};
  const auto lf = lfd::testing::render(scene);
  const auto cfg = lfd::testing::config_for(scene);
  const auto field = estimate_initial_disparity(lf, cfg);
  double err = 0.0;
  int count = 0;
  for (int y = 8; y < 32; ++y) {
    for (int x = 8; x < 40; ++x) {
      err += std::abs(field.disparity(x, y) - 0.6);
      ++count;
    }
  }
  CHECK(err / count < 0.03);

  SUBCASE("merged values come from one of the two candidates") {
    EpiDepthParams params;
    const auto cand = estimate_orientation_candidates(lf, cfg, params);
    const auto merged = merge_candidates(cand, params.coherence_min);
    CHECK(merged.disparity == field.disparity);
    for (std::size_t i = 0; i < merged.disparity.size(); ++i) {
      const float h = cand.horizontal.disparity.values()[i], v = cand.vertical.disparity.values()[i];
      const float ch = cand.horizontal.confidence.values()[i], cv = cand.vertical.confidence.values()[i];
      CHECK((merged.disparity.values()[i] == h || merged.disparity.values()[i] == v));
      CHECK(merged.confidence.values()[i] == std::max(ch, cv));
      if (ch == cv) CHECK(merged.disparity.values()[i] == h);
    }
  }

  SUBCASE("thread count does not change the result") {
    EpiDepthParams params;
    params.threads = 3;
    const auto threaded = estimate_initial_disparity(lf, cfg, params);
    CHECK(threaded.disparity == field.disparity);
    CHECK(threaded.confidence == field.confidence);
    CHECK(threaded.valid == field.valid);
  }

  SUBCASE("values are clamped to the configured range") {
    auto narrow = cfg;
    narrow.disp_min = -0.2;
    narrow.disp_max = 0.2;
    const auto clamped = estimate_initial_disparity(lf, narrow);
    for (float d : clamped.disparity.values()) CHECK((d >= -0.2f && d <= 0.2f));
  }

  SUBCASE("depth decreases with disparity") {
    const auto depth = disparity_to_depth_map(field, cfg);
    DisparityField two(2, 1);
    two.disparity(0, 0) = 0.1f;
    two.disparity(1, 0) = 0.5f;
    two.valid(0, 0) = two.valid(1, 0) = 1;
    const auto z = disparity_to_depth_map(two, cfg);
    CHECK(z(0, 0) > z(1, 0));
    CHECK(z(0, 0) == doctest::Approx(cfg.separation() / 1.1f).epsilon(1e-6));
    CHECK(depth.size() == field.disparity.size());
  }
}

TEST_CASE("single-row arrays fall back to the usable orientation") {
  lfd::testing::Scene scene;
  scene.views = 5;
  scene.width = 32;
  scene.height = 24;
  std::mt19937 rng(2);
  lfd::testing::PlaneLayer plane;
  plane.d0 = -0.4;
  plane.texture = Texture::random(rng);
  scene.layers = {plane};
  const auto full = lfd::testing::render(scene);
  // Keep only the center row of views: 5 x 1.
  std::vector<float> samples;
  for (int u = 0; u < 5; ++u) {
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 32; ++x) samples.push_back(full.at(u, 2, x, y));
    }
  }
  const LightField4D row(5, 1, 32, 24, 1, samples);
  auto cfg = lfd::testing::config_for(scene);
  cfg.views_v = 1;
  const auto field = estimate_initial_disparity(row, cfg);
  CHECK(field.disparity(16, 12) == doctest::Approx(-0.4).epsilon(0.05));

  const LightField4D tiny(2, 2, 8, 8, 1, std::vector<float>(256, 0.5f));
  CHECK_THROWS_AS(estimate_initial_disparity(tiny, cfg), ValidationError);
}

TEST_CASE("transposing an EPI inverts its slope") {
  std::mt19937 rng(17);
  const Texture tex = Texture::random(rng, 5, 0.1);
  const double m = 0.5;
  const auto epi = lfd::testing::synthetic_epi(64, 64, m, tex);
  Grid2D<double> transposed(64, 64);
  for (int a = 0; a < 64; ++a) {
    for (int s = 0; s < 64; ++s) transposed(a, s) = epi(s, a);
  }
  for (const auto& [grid, truth] : {std::pair{&epi, m}, std::pair{static_cast<const Grid2D<double>*>(&transposed), 1.0 / m}}) {
    const auto slopes = slope_from_tensor(structure_tensor(*grid, 0.8, 2.0));
    std::vector<double> values;
    for (int a = 16; a < 48; ++a) {
      for (int s = 16; s < 48; ++s) {
        if (slopes(s, a).valid) values.push_back(slopes(s, a).slope);
      }
    }
    REQUIRE(values.size() > 500);
    std::nth_element(values.begin(), values.begin() + values.size() / 2, values.end());
    CHECK(values[values.size() / 2] == doctest::Approx(truth).epsilon(0.05));
  }
}

TEST_CASE("an EPI constant along the angular axis has no angular energy") {
  std::mt19937 rng(19);
  const auto epi = lfd::testing::synthetic_epi(48, 9, 0.0, Texture::random(rng));
  const auto t = structure_tensor(epi, 0.8, 2.0);
  for (std::size_t i = 0; i < t.j_aa.size(); ++i) {
    CHECK(t.j_aa.values()[i] == 0.0);
    CHECK(t.j_sa.values()[i] == 0.0);
  }
  const auto slopes = slope_from_tensor(t);
  for (int s = 5; s < 43; ++s) {
    if (slopes(s, 4).valid) CHECK(slopes(s, 4).slope == 0.0);
  }
}

TEST_CASE("constant light field gives no valid disparity") {
  const LightField4D lf(5, 5, 20, 16, 1, std::vector<float>(5 * 5 * 20 * 16, 0.4f));
  lfd::testing::Scene scene;
  scene.views = 5;
  const auto field = estimate_initial_disparity(lf, lfd::testing::config_for(scene));
  for (std::size_t i = 0; i < field.valid.size(); ++i) {
    CHECK(field.valid.values()[i] == 0);
    CHECK(field.confidence.values()[i] == 0.0f);
  }
}

TEST_CASE("two-plane scene recovers each plane's disparity") {
  const auto scene = lfd::testing::two_plane_scene(5, 9, 64);
  const auto gt = lfd::testing::center_disparity(scene);
  const auto field = estimate_initial_disparity(lfd::testing::render(scene), lfd::testing::config_for(scene));
  std::map<float, std::vector<float>> per_plane;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) per_plane[gt(x, y)].push_back(field.disparity(x, y));
  }
  REQUIRE(per_plane.size() == 2);
  for (auto& [truth, values] : per_plane) {
    CAPTURE(truth);
    std::nth_element(values.begin(), values.begin() + values.size() / 2, values.end());
    CHECK(std::abs(values[values.size() / 2] - truth) < 0.1);
  }
}
