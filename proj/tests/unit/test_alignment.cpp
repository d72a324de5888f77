#include <doctest.h>

#include <Eigen/LU>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "lfdepth/alignment.hpp"
#include "lfdepth/error.hpp"
#include "planar_scene.hpp"

using namespace lfd;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

// Bilinear interpolation of a coarse random lattice: blob texture with corners.
struct Blobs {
  int cell = 4;
  int nx = 0, ny = 0;
  std::vector<double> lattice;

  Blobs(unsigned seed, int width, int height) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    nx = width / cell + 3;
    ny = height / cell + 3;
    for (int i = 0; i < nx * ny; ++i) lattice.push_back(u(rng));
  }
  double operator()(double x, double y) const {
    const double gx = std::clamp(x / cell + 1.0, 0.0, nx - 1.001), gy = std::clamp(y / cell + 1.0, 0.0, ny - 1.001);
    const int ix = static_cast<int>(gx), iy = static_cast<int>(gy);
    const double fx = gx - ix, fy = gy - iy;
    auto at = [&](int a, int b) { return lattice[b * nx + a]; };
    return (1 - fy) * ((1 - fx) * at(ix, iy) + fx * at(ix + 1, iy)) + fy * ((1 - fx) * at(ix, iy + 1) + fx * at(ix + 1, iy + 1));
  }
  Grid2D<float> image(int width, int height, double shift_x = 0.0) const {
    Grid2D<float> g(width, height);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) g(x, y) = static_cast<float>((*this)(x + shift_x, y));
    }
    return g;
  }
};

std::vector<Correspondence> map_points(const Matrix3d& h, int count, unsigned seed, int patch = 1) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  std::vector<Correspondence> out;
  for (int i = 0; i < count; ++i) {
    Correspondence c;
    c.p = {u(rng), u(rng)};
    c.p_prime = (h * c.p.homogeneous()).hnormalized();
    c.patch_id = patch;
    out.push_back(c);
  }
  return out;
}

double max_abs(const Matrix3d& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("homography normalization and validation") {
  Matrix3d m;
  m << 2, 0, 4, 0, 2, 6, 0, 0, 2;
  const Homography h(m);
  CHECK(h.matrix()(2, 2) == 1.0);
  CHECK(h.matrix()(0, 2) == 2.0);
  CHECK(h.apply(Vector2d(1, 1)).isApprox(Vector2d(3, 4)));
  CHECK(Homography().is_identity());
  Matrix3d singular = Matrix3d::Zero();
  singular(2, 2) = 1;
  CHECK_THROWS_AS(Homography{singular}, ValidationError);
  Matrix3d zero_corner = Matrix3d::Identity();
  zero_corner(2, 2) = 0;
  CHECK_THROWS_AS(Homography{zero_corner}, ValidationError);
}

TEST_CASE("parameter count is 5 + 3j") {
  for (int j = 1; j <= 5; ++j) CHECK(MotionState::identity(j).parameter_count() == 5 + 3 * j);
}

TEST_CASE("compose patch homography") {
  MotionState s = MotionState::identity(2);
  Matrix3d h;
  h << 1.1, 0.02, 3, -0.01, 0.95, -2, 1e-4, 2e-4, 1;
  s.h1 = Homography(h);
  s.k = Vector3d(0.3, -0.2, 0.01);
  CHECK(compose_patch_homography(s, 1).matrix() == s.h1.matrix());

  s.k = Vector3d::UnitZ();
  s.delta_normals[1] = Vector3d(1e-3, -2e-3, 0.5);
  Matrix3d expected = h;
  expected.row(2) += Eigen::RowVector3d(1e-3, -2e-3, 0.5);
  expected /= expected(2, 2);
  CHECK(max_abs(compose_patch_homography(s, 2).matrix() - expected) < 1e-15);
  update_scales(s);
  CHECK(s.scale_d[1] == doctest::Approx(1.5));

  s.delta_normals[1] = Vector3d(0, 0, -1);
  CHECK_THROWS_AS(compose_patch_homography(s, 2), NumericalError);
  CHECK_THROWS_AS(compose_patch_homography(s, 3), ValidationError);
}

TEST_CASE("composed homographies map synthetic plane points exactly") {
  std::mt19937 rng(7);
  const auto scene = testing::PlanarScene::random(rng, 3);
  const MotionState truth = scene.truth(1);
  const auto corrs = testing::sample_correspondences(scene, {20, 20, 20}, 0.0, rng);
  for (int t = 1; t <= 3; ++t) {
    std::vector<Correspondence> patch;
    for (const auto& c : corrs) {
      if (c.patch_id == t) patch.push_back(c);
    }
    CHECK(reprojection_error(compose_patch_homography(truth, t), patch).mean < 1e-6);
  }
}

TEST_CASE("delta normals from exact correspondences") {
  std::mt19937 rng(11);
  const auto scene = testing::PlanarScene::random(rng, 3);
  const MotionState truth = scene.truth(1);
  const auto corrs = testing::sample_correspondences(scene, {30, 25, 25}, 0.0, rng);

  MotionState start = truth;
  for (auto& dn : start.delta_normals) dn.setZero();
  const auto sol = solve_delta_normals(start, corrs);
  CHECK_FALSE(sol.degenerate_translation);
  CHECK(sol.delta_normals[0] == Vector3d::Zero());
  for (int t = 2; t <= 3; ++t) {
    CHECK(sol.status[t - 1] == PatchStatus::kOk);
    CHECK((sol.delta_normals[t - 1] - truth.delta_normals[t - 1]).norm() < 1e-8);
    CHECK(sol.residuals[t - 1] < 1e-18);
  }
}

TEST_CASE("coplanar patches give zero delta normals") {
  std::mt19937 rng(12);
  auto scene = testing::PlanarScene::random(rng, 1);
  scene.normals = {scene.normals[0], scene.normals[0]};
  const MotionState truth = scene.truth(1);
  const auto corrs = testing::sample_correspondences(scene, {20, 20}, 0.0, rng);
  const auto sol = solve_delta_normals(truth, corrs);
  CHECK(sol.delta_normals[1].norm() < 1e-12);
}

TEST_CASE("zero translation is flagged as degenerate") {
  std::mt19937 rng(13);
  const auto scene = testing::PlanarScene::random(rng, 2);
  MotionState s = scene.truth(1);
  s.k.setZero();
  s.delta_normals[1] = Vector3d(1, 2, 3);
  const auto corrs = testing::sample_correspondences(scene, {10, 10}, 0.0, rng);
  const auto sol = solve_delta_normals(s, corrs);
  CHECK(sol.degenerate_translation);
  CHECK(sol.status[1] == PatchStatus::kDegenerateTranslation);
  CHECK(sol.delta_normals[1] == Vector3d::Zero());
}

TEST_CASE("collinear patch points are reported rank deficient") {
  std::mt19937 rng(14);
  const auto scene = testing::PlanarScene::random(rng, 2);
  const MotionState truth = scene.truth(1);
  auto corrs = testing::sample_correspondences(scene, {10, 0}, 0.0, rng);
  const Matrix3d h2 = scene.patch_matrix(2);
  for (int i = 0; i < 5; ++i) {
    Correspondence c;
    c.patch_id = 2;
    c.p = {10.0 + 7.0 * i, 20.0 + 3.0 * i};
    c.p_prime = (h2 * c.p.homogeneous()).hnormalized();
    corrs.push_back(c);
  }
  const auto sol = solve_delta_normals(truth, corrs);
  CHECK(sol.status[1] == PatchStatus::kRankDeficient);
  CHECK(sol.delta_normals[1].allFinite());
}

TEST_CASE("delta normal step needs three correspondences per patch") {
  MotionState s = MotionState::identity(2);
  s.k = Vector3d(1, 0, 0);
  auto corrs = map_points(Matrix3d::Identity(), 6, 1);
  corrs.push_back({Vector2d(1, 1), Vector2d(1, 1), 2});
  CHECK_THROWS_AS(solve_delta_normals(s, corrs), ValidationError);
}

TEST_CASE("global motion from a single plane") {
  Matrix3d h;
  h << 1.02, 0.01, 4.5, -0.02, 0.98, -1.5, 2e-4, -1e-4, 1;
  const auto corrs = map_points(h, 20, 3);
  const auto sol = solve_global_motion({Vector3d::Zero()}, corrs);
  CHECK(max_abs(sol.h1.matrix() - h) < 1e-8);
  CHECK(sol.rank == 8);
  CHECK_FALSE(sol.rank_deficient);
  CHECK(sol.k.norm() < 1e-12);
  CHECK(std::isfinite(sol.condition));
  CHECK_THROWS_AS(solve_global_motion({Vector3d::Zero()}, map_points(h, 5, 3)), ValidationError);
}

TEST_CASE("identity motion gives the identity and no translation") {
  const auto corrs = map_points(Matrix3d::Identity(), 15, 4);
  const auto sol = solve_global_motion({Vector3d::Zero()}, corrs);
  CHECK(max_abs(sol.h1.matrix() - Matrix3d::Identity()) < 1e-12);
  CHECK(sol.k.norm() < 1e-12);
}

TEST_CASE("global motion of two planes with known normals") {
  std::mt19937 rng(21);
  const auto scene = testing::PlanarScene::random(rng, 2);
  const MotionState truth = scene.truth(1);
  const auto corrs = testing::sample_correspondences(scene, {20, 20}, 0.0, rng);
  const auto sol = solve_global_motion(truth.delta_normals, corrs);
  CHECK_FALSE(sol.rank_deficient);
  CHECK(sol.rank == 11);
  CHECK(max_abs(sol.h1.matrix() - truth.h1.matrix()) < 1e-6);
  CHECK((sol.k - truth.k).norm() < 1e-6 * std::max(1.0, truth.k.norm()));
}

TEST_CASE("each alternating step does not increase its own residual") {
  std::mt19937 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto scene = testing::PlanarScene::random(rng, 3);
    const auto corrs = testing::sample_correspondences(scene, {25, 20, 20}, 0.3, rng);
    MotionState s = scene.truth(1);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix3d h = s.h1.matrix();
    h(0, 2) += n(rng);
    h(1, 0) += 0.01 * n(rng);
    s.h1 = Homography(h);
    s.k *= 1.0 + 0.2 * n(rng);
    for (auto& dn : s.delta_normals) dn *= 1.0 + 0.3 * n(rng);
    s.delta_normals[0].setZero();

    const auto dn = solve_delta_normals(s, corrs);
    for (int t = 2; t <= 3; ++t) {
      const double before = delta_normal_residual(s, corrs, t);
      CHECK(dn.residuals[t - 1] <= before * (1 + 1e-12) + 1e-15);
    }
    MotionState after_dn = s;
    after_dn.delta_normals = dn.delta_normals;
    for (int t = 2; t <= 3; ++t) {
      CHECK(delta_normal_residual(after_dn, corrs, t) == doctest::Approx(dn.residuals[t - 1]).epsilon(1e-9));
    }

    const double before = global_motion_residual(after_dn, corrs);
    const auto gm = solve_global_motion(after_dn.delta_normals, corrs);
    CHECK(gm.residual <= before * (1 + 1e-12) + 1e-15);
    MotionState after_gm = after_dn;
    after_gm.h1 = gm.h1;
    after_gm.k = gm.k;
    CHECK(global_motion_residual(after_gm, corrs) == doctest::Approx(gm.residual).epsilon(1e-6));
  }
}

TEST_CASE("reprojection error") {
  Matrix3d h;
  h << 1, 0, 2, 0, 1, -1, 0, 0, 1;
  auto corrs = map_points(h, 10, 5);
  CHECK(reprojection_error(Homography(h), corrs).mean < 1e-12);
  for (auto& c : corrs) c.p_prime += Vector2d(0.3, 0.4);
  CHECK(reprojection_error(Homography(h), corrs).mean == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(reprojection_error(Homography(h), {}), ValidationError);

  SUBCASE("unit Gaussian noise averages sqrt(pi / 2)") {
    std::mt19937 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    auto noisy = map_points(h, 1000, 6);
    for (auto& c : noisy) c.p_prime += Vector2d(n(rng), n(rng));
    const double expected = std::sqrt(std::numbers::pi / 2.0);
    CHECK(std::abs(reprojection_error(Homography(h), noisy).mean - expected) < 0.1 * expected);
  }

  SUBCASE("points mapped to infinity are excluded and counted") {
    Matrix3d p = Matrix3d::Identity();
    p(2, 0) = -0.01;  // w = 1 - 0.01 x vanishes at x = 100
    std::vector<Correspondence> cs{{Vector2d(100, 5), Vector2d(0, 0), 1}, {Vector2d(0, 0), Vector2d(3, 4), 1}};
    const auto e = reprojection_error(Homography(p), cs);
    CHECK(e.excluded == 1);
    CHECK(e.used == 1);
    CHECK(e.mean == doctest::Approx(5.0));
  }
}

TEST_CASE("normalized DLT recovers an exact homography") {
  Matrix3d h;
  h << 0.9, 0.05, 10, -0.04, 1.1, -3, 1e-4, 3e-4, 1;
  CHECK(max_abs(fit_homography(map_points(h, 8, 9)).matrix() - h) < 1e-9);
  CHECK_THROWS_AS(fit_homography(map_points(h, 3, 9)), ValidationError);
}

TEST_CASE("alternating solver on exact synthetic correspondences") {
  AlignParams p;
  p.threshold = 1e-6;
  p.max_iter = 20;
  for (unsigned seed = 1; seed <= 20; ++seed) {
    std::mt19937 rng(seed);
    const auto scene = testing::PlanarScene::random(rng, 3);
    const auto corrs = testing::sample_correspondences(scene, {40, 30, 30}, 0.0, rng);
    const auto r = align_view(corrs, p);
    CHECK(r.converged);
    CHECK(r.iterations <= 20);
    CHECK(r.error_trace.back() < 1e-6);
    CHECK(r.state.basis_patch == 1);
    CHECK(static_cast<int>(r.state.scale_d.size()) == 3);
  }
}

TEST_CASE("alternating solver under pixel noise") {
  AlignParams p;
  p.max_iter = 20;
  std::mt19937 rng(77);
  const auto scene = testing::PlanarScene::random(rng, 3);
  const auto corrs = testing::sample_correspondences(scene, {60, 50, 50}, 0.5, rng);
  const auto r = align_view(corrs, p);
  CHECK(static_cast<int>(r.error_trace.size()) == r.iterations);
  const double best = *std::min_element(r.error_trace.begin(), r.error_trace.end());
  CHECK(reprojection_error(r.state, corrs).mean == doctest::Approx(best));
  CHECK(best < 1.0);
  if (!r.converged) CHECK(r.iterations == p.max_iter);
}

TEST_CASE("align_view validates its input") {
  AlignParams p;
  CHECK_THROWS_AS(align_view(map_points(Matrix3d::Identity(), 5, 1), p), ValidationError);
  auto corrs = map_points(Matrix3d::Identity(), 10, 1);
  corrs.push_back({Vector2d(1, 2), Vector2d(1, 2), 3});
  CHECK_THROWS_AS(align_view(corrs, p), ValidationError);
  corrs.back().p_prime.x() = std::nan("");
  CHECK_THROWS_AS(align_view(corrs, p), ValidationError);
  p.threshold = 0;
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("reference view against itself is the identity") {
  const auto corrs = map_points(Matrix3d::Identity(), 30, 8);
  const auto r = align_view(corrs);
  CHECK(r.converged);
  CHECK(r.error_trace.back() < 1e-12);
  CHECK(max_abs(r.state.h1.matrix() - Matrix3d::Identity()) < 1e-12);
}

TEST_CASE("warping") {
  const Blobs tex(3, 40, 30);
  const Grid2D<float> img = tex.image(40, 30);
  CHECK(warp_image(img, Homography()) == img);

  Matrix3d shift = Matrix3d::Identity();
  shift(0, 2) = 3;
  const auto out = warp_image(img, Homography(shift));
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 37; ++x) CHECK(out(x, y) == img(x + 3, y));
    for (int x = 37; x < 40; ++x) CHECK(out(x, y) == img(39, y));
  }

  shift(0, 2) = 0.5;
  const auto half = warp_image(img, Homography(shift));
  CHECK(half(4, 7) == doctest::Approx(0.5 * (img(4, 7) + img(5, 7))).epsilon(1e-6));

  const LightField4D lf(2, 1, 40, 30, 1, [&] {
    std::vector<float> s(img.values());
    s.insert(s.end(), img.values().begin(), img.values().end());
    return s;
  }());
  CHECK(warp_lightfield(lf, {Homography(), Homography()}) == lf);
  CHECK_THROWS_AS(warp_lightfield(lf, {Homography()}), ValidationError);
}

TEST_CASE("correspondence files") {
  const auto parsed = parse_correspondences("# header\n1 10 20 11.5 20\n\n2 1e1 2 3 4  # trailing\n", "mem");
  REQUIRE(parsed.size() == 2);
  CHECK(parsed[0].patch_id == 1);
  CHECK(parsed[0].p_prime.x() == 11.5);
  CHECK(parsed[1].p.x() == 10.0);
  CHECK_THROWS_AS(parse_correspondences("1 2 3 4\n", "mem"), ValidationError);
  CHECK_THROWS_AS(parse_correspondences("0 1 2 3 4\n", "mem"), ValidationError);
  CHECK_THROWS_AS(parse_correspondences("1.5 1 2 3 4\n", "mem"), ValidationError);
  CHECK_THROWS_AS(parse_correspondences("1 1 2 nan 4\n", "mem"), ValidationError);
  CHECK_THROWS_AS(parse_correspondences("1 1 2 3x 4\n", "mem"), ValidationError);

  const auto dir = std::filesystem::temp_directory_path() / "lfdepth_test_corr";
  std::filesystem::create_directories(dir);
  const auto original = map_points(Matrix3d::Identity() * 1.0 + Matrix3d::Constant(1e-3), 12, 2, 2);
  write_correspondences(dir / "c.txt", original);
  const auto back = read_correspondences(dir / "c.txt");
  REQUIRE(back.size() == original.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].p == original[i].p);
    CHECK(back[i].p_prime == original[i].p_prime);
    CHECK(back[i].patch_id == 2);
  }
  CHECK_THROWS_AS(read_correspondences(dir / "missing.txt"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("feature matcher recovers an integer shift") {
  const Blobs tex(5, 90, 64);
  const auto ref = tex.image(80, 64);
  const auto target = tex.image(80, 64, 3.0);  // target(x) = ref(x + 3): content moves left
  const auto matches = match_features(ref, target);
  REQUIRE(matches.size() >= 20);
  Vector2d mean_offset = Vector2d::Zero();
  for (const auto& m : matches) {
    const Vector2d offset = m.p_prime - m.p - Vector2d(-3.0, 0.0);
    CHECK(offset.cwiseAbs().maxCoeff() < 0.25);
    mean_offset += offset / static_cast<double>(matches.size());
  }
  CHECK(mean_offset.norm() < 0.05);
  CHECK(match_features(ref, target).size() == matches.size());
  CHECK_THROWS_AS(match_features(ref, tex.image(10, 10)), ValidationError);
}

TEST_CASE("views pre-warped by a known homography") {
  const Blobs tex(9, 96, 96);
  const auto ref = tex.image(96, 96);
  Matrix3d g;  // target pixel -> reference pixel
  g << 1.01, 0.02, -2.5, -0.015, 0.99, 1.5, 1e-5, -2e-5, 1;
  const auto target = warp_image(ref, Homography(g));
  const auto corrs = match_features(ref, target);
  REQUIRE(corrs.size() >= 10);
  const auto r = align_view(corrs);
  const Homography truth(g.inverse());
  double worst = 0.0;
  for (int y = 10; y < 86; y += 5) {
    for (int x = 10; x < 86; x += 5) {
      worst = std::max(worst, (r.state.h1.apply(Vector2d(x, y)) - truth.apply(Vector2d(x, y))).norm());
    }
  }
  CHECK(worst < 0.5);
}

TEST_CASE("array of integer-shifted views aligns to pure translations") {
  const int views = 3, w = 64, h = 48, step = 2;
  const Blobs tex(4, w + 2 * step * views, h);
  std::vector<float> samples;
  for (int v = 0; v < views; ++v) {
    for (int u = 0; u < views; ++u) {
      const auto img = tex.image(w, h, step * (u - 1) + step * views);
      samples.insert(samples.end(), img.values().begin(), img.values().end());
    }
  }
  const LightField4D lf(views, views, w, h, 1, samples);
  const auto ref = lf.view(1, 1);
  std::vector<std::vector<Correspondence>> corrs(views * views);
  for (int v = 0; v < views; ++v) {
    for (int u = 0; u < views; ++u) {
      if (u != 1 || v != 1) corrs[v * views + u] = match_features(ref, lf.view(u, v));
    }
  }
  AlignParams p;
  p.threads = 2;
  const auto out = align_array(lf, corrs, p);
  CHECK(out.converged);
  CHECK(out.mean_error < 0.1);
  CHECK(out.views[4].state.h1.is_identity());
  for (int v = 0; v < views; ++v) {
    for (int u = 0; u < views; ++u) {
      Matrix3d expected = Matrix3d::Identity();
      expected(0, 2) = -step * (u - 1);
      CHECK(max_abs(out.views[v * views + u].state.h1.matrix() - expected) < 0.05);
    }
  }
  // Every warped view now matches the reference away from the clamped border.
  for (int u = 0; u < views; ++u) {
    const auto aligned = out.aligned.view(u, 0);
    for (int y = 5; y < h - 5; ++y) {
      for (int x = 5; x < w - 5; ++x) CHECK(std::abs(aligned(x, y) - ref(x, y)) < 0.02);
    }
  }

  AlignParams identity;
  identity.identity = true;
  const auto same = align_array(lf, {}, identity);
  CHECK(same.aligned == lf);
  CHECK(same.mean_error == 0.0);
  CHECK_THROWS_AS(align_array(lf, std::vector<std::vector<Correspondence>>(2), p), ValidationError);
}
