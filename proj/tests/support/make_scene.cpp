// Writes a noisy two-plane scene directory: make_scene <dir> [views] [size] [--no-gt]
#include <cstdlib>
#include <cstring>
#include <iostream>

#include "synthetic.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: make_scene <dir> [views] [size] [--no-gt]\n";
    return 2;
  }
  const int views = argc > 2 ? std::atoi(argv[2]) : 5;
  const int size = argc > 3 ? std::atoi(argv[3]) : 40;
  const bool gt = !(argc > 4 && std::strcmp(argv[4], "--no-gt") == 0);
  auto scene = lfd::testing::two_plane_scene(3, views, size);
  scene.noise_sigma = 0.02;
  lfd::testing::write_scene(scene, argv[1], gt);
}
