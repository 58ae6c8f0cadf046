#ifndef HMVAE_RENDER_HPP_
#define HMVAE_RENDER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hmvae/analysis.hpp"
#include "hmvae/data.hpp"
#include "hmvae/errors.hpp"
#include "hmvae/io_util.hpp"

namespace hmvae {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

/// Diverging blue-white-red colormap over t in [-1, 1].
inline Rgb diverging_color(double t) {
  t = std::clamp(t, -1.0, 1.0);
  const auto lerp = [](int a, int b, double u) {
    return static_cast<std::uint8_t>(std::lround(a + (b - a) * u));
  };
  // coolwarm-style endpoints
  constexpr int kCold[3] = {59, 76, 192};
  constexpr int kMid[3] = {255, 255, 255};
  constexpr int kHot[3] = {180, 4, 38};
  Rgb c;
  if (t < 0) {
    c.r = lerp(kMid[0], kCold[0], -t);
    c.g = lerp(kMid[1], kCold[1], -t);
    c.b = lerp(kMid[2], kCold[2], -t);
  } else {
    c.r = lerp(kMid[0], kHot[0], t);
    c.g = lerp(kMid[1], kHot[1], t);
    c.b = lerp(kMid[2], kHot[2], t);
  }
  return c;
}

inline Rgb grey_out(Rgb c) {
  const auto mix = [](std::uint8_t v) {
    return static_cast<std::uint8_t>((static_cast<int>(v) + 3 * 128) / 4);
  };
  return {mix(c.r), mix(c.g), mix(c.b)};
}

/// Render a projection map through its mask as a binary PPM (P6): 2-D grids
/// as one heat plane, 3-D volumes as a tile grid of axial slices.
/// Sub-threshold voxels are greyed; bytes are deterministic.
inline void render_montage(const ProjectionMap& map, const VolumeMask& mask,
                           const std::filesystem::path& path) {
  if (static_cast<std::size_t>(map.values.size()) != mask.coords.size())
    throw ShapeError("render_montage: map length " + std::to_string(map.values.size()) +
                     " != mask voxel count " + std::to_string(mask.coords.size()));
  if (map.supra_mask.size() != static_cast<std::size_t>(map.values.size()))
    throw ShapeError("render_montage: supra mask length mismatch");

  const bool planar = mask.dims.size() == 2;
  Eigen::Index width = 0, height = 0;
  int tiles_across = 1;
  if (planar) {
    height = mask.dims[0];
    width = mask.dims[1];
  } else if (mask.dims.size() == 3) {
    const int nz = mask.dims[2];
    tiles_across = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(nz))));
    const int tiles_down = (nz + tiles_across - 1) / tiles_across;
    width = static_cast<Eigen::Index>(tiles_across) * mask.dims[0];
    height = static_cast<Eigen::Index>(tiles_down) * mask.dims[1];
  } else {
    throw ShapeError("render_montage: mask must be 2-D or 3-D");
  }

  const double vmax = map.values.abs().maxCoeff();
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height * 3, 0);
  for (std::size_t d = 0; d < mask.coords.size(); ++d) {
    const auto& co = mask.coords[d];
    Eigen::Index px, py;
    if (planar) {
      py = co[0];
      px = co[1];
    } else {
      const int z = co[2];
      const int tile_col = z % tiles_across;
      const int tile_row = z / tiles_across;
      px = static_cast<Eigen::Index>(tile_col) * mask.dims[0] + co[0];
      py = static_cast<Eigen::Index>(tile_row) * mask.dims[1] + co[1];
    }
    const double t = vmax > 0 ? map.values[static_cast<Eigen::Index>(d)] / vmax : 0.0;
    Rgb c = diverging_color(t);
    if (!map.supra_mask[d]) c = grey_out(c);
    const std::size_t at = (static_cast<std::size_t>(py) * width + px) * 3;
    pixels[at] = c.r;
    pixels[at + 1] = c.g;
    pixels[at + 2] = c.b;
  }

  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  atomic_write_file(path, out);
}

}  // namespace hmvae

#endif  // HMVAE_RENDER_HPP_
