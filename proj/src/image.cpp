#include "edgefield/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace edgefield {

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(data.begin(), data.end(), std::uint8_t{1}));
}

Mask threshold(const Image& img, double thr) {
  if (img.channels != 1) throw InvalidArgument("threshold expects a single-channel image");
  Mask out(img.width, img.height);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = img.data[i] > thr ? 1 : 0;
  return out;
}

double sample_bilinear(const Mask& mask, double x, double y) {
  const double fx = std::clamp(x, 0.0, static_cast<double>(mask.width - 1));
  const double fy = std::clamp(y, 0.0, static_cast<double>(mask.height - 1));
  const int x0 = std::min(static_cast<int>(std::floor(fx)), mask.width - 1);
  const int y0 = std::min(static_cast<int>(std::floor(fy)), mask.height - 1);
  const int x1 = std::min(x0 + 1, mask.width - 1);
  const int y1 = std::min(y0 + 1, mask.height - 1);
  const double tx = fx - x0;
  const double ty = fy - y0;
  const double top = (1.0 - tx) * mask.at(x0, y0) + tx * mask.at(x1, y0);
  const double bottom = (1.0 - tx) * mask.at(x0, y1) + tx * mask.at(x1, y1);
  return (1.0 - ty) * top + ty * bottom;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Mask& mask) {
  auto out = open_for_write(path);
  out << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::vector<char> bytes(mask.data.size());
  std::transform(mask.data.begin(), mask.data.end(), bytes.begin(),
                 [](std::uint8_t v) { return static_cast<char>(v ? 255 : 0); });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(const std::filesystem::path& path, const Image& gray) {
  if (gray.channels != 1) throw InvalidArgument("write_pgm expects a single-channel image");
  auto out = open_for_write(path);
  out << "P5\n" << gray.width << ' ' << gray.height << "\n255\n";
  std::vector<char> bytes(gray.data.size());
  std::transform(gray.data.begin(), gray.data.end(), bytes.begin(),
                 [](double v) { return static_cast<char>(to_byte(v)); });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_ppm(const std::filesystem::path& path, const Image& rgb) {
  if (rgb.channels != 3) throw InvalidArgument("write_ppm expects a three-channel image");
  auto out = open_for_write(path);
  out << "P6\n" << rgb.width << ' ' << rgb.height << "\n255\n";
  std::vector<char> bytes(rgb.data.size());
  std::transform(rgb.data.begin(), rgb.data.end(), bytes.begin(),
                 [](double v) { return static_cast<char>(to_byte(v)); });
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Mask read_pgm_mask(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  auto next_token = [&in]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw Error("truncated PGM header");
  };
  if (next_token() != "P5") throw Error("'" + path.string() + "' is not a binary PGM (P5)");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) throw Error("unsupported PGM geometry");
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw Error("truncated PGM data");
  Mask mask(w, h);
  const int half = (maxval + 1) / 2;
  for (std::size_t i = 0; i < bytes.size(); ++i) mask.data[i] = bytes[i] >= half ? 1 : 0;
  return mask;
}

}  // namespace edgefield
