#include "cfftgan/data/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "cfftgan/numcore/error.hpp"

namespace cfftgan::data {

using num::Tensor;

std::vector<std::uint8_t> encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("save_image: expected (3,H,W), got " + num::to_string(image.shape()));
  }
  const int h = image.dim(1), w = image.dim(2);
  const std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const std::vector<double> v = image.to_vector();
  out.reserve(out.size() + v.size());
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (int c = 0; c < 3; ++c) {
        const double x = v[static_cast<std::size_t>((c * h + i) * w + j)];
        if (std::isnan(x)) throw NumericError("save_image: NaN pixel");
        // nearbyint uses the default round-to-nearest-even mode.
        const double q = std::nearbyint(std::clamp((x + 1.0) * 127.5, 0.0, 255.0));
        out.push_back(static_cast<std::uint8_t>(q));
      }
    }
  }
  return out;
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  // Next whitespace-separated token, skipping '#' comments.
  std::string token() {
    for (;;) {
      while (pos_ < b_.size() && std::isspace(b_[pos_])) ++pos_;
      if (pos_ < b_.size() && b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    std::string t;
    while (pos_ < b_.size() && !std::isspace(b_[pos_]) && b_[pos_] != '#') t.push_back(static_cast<char>(b_[pos_++]));
    if (t.empty()) throw FormatError("ppm: malformed header (unexpected end)");
    return t;
  }

  long number(const char* what) {
    const std::string t = token();
    if (t.size() > 9 || !std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      throw FormatError(std::string("ppm: malformed header (") + what + " '" + t + "')");
    }
    return std::stol(t);
  }

  // Exactly one whitespace byte separates maxval from the payload.
  std::size_t payload_start() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) throw FormatError("ppm: malformed header (no separator)");
    return pos_ + 1;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader r(bytes);
  if (r.token() != "P6") throw FormatError("ppm: malformed header (magic is not P6)");
  const long w = r.number("width");
  const long h = r.number("height");
  const long maxval = r.number("maxval");
  if (w < 1 || h < 1) throw FormatError("ppm: malformed header (empty image)");
  if (maxval < 1 || maxval > 255) throw FormatError("ppm: unsupported maxval " + std::to_string(maxval));
  const std::size_t start = r.payload_start();
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() < start + need) {
    throw FormatError("ppm: truncated payload (" + std::to_string(bytes.size() - std::min(bytes.size(), start)) +
                      " of " + std::to_string(need) + " bytes)");
  }
  std::vector<double> v(need);
  const int H = static_cast<int>(h), W = static_cast<int>(w);
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j) {
      for (int c = 0; c < 3; ++c) {
        const std::uint8_t q = bytes[start + static_cast<std::size_t>((i * W + j) * 3 + c)];
        if (q > maxval) throw FormatError("ppm: sample exceeds maxval");
        v[static_cast<std::size_t>((c * H + i) * W + j)] = 2.0 * q / static_cast<double>(maxval) - 1.0;
      }
    }
  }
  return Tensor::from_values({3, H, W}, v);
}

void save_image(const Tensor& image, const std::string& path) {
  const std::vector<std::uint8_t> bytes = encode_ppm(image);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_image: cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("save_image: write to '" + path + "' failed");
}

Tensor load_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_image: cannot open '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

Tensor tile_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw ShapeError("tile_images: no images");
  const num::Shape s = images.front().shape();
  if (s.size() != 3) throw ShapeError("tile_images: expected (C,H,W) images");
  const int c = s[0], h = s[1], w = s[2];
  const int n = static_cast<int>(images.size());
  const int total_w = n * w + (n - 1);
  std::vector<double> out(static_cast<std::size_t>(c * h * total_w), -1.0);
  for (int k = 0; k < n; ++k) {
    if (images[static_cast<std::size_t>(k)].shape() != s) throw ShapeError("tile_images: mixed shapes");
    const std::vector<double> v = images[static_cast<std::size_t>(k)].to_vector();
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          out[static_cast<std::size_t>((ch * h + i) * total_w + k * (w + 1) + j)] =
              v[static_cast<std::size_t>((ch * h + i) * w + j)];
        }
      }
    }
  }
  return Tensor::from_values({c, h, total_w}, out);
}

}  // namespace cfftgan::data
