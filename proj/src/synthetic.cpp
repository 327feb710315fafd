#include "rc/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

namespace rc {
namespace {

constexpr int kShapes = 10;
constexpr double kPi = std::numbers::pi;

struct Rgb {
  double r, g, b;
};

Rgb hsv(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const int i = static_cast<int>(h);
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

/// Shape membership in normalised object coordinates (object radius ~1).
bool inside(int shape, double x, double y) {
  const double r = std::hypot(x, y);
  switch (shape) {
    case 0: return r < 1.0;                                                     // disc
    case 1: return r > 0.55 && r < 1.0;                                         // ring
    case 2: return std::max(std::abs(x), std::abs(y)) < 0.85;                   // square
    case 3: return std::abs(x) + std::abs(y) < 1.1;                             // diamond
    case 4: return y > -0.8 && y < 0.8 && std::abs(x) < (y + 0.8) * 0.62;       // triangle
    case 5: return (std::abs(x) < 0.3 && std::abs(y) < 1) || (std::abs(y) < 0.3 && std::abs(x) < 1);  // cross
    case 6: return std::abs(x) < 1 && std::abs(std::abs(y) - 0.45) < 0.22;      // two bars
    case 7: return std::max(std::abs(x), std::abs(y)) < 1 &&
                   (static_cast<int>(std::floor(x * 2) + std::floor(y * 2)) & 1) == 0;  // checker
    case 8: return r < 1.0 && std::hypot(x - 0.45, y) > 0.75;                   // crescent
    default: return std::hypot(std::abs(x) - 0.55, y) < 0.45;                   // blob pair
  }
}

struct ClassLook {
  int shape;
  double hue;
};

ClassLook look_of(const SyntheticSpec& spec, int label) {
  const int classes = static_cast<int>(class_count(spec.variant));
  if (classes <= kShapes) return {label % kShapes, 360.0 * label / classes};
  // c100: shape x hue-band grid.
  return {label % kShapes, 36.0 * (label / kShapes)};
}

void draw_object(std::array<double, kImageBytes>& img, const ClassLook& look, double nuisance, double alpha,
                 std::mt19937_64& gen) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double side = static_cast<double>(kImageSide);
  const double cx = side / 2 + n01(gen) * (2.0 + 4.0 * nuisance);
  const double cy = side / 2 + n01(gen) * (2.0 + 4.0 * nuisance);
  const double scale = 8.0 + 4.0 * u01(gen) - 2.0 * nuisance * u01(gen);
  const double theta = n01(gen) * (0.25 + 0.9 * nuisance);
  const double hue = look.hue + n01(gen) * (12.0 + 45.0 * nuisance);
  const Rgb col = hsv(hue, 0.55 + 0.4 * u01(gen), 0.55 + 0.4 * u01(gen));
  const double c = std::cos(theta), s = std::sin(theta);
  const std::size_t plane = kImageSide * kImageSide;
  for (std::size_t py = 0; py < kImageSide; ++py) {
    for (std::size_t px = 0; px < kImageSide; ++px) {
      const double dx = (static_cast<double>(px) + 0.5 - cx) / scale;
      const double dy = (static_cast<double>(py) + 0.5 - cy) / scale;
      if (!inside(look.shape, c * dx + s * dy, -s * dx + c * dy)) continue;
      const std::size_t p = py * kImageSide + px;
      img[p] = (1 - alpha) * img[p] + alpha * col.r;
      img[plane + p] = (1 - alpha) * img[plane + p] + alpha * col.g;
      img[2 * plane + p] = (1 - alpha) * img[2 * plane + p] + alpha * col.b;
    }
  }
}

void render_one(const SyntheticSpec& spec, int label, std::mt19937_64& gen, std::uint8_t* out) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);
  const int classes = static_cast<int>(class_count(spec.variant));
  // Skewed towards easy images, with a long tail of hard ones.
  const double nuisance = std::pow(u01(gen), 1.6);

  std::array<double, kImageBytes> img{};
  const std::size_t plane = kImageSide * kImageSide;
  const Rgb a = hsv(360 * u01(gen), 0.6 * u01(gen), 0.2 + 0.7 * u01(gen));
  const Rgb b = hsv(360 * u01(gen), 0.6 * u01(gen), 0.2 + 0.7 * u01(gen));
  const double angle = 2 * kPi * u01(gen);
  const double gx = std::cos(angle), gy = std::sin(angle);
  for (std::size_t py = 0; py < kImageSide; ++py) {
    for (std::size_t px = 0; px < kImageSide; ++px) {
      const double t = 0.5 + ((static_cast<double>(px) - 15.5) * gx + (static_cast<double>(py) - 15.5) * gy) / 44.0;
      const std::size_t p = py * kImageSide + px;
      img[p] = a.r + (b.r - a.r) * t;
      img[plane + p] = a.g + (b.g - a.g) * t;
      img[2 * plane + p] = a.b + (b.b - a.b) * t;
    }
  }

  // Distractor from another class, drawn underneath; opacity grows with nuisance.
  if (u01(gen) < 0.3 + 0.7 * nuisance) {
    int other = static_cast<int>(u01(gen) * (classes - 1));
    if (other >= label) ++other;
    draw_object(img, look_of(spec, other), nuisance, 0.25 + 0.6 * nuisance, gen);
  }
  draw_object(img, look_of(spec, label), nuisance, 1.0 - 0.35 * nuisance, gen);

  const double sigma = 0.03 + 0.16 * nuisance;
  for (std::size_t i = 0; i < kImageBytes; ++i) {
    const double v = img[i] + sigma * n01(gen);
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  }
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

/// Round-robin interleave of per-class record blocks.
std::vector<std::uint8_t> interleave(const std::vector<std::vector<std::uint8_t>>& per_class, std::size_t rec) {
  std::vector<std::uint8_t> out;
  std::size_t total = 0;
  for (const auto& c : per_class) total += c.size();
  out.reserve(total);
  for (std::size_t i = 0; out.size() < total; ++i) {
    for (const auto& c : per_class) {
      if ((i + 1) * rec <= c.size()) out.insert(out.end(), c.begin() + i * rec, c.begin() + (i + 1) * rec);
    }
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> render_records(const SyntheticSpec& spec, int label, std::size_t count,
                                         std::uint64_t stream_seed) {
  const std::size_t rec = record_length(spec.variant);
  std::vector<std::uint8_t> out(rec * count);
  std::mt19937_64 gen(stream_seed);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint8_t* r = out.data() + i * rec;
    if (spec.variant == Variant::c10) {
      r[0] = static_cast<std::uint8_t>(label);
    } else {
      r[0] = static_cast<std::uint8_t>(label / 5);  // coarse label
      r[1] = static_cast<std::uint8_t>(label);
    }
    render_one(spec, label, gen, r + (rec - kImageBytes));
  }
  return out;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec) {
  std::filesystem::create_directories(dir);
  const std::size_t rec = record_length(spec.variant);
  const int classes = static_cast<int>(class_count(spec.variant));
  std::vector<std::vector<std::uint8_t>> train, test;
  for (int c = 0; c < classes; ++c) {
    const auto cu = static_cast<std::uint64_t>(c);
    train.push_back(render_records(spec, c, spec.train_per_class, derive_seed(spec.seed, 11, cu)));
    test.push_back(render_records(spec, c, spec.test_per_class, derive_seed(spec.seed, 12, cu)));
  }
  const auto train_bytes = interleave(train, rec);
  const auto test_bytes = interleave(test, rec);
  if (spec.variant == Variant::c10) {
    const std::size_t n = train_bytes.size() / rec;
    for (std::size_t b = 0; b < 5; ++b) {
      const std::size_t lo = n * b / 5, hi = n * (b + 1) / 5;
      write_file(dir / ("data_batch_" + std::to_string(b + 1) + ".bin"),
                 std::vector<std::uint8_t>(train_bytes.begin() + lo * rec, train_bytes.begin() + hi * rec));
    }
    write_file(dir / "test_batch.bin", test_bytes);
  } else {
    write_file(dir / "train.bin", train_bytes);
    write_file(dir / "test.bin", test_bytes);
  }
}

}  // namespace rc
