#include "doctest.h"

#include "otre/error.hpp"
#include "otre/image.hpp"
#include "otre/metrics.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace otre;

namespace {

std::filesystem::path scratch(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / "otre_imagekit_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

ErrorCode code_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.code();
  }
  return ErrorCode::Ok;
}

} // namespace

TEST_SUITE("imagekit") {

TEST_CASE("load_image scales 8-bit values by 1/255") {
  auto white = load_image(oracle::data_dir() / "white_1x1.png");
  CHECK(white.channels() == 3);
  CHECK(white.height() == 1);
  CHECK(white.width() == 1);
  for (double v : white.data())
    CHECK(v == 1.0);
  auto black = load_image(oracle::data_dir() / "black_1x1.png");
  for (double v : black.data())
    CHECK(v == 0.0);
}

TEST_CASE("load_image handles 16-bit, palette, alpha and gray PNGs") {
  auto g = load_image(oracle::data_dir() / "gray16_2x2.png");
  REQUIRE(g.channels() == 1);
  CHECK(g.at(0, 0, 0) == 0.0);
  CHECK(g.at(0, 0, 1) == 1.0);
  CHECK(g.at(0, 1, 0) == doctest::Approx(32768.0 / 65535.0).epsilon(1e-12));
  CHECK(g.at(0, 1, 1) == doctest::Approx(1000.0 / 65535.0).epsilon(1e-12));

  auto p = load_image(oracle::data_dir() / "palette_2x1.png");
  REQUIRE(p.channels() == 3);
  CHECK(p.at(0, 0, 0) == 1.0);
  CHECK(p.at(2, 0, 0) == 0.0);
  CHECK(p.at(0, 0, 1) == 0.0);
  CHECK(p.at(2, 0, 1) == 1.0);

  auto a = load_image(oracle::data_dir() / "rgba_1x1.png");
  REQUIRE(a.channels() == 3);
  CHECK(a.at(0, 0, 0) == 10.0 / 255.0);
  CHECK(a.at(2, 0, 0) == 30.0 / 255.0);

  auto gray = load_image(oracle::data_dir() / "gray_3x2.png");
  CHECK(gray.channels() == 1);
  CHECK(gray.height() == 2);
  CHECK(gray.width() == 3);
  CHECK(gray.at(0, 1, 2) == 128.0 / 255.0);
}

TEST_CASE("load_image decodes JPEG close to the lossless original") {
  auto png = load_image(oracle::data_dir() / "fundus_64.png");
  auto jpg = load_image(oracle::data_dir() / "fundus_64.jpg");
  REQUIRE(png.same_shape(jpg));
  CHECK(psnr(png, jpg) > 30.0);
}

TEST_CASE("load_image error categories") {
  CHECK(code_of([] { load_image(oracle::data_dir() / "does_not_exist.png"); }) == ErrorCode::MissingFile);
  CHECK(code_of([] { load_image(oracle::data_dir() / "not_an_image.png"); }) == ErrorCode::CorruptData);
  CHECK(code_of([] { load_image(oracle::data_dir() / "golden_8x8_expected.txt"); }) == ErrorCode::UnsupportedFormat);
}

TEST_CASE("8-bit PNG save/load round trip is exact") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int trial = 0; trial < 8; ++trial) {
    const int c = trial % 2 ? 1 : 3;
    ImageTensor img(c, 5 + trial, 9 + 2 * trial);
    for (double &v : img.data())
      v = byte(rng) / 255.0;
    const auto path = scratch("roundtrip.png");
    save_image(img, path);
    auto back = load_image(path);
    CHECK(back == img);
    const auto first = oracle::read_bytes(path);
    save_image(back, path);
    CHECK(oracle::read_bytes(path) == first);
  }
}

TEST_CASE("library PNG encoder matches the scripted reference encoder byte for byte") {
  auto img = load_image(oracle::data_dir() / "golden_8x8_input.png");
  const auto path = scratch("golden_input_copy.png");
  save_image(img, path);
  CHECK(oracle::read_bytes(path) == oracle::read_bytes(oracle::data_dir() / "golden_8x8_input.png"));
}

TEST_CASE("quantize_8bit rounds half up after clamping") {
  ImageTensor img(1, 1, 5, std::vector<double>{-0.5, 0.0, 0.5 / 255.0, 254.5 / 255.0, 2.0});
  const auto q = quantize_8bit(img);
  CHECK(q == std::vector<unsigned char>{0, 0, 1, 255, 255});
}

TEST_CASE("preprocess") {
  std::mt19937_64 rng(3);
  SUBCASE("side x side input is unchanged and preprocess is idempotent") {
    auto img = oracle::random_image(rng, 3, 32, 32);
    auto out = preprocess(img, 32);
    CHECK(out == img);
    CHECK(preprocess(out, 32) == out);
  }
  SUBCASE("wide input keeps the central columns") {
    auto img = oracle::random_image(rng, 1, 16, 32);
    auto out = preprocess(img, 16);
    REQUIRE(out.height() == 16);
    REQUIRE(out.width() == 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        CHECK(out.at(0, y, x) == img.at(0, y, x + 8));
  }
  SUBCASE("odd surplus breaks ties toward the top-left") {
    auto img = oracle::random_image(rng, 1, 7, 4);
    auto out = preprocess(img, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        CHECK(out.at(0, y, x) == img.at(0, y + 1, x));
  }
  SUBCASE("constant image stays constant") {
    ImageTensor img(3, 300, 300, 0.5);
    auto out = preprocess(img, 256);
    CHECK(out.height() == 256);
    for (double v : out.data())
      CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("linear ramp is resampled with half-pixel centers") {
    ImageTensor img(1, 8, 8);
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        img.at(0, y, x) = x / 7.0;
    auto out = preprocess(img, 4);
    for (int x = 0; x < 4; ++x)
      CHECK(out.at(0, 2, x) == doctest::Approx((2.0 * x + 0.5) / 7.0).epsilon(1e-12));
  }
}

TEST_CASE("psnr closed forms and oracle") {
  std::mt19937_64 rng(5);
  auto x = oracle::random_image(rng, 3, 16, 16, 0.0, 0.9);
  CHECK(psnr(x, x) == kPsnrCap);
  auto shifted = x;
  for (double &v : shifted.data())
    v += 0.1;
  CHECK(std::abs(psnr(x, shifted) - 20.0) <= 1e-6);
  for (int t = 0; t < 10; ++t) {
    auto a = oracle::random_image(rng, 3, 12, 17);
    auto b = oracle::random_image(rng, 3, 12, 17);
    CHECK(oracle::rel_diff(psnr(a, b), oracle::psnr(a, b)) <= 1e-9);
  }
}

TEST_CASE("psnr decreases as noise amplitude grows") {
  std::mt19937_64 rng(9);
  auto x = oracle::random_image(rng, 3, 32, 32, 0.2, 0.8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> noise(x.size());
  for (double &n : noise)
    n = u(rng);
  double last = kPsnrCap;
  for (double amp : {0.01, 0.05, 0.1}) {
    auto y = x;
    for (std::size_t i = 0; i < y.size(); ++i)
      y.data()[i] += amp * noise[i];
    const double p = psnr(x, y);
    CHECK(p < last);
    last = p;
  }
}

TEST_CASE("ssim closed forms, symmetry and direct-window oracle") {
  ImageTensor a(3, 16, 16, 0.2), b(3, 16, 16, 0.4);
  const double closed = (2 * 0.2 * 0.4 + 1e-4) / (0.2 * 0.2 + 0.4 * 0.4 + 1e-4);
  CHECK(std::abs(ssim(a, b) - closed) <= 1e-12);
  CHECK(std::abs(ssim(a, b) - 0.80011) <= 1e-4);

  std::mt19937_64 rng(21);
  for (int t = 0; t < 5; ++t) {
    auto x = oracle::random_image(rng, t % 2 ? 1 : 3, 20 + t, 24);
    auto y = oracle::random_image(rng, x.channels(), x.height(), x.width());
    CHECK(std::abs(ssim(x, x) - 1.0) <= 1e-6);
    CHECK(ssim(x, y) == ssim(y, x));
    CHECK(std::abs(ssim(x, y) - oracle::ssim(x, y)) <= 1e-10);
  }
}

TEST_CASE("metric argument errors") {
  ImageTensor a(3, 16, 16), b(3, 16, 15), small(3, 10, 10);
  CHECK(code_of([&] { psnr(a, b); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { ssim(a, b); }) == ErrorCode::ShapeMismatch);
  CHECK(code_of([&] { ssim(small, small); }) == ErrorCode::TooSmall);
  CHECK(code_of([&] { ms_ssim(small, small); }) == ErrorCode::TooSmall);
  SsimParams bad;
  bad.window_size = 10;
  CHECK(code_of([&] { ssim(a, a, bad); }) == ErrorCode::InvalidArgument);
  bad = {};
  bad.scale_weights = {0.5, 0.6};
  CHECK(code_of([&] { ms_ssim(a, a, bad); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("ms_ssim scale count") {
  CHECK(ms_ssim_scale_count(256, 256) == 5);
  CHECK(ms_ssim_scale_count(64, 64) == 5);
  CHECK(ms_ssim_scale_count(32, 40) == 5);
  CHECK(ms_ssim_scale_count(16, 16) == 4);
  CHECK(ms_ssim_scale_count(11, 11) == 3);
}

TEST_CASE("ms_ssim identity and closed form on constants") {
  std::mt19937_64 rng(4);
  auto x = oracle::random_image(rng, 3, 64, 64);
  auto r = ms_ssim_with_grad(x, x);
  CHECK(std::abs(r.value - 1.0) <= 1e-6);
  CHECK(max_abs(r.grad) <= 1e-6);
  CHECK(r.grad.same_shape(x));

  ImageTensor a(3, 64, 64, 0.2), b(3, 64, 64, 0.4);
  const double closed = std::pow((2 * 0.2 * 0.4 + 1e-4) / (0.2 * 0.2 + 0.4 * 0.4 + 1e-4), 0.1333);
  CHECK(std::abs(ms_ssim(a, b) - closed) <= 1e-12);
  CHECK(std::abs(ms_ssim(a, b) - 0.9708) <= 1e-4);
  auto loss = fidelity_loss(a, b);
  CHECK(std::abs(loss.value - 0.0292) <= 1e-4);
}

TEST_CASE("ms_ssim value matches the direct-window oracle") {
  std::mt19937_64 rng(17);
  for (auto [h, w] : {std::pair{64, 64}, {48, 40}, {16, 16}, {13, 21}}) {
    auto a = oracle::random_image(rng, 3, h, w);
    auto b = a;
    for (double &v : b.data())
      v = std::clamp(v + 0.2 * (double(rng() % 1000) / 1000.0 - 0.5), 0.0, 1.0);
    CHECK(std::abs(ms_ssim(a, b) - oracle::ms_ssim(a, b)) <= 1e-10);
    CHECK(ms_ssim(a, b) == ms_ssim(b, a));
  }
}

TEST_CASE("ms_ssim gradient matches central differences") {
  std::mt19937_64 rng(1234);
  int checked = 0;
  double worst = 0.0;
  for (int pair = 0; pair < 3; ++pair) {
    auto a = oracle::random_image(rng, 3, 32, 32);
    auto b = a;
    std::normal_distribution<double> n(0.0, 0.1);
    for (double &v : b.data())
      v = std::clamp(v + n(rng), 0.0, 1.0);
    const auto r = ms_ssim_with_grad(a, b);
    const double scale = max_abs(r.grad);
    std::uniform_int_distribution<std::size_t> pick(0, a.size() - 1);
    for (int s = 0; s < 40; ++s) {
      const std::size_t i = pick(rng);
      auto ap = a, am = a;
      ap.data()[i] += 1e-4;
      am.data()[i] -= 1e-4;
      const double fd = (ms_ssim(ap, b) - ms_ssim(am, b)) / 2e-4;
      const double err = std::abs(fd - r.grad.data()[i]) / std::max(std::abs(r.grad.data()[i]), 1e-2 * scale);
      worst = std::max(worst, err);
      ++checked;
    }
  }
  CHECK(checked == 120);
  CHECK(worst <= 1e-4);
}

TEST_CASE("fidelity gradient is a descent direction") {
  std::mt19937_64 rng(77);
  auto y = oracle::smooth_image(rng, 3, 64, 64);
  auto x = y;
  std::normal_distribution<double> n(0.0, 0.05);
  for (double &v : x.data())
    v = std::clamp(v + n(rng), 0.0, 1.0);
  auto l0 = fidelity_loss(x, y);
  CHECK(l0.value > 0.0);
  for (double step : {1e-1, 1.0, 10.0}) {
    auto xs = x;
    for (std::size_t i = 0; i < xs.size(); ++i)
      xs.data()[i] -= step * l0.grad.data()[i];
    CHECK(fidelity_loss(xs, y).value < l0.value);
  }
}

} // TEST_SUITE
