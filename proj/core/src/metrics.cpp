// Copyright 2026 The xfields Authors.
// SPDX-License-Identifier: Apache-2.0

#include "xfields/metrics.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"

namespace xfields::metrics {
namespace {

void require_same_shape(const Tensor<float>& a, const Tensor<float>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ, " + ad::shape_to_string(a.shape()) +
                     " vs " + ad::shape_to_string(b.shape()));
  }
  if (a.empty()) throw ShapeError(std::string(op) + ": empty image");
}

void require_rgb(const Tensor<float>& image, const char* op) {
  if (image.rank() != 3 || image.extent(2) != 3) {
    throw ShapeError(std::string(op) + " expects H x W x 3, got " +
                     ad::shape_to_string(image.shape()));
  }
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

/// Valid-region separable Gaussian filter of a row-major h x w plane.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w,
                                 const std::array<double, kWindow>& k) {
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * in[y * w + x + i];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

double finite_or_sentinel(double v) { return std::isinf(v) ? kPsnrSentinel : v; }

}  // namespace

double mse(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    total += d * d;
  }
  return total / static_cast<double>(a.size());
}

double psnr_from_mse(double m) {
  if (m < 0.0 || std::isnan(m)) throw ConfigError("mse must be non-negative");
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
  return psnr_from_mse(mse(a, b));
}

std::vector<double> luma(const Tensor<float>& image) {
  require_rgb(image, "luma");
  const std::size_t n = image.extent(0) * image.extent(1);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = 0.299 * image[i * 3] + 0.587 * image[i * 3 + 1] + 0.114 * image[i * 3 + 2];
  }
  return out;
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  require_same_shape(a, b, "ssim");
  require_rgb(a, "ssim");
  const std::size_t h = a.extent(0), w = a.extent(1);
  if (h < kWindow || w < kWindow) {
    throw ShapeError("ssim needs images of at least 11 x 11, got " +
                     ad::shape_to_string(a.shape()));
  }
  const std::vector<double> x = luma(a);
  const std::vector<double> y = luma(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = gaussian_window();
  const auto mx = filter_valid(x, h, w, k);
  const auto my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k);
  const auto syy = filter_valid(yy, h, w, k);
  const auto sxy = filter_valid(xy, h, w, k);

  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  // For identical inputs num and den are computed by the same roundings, so
  // every window contributes exactly 1.
  return total / static_cast<double>(mx.size());
}

Tensor<float> epipolar_slice(std::span<const Tensor<float>> sequence, std::size_t row) {
  if (sequence.empty()) throw ConfigError("epipolar_slice: empty sequence");
  const ad::Shape& shape = sequence[0].shape();
  if (shape.size() != 3) throw ShapeError("epipolar_slice expects H x W x C images");
  for (const auto& img : sequence) {
    if (img.shape() != shape) {
      throw ShapeError("epipolar_slice: image sizes differ, " + ad::shape_to_string(shape) +
                       " vs " + ad::shape_to_string(img.shape()));
    }
  }
  if (row >= shape[0]) {
    throw ConfigError("epipolar_slice: row " + std::to_string(row) + " out of range [0, " +
                      std::to_string(shape[0]) + ")");
  }
  const std::size_t w = shape[1], c = shape[2];
  Tensor<float> out({sequence.size(), w, c});
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    const float* src = sequence[i].ptr() + row * w * c;
    std::copy(src, src + w * c, out.ptr() + i * w * c);
  }
  return out;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& s : images) {
    nlohmann::ordered_json r;
    r["index"] = s.index;
    r["coord"] = s.coord.values();
    r["mse"] = s.mse;
    r["psnr_db"] = finite_or_sentinel(s.psnr_db);
    r["ssim"] = s.ssim;
    r["render_ms"] = s.render_ms;
    rows.push_back(std::move(r));
  }
  doc["images"] = std::move(rows);
  doc["mean_mse"] = mean_mse;
  doc["mean_psnr_db"] = finite_or_sentinel(mean_psnr_db);
  doc["mean_ssim"] = mean_ssim;
  doc["total_render_ms"] = total_render_ms;
  doc["mean_render_ms"] = mean_render_ms;
  doc["psnr_sentinel"] = kPsnrSentinel;
  return doc.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::string out = "index,coord,mse,psnr_db,ssim,render_ms\n";
  char buf[256];
  for (const auto& s : images) {
    std::string coord;
    for (std::size_t i = 0; i < s.coord.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.17g", i ? " " : "", s.coord[i]);
      coord += buf;
    }
    std::snprintf(buf, sizeof(buf), "%zu,%s,%.17g,%.17g,%.17g,%.3f\n", s.index,
                  coord.c_str(), s.mse, finite_or_sentinel(s.psnr_db), s.ssim, s.render_ms);
    out += buf;
  }
  return out;
}

EvalReport evaluate(const RenderFn& render, std::span<const Observation> heldout,
                    std::span<const std::size_t> indices) {
  if (heldout.empty()) throw ConfigError("evaluate: the held-out set is empty");
  if (!indices.empty() && indices.size() != heldout.size()) {
    throw ConfigError("evaluate: index labels do not match the held-out set");
  }
  EvalReport report;
  for (std::size_t i = 0; i < heldout.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Tensor<float> prediction = render(heldout[i].coord);
    const auto stop = std::chrono::steady_clock::now();
    ImageScore s;
    s.index = indices.empty() ? i : indices[i];
    s.coord = heldout[i].coord;
    s.mse = mse(prediction, heldout[i].image);
    s.psnr_db = psnr_from_mse(s.mse);
    s.ssim = ssim(prediction, heldout[i].image);
    s.render_ms = std::chrono::duration<double, std::milli>(stop - start).count();
    report.images.push_back(std::move(s));
  }
  const double n = static_cast<double>(report.images.size());
  for (const auto& s : report.images) {
    report.mean_mse += s.mse / n;
    report.mean_psnr_db += s.psnr_db / n;
    report.mean_ssim += s.ssim / n;
    report.total_render_ms += s.render_ms;
  }
  report.mean_render_ms = report.total_render_ms / n;
  return report;
}

}  // namespace xfields::metrics
