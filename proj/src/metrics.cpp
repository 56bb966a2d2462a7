#include "confill/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>

#include "confill/error.hpp"
#include "confill/rng.hpp"

namespace confill {

MethodId parse_method(std::string_view name) {
  if (name == "confill_cad") return MethodId::ConFillCad;
  if (name == "confill_wd") return MethodId::ConFillWd;
  if (name == "confill_l2") return MethodId::ConFillL2;
  if (name == "blend") return MethodId::Blend;
  throw ConfigError("unknown method '" + std::string(name) +
                    "' (expected confill_cad, confill_wd, confill_l2 or blend)");
}

std::string_view to_string(MethodId method) {
  switch (method) {
    case MethodId::ConFillCad: return "confill_cad";
    case MethodId::ConFillWd: return "confill_wd";
    case MethodId::ConFillL2: return "confill_l2";
    case MethodId::Blend: return "blend";
  }
  return "blend";
}

Image blend_baseline(const Image& r0, const Mask& mask, const Model& model, std::uint64_t seed) {
  CONFILL_REQUIRE(mask.matches(r0), "blend_baseline: image and mask shapes differ");
  const NoiseSchedule& sched = model.schedule;
  Rng rng(derive_seed(seed, "blend"));
  auto normal = [&] {
    Image n(r0.width(), r0.height());
    for (double& v : n.pixels()) v = rng.normal();
    return n;
  };
  Image x = normal();
  Image x0;
  for (int t = sched.steps(); t >= 1; --t) {
    x0 = predict_x0(x, model.predict_noise(x, t), t, sched);
    if (t == 1) break;
    const Image mean = ddim_mean(x, x0, t, sched);
    const Image xi = normal();
    const double sigma = sched.sigma(t);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mean[i] + sigma * xi[i];
    const Image known = q_sample(r0, t - 1, normal(), sched);
    for (std::size_t p = 0; p < x.size(); ++p)
      if (mask.known(p)) x[p] = known[p];
  }
  for (double& v : x0.pixels()) v = std::clamp(v, 0.0, 1.0);
  return composite(r0, x0, mask);
}

// ---------------------------------------------------------------------------
// Metrics

Image ssim_map(const Image& a, const Image& b) {
  CONFILL_REQUIRE(a.same_shape(b), "ssim: image shapes differ");
  CONFILL_REQUIRE(a.width() >= kSsimWindow && a.height() >= kSsimWindow, "ssim: image smaller than 7x7");
  const int ow = a.width() - kSsimWindow + 1, oh = a.height() - kSsimWindow + 1;
  const double n = kSsimWindow * kSsimWindow;
  Image out(ow, oh);
  for (int y0 = 0; y0 < oh; ++y0)
    for (int x0 = 0; x0 < ow; ++x0) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = y0; y < y0 + kSsimWindow; ++y)
        for (int x = x0; x < x0 + kSsimWindow; ++x) {
          const double va = a.at(x, y), vb = b.at(x, y);
          sa += va;
          sb += vb;
          saa += va * va;
          sbb += vb * vb;
          sab += va * vb;
        }
      const double ma = sa / n, mb = sb / n;
      const double va = saa / n - ma * ma, vb = sbb / n - mb * mb, cov = sab / n - ma * mb;
      out.at(x0, y0) = ((2 * ma * mb + kSsimC1) * (2 * cov + kSsimC2)) /
                       ((ma * ma + mb * mb + kSsimC1) * (va + vb + kSsimC2));
    }
  return out;
}

double ssim(const Image& a, const Image& b) {
  if (a == b) {
    CONFILL_REQUIRE(a.width() >= kSsimWindow && a.height() >= kSsimWindow, "ssim: image smaller than 7x7");
    return 1.0;
  }
  const Image m = ssim_map(a, b);
  double s = 0.0;
  for (double v : m.pixels()) s += v;
  return s / static_cast<double>(m.size());
}

double ssim_masked(const Image& a, const Image& b, const Mask& mask) {
  CONFILL_REQUIRE(mask.matches(a), "ssim_masked: mask shape mismatch");
  const Image m = ssim_map(a, b);
  double s = 0.0;
  std::size_t count = 0;
  for (int y0 = 0; y0 < m.height(); ++y0)
    for (int x0 = 0; x0 < m.width(); ++x0) {
      bool touches = false;
      for (int y = y0; y < y0 + kSsimWindow && !touches; ++y)
        for (int x = x0; x < x0 + kSsimWindow; ++x)
          if (!mask.known(x, y)) {
            touches = true;
            break;
          }
      if (!touches) continue;
      s += m.at(x0, y0);
      ++count;
    }
  CONFILL_REQUIRE(count > 0, "ssim_masked: mask has no unknown pixels");
  return s / static_cast<double>(count);
}

double masked_mse(const Image& a, const Image& b, const Mask& mask) {
  CONFILL_REQUIRE(a.same_shape(b) && mask.matches(a), "masked_mse: shape mismatch");
  CONFILL_REQUIRE(mask.unknown_count() > 0, "masked_mse: mask has no unknown pixels");
  double s = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p)
    if (!mask.known(p)) s += (a[p] - b[p]) * (a[p] - b[p]);
  return s / static_cast<double>(mask.unknown_count());
}

double psnr_from_mse(double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double psnr(const Image& a, const Image& b, const Mask& mask) { return psnr_from_mse(masked_mse(a, b, mask)); }

// ---------------------------------------------------------------------------
// Benchmark

std::uint64_t bench_cell_seed(std::uint64_t global, int image_id, MaskKind mask, MethodId method) {
  std::uint64_t s = derive_seed(global, static_cast<std::uint64_t>(image_id));
  s = derive_seed(s, to_string(mask));
  return derive_seed(s, to_string(method));
}

std::uint64_t bench_mask_seed(std::uint64_t global, int image_id, MaskKind mask) {
  return derive_seed(derive_seed(derive_seed(global, "mask"), static_cast<std::uint64_t>(image_id)), to_string(mask));
}

namespace {

ConstraintKind constraint_of(MethodId m) {
  switch (m) {
    case MethodId::ConFillWd: return ConstraintKind::PlainWasserstein;
    case MethodId::ConFillL2: return ConstraintKind::L2;
    default: return ConstraintKind::Cad;
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

BenchReport run_benchmark(std::span<const Image> images, const Model& model, const FeatureConfig& features,
                          const ConFillConfig& sampler, const BenchOptions& opts, const BenchProgress& progress) {
  sampler.validate();
  features.validate();
  CONFILL_REQUIRE(opts.jobs >= 1, "run_benchmark: jobs must be >= 1");
  for (const auto& img : images)
    CONFILL_REQUIRE(img.width() == img.height(), "run_benchmark: images must be square");

  std::map<ConstraintKind, GammaTable> gamma = opts.gamma;
  for (MethodId m : opts.methods) {
    if (m == MethodId::Blend || images.empty()) continue;
    const ConstraintKind kind = constraint_of(m);
    if (gamma.count(kind)) continue;
    ConFillConfig c = sampler;
    c.constraint = kind;
    c.seed = opts.seed;
    gamma.emplace(kind, calibrate_default(model, features, c, images.front().width()));
  }

  struct Job {
    int image;
    MaskKind mask;
    MethodId method;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < static_cast<int>(images.size()); ++i)
    for (MaskKind mk : opts.masks)
      for (MethodId m : opts.methods) jobs.push_back({i, mk, m});

  BenchReport report;
  report.rows.resize(jobs.size());
  std::atomic<std::size_t> next{0}, done{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      try {
        const Job& job = jobs[k];
        const Image& r0 = images[static_cast<std::size_t>(job.image)];
        const Mask mask = make_mask(job.mask, bench_mask_seed(opts.seed, job.image, job.mask), r0.width());
        BenchRow row;
        row.image_id = job.image;
        row.mask_kind = job.mask;
        row.method = job.method;
        row.seed = bench_cell_seed(opts.seed, job.image, job.mask, job.method);
        const auto start = std::chrono::steady_clock::now();
        Image out;
        if (job.method == MethodId::Blend) {
          out = blend_baseline(r0, mask, model, row.seed);
          row.steps_processed = model.schedule.steps();
        } else {
          ConFillConfig c = sampler;
          c.constraint = constraint_of(job.method);
          c.seed = row.seed;
          InpaintResult res = inpaint(r0, mask, model, features, c, &gamma.at(c.constraint));
          out = std::move(res.output);
          row.steps_processed = static_cast<int>(res.trace.size());
          row.jumps_taken = res.jumps_taken;
        }
        const auto stop = std::chrono::steady_clock::now();
        if (opts.record_timing) row.wall_ms = std::chrono::duration<double, std::milli>(stop - start).count();
        row.masked_mse = masked_mse(out, r0, mask);
        row.psnr_db = psnr_from_mse(row.masked_mse);
        row.ssim = ssim_masked(out, r0, mask);
        for (std::size_t p = 0; p < r0.size(); ++p)
          if (mask.known(p) && out[p] != r0[p]) row.known_region_exact = false;
        report.rows[k] = row;
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(jobs.size());
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(d, jobs.size());
      }
    }
  };
  if (opts.jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < opts.jobs; ++j) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (MaskKind mk : opts.masks)
    for (MethodId m : opts.methods) {
      BenchAggregate agg;
      agg.mask_kind = mk;
      agg.method = m;
      std::vector<double> mse, ps, ss;
      for (const auto& r : report.rows)
        if (r.mask_kind == mk && r.method == m) {
          mse.push_back(r.masked_mse);
          if (std::isfinite(r.psnr_db)) ps.push_back(r.psnr_db);
          ss.push_back(r.ssim);
        }
      agg.count = static_cast<int>(mse.size());
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
      };
      agg.mean_mse = mean(mse);
      agg.median_mse = median(mse);
      agg.mean_psnr = mean(ps);
      agg.median_psnr = median(ps);
      agg.mean_ssim = mean(ss);
      agg.median_ssim = median(ss);
      report.aggregates.push_back(agg);
    }
  return report;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
  out << "image_id,mask_kind,method,seed,masked_mse,psnr_db,ssim,wall_ms,steps_processed,jumps_taken\r\n";
  for (const auto& r : report.rows) {
    out << r.image_id << ',' << csv_field(to_string(r.mask_kind)) << ',' << csv_field(to_string(r.method)) << ','
        << r.seed << ',' << fmt(r.masked_mse) << ',' << fmt(r.psnr_db) << ',' << fmt(r.ssim) << ','
        << fmt(r.wall_ms) << ',' << r.steps_processed << ',' << r.jumps_taken << "\r\n";
  }
}

void write_bench_summary_csv(std::ostream& out, const BenchReport& report) {
  out << "mask_kind,method,count,mean_mse,median_mse,mean_psnr_db,median_psnr_db,mean_ssim,median_ssim\r\n";
  for (const auto& a : report.aggregates) {
    out << csv_field(to_string(a.mask_kind)) << ',' << csv_field(to_string(a.method)) << ',' << a.count << ','
        << fmt(a.mean_mse) << ',' << fmt(a.median_mse) << ',' << fmt(a.mean_psnr) << ',' << fmt(a.median_psnr)
        << ',' << fmt(a.mean_ssim) << ',' << fmt(a.median_ssim) << "\r\n";
  }
}

}  // namespace confill
