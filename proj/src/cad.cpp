#include "confill/cad.hpp"

#include <algorithm>
#include <numeric>

#include "confill/error.hpp"

namespace confill {

namespace {

std::vector<std::size_t> stable_argsort(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  return order;
}

}  // namespace

TransportMap brenier_map(std::span<const double> a, std::span<const double> b) {
  CONFILL_REQUIRE(a.size() == b.size(), "brenier_map: sample sizes differ");
  TransportMap map;
  map.source_order = stable_argsort(a);
  map.target_order = stable_argsort(b);
  const std::size_t n = a.size();
  map.source_sorted.resize(n);
  map.target_sorted.resize(n);
  map.assignment.resize(n);
  double cost = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    map.source_sorted[k] = a[map.source_order[k]];
    map.target_sorted[k] = b[map.target_order[k]];
    map.assignment[map.source_order[k]] = map.target_order[k];
    const double d = map.source_sorted[k] - map.target_sorted[k];
    cost += d * d;
  }
  map.cost = n > 0 ? cost / static_cast<double>(n) : 0.0;
  return map;
}

double wasserstein_1d_sq(std::span<const double> a, std::span<const double> b) {
  CONFILL_REQUIRE(a.size() == b.size(), "wasserstein_1d_sq: sample sizes differ");
  CONFILL_REQUIRE(!a.empty(), "wasserstein_1d_sq: empty samples");
  return brenier_map(a, b).cost;
}

CadReport cad_evaluate(const Image& x, const Image& y, const CellGrid& grid, const FeatureConfig& cfg,
                       const CadOptions& opts, Image* grad) {
  CONFILL_REQUIRE(x.same_shape(y), "cad: image shapes differ");
  CONFILL_REQUIRE(x.width() == grid.width() && x.height() == grid.height(), "cad: grid built for another shape");
  const auto& cells = grid.cells();
  const std::size_t n = cells.size();
  const bool full = opts.variant == CadVariant::Full;
  if (opts.frozen_scalings) CONFILL_REQUIRE(opts.frozen_scalings->size() == n, "cad: frozen scaling count");

  std::vector<std::vector<double>> cx, cy;
  if (full && !opts.frozen_scalings) {
    cx = context_vectors(x, grid, cfg);
    cy = context_vectors(y, grid, cfg);
  }
  if (grad) *grad = Image(x.width(), x.height());

  CadReport report;
  report.terms.assign(n, 0.0);
  report.weights.assign(n, 0.0);
  report.scalings.assign(n, 0.0);
  report.wasserstein.assign(n, 0.0);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < n; ++i) {
    const Cell& cell = cells[i];
    if (!cell.active()) continue;
    xs.clear();
    ys.clear();
    for (auto p : cell.sampled) {
      xs.push_back(x[p]);
      ys.push_back(y[p]);
    }
    const TransportMap map = brenier_map(xs, ys);
    double f = 1.0, w = 1.0;
    if (full) {
      w = cell.weight;
      f = opts.frozen_scalings ? (*opts.frozen_scalings)[i] : scaling(cx[i], cy[i], cfg);
    }
    report.wasserstein[i] = map.cost;
    report.weights[i] = w;
    report.scalings[i] = f;
    report.terms[i] = f * map.cost;
    report.total += w * report.terms[i];
    if (grad) {
      const double coef = w * f * 2.0 / static_cast<double>(xs.size());
      for (std::size_t k = 0; k < xs.size(); ++k)
        (*grad)[cell.sampled[k]] = coef * (xs[k] - ys[map.assignment[k]]);
    }
  }
  return report;
}

CadReport cad_total(const Image& x, const Image& y, const CellGrid& grid, const FeatureConfig& cfg) {
  return cad_evaluate(x, y, grid, cfg);
}

CadReport cad_masked(const Image& x0_hat, const Image& r0, const Mask& mask, const CellGrid& grid,
                     const FeatureConfig& cfg, CadVariant variant) {
  CONFILL_REQUIRE(mask.matches(r0), "cad_masked: mask shape mismatch");
  CONFILL_REQUIRE(mask.known_count() > 0, "cad_masked: mask has no known pixels");
  CONFILL_REQUIRE(grid.mask() && *grid.mask() == mask, "cad_masked: grid was not built against this mask");
  return cad_evaluate(x0_hat, r0, grid, cfg, {variant, nullptr});
}

Image cad_grad(const Image& x, const Image& y, const CellGrid& grid, const FeatureConfig& cfg, CadVariant variant) {
  Image g;
  cad_evaluate(x, y, grid, cfg, {variant, nullptr}, &g);
  return g;
}

}  // namespace confill
