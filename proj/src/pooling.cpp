#include "poolformer/errors.hpp"
#include "poolformer/layers.hpp"

namespace poolformer::nn {

namespace {

void check_geometry(std::size_t factor, std::size_t groups, std::size_t d) {
  if (factor < 1) throw ArgumentError("pooling: factor must be >= 1");
  if (groups == 0 || d % groups != 0) {
    throw ArgumentError("pooling: group count " + std::to_string(groups) + " must divide D=" +
                        std::to_string(d));
  }
}

// W[i][g] is a bs x bs block stored at ((i*G + g)*bs + in)*bs + out.
inline std::size_t widx(std::size_t i, std::size_t g, std::size_t in, std::size_t out,
                        std::size_t groups, std::size_t bs) {
  return ((i * groups + g) * bs + in) * bs + out;
}

}  // namespace

DownPool DownPool::make(std::size_t factor, std::size_t groups, std::size_t d, SeededRng& rng) {
  check_geometry(factor, groups, d);
  DownPool p;
  p.factor = factor;
  p.groups = groups;
  p.d = d;
  const std::size_t bs = d / groups;
  p.w = Parameter(gaussian_init(rng, {factor, groups, bs, bs}, 1.0 / static_cast<double>(factor * bs)));
  return p;
}

Tensor DownPool::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 2 || x.cols() != d) throw ArgumentError("downpool: bad input shape");
  if (x.rows() % factor != 0) {
    throw ArgumentError("downpool: sequence length " + std::to_string(x.rows()) +
                        " is not a multiple of " + std::to_string(factor));
  }
  if (cache) cache->x = x;
  const std::size_t bs = block();
  const std::size_t segments = x.rows() / factor;
  Tensor y({segments, d});
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t i = 0; i < factor; ++i) {
      const double* xr = x.raw() + (s * factor + i) * d;
      for (std::size_t g = 0; g < groups; ++g) {
        double* yr = y.raw() + s * d + g * bs;
        for (std::size_t in = 0; in < bs; ++in) {
          const double xv = xr[g * bs + in];
          const double* wr = w.value.raw() + widx(i, g, in, 0, groups, bs);
          for (std::size_t o = 0; o < bs; ++o) yr[o] += xv * wr[o];
        }
      }
    }
  }
  return y;
}

Tensor DownPool::backward(const Cache& cache, const Tensor& dy) {
  const Tensor& x = cache.x;
  const std::size_t bs = block();
  Tensor dx({x.rows(), d});
  for (std::size_t s = 0; s < dy.rows(); ++s) {
    for (std::size_t i = 0; i < factor; ++i) {
      const std::size_t t = s * factor + i;
      for (std::size_t g = 0; g < groups; ++g) {
        const double* dyr = dy.raw() + s * d + g * bs;
        for (std::size_t in = 0; in < bs; ++in) {
          const std::size_t base = widx(i, g, in, 0, groups, bs);
          const double xv = x.raw()[t * d + g * bs + in];
          double acc = 0.0;
          for (std::size_t o = 0; o < bs; ++o) {
            w.grad[base + o] += xv * dyr[o];
            acc += w.value[base + o] * dyr[o];
          }
          dx.raw()[t * d + g * bs + in] = acc;
        }
      }
    }
  }
  return dx;
}

void DownPool::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  visit(join_name(prefix, "w"), w);
}

std::vector<double> DownPool::pool_rows(const Tensor& rows) const {
  const Tensor y = forward(rows, nullptr);
  return {y.data().begin(), y.data().end()};
}

UpPool UpPool::make(std::size_t factor, std::size_t groups, std::size_t d, SeededRng& rng,
                    double scale) {
  check_geometry(factor, groups, d);
  UpPool p;
  p.factor = factor;
  p.groups = groups;
  p.d = d;
  const std::size_t bs = d / groups;
  p.w = Parameter(gaussian_init(rng, {factor, groups, bs, bs}, scale / static_cast<double>(bs)));
  return p;
}

Tensor UpPool::forward(const Tensor& x, Cache* cache) const {
  if (x.rank() != 2 || x.cols() != d) throw ArgumentError("uppool: bad input shape");
  if (cache) cache->x = x;
  Tensor y({x.rows() * factor, d});
  for (std::size_t s = 0; s < x.rows(); ++s) {
    for (std::size_t j = 0; j < factor; ++j) {
      const auto row = expand_row(x.row(s), j);
      std::copy(row.begin(), row.end(), y.row(s * factor + j).begin());
    }
  }
  return y;
}

std::vector<double> UpPool::expand_row(std::span<const double> z, std::size_t phase) const {
  const std::size_t bs = block();
  std::vector<double> out(d, 0.0);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t in = 0; in < bs; ++in) {
      const double zv = z[g * bs + in];
      const double* wr = w.value.raw() + widx(phase, g, in, 0, groups, bs);
      for (std::size_t o = 0; o < bs; ++o) out[g * bs + o] += zv * wr[o];
    }
  }
  return out;
}

Tensor UpPool::backward(const Cache& cache, const Tensor& dy) {
  const Tensor& x = cache.x;
  const std::size_t bs = block();
  Tensor dx({x.rows(), d});
  for (std::size_t s = 0; s < x.rows(); ++s) {
    for (std::size_t j = 0; j < factor; ++j) {
      const double* dyr = dy.raw() + (s * factor + j) * d;
      for (std::size_t g = 0; g < groups; ++g) {
        for (std::size_t in = 0; in < bs; ++in) {
          const std::size_t base = widx(j, g, in, 0, groups, bs);
          const double xv = x.raw()[s * d + g * bs + in];
          double acc = 0.0;
          for (std::size_t o = 0; o < bs; ++o) {
            w.grad[base + o] += xv * dyr[g * bs + o];
            acc += w.value[base + o] * dyr[g * bs + o];
          }
          dx.raw()[s * d + g * bs + in] += acc;
        }
      }
    }
  }
  return dx;
}

void UpPool::visit_params(const ParamVisitor& visit, const std::string& prefix) {
  visit(join_name(prefix, "w"), w);
}

}  // namespace poolformer::nn
