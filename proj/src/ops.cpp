#include "lcl/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lcl/rng.hpp"

namespace lcl {

namespace {

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": " + detail);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
    if (input.rank() != 3) shape_error("conv2d", "input must be [C,H,W], got " + input.shape_str());
    if (kernel.rank() != 4)
        shape_error("conv2d", "kernel must be [C_out,C_in,k,k], got " + kernel.shape_str());
    if (kernel.shape[2] != kernel.shape[3]) shape_error("conv2d", "kernel must be square");
    if (kernel.shape[1] != input.shape[0]) {
        std::ostringstream os;
        os << "kernel C_in " << kernel.shape[1] << " != input C " << input.shape[0];
        shape_error("conv2d", os.str());
    }
    if (stride < 1) shape_error("conv2d", "stride must be >= 1");
    const int c_in = input.shape[0], h = input.shape[1], w = input.shape[2];
    const int c_out = kernel.shape[0], k = kernel.shape[2];
    if (k > h + 2 * pad || k > w + 2 * pad)
        shape_error("conv2d", "kernel larger than padded input");
    const int oh = (h + 2 * pad - k) / stride + 1;
    const int ow = (w + 2 * pad - k) / stride + 1;

    Tensor out = Tensor::zeros({c_out, oh, ow});
    // Shifted-row accumulation: for each kernel tap, add a weighted slice of
    // the input row into the output row. Branch-free inner loops vectorize,
    // and every output element still collects its terms in (ic, ky, kx)
    // order, so results match the per-element formulation bit for bit.
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < c_out; ++oc) {
        double* out_plane = out.data.data() + static_cast<std::size_t>(oc) * oh * ow;
        for (int ic = 0; ic < c_in; ++ic) {
            const double* in_plane = input.data.data() + static_cast<std::size_t>(ic) * h * w;
            for (int ky = 0; ky < k; ++ky) {
                const int ylo = pad - ky;  // iy = oy*stride + ky - pad
                const int oy_lo = std::max(0, ylo <= 0 ? 0 : (ylo + stride - 1) / stride);
                if (h - 1 + pad - ky < 0) continue;
                const int oy_hi = std::min(oh - 1, (h - 1 + pad - ky) / stride);
                for (int kx = 0; kx < k; ++kx) {
                    const int xlo = pad - kx;
                    const int ox_lo = std::max(0, xlo <= 0 ? 0 : (xlo + stride - 1) / stride);
                    if (w - 1 + pad - kx < 0) continue;
                    const int ox_hi = std::min(ow - 1, (w - 1 + pad - kx) / stride);
                    const double wgt = kernel.at4(oc, ic, ky, kx);
                    for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        const double* src = in_plane + static_cast<std::size_t>(iy) * w;
                        double* dst = out_plane + static_cast<std::size_t>(oy) * ow;
                        if (stride == 1) {
                            const double* s = src + (kx - pad);
                            for (int ox = ox_lo; ox <= ox_hi; ++ox) dst[ox] += wgt * s[ox];
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                dst[ox] += wgt * src[ox * stride + kx - pad];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.data) v = std::max(v, 0.0);
    return out;
}

Tensor maxpool2(const Tensor& x) {
    if (x.rank() != 3) shape_error("maxpool2", "input must be [C,H,W], got " + x.shape_str());
    const int c = x.shape[0], oh = x.shape[1] / 2, ow = x.shape[2] / 2;
    if (oh < 1 || ow < 1) shape_error("maxpool2", "input smaller than 2x2");
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double m = x.at3(ch, 2 * oy, 2 * ox);
                m = std::max(m, x.at3(ch, 2 * oy, 2 * ox + 1));
                m = std::max(m, x.at3(ch, 2 * oy + 1, 2 * ox));
                m = std::max(m, x.at3(ch, 2 * oy + 1, 2 * ox + 1));
                out.at3(ch, oy, ox) = m;
            }
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 3) shape_error("global_avg_pool", "input must be [C,H,W]");
    const int c = x.shape[0];
    const double inv = 1.0 / (static_cast<double>(x.shape[1]) * x.shape[2]);
    Tensor out({c});
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int y = 0; y < x.shape[1]; ++y)
            for (int xx = 0; xx < x.shape[2]; ++xx) acc += x.at3(ch, y, xx);
        out[ch] = acc * inv;
    }
    return out;
}

Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.rank() != 1 || W.rank() != 2 || b.rank() != 1)
        shape_error("affine", "expected x [n], W [m,n], b [m]");
    const int m = W.shape[0], n = W.shape[1];
    if (x.shape[0] != n || b.shape[0] != m)
        shape_error("affine", "x " + x.shape_str() + " W " + W.shape_str() + " b " + b.shape_str());
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        double acc = b[i];
        const double* row = W.data.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * x[j];
        out[i] = acc;
    }
    return out;
}

Tensor l2_normalize(const Tensor& v) {
    double nsq = 0.0;
    for (double x : v.data) nsq += x * x;
    if (nsq == 0.0) throw std::invalid_argument("l2_normalize: zero vector has no direction");
    const double inv = 1.0 / std::sqrt(nsq);
    Tensor out = v;
    for (auto& x : out.data) x *= inv;
    return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
    Tensor g(x.shape);
    Tensor probe = x;
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

double max_rel_error(const Tensor& a, const Tensor& b, double floor) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_rel_error: shape mismatch");
    double worst = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // SplitMix64 finalizer over the mixed words.
    std::uint64_t x = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xBF58476D1CE4E5B9ULL);
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace lcl
