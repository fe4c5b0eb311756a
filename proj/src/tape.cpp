#include "lcl/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lcl/ops.hpp"

namespace lcl {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

int Tape::push(Tensor value, std::function<void(Tape&, const Tensor&)> backprop) {
    if (!value.all_finite())
        throw std::runtime_error("tape: non-finite value produced at node " +
                                 std::to_string(nodes_.size()));
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value) { return push(std::move(value), nullptr); }

int Tape::conv2d(int input, int kernel, int stride, int pad) {
    Tensor out = lcl::conv2d(nodes_[input].value, nodes_[kernel].value, stride, pad);
    return push(std::move(out), [input, kernel, stride, pad](Tape& t, const Tensor& g) {
        const Tensor& in = t.nodes_[input].value;
        const Tensor& ker = t.nodes_[kernel].value;
        Tensor& gin = t.grad_mut(input);
        Tensor& gker = t.grad_mut(kernel);
        const int c_in = in.shape[0], h = in.shape[1], w = in.shape[2];
        const int c_out = ker.shape[0], k = ker.shape[2];
        const int oh = g.shape[1], ow = g.shape[2];
        // same shifted-row structure as the forward pass: per kernel tap, the
        // input gradient collects a weighted slice of the output gradient and
        // the kernel gradient a plane dot product
        for (int oc = 0; oc < c_out; ++oc) {
            const double* g_plane = g.data.data() + static_cast<std::size_t>(oc) * oh * ow;
            for (int ic = 0; ic < c_in; ++ic) {
                const double* in_plane = in.data.data() + static_cast<std::size_t>(ic) * h * w;
                double* gin_plane = gin.data.data() + static_cast<std::size_t>(ic) * h * w;
                for (int ky = 0; ky < k; ++ky) {
                    const int ylo = pad - ky;
                    const int oy_lo = std::max(0, ylo <= 0 ? 0 : (ylo + stride - 1) / stride);
                    if (h - 1 + pad - ky < 0) continue;
                    const int oy_hi = std::min(oh - 1, (h - 1 + pad - ky) / stride);
                    for (int kx = 0; kx < k; ++kx) {
                        const int xlo = pad - kx;
                        const int ox_lo = std::max(0, xlo <= 0 ? 0 : (xlo + stride - 1) / stride);
                        if (w - 1 + pad - kx < 0) continue;
                        const int ox_hi = std::min(ow - 1, (w - 1 + pad - kx) / stride);
                        const double wgt = ker.at4(oc, ic, ky, kx);
                        double acc = 0.0;
                        for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                            const int iy = oy * stride + ky - pad;
                            const double* grow = g_plane + static_cast<std::size_t>(oy) * ow;
                            if (stride == 1) {
                                const double* irow =
                                    in_plane + static_cast<std::size_t>(iy) * w + (kx - pad);
                                double* gi =
                                    gin_plane + static_cast<std::size_t>(iy) * w + (kx - pad);
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                    const double gv = grow[ox];
                                    acc += gv * irow[ox];
                                    gi[ox] += wgt * gv;
                                }
                            } else {
                                const double* irow = in_plane + static_cast<std::size_t>(iy) * w;
                                double* gi = gin_plane + static_cast<std::size_t>(iy) * w;
                                for (int ox = ox_lo; ox <= ox_hi; ++ox) {
                                    const double gv = grow[ox];
                                    const int ix = ox * stride + kx - pad;
                                    acc += gv * irow[ix];
                                    gi[ix] += wgt * gv;
                                }
                            }
                        }
                        gker.at4(oc, ic, ky, kx) += acc;
                    }
                }
            }
        }
    });
}

int Tape::relu(int x) {
    Tensor out = lcl::relu(nodes_[x].value);
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& in = t.nodes_[x].value;
        Tensor& gx = t.grad_mut(x);
        for (std::int64_t i = 0; i < g.size(); ++i)
            if (in[i] > 0.0) gx[i] += g[i];
    });
}

int Tape::maxpool2(int x) {
    Tensor out = lcl::maxpool2(nodes_[x].value);
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& in = t.nodes_[x].value;
        Tensor& gx = t.grad_mut(x);
        const int c = g.shape[0], oh = g.shape[1], ow = g.shape[2];
        for (int ch = 0; ch < c; ++ch)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    // route to the first maximum in scan order
                    int by = 2 * oy, bx = 2 * ox;
                    double best = in.at3(ch, by, bx);
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double v = in.at3(ch, 2 * oy + dy, 2 * ox + dx);
                            if (v > best) {
                                best = v;
                                by = 2 * oy + dy;
                                bx = 2 * ox + dx;
                            }
                        }
                    gx.at3(ch, by, bx) += g.at3(ch, oy, ox);
                }
    });
}

int Tape::global_avg_pool(int x) {
    Tensor out = lcl::global_avg_pool(nodes_[x].value);
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& in = t.nodes_[x].value;
        Tensor& gx = t.grad_mut(x);
        const double inv = 1.0 / (static_cast<double>(in.shape[1]) * in.shape[2]);
        for (int ch = 0; ch < in.shape[0]; ++ch) {
            const double gv = g[ch] * inv;
            for (int y = 0; y < in.shape[1]; ++y)
                for (int xx = 0; xx < in.shape[2]; ++xx) gx.at3(ch, y, xx) += gv;
        }
    });
}

int Tape::affine(int x, int W, int b) {
    Tensor out = lcl::affine(nodes_[x].value, nodes_[W].value, nodes_[b].value);
    return push(std::move(out), [x, W, b](Tape& t, const Tensor& g) {
        const Tensor& xv = t.nodes_[x].value;
        const Tensor& Wv = t.nodes_[W].value;
        Tensor& gx = t.grad_mut(x);
        Tensor& gW = t.grad_mut(W);
        Tensor& gb = t.grad_mut(b);
        const int m = Wv.shape[0], n = Wv.shape[1];
        for (int i = 0; i < m; ++i) {
            const double gi = g[i];
            gb[i] += gi;
            const double* row = Wv.data.data() + static_cast<std::size_t>(i) * n;
            double* gWrow = gW.data.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
                gx[j] += gi * row[j];
                gWrow[j] += gi * xv[j];
            }
        }
    });
}

int Tape::bias_add(int x, int b) {
    const Tensor& xv = nodes_[x].value;
    const Tensor& bv = nodes_[b].value;
    if (xv.rank() != 3 || bv.rank() != 1 || bv.shape[0] != xv.shape[0])
        throw std::invalid_argument("bias_add: expected x [C,H,W], b [C]");
    Tensor out = xv;
    const std::int64_t plane = static_cast<std::int64_t>(xv.shape[1]) * xv.shape[2];
    for (int c = 0; c < xv.shape[0]; ++c)
        for (std::int64_t i = 0; i < plane; ++i) out[c * plane + i] += bv[c];
    return push(std::move(out), [x, b, plane](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_mut(x);
        Tensor& gb = t.grad_mut(b);
        for (int c = 0; c < gb.shape[0]; ++c) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) {
                gx[c * plane + i] += g[c * plane + i];
                acc += g[c * plane + i];
            }
            gb[c] += acc;
        }
    });
}

int Tape::l2_normalize(int x) {
    Tensor out = lcl::l2_normalize(nodes_[x].value);
    return push(std::move(out), [x](Tape& t, const Tensor& g) {
        const Tensor& in = t.nodes_[x].value;
        Tensor& gx = t.grad_mut(x);
        double nsq = 0.0;
        for (double v : in.data) nsq += v * v;
        const double norm = std::sqrt(nsq);
        double dot = 0.0;  // g . v_hat
        for (std::int64_t i = 0; i < in.size(); ++i) dot += g[i] * in[i] / norm;
        for (std::int64_t i = 0; i < in.size(); ++i)
            gx[i] += (g[i] - (in[i] / norm) * dot) / norm;
    });
}

int Tape::add(int a, int b) {
    const Tensor& av = nodes_[a].value;
    const Tensor& bv = nodes_[b].value;
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    Tensor out = av;
    accumulate(out, bv);
    return push(std::move(out), [a, b](Tape& t, const Tensor& g) {
        accumulate(t.grad_mut(a), g);
        accumulate(t.grad_mut(b), g);
    });
}

int Tape::scale(int x, double c) {
    Tensor out = nodes_[x].value;
    for (auto& v : out.data) v *= c;
    return push(std::move(out), [x, c](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_mut(x);
        for (std::int64_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
}

int Tape::sum(int x) {
    double acc = 0.0;
    for (double v : nodes_[x].value.data) acc += v;
    return push(Tensor::scalar(acc), [x](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_mut(x);
        for (auto& v : gx.data) v += g[0];
    });
}

int Tape::square_sum(int x) {
    double acc = 0.0;
    for (double v : nodes_[x].value.data) acc += v * v;
    return push(Tensor::scalar(acc), [x](Tape& t, const Tensor& g) {
        const Tensor& in = t.nodes_[x].value;
        Tensor& gx = t.grad_mut(x);
        for (std::int64_t i = 0; i < in.size(); ++i) gx[i] += 2.0 * in[i] * g[0];
    });
}

void Tape::backward(int loss_node) {
    if (nodes_[loss_node].value.size() != 1)
        throw std::invalid_argument("backward: loss node must be scalar");
    nodes_[loss_node].grad[0] += 1.0;
    run_backward();
}

void Tape::backward_seeded(const std::vector<std::pair<int, Tensor>>& seeds) {
    for (const auto& [id, g] : seeds) {
        if (!g.same_shape(nodes_[id].value))
            throw std::invalid_argument("backward_seeded: seed shape mismatch");
        accumulate(nodes_[id].grad, g);
    }
    run_backward();
}

void Tape::run_backward() {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.backprop) continue;
        bool nonzero = false;
        for (double v : n.grad.data)
            if (v != 0.0) { nonzero = true; break; }
        if (nonzero) n.backprop(*this, n.grad);
    }
}

}  // namespace lcl
