#include "steamcast/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace steamcast {

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

Var Tape::param(Tensor* p) {
    auto it = param_vars_.find(p);
    if (it != param_vars_.end()) return Var{it->second};
    Var v = leaf(*p, true);
    param_vars_[p] = v.id;
    return v;
}

Tensor& Tape::grad_buf(Var v) {
    Node& n = node(v);
    if (!n.has_grad) {
        n.grad = Tensor(n.value.shape);
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::accum(Var v, const Tensor& g) {
    if (!needs(v)) return;
    Tensor& buf = grad_buf(v);
    for (std::size_t i = 0; i < buf.data.size(); ++i) buf.data[i] += g.data[i];
}

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!n.has_grad) return Tensor(n.value.shape);
    return n.grad;
}

const Tensor* Tape::grad_of(const Tensor* p) const {
    auto it = param_vars_.find(p);
    if (it == param_vars_.end()) return nullptr;
    const Node& n = nodes_[static_cast<std::size_t>(it->second)];
    return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
    if (node(loss).value.numel() != 1)
        throw DimensionError("backward: loss must be scalar");
    if (backward_done_) throw std::logic_error("backward: tape already consumed");
    backward_done_ = true;
    grad_buf(loss).data[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.has_grad && n.backprop) n.backprop(*this);
    }
}

Var Tape::matmul(Var a, Var b) {
    Tensor c = steamcast::matmul(value(a), value(b));
    bool rg = needs(a) || needs(b);
    return push(std::move(c), rg, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        const Tensor& av = t.value(a);
        const Tensor& bv = t.value(b);
        const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
        if (t.needs(a)) {
            Tensor da({m, k});
            kern::mm_nt(g.data.data(), bv.data.data(), da.data.data(), m, n, k);
            t.accum(a, da);
        }
        if (t.needs(b)) {
            Tensor db({k, n});
            kern::mm_tn(av.data.data(), g.data.data(), db.data.data(), m, k, n);
            t.accum(b, db);
        }
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    Tensor c = steamcast::matmul_nt(value(a), value(b));
    bool rg = needs(a) || needs(b);
    return push(std::move(c), rg, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;  // [m,n]
        const Tensor& av = t.value(a);            // [m,k]
        const Tensor& bv = t.value(b);            // [n,k]
        const int m = av.dim(0), k = av.dim(1), n = bv.dim(0);
        if (t.needs(a)) {
            Tensor da({m, k});
            kern::mm_nn(g.data.data(), bv.data.data(), da.data.data(), m, n, k);
            t.accum(a, da);
        }
        if (t.needs(b)) {
            Tensor db({n, k});
            kern::mm_tn(g.data.data(), av.data.data(), db.data.data(), m, n, k);
            t.accum(b, db);
        }
    });
}

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Tensor c = value(a);
    const Tensor& bv = value(b);
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] += bv.data[i];
    bool rg = needs(a) || needs(b);
    return push(std::move(c), rg, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        t.accum(a, g);
        t.accum(b, g);
    });
}

Var Tape::add_row(Var x, Var row) {
    const Tensor& xv = value(x);
    const Tensor& rv = value(row);
    if (xv.rank() != 2 || rv.numel() != xv.dim(1))
        throw DimensionError("add_row: need [b,d] and a length-d row");
    Tensor c = xv;
    const int b = xv.dim(0), d = xv.dim(1);
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < d; ++j) c.at(i, j) += rv.data[static_cast<std::size_t>(j)];
    bool rg = needs(x) || needs(row);
    return push(std::move(c), rg, [x, row, b, d, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        t.accum(x, g);
        if (t.needs(row)) {
            Tensor dr(t.value(row).shape);
            for (int i = 0; i < b; ++i)
                for (int j = 0; j < d; ++j) dr.data[static_cast<std::size_t>(j)] += g.at(i, j);
            t.accum(row, dr);
        }
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    Tensor c = value(a);
    const Tensor& bv = value(b);
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= bv.data[i];
    bool rg = needs(a) || needs(b);
    return push(std::move(c), rg, [a, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        if (t.needs(a)) {
            Tensor da = g;
            const Tensor& bv2 = t.value(b);
            for (std::size_t i = 0; i < da.data.size(); ++i) da.data[i] *= bv2.data[i];
            t.accum(a, da);
        }
        if (t.needs(b)) {
            Tensor db = g;
            const Tensor& av2 = t.value(a);
            for (std::size_t i = 0; i < db.data.size(); ++i) db.data[i] *= av2.data[i];
            t.accum(b, db);
        }
    });
}

Var Tape::mul_const(Var x, Tensor factor) {
    check_same_shape(value(x), factor, "mul_const");
    Tensor c = value(x);
    for (std::size_t i = 0; i < c.data.size(); ++i) c.data[i] *= factor.data[i];
    bool rg = needs(x);
    return push(std::move(c), rg,
                [x, f = std::move(factor), out = static_cast<int>(nodes_.size())](Tape& t) {
                    const Tensor& g = t.node(Var{out}).grad;
                    Tensor dx = g;
                    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= f.data[i];
                    t.accum(x, dx);
                });
}

Var Tape::scale(Var x, real c) {
    Tensor y = value(x);
    for (real& v : y.data) v *= c;
    return push(std::move(y), needs(x), [x, c, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        Tensor dx = g;
        for (real& v : dx.data) v *= c;
        t.accum(x, dx);
    });
}

Var Tape::gelu(Var x) {
    Tensor y = value(x);
    for (real& v : y.data) v = gelu_scalar(v);
    return push(std::move(y), needs(x), [x, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        const Tensor& xv = t.value(x);
        Tensor dx = g;
        for (std::size_t i = 0; i < dx.data.size(); ++i)
            dx.data[i] *= gelu_grad_scalar(xv.data[i]);
        t.accum(x, dx);
    });
}

Var Tape::layer_norm(Var x, Var gain, Var bias) {
    const Tensor& xv = value(x);
    Tensor y = steamcast::layer_norm(xv, value(gain), value(bias));
    const int b = xv.dim(0), d = xv.dim(1);
    // Per-row mean and 1/sqrt(var+eps), captured for the backward pass.
    std::vector<real> means(static_cast<std::size_t>(b)), invs(static_cast<std::size_t>(b));
    for (int i = 0; i < b; ++i) {
        real mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xv.at(i, j);
        mean /= d;
        real var = 0.0;
        for (int j = 0; j < d; ++j) {
            real c = xv.at(i, j) - mean;
            var += c * c;
        }
        var /= d;
        means[static_cast<std::size_t>(i)] = mean;
        invs[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(var + kLayerNormEps);
    }
    bool rg = needs(x) || needs(gain) || needs(bias);
    return push(std::move(y), rg,
                [x, gain, bias, b, d, means = std::move(means), invs = std::move(invs),
                 out = static_cast<int>(nodes_.size())](Tape& t) {
                    const Tensor& g = t.node(Var{out}).grad;
                    const Tensor& xv2 = t.value(x);
                    const Tensor& gv = t.value(gain);
                    Tensor dx({b, d}), dgain({d}), dbias({d});
                    for (int i = 0; i < b; ++i) {
                        const real inv = invs[static_cast<std::size_t>(i)];
                        const real mean = means[static_cast<std::size_t>(i)];
                        real sum_dg = 0.0, sum_dgx = 0.0;
                        for (int j = 0; j < d; ++j) {
                            const real xh = (xv2.at(i, j) - mean) * inv;
                            const real dyg = g.at(i, j) * gv.at(j);
                            sum_dg += dyg;
                            sum_dgx += dyg * xh;
                            dgain.at(j) += g.at(i, j) * xh;
                            dbias.at(j) += g.at(i, j);
                        }
                        const real m1 = sum_dg / d, m2 = sum_dgx / d;
                        for (int j = 0; j < d; ++j) {
                            const real xh = (xv2.at(i, j) - mean) * inv;
                            const real dyg = g.at(i, j) * gv.at(j);
                            dx.at(i, j) = (dyg - m1 - xh * m2) * inv;
                        }
                    }
                    t.accum(x, dx);
                    t.accum(gain, dgain);
                    t.accum(bias, dbias);
                });
}

Var Tape::softmax_rows(Var x) {
    Tensor y = steamcast::softmax_rows(value(x));
    return push(std::move(y), needs(x), [x, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        const Tensor& yv = t.value(Var{out});
        const int m = yv.dim(0), n = yv.dim(1);
        Tensor dx({m, n});
        for (int i = 0; i < m; ++i) {
            real dot = 0.0;
            for (int j = 0; j < n; ++j) dot += g.at(i, j) * yv.at(i, j);
            for (int j = 0; j < n; ++j) dx.at(i, j) = yv.at(i, j) * (g.at(i, j) - dot);
        }
        t.accum(x, dx);
    });
}

Var Tape::conv2d(Var x, Var w, Var bias, int stride) {
    const Tensor& xv = value(x);
    const Tensor& wv = value(w);
    const Tensor* bp = bias.valid() ? &value(bias) : nullptr;
    Tensor y = conv2d_batched(xv, wv, bp, stride);
    bool rg = needs(x) || needs(w) || (bias.valid() && needs(bias));
    return push(std::move(y), rg,
                [x, w, bias, stride, out = static_cast<int>(nodes_.size())](Tape& t) {
                    const Tensor& g = t.node(Var{out}).grad;
                    const Tensor& xv2 = t.value(x);
                    const Tensor& wv2 = t.value(w);
                    const int batch = xv2.dim(0), cin = xv2.dim(1), h = xv2.dim(2),
                              wd = xv2.dim(3);
                    const int cout = wv2.dim(0), k = wv2.dim(2), pad = (k - 1) / 2;
                    const int oh = g.dim(2), ow = g.dim(3);
                    const bool nx = t.needs(x), nw = t.needs(w);
                    const bool nb = bias.valid() && t.needs(bias);
                    Tensor dx(xv2.shape), dw(wv2.shape);
                    Tensor db = bias.valid() ? Tensor(t.value(bias).shape) : Tensor();
                    for (int b = 0; b < batch; ++b)
                        for (int co = 0; co < cout; ++co)
                            for (int oy = 0; oy < oh; ++oy)
                                for (int ox = 0; ox < ow; ++ox) {
                                    const real gv = g.at(b, co, oy, ox);
                                    if (nb) db.at(co) += gv;
                                    const int iy0 = oy * stride - pad, ix0 = ox * stride - pad;
                                    for (int ci = 0; ci < cin; ++ci)
                                        for (int ky = 0; ky < k; ++ky) {
                                            const int iy = iy0 + ky;
                                            if (iy < 0 || iy >= h) continue;
                                            for (int kx = 0; kx < k; ++kx) {
                                                const int ix = ix0 + kx;
                                                if (ix < 0 || ix >= wd) continue;
                                                if (nx)
                                                    dx.at(b, ci, iy, ix) +=
                                                        gv * wv2.at(co, ci, ky, kx);
                                                if (nw)
                                                    dw.at(co, ci, ky, kx) +=
                                                        gv * xv2.at(b, ci, iy, ix);
                                            }
                                        }
                                }
                    if (nx) t.accum(x, dx);
                    if (nw) t.accum(w, dw);
                    if (nb) t.accum(bias, db);
                });
}

Var Tape::slice_cols(Var x, int c0, int c1) {
    const Tensor& xv = value(x);
    if (xv.rank() != 2 || c0 < 0 || c1 > xv.dim(1) || c0 >= c1)
        throw DimensionError("slice_cols: bad column range");
    const int b = xv.dim(0), w = c1 - c0;
    Tensor y({b, w});
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < w; ++j) y.at(i, j) = xv.at(i, c0 + j);
    return push(std::move(y), needs(x),
                [x, c0, b, w, out = static_cast<int>(nodes_.size())](Tape& t) {
                    const Tensor& g = t.node(Var{out}).grad;
                    Tensor dx(t.value(x).shape);
                    for (int i = 0; i < b; ++i)
                        for (int j = 0; j < w; ++j) dx.at(i, c0 + j) = g.at(i, j);
                    t.accum(x, dx);
                });
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw DimensionError("concat_cols: empty input");
    const int b = value(xs[0]).dim(0);
    int total = 0;
    bool rg = false;
    for (Var v : xs) {
        const Tensor& t = value(v);
        if (t.rank() != 2 || t.dim(0) != b) throw DimensionError("concat_cols: row mismatch");
        total += t.dim(1);
        rg = rg || needs(v);
    }
    Tensor y({b, total});
    int off = 0;
    for (Var v : xs) {
        const Tensor& t = value(v);
        for (int i = 0; i < b; ++i)
            for (int j = 0; j < t.dim(1); ++j) y.at(i, off + j) = t.at(i, j);
        off += t.dim(1);
    }
    return push(std::move(y), rg, [xs, b, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        int off = 0;
        for (Var v : xs) {
            const int w = t.value(v).dim(1);
            if (t.needs(v)) {
                Tensor dv({b, w});
                for (int i = 0; i < b; ++i)
                    for (int j = 0; j < w; ++j) dv.at(i, j) = g.at(i, off + j);
                t.accum(v, dv);
            }
            off += w;
        }
    });
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw DimensionError("concat_rows: empty input");
    const int d = value(xs[0]).dim(1);
    int total = 0;
    bool rg = false;
    for (Var v : xs) {
        const Tensor& t = value(v);
        if (t.rank() != 2 || t.dim(1) != d) throw DimensionError("concat_rows: column mismatch");
        total += t.dim(0);
        rg = rg || needs(v);
    }
    Tensor y({total, d});
    int off = 0;
    for (Var v : xs) {
        const Tensor& t = value(v);
        std::memcpy(y.data.data() + static_cast<std::size_t>(off) * d, t.data.data(),
                    t.data.size() * sizeof(real));
        off += t.dim(0);
    }
    return push(std::move(y), rg, [xs, d, out = static_cast<int>(nodes_.size())](Tape& t) {
        const Tensor& g = t.node(Var{out}).grad;
        int off = 0;
        for (Var v : xs) {
            const int r = t.value(v).dim(0);
            if (t.needs(v)) {
                Tensor dv({r, d});
                std::memcpy(dv.data.data(), g.data.data() + static_cast<std::size_t>(off) * d,
                            dv.data.size() * sizeof(real));
                t.accum(v, dv);
            }
            off += r;
        }
    });
}

Var Tape::reindex(Var x, std::vector<int> map, std::vector<int> out_shape) {
    const Tensor& xv = value(x);
    if (static_cast<long>(map.size()) != Tensor::numel_of(out_shape))
        throw DimensionError("reindex: map length does not match output shape");
    Tensor y(out_shape);
    for (std::size_t i = 0; i < map.size(); ++i) {
        const int src = map[i];
        if (src < 0 || src >= xv.numel()) throw BoundsError("reindex: map index out of range");
        y.data[i] = xv.data[static_cast<std::size_t>(src)];
    }
    return push(std::move(y), needs(x),
                [x, map = std::move(map), out = static_cast<int>(nodes_.size())](Tape& t) {
                    const Tensor& g = t.node(Var{out}).grad;
                    Tensor dx(t.value(x).shape);
                    for (std::size_t i = 0; i < map.size(); ++i)
                        dx.data[static_cast<std::size_t>(map[i])] += g.data[i];
                    t.accum(x, dx);
                });
}

Var Tape::sum(Var x) {
    real acc = 0.0;
    for (real v : value(x).data) acc += v;
    return push(Tensor::scalar(acc), needs(x),
                [x, out = static_cast<int>(nodes_.size())](Tape& t) {
                    const real g = t.node(Var{out}).grad.data[0];
                    Tensor dx(t.value(x).shape);
                    for (real& v : dx.data) v = g;
                    t.accum(x, dx);
                });
}

Var Tape::mean(Var x) {
    const long n = value(x).numel();
    real acc = 0.0;
    for (real v : value(x).data) acc += v;
    return push(Tensor::scalar(acc / static_cast<real>(n)), needs(x),
                [x, n, out = static_cast<int>(nodes_.size())](Tape& t) {
                    const real g = t.node(Var{out}).grad.data[0] / static_cast<real>(n);
                    Tensor dx(t.value(x).shape);
                    for (real& v : dx.data) v = g;
                    t.accum(x, dx);
                });
}

Var Tape::mse_against(Var x, Tensor target) {
    const Tensor& xv = value(x);
    check_same_shape(xv, target, "mse_against");
    const long n = xv.numel();
    real acc = 0.0;
    for (long i = 0; i < n; ++i) {
        const real diff = xv.data[static_cast<std::size_t>(i)] -
                          target.data[static_cast<std::size_t>(i)];
        acc += diff * diff;
    }
    return push(Tensor::scalar(acc / static_cast<real>(n)), needs(x),
                [x, tgt = std::move(target), n, out = static_cast<int>(nodes_.size())](Tape& t) {
                    const real g = 2.0 * t.node(Var{out}).grad.data[0] / static_cast<real>(n);
                    const Tensor& xv2 = t.value(x);
                    Tensor dx(xv2.shape);
                    for (long i = 0; i < n; ++i)
                        dx.data[static_cast<std::size_t>(i)] =
                            g * (xv2.data[static_cast<std::size_t>(i)] -
                                 tgt.data[static_cast<std::size_t>(i)]);
                    t.accum(x, dx);
                });
}

void GradCheckReport::require() const {
    if (!pass)
        throw GradCheckError("gradient check failed for parameter '" + worst.param +
                             "' at coordinate " + std::to_string(worst.coord) + ": analytic " +
                             std::to_string(worst.analytic) + " vs finite-difference " +
                             std::to_string(worst.fd) + " (rel err " +
                             std::to_string(worst.rel_err) + ")");
}

GradCheckReport grad_check(const LossBuilder& build, const NamedParams& params,
                           const GradCheckOptions& opt) {
    GradCheckReport report;

    Tape tape;
    Var loss = build(tape);
    if (tape.value(loss).numel() != 1) throw DimensionError("grad_check: loss must be scalar");
    tape.backward(loss);

    auto eval_loss = [&]() -> real {
        Tape t;
        return t.value(build(t)).data[0];
    };

    Rng rng(derive_seed(opt.seed, 0x67726164, 0));
    for (const auto& [name, ptr] : params) {
        const Tensor* g = tape.grad_of(ptr);
        const long n = ptr->numel();
        std::vector<long> coords;
        if (n <= opt.coords_per_param) {
            for (long i = 0; i < n; ++i) coords.push_back(i);
        } else {
            // Sampling with replacement; duplicates just re-check a coordinate.
            for (int i = 0; i < opt.coords_per_param; ++i)
                coords.push_back(rng.uniform_int(static_cast<int>(n)));
        }
        for (long c : coords) {
            const real saved = ptr->data[static_cast<std::size_t>(c)];
            ptr->data[static_cast<std::size_t>(c)] = saved + opt.fd_step;
            const real lp = eval_loss();
            ptr->data[static_cast<std::size_t>(c)] = saved - opt.fd_step;
            const real lm = eval_loss();
            ptr->data[static_cast<std::size_t>(c)] = saved;
            const real fd = (lp - lm) / (2.0 * opt.fd_step);
            const real an = g ? g->data[static_cast<std::size_t>(c)] : 0.0;
            const real denom = std::max({std::fabs(fd), std::fabs(an), real(1e-4)});
            const real rel = std::fabs(fd - an) / denom;
            ++report.coords_checked;
            if (rel > report.worst.rel_err) report.worst = {name, c, an, fd, rel};
            if (rel > opt.rel_tol) report.pass = false;
        }
    }
    return report;
}

}  // namespace steamcast
