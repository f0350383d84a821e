#include "csasr/tape.hpp"

#include <algorithm>
#include <cmath>

namespace csasr::ag {

namespace {



// Broadcasting is restricted to scalar-with-tensor and equal shapes.
enum class Bcast { Equal, ScalarA, ScalarB };

Bcast classify(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Bcast::Equal;
    if (a.numel() == 1) return Bcast::ScalarA;
    if (b.numel() == 1) return Bcast::ScalarB;
    throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " + b.shape_str() +
                         " are neither equal nor scalar-with-tensor");
}

double sum_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

Tensor Tape::make_output(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

void Tape::record(std::string op, std::function<void()> backward) {
    nodes_.push_back({std::move(op), std::move(backward)});
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || !loss.is_scalar()) {
        throw ContractError("backward: loss must be a scalar tensor" +
                            (loss.defined() ? ", got " + loss.shape_str() : std::string()));
    }
    if (nodes_.empty()) throw ContractError("backward: tape is empty");
    if (consumed_) {
        throw ContractError("backward: tape already consumed; call reset() before reuse");
    }
    consumed_ = true;

    const std::vector<double> seed{1.0};
    const_cast<Tensor&>(loss).accumulate_grad(seed);

    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backward();
    }
}

// ---------------------------------------------------------------------------
// elementwise

Tensor Tape::add(const Tensor& a, const Tensor& b) {
    const Bcast mode = classify(a, b, "add");
    const Tensor& big = (mode == Bcast::ScalarA) ? b : a;
    std::vector<double> out(big.numel());
    switch (mode) {
        case Bcast::Equal:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
            break;
        case Bcast::ScalarA:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[0] + b.data()[i];
            break;
        case Bcast::ScalarB:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[0];
            break;
    }
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor y(big.shape(), std::move(out), rg);
    if (rg) {
        record("add", [a, b, y, mode]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            if (a.requires_grad()) {
                if (mode == Bcast::ScalarA) {
                    const double s = sum_of(g);
                    const std::vector<double> ga{s};
                    const_cast<Tensor&>(a).accumulate_grad(ga);
                } else {
                    const_cast<Tensor&>(a).accumulate_grad(g);
                }
            }
            if (b.requires_grad()) {
                if (mode == Bcast::ScalarB) {
                    const double s = sum_of(g);
                    const std::vector<double> gb{s};
                    const_cast<Tensor&>(b).accumulate_grad(gb);
                } else {
                    const_cast<Tensor&>(b).accumulate_grad(g);
                }
            }
        });
    }
    return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
    const Bcast mode = classify(a, b, "mul");
    const Tensor& big = (mode == Bcast::ScalarA) ? b : a;
    std::vector<double> out(big.numel());
    switch (mode) {
        case Bcast::Equal:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
            break;
        case Bcast::ScalarA:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[0] * b.data()[i];
            break;
        case Bcast::ScalarB:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[0];
            break;
    }
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor y(big.shape(), std::move(out), rg);
    if (rg) {
        record("mul", [a, b, y, mode]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            if (a.requires_grad()) {
                if (mode == Bcast::ScalarA) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * b.data()[i];
                    const std::vector<double> ga{s};
                    const_cast<Tensor&>(a).accumulate_grad(ga);
                } else {
                    std::vector<double> ga(g.size());
                    if (mode == Bcast::ScalarB) {
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b.data()[0];
                    } else {
                        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * b.data()[i];
                    }
                    const_cast<Tensor&>(a).accumulate_grad(ga);
                }
            }
            if (b.requires_grad()) {
                if (mode == Bcast::ScalarB) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * a.data()[i];
                    const std::vector<double> gb{s};
                    const_cast<Tensor&>(b).accumulate_grad(gb);
                } else {
                    std::vector<double> gb(g.size());
                    if (mode == Bcast::ScalarA) {
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a.data()[0];
                    } else {
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * a.data()[i];
                    }
                    const_cast<Tensor&>(b).accumulate_grad(gb);
                }
            }
        });
    }
    return y;
}

Tensor Tape::neg(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -x.data()[i];
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("neg", [x, y]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = -g[i];
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::tanh(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x.data()[i]);
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("tanh", [x, y]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double t = y.data()[i];
                gx[i] = g[i] * (1.0 - t * t);
            }
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::sigmoid(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.data()[i];
        out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("sigmoid", [x, y]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double s = y.data()[i];
                gx[i] = g[i] * s * (1.0 - s);
            }
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::exp(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::exp(x.data()[i]);
        if (!std::isfinite(out[i])) {
            throw NumericDomainError("exp overflow at input " + std::to_string(x.data()[i]));
        }
    }
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("exp", [x, y]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * y.data()[i];
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::log(const Tensor& x) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = x.data()[i];
        if (v <= 0.0) throw NumericDomainError("log of non-positive value " + std::to_string(v));
        out[i] = std::log(v);
    }
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("log", [x, y]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] / x.data()[i];
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::add_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + c;
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("add_scalar", [x, y]() {
            if (!y.grad_present()) return;
            const_cast<Tensor&>(x).accumulate_grad(y.grad());
        });
    }
    return y;
}

Tensor Tape::mul_scalar(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * c;
    Tensor y(x.shape(), std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("mul_scalar", [x, y, c]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * c;
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// structure

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul lhs");
    check_2d(b, "matmul rhs");
    if (cols(a) != rows(b)) {
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " * " +
                             b.shape_str());
    }
    const int m = rows(a), k = cols(a), n = cols(b);
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a.data()[static_cast<std::size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = b.data().data() + static_cast<std::size_t>(p) * n;
            double* orow = out.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor y({m, n}, std::move(out), rg);
    if (rg) {
        record("matmul", [a, b, y, m, k, n]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            if (a.requires_grad()) {
                // dA = G * B^T
                std::vector<double> ga(static_cast<std::size_t>(m) * k, 0.0);
                for (int i = 0; i < m; ++i) {
                    for (int p = 0; p < k; ++p) {
                        double s = 0.0;
                        const double* grow = g.data() + static_cast<std::size_t>(i) * n;
                        const double* brow = b.data().data() + static_cast<std::size_t>(p) * n;
                        for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
                        ga[static_cast<std::size_t>(i) * k + p] = s;
                    }
                }
                const_cast<Tensor&>(a).accumulate_grad(ga);
            }
            if (b.requires_grad()) {
                // dB = A^T * G
                std::vector<double> gb(static_cast<std::size_t>(k) * n, 0.0);
                for (int i = 0; i < m; ++i) {
                    const double* arow = a.data().data() + static_cast<std::size_t>(i) * k;
                    const double* grow = g.data() + static_cast<std::size_t>(i) * n;
                    for (int p = 0; p < k; ++p) {
                        const double av = arow[p];
                        if (av == 0.0) continue;
                        double* gbrow = gb.data() + static_cast<std::size_t>(p) * n;
                        for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
                const_cast<Tensor&>(b).accumulate_grad(gb);
            }
        });
    }
    return y;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& bias) {
    check_2d(x, "add_rowvec input");
    check_2d(bias, "add_rowvec bias");
    if (rows(bias) != 1 || cols(bias) != cols(x)) {
        throw DimensionError("add_rowvec: bias " + bias.shape_str() + " does not match input " +
                             x.shape_str());
    }
    const int t = rows(x), v = cols(x);
    std::vector<double> out(x.numel());
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < v; ++j) {
            out[static_cast<std::size_t>(i) * v + j] =
                x.data()[static_cast<std::size_t>(i) * v + j] + bias.data()[j];
        }
    }
    const bool rg = x.requires_grad() || bias.requires_grad();
    Tensor y({t, v}, std::move(out), rg);
    if (rg) {
        record("add_rowvec", [x, bias, y, t, v]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            if (x.requires_grad()) const_cast<Tensor&>(x).accumulate_grad(g);
            if (bias.requires_grad()) {
                std::vector<double> gb(static_cast<std::size_t>(v), 0.0);
                for (int i = 0; i < t; ++i) {
                    for (int j = 0; j < v; ++j) gb[j] += g[static_cast<std::size_t>(i) * v + j];
                }
                const_cast<Tensor&>(bias).accumulate_grad(gb);
            }
        });
    }
    return y;
}

Tensor Tape::row(const Tensor& x, int r) { return slice_rows(x, r, 1); }

Tensor Tape::slice_rows(const Tensor& x, int r0, int n) {
    check_2d(x, "slice_rows");
    if (r0 < 0 || n <= 0 || r0 + n > rows(x)) {
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + ", " +
                             std::to_string(r0 + n) + ") out of bounds for " + x.shape_str());
    }
    const int c = cols(x);
    std::vector<double> out(static_cast<std::size_t>(n) * c);
    std::copy_n(x.data().data() + static_cast<std::size_t>(r0) * c, out.size(), out.data());
    Tensor y({n, c}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("slice_rows", [x, y, r0, n, c]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(x.numel(), 0.0);
            std::copy_n(g.data(), g.size(), gx.data() + static_cast<std::size_t>(r0) * c);
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::slice_cols(const Tensor& x, int c0, int n) {
    check_2d(x, "slice_cols");
    if (c0 < 0 || n <= 0 || c0 + n > cols(x)) {
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + ", " +
                             std::to_string(c0 + n) + ") out of bounds for " + x.shape_str());
    }
    const int t = rows(x), c = cols(x);
    std::vector<double> out(static_cast<std::size_t>(t) * n);
    for (int i = 0; i < t; ++i) {
        std::copy_n(x.data().data() + static_cast<std::size_t>(i) * c + c0, n,
                    out.data() + static_cast<std::size_t>(i) * n);
    }
    Tensor y({t, n}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("slice_cols", [x, y, c0, n, t, c]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(x.numel(), 0.0);
            for (int i = 0; i < t; ++i) {
                std::copy_n(g.data() + static_cast<std::size_t>(i) * n, n,
                            gx.data() + static_cast<std::size_t>(i) * c + c0);
            }
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    const int c = cols(parts[0]);
    int total = 0;
    bool rg = false;
    for (const Tensor& p : parts) {
        check_2d(p, "concat_rows part");
        if (cols(p) != c) {
            throw DimensionError("concat_rows: column mismatch " + parts[0].shape_str() + " vs " +
                                 p.shape_str());
        }
        total += rows(p);
        rg = rg || p.requires_grad();
    }
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(total) * c);
    for (const Tensor& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    Tensor y({total, c}, std::move(out), rg);
    if (rg) {
        std::vector<Tensor> held(parts.begin(), parts.end());
        record("concat_rows", [held = std::move(held), y]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::size_t off = 0;
            for (const Tensor& p : held) {
                if (p.requires_grad()) {
                    const_cast<Tensor&>(p).accumulate_grad(
                        std::span<const double>(g.data() + off, p.numel()));
                }
                off += p.numel();
            }
        });
    }
    return y;
}

Tensor Tape::concat_cols(const Tensor& a, const Tensor& b) {
    check_2d(a, "concat_cols lhs");
    check_2d(b, "concat_cols rhs");
    if (rows(a) != rows(b)) {
        throw DimensionError("concat_cols: row mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    const int t = rows(a), ca = cols(a), cb = cols(b);
    std::vector<double> out(static_cast<std::size_t>(t) * (ca + cb));
    for (int i = 0; i < t; ++i) {
        std::copy_n(a.data().data() + static_cast<std::size_t>(i) * ca, ca,
                    out.data() + static_cast<std::size_t>(i) * (ca + cb));
        std::copy_n(b.data().data() + static_cast<std::size_t>(i) * cb, cb,
                    out.data() + static_cast<std::size_t>(i) * (ca + cb) + ca);
    }
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor y({t, ca + cb}, std::move(out), rg);
    if (rg) {
        record("concat_cols", [a, b, y, t, ca, cb]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            if (a.requires_grad()) {
                std::vector<double> ga(a.numel());
                for (int i = 0; i < t; ++i) {
                    std::copy_n(g.data() + static_cast<std::size_t>(i) * (ca + cb), ca,
                                ga.data() + static_cast<std::size_t>(i) * ca);
                }
                const_cast<Tensor&>(a).accumulate_grad(ga);
            }
            if (b.requires_grad()) {
                std::vector<double> gb(b.numel());
                for (int i = 0; i < t; ++i) {
                    std::copy_n(g.data() + static_cast<std::size_t>(i) * (ca + cb) + ca, cb,
                                gb.data() + static_cast<std::size_t>(i) * cb);
                }
                const_cast<Tensor&>(b).accumulate_grad(gb);
            }
        });
    }
    return y;
}

Tensor Tape::reshape(const Tensor& x, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d <= 0 ? 0 : d);
    if (n != x.numel()) {
        throw DimensionError("reshape: cannot view " + x.shape_str() + " with " +
                             std::to_string(x.numel()) + " elements as requested shape");
    }
    Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
             x.requires_grad());
    if (y.requires_grad()) {
        record("reshape", [x, y]() {
            if (!y.grad_present()) return;
            const_cast<Tensor&>(x).accumulate_grad(y.grad());
        });
    }
    return y;
}

Tensor Tape::mean_rows(const Tensor& x) {
    check_2d(x, "mean_rows");
    const int t = rows(x), c = cols(x);
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (int i = 0; i < t; ++i) {
        for (int j = 0; j < c; ++j) out[j] += x.data()[static_cast<std::size_t>(i) * c + j];
    }
    for (int j = 0; j < c; ++j) out[j] /= t;
    Tensor y({1, c}, std::move(out), x.requires_grad());
    if (y.requires_grad()) {
        record("mean_rows", [x, y, t, c]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(x.numel());
            for (int i = 0; i < t; ++i) {
                for (int j = 0; j < c; ++j) gx[static_cast<std::size_t>(i) * c + j] = g[j] / t;
            }
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

// ---------------------------------------------------------------------------
// reductions and heads

Tensor Tape::sum(const Tensor& x) {
    Tensor y = Tensor::scalar(sum_of(x.data()), x.requires_grad());
    if (y.requires_grad()) {
        record("sum", [x, y]() {
            if (!y.grad_present()) return;
            const double g = y.grad()[0];
            std::vector<double> gx(x.numel(), g);
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::log_softmax(const Tensor& logits) {
    check_2d(logits, "log_softmax");
    const int t = rows(logits), v = cols(logits);
    if (v < 2) throw DimensionError("log_softmax: needs at least 2 classes, got " +
                                    std::to_string(v));
    std::vector<double> out(logits.numel());
    for (int i = 0; i < t; ++i) {
        const double* xr = logits.data().data() + static_cast<std::size_t>(i) * v;
        double* yr = out.data() + static_cast<std::size_t>(i) * v;
        const double m = *std::max_element(xr, xr + v);
        double z = 0.0;
        for (int j = 0; j < v; ++j) z += std::exp(xr[j] - m);
        const double lz = m + std::log(z);
        for (int j = 0; j < v; ++j) yr[j] = xr[j] - lz;
    }
    Tensor y({t, v}, std::move(out), logits.requires_grad());
    if (y.requires_grad()) {
        record("log_softmax", [logits, y, t, v]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (int i = 0; i < t; ++i) {
                const double* gr = g.data() + static_cast<std::size_t>(i) * v;
                const double* yr = y.data().data() + static_cast<std::size_t>(i) * v;
                double rowsum = 0.0;
                for (int j = 0; j < v; ++j) rowsum += gr[j];
                for (int j = 0; j < v; ++j) {
                    gx[static_cast<std::size_t>(i) * v + j] = gr[j] - std::exp(yr[j]) * rowsum;
                }
            }
            const_cast<Tensor&>(logits).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::bce_with_logits(const Tensor& logit, double target) {
    if (!logit.is_scalar()) {
        throw DimensionError("bce_with_logits: expects a scalar logit, got " + logit.shape_str());
    }
    if (target != 0.0 && target != 1.0) {
        throw ContractError("bce_with_logits: target must be 0 or 1");
    }
    const double z = logit.data()[0];
    // max(z,0) - z*y + log(1 + exp(-|z|)): stable for large |z|
    const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
    Tensor y = Tensor::scalar(loss, logit.requires_grad());
    if (y.requires_grad()) {
        record("bce_with_logits", [logit, y, z, target]() {
            if (!y.grad_present()) return;
            const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            const std::vector<double> gx{y.grad()[0] * (s - target)};
            const_cast<Tensor&>(logit).accumulate_grad(gx);
        });
    }
    return y;
}

Tensor Tape::grl(const Tensor& x, double scale) {
    Tensor y(x.shape(), std::vector<double>(x.data().begin(), x.data().end()), x.requires_grad());
    if (y.requires_grad()) {
        record("grl", [x, y, scale]() {
            if (!y.grad_present()) return;
            const auto& g = y.grad();
            std::vector<double> gx(g.size());
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] = -scale * g[i];
            const_cast<Tensor&>(x).accumulate_grad(gx);
        });
    }
    return y;
}

}  // namespace csasr::ag
