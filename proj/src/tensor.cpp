#include "vtc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>

#include "vtc/util.hpp"

namespace vtc {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) fail("tensor extents must be positive, got ", shape_str(shape));
        n *= e;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(Shape s) : shape(std::move(s)) { values.assign(static_cast<size_t>(numel(shape)), 0.0); }

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
    if (numel(shape) != static_cast<int64_t>(values.size()))
        fail("tensor shape ", shape_str(shape), " does not match value count ", values.size());
}

Tensor Tensor::full(Shape s, double fill) {
    Tensor t(std::move(s));
    std::fill(t.values.begin(), t.values.end(), fill);
    return t;
}

int Tensor::cols() const {
    if (shape.empty()) fail("rank-0 tensor has no last dimension");
    return shape.back();
}

int Tensor::rows() const { return static_cast<int>(size() / cols()); }

bool Tensor::all_finite() const {
    for (double v : values)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

static std::atomic<uint64_t> g_tape_serial{1};

Tape::Tape() : serial_(g_tape_serial.fetch_add(1)) {}

Tape::~Tape() {
    // A tape destroyed before backward leaves its leaves pointing at a dead
    // record; unlink them so the next record starts clean.
    for (Tensor* t : leaves_) {
        if (t->tape_serial == serial_) {
            t->node = -1;
            t->tape_serial = 0;
        }
    }
}

int Tape::input_id(const Tensor& t) const {
    if (t.node < 0) return -1;
    if (t.tape_serial != serial_)
        fail("tensor belongs to a different computation record (stale node id ", t.node, ")");
    return t.node;
}

void Tape::watch(Tensor& leaf) {
    if (consumed_) fail("cannot watch a leaf on a consumed computation record");
    if (tracked(leaf)) return;
    if (leaf.node >= 0)
        fail("tensor is already tracked by another computation record");
    if (leaf.grad.size() != leaf.values.size()) leaf.grad.assign(leaf.values.size(), 0.0);
    NodeRec rec;
    rec.size = leaf.size();
    rec.leaf = &leaf;
    leaf.node = static_cast<int>(nodes_.size());
    leaf.tape_serial = serial_;
    nodes_.push_back(std::move(rec));
    leaves_.push_back(&leaf);
}

int Tape::record(int64_t out_size, std::vector<int> inputs, BackwardFn fn) {
    if (consumed_) fail("cannot record on a consumed computation record; start a new forward pass");
    for (int id : inputs)
        if (id >= static_cast<int>(nodes_.size())) fail("operation input precedes nothing: bad node id ", id);
    NodeRec rec;
    rec.size = out_size;
    rec.inputs = std::move(inputs);
    rec.fn = std::move(fn);
    nodes_.push_back(std::move(rec));
    return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad(int node) {
    NodeRec& rec = nodes_.at(static_cast<size_t>(node));
    if (rec.grad.empty()) rec.grad.assign(static_cast<size_t>(rec.size), 0.0);
    rec.touched = true;
    return rec.grad;
}

void Tape::touch_grad(int node) { (void)grad(node); }

void Tape::backward(const Tensor& loss) {
    if (consumed_)
        fail("backward called on a stale computation record; run a new forward pass first");
    if (loss.size() != 1) fail("backward requires a scalar loss, got shape ", shape_str(loss.shape));
    if (!tracked(loss))
        fail("loss tensor is not part of this computation record");

    grad(loss.node)[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        NodeRec& rec = nodes_[static_cast<size_t>(i)];
        if (!rec.touched || !rec.fn) continue;
        rec.fn(*this, i);
    }
    for (NodeRec& rec : nodes_) {
        if (!rec.leaf || !rec.touched) continue;
        for (size_t j = 0; j < rec.grad.size(); ++j) rec.leaf->grad[j] += rec.grad[j];
    }
    for (Tensor* t : leaves_) {
        t->node = -1;
        t->tape_serial = 0;
    }
    nodes_.clear();
    leaves_.clear();
    consumed_ = true;
}

// ---------------------------------------------------------------------------
// Matrix kernels. Plain loops in a fixed order; the compiler vectorizes them.
// ---------------------------------------------------------------------------

namespace kernel {

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<size_t>(i) * k;
        double* crow = c + static_cast<size_t>(i) * n;
        for (int l = 0; l < k; ++l) {
            const double av = arow[l];
            const double* brow = b + static_cast<size_t>(l) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    // Transposing b first keeps the inner loop unit-stride (the dot-product
    // form defeats vectorization); the accumulation order over l is unchanged.
    std::vector<double> bt(static_cast<size_t>(k) * n);
    for (int j = 0; j < n; ++j)
        for (int l = 0; l < k; ++l) bt[static_cast<size_t>(l) * n + j] = b[static_cast<size_t>(j) * k + l];
    matmul_nn(a, bt.data(), c, m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int l = 0; l < k; ++l) {
        const double* arow = a + static_cast<size_t>(l) * m;
        const double* brow = b + static_cast<size_t>(l) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace kernel

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace {

Tensor with_node(Tape& tape, Tensor out, std::vector<int> inputs, Tape::BackwardFn fn) {
    bool tracked = false;
    for (int id : inputs)
        if (id >= 0) tracked = true;
    if (tracked) {
        out.node = tape.record(out.size(), std::move(inputs), std::move(fn));
        out.tape_serial = tape.serial();
    }
    return out;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape)
        fail(op, ": shape mismatch ", shape_str(a.shape), " vs ", shape_str(b.shape));
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const int na = tape.input_id(a), nb = tape.input_id(b);
    Tensor out(a.shape);
    for (int64_t i = 0; i < a.size(); ++i) out.values[i] = a.values[i] + b.values[i];
    return with_node(tape, std::move(out), {na, nb}, [na, nb](Tape& t, int self) {
        const auto& g = t.grad(self);
        if (na >= 0) {
            auto& ga = t.grad(na);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (nb >= 0) {
            auto& gb = t.grad(nb);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const int na = tape.input_id(a), nb = tape.input_id(b);
    Tensor out(a.shape);
    for (int64_t i = 0; i < a.size(); ++i) out.values[i] = a.values[i] * b.values[i];
    std::vector<double> av = a.values, bv = b.values;
    return with_node(tape, std::move(out), {na, nb},
                     [na, nb, av = std::move(av), bv = std::move(bv)](Tape& t, int self) {
                         const auto& g = t.grad(self);
                         if (na >= 0) {
                             auto& ga = t.grad(na);
                             for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                         }
                         if (nb >= 0) {
                             auto& gb = t.grad(nb);
                             for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                         }
                     });
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
    const int nx = tape.input_id(x);
    Tensor out(x.shape);
    for (int64_t i = 0; i < x.size(); ++i) out.values[i] = c * x.values[i];
    return with_node(tape, std::move(out), {nx}, [nx, c](Tape& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(nx);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2)
        fail("matmul: expected rank-2 operands, got ", shape_str(a.shape), " and ", shape_str(b.shape));
    if (a.shape[1] != b.shape[0])
        fail("matmul: inner extents disagree, ", shape_str(a.shape), " x ", shape_str(b.shape));
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    const int na = tape.input_id(a), nb = tape.input_id(b);
    Tensor out(Shape{m, n});
    kernel::matmul_nn(a.values.data(), b.values.data(), out.values.data(), m, k, n);
    std::vector<double> av = a.values, bv = b.values;
    return with_node(tape, std::move(out), {na, nb},
                     [na, nb, m, k, n, av = std::move(av), bv = std::move(bv)](Tape& t, int self) {
                         const auto& g = t.grad(self);
                         if (na >= 0) {
                             auto& ga = t.grad(na);
                             kernel::matmul_nt(g.data(), bv.data(), ga.data(), m, n, k);
                         }
                         if (nb >= 0) {
                             auto& gb = t.grad(nb);
                             kernel::matmul_tn(av.data(), g.data(), gb.data(), k, m, n);
                         }
                     });
}

Tensor transpose(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) fail("transpose: expected rank-2 tensor, got ", shape_str(x.shape));
    const int m = x.shape[0], n = x.shape[1];
    const int nx = tape.input_id(x);
    Tensor out(Shape{n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.values[static_cast<size_t>(j) * m + i] = x.values[static_cast<size_t>(i) * n + j];
    return with_node(tape, std::move(out), {nx}, [nx, m, n](Tape& t, int self) {
        const auto& g = t.grad(self);  // [n x m]
        auto& gx = t.grad(nx);         // [m x n]
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < m; ++i) gx[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
    });
}

Tensor bias_add(Tape& tape, const Tensor& x, const Tensor& b) {
    const int c = x.cols();
    if (b.size() != c)
        fail("bias_add: bias length ", b.size(), " does not match last extent ", c, " of ", shape_str(x.shape));
    const int rows = x.rows();
    const int nx = tape.input_id(x), nb = tape.input_id(b);
    Tensor out(x.shape);
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j)
            out.values[static_cast<size_t>(r) * c + j] = x.values[static_cast<size_t>(r) * c + j] + b.values[j];
    return with_node(tape, std::move(out), {nx, nb}, [nx, nb, rows, c](Tape& t, int self) {
        const auto& g = t.grad(self);
        if (nx >= 0) {
            auto& gx = t.grad(nx);
            for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (nb >= 0) {
            auto& gb = t.grad(nb);
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) gb[j] += g[static_cast<size_t>(r) * c + j];
        }
    });
}

Tensor softmax_lastdim(Tape& tape, const Tensor& x) {
    if (x.rank() < 1 || x.cols() < 1) fail("softmax_lastdim: empty last extent");
    if (!x.all_finite()) fail("softmax_lastdim: non-finite input rejected");
    const int c = x.cols(), rows = x.rows();
    const int nx = tape.input_id(x);
    Tensor out(x.shape);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.values.data() + static_cast<size_t>(r) * c;
        double* yr = out.values.data() + static_cast<size_t>(r) * c;
        double mx = xr[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (int j = 0; j < c; ++j) yr[j] /= sum;
    }
    std::vector<double> y = out.values;
    return with_node(tape, std::move(out), {nx}, [nx, rows, c, y = std::move(y)](Tape& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(nx);
        for (int r = 0; r < rows; ++r) {
            const size_t off = static_cast<size_t>(r) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g[off + j] * y[off + j];
            for (int j = 0; j < c; ++j) gx[off + j] += y[off + j] * (g[off + j] - dot);
        }
    });
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (eps <= 0.0) fail("layer_norm: eps must be positive, got ", eps);
    const int c = x.cols(), rows = x.rows();
    if (gain.size() != c || bias.size() != c)
        fail("layer_norm: gain/bias length ", gain.size(), "/", bias.size(), " does not match last extent ", c);
    const int nx = tape.input_id(x), ng = tape.input_id(gain), nb = tape.input_id(bias);
    Tensor out(x.shape);
    std::vector<double> xhat(x.values.size());
    std::vector<double> inv_sigma(static_cast<size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.values.data() + static_cast<size_t>(r) * c;
        double mean = 0.0;
        for (int j = 0; j < c; ++j) mean += xr[j];
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[static_cast<size_t>(r)] = inv;
        for (int j = 0; j < c; ++j) {
            const size_t idx = static_cast<size_t>(r) * c + j;
            xhat[idx] = (xr[j] - mean) * inv;
            out.values[idx] = gain.values[j] * xhat[idx] + bias.values[j];
        }
    }
    std::vector<double> gv = gain.values;
    return with_node(
        tape, std::move(out), {nx, ng, nb},
        [nx, ng, nb, rows, c, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), gv = std::move(gv)](Tape& t, int self) {
            const auto& g = t.grad(self);
            if (ng >= 0) {
                auto& gg = t.grad(ng);
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < c; ++j) gg[j] += g[static_cast<size_t>(r) * c + j] * xhat[static_cast<size_t>(r) * c + j];
            }
            if (nb >= 0) {
                auto& gb = t.grad(nb);
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < c; ++j) gb[j] += g[static_cast<size_t>(r) * c + j];
            }
            if (nx >= 0) {
                auto& gx = t.grad(nx);
                for (int r = 0; r < rows; ++r) {
                    const size_t off = static_cast<size_t>(r) * c;
                    double mean_h = 0.0, mean_hx = 0.0;
                    for (int j = 0; j < c; ++j) {
                        const double h = gv[j] * g[off + j];
                        mean_h += h;
                        mean_hx += h * xhat[off + j];
                    }
                    mean_h /= c;
                    mean_hx /= c;
                    for (int j = 0; j < c; ++j) {
                        const double h = gv[j] * g[off + j];
                        gx[off + j] += inv_sigma[static_cast<size_t>(r)] * (h - mean_h - xhat[off + j] * mean_hx);
                    }
                }
            }
        });
}

Tensor gelu(Tape& tape, const Tensor& x) {
    const int nx = tape.input_id(x);
    Tensor out(x.shape);
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    // The derivative cdf + x*pdf is precomputed here so the backward pass pays
    // no transcendentals.
    std::vector<double> slope(nx >= 0 ? x.values.size() : 0);
    for (int64_t i = 0; i < x.size(); ++i) {
        const double v = x.values[i];
        const double cdf = 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2));
        out.values[i] = v * cdf;
        if (nx >= 0) slope[static_cast<size_t>(i)] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
    }
    return with_node(tape, std::move(out), {nx}, [nx, slope = std::move(slope)](Tape& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(nx);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * slope[i];
    });
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) fail("cross_entropy: logits must be [batch x classes], got ", shape_str(logits.shape));
    const int batch = logits.shape[0], c = logits.shape[1];
    if (static_cast<int>(labels.size()) != batch)
        fail("cross_entropy: ", labels.size(), " labels for batch of ", batch);
    for (int i = 0; i < batch; ++i)
        if (labels[i] < 0 || labels[i] >= c)
            fail("cross_entropy: label ", labels[i], " at index ", i, " out of range [0, ", c, ")");
    if (!logits.all_finite()) fail("cross_entropy: non-finite logits rejected");
    const int nl = tape.input_id(logits);

    std::vector<double> probs(logits.values.size());
    double loss = 0.0;
    for (int i = 0; i < batch; ++i) {
        const double* lr = logits.values.data() + static_cast<size_t>(i) * c;
        double* pr = probs.data() + static_cast<size_t>(i) * c;
        double mx = lr[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, lr[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            pr[j] = std::exp(lr[j] - mx);
            sum += pr[j];
        }
        for (int j = 0; j < c; ++j) pr[j] /= sum;
        loss += mx + std::log(sum) - lr[labels[i]];
    }
    loss /= batch;
    Tensor out(Shape{1}, {loss});
    std::vector<int> lab = labels;
    return with_node(tape, std::move(out), {nl},
                     [nl, batch, c, probs = std::move(probs), lab = std::move(lab)](Tape& t, int self) {
                         const double g = t.grad(self)[0];
                         auto& gl = t.grad(nl);
                         for (int i = 0; i < batch; ++i) {
                             const size_t off = static_cast<size_t>(i) * c;
                             for (int j = 0; j < c; ++j) {
                                 const double onehot = (j == lab[i]) ? 1.0 : 0.0;
                                 gl[off + j] += g * (probs[off + j] - onehot) / batch;
                             }
                         }
                     });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
    if (numel(shape) != x.size())
        fail("reshape: cannot view ", shape_str(x.shape), " as ", shape_str(shape));
    const int nx = tape.input_id(x);
    Tensor out(std::move(shape), x.values);
    return with_node(tape, std::move(out), {nx}, [nx](Tape& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(nx);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Tensor slice_lastdim(Tape& tape, const Tensor& x, int start, int len) {
    const int c = x.cols();
    if (start < 0 || len <= 0 || start + len > c)
        fail("slice_lastdim: range [", start, ", ", start + len, ") outside last extent ", c);
    const int rows = x.rows();
    const int nx = tape.input_id(x);
    Shape out_shape = x.shape;
    out_shape.back() = len;
    Tensor out(std::move(out_shape));
    for (int r = 0; r < rows; ++r)
        for (int j = 0; j < len; ++j)
            out.values[static_cast<size_t>(r) * len + j] = x.values[static_cast<size_t>(r) * c + start + j];
    return with_node(tape, std::move(out), {nx}, [nx, rows, c, start, len](Tape& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(nx);
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < len; ++j) gx[static_cast<size_t>(r) * c + start + j] += g[static_cast<size_t>(r) * len + j];
    });
}

Tensor concat_lastdim(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_lastdim: nothing to concatenate");
    const int rows = parts[0].rows();
    int total = 0;
    std::vector<int> node_ids, widths;
    for (const Tensor& p : parts) {
        if (p.rows() != rows) fail("concat_lastdim: row count mismatch");
        node_ids.push_back(tape.input_id(p));
        widths.push_back(p.cols());
        total += p.cols();
    }
    Shape out_shape = parts[0].shape;
    out_shape.back() = total;
    Tensor out(std::move(out_shape));
    int col = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
        const int w = widths[pi];
        for (int r = 0; r < rows; ++r)
            for (int j = 0; j < w; ++j)
                out.values[static_cast<size_t>(r) * total + col + j] = parts[pi].values[static_cast<size_t>(r) * w + j];
        col += w;
    }
    return with_node(tape, std::move(out), node_ids,
                     [node_ids, widths, rows, total](Tape& t, int self) {
                         const auto& g = t.grad(self);
                         int col = 0;
                         for (size_t pi = 0; pi < node_ids.size(); ++pi) {
                             const int w = widths[pi];
                             if (node_ids[pi] >= 0) {
                                 auto& gp = t.grad(node_ids[pi]);
                                 for (int r = 0; r < rows; ++r)
                                     for (int j = 0; j < w; ++j)
                                         gp[static_cast<size_t>(r) * w + j] += g[static_cast<size_t>(r) * total + col + j];
                             }
                             col += w;
                         }
                     });
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) fail("concat_rows: nothing to concatenate");
    const int c = parts[0].cols();
    int total_rows = 0;
    std::vector<int> node_ids, row_counts;
    for (const Tensor& p : parts) {
        if (p.cols() != c) fail("concat_rows: column count mismatch");
        node_ids.push_back(tape.input_id(p));
        row_counts.push_back(p.rows());
        total_rows += p.rows();
    }
    Tensor out(Shape{total_rows, c});
    int row = 0;
    for (const Tensor& p : parts) {
        std::copy(p.values.begin(), p.values.end(), out.values.begin() + static_cast<size_t>(row) * c);
        row += p.rows();
    }
    return with_node(tape, std::move(out), node_ids, [node_ids, row_counts, c](Tape& t, int self) {
        const auto& g = t.grad(self);
        int row = 0;
        for (size_t pi = 0; pi < node_ids.size(); ++pi) {
            if (node_ids[pi] >= 0) {
                auto& gp = t.grad(node_ids[pi]);
                const size_t off = static_cast<size_t>(row) * c;
                for (size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
            }
            row += row_counts[pi];
        }
    });
}

Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<int>& idx) {
    const int rows = x.rows(), c = x.cols();
    for (int r : idx)
        if (r < 0 || r >= rows) fail("gather_rows: index ", r, " outside [0, ", rows, ")");
    const int nx = tape.input_id(x);
    Tensor out(Shape{static_cast<int>(idx.size()), c});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.values.begin() + static_cast<size_t>(idx[r]) * c, c, out.values.begin() + r * c);
    std::vector<int> ix = idx;
    return with_node(tape, std::move(out), {nx}, [nx, c, ix = std::move(ix)](Tape& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(nx);
        for (size_t r = 0; r < ix.size(); ++r)
            for (int j = 0; j < c; ++j) gx[static_cast<size_t>(ix[r]) * c + j] += g[r * static_cast<size_t>(c) + j];
    });
}

Tensor scatter_rows(Tape& tape, const Tensor& x, const std::vector<int>& idx, int out_rows) {
    const int c = x.cols();
    if (static_cast<int>(idx.size()) != x.rows())
        fail("scatter_rows: ", idx.size(), " indices for ", x.rows(), " rows");
    std::vector<char> seen(static_cast<size_t>(out_rows), 0);
    for (int r : idx) {
        if (r < 0 || r >= out_rows) fail("scatter_rows: index ", r, " outside [0, ", out_rows, ")");
        if (seen[static_cast<size_t>(r)]) fail("scatter_rows: duplicate destination row ", r);
        seen[static_cast<size_t>(r)] = 1;
    }
    const int nx = tape.input_id(x);
    Tensor out(Shape{out_rows, c});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy_n(x.values.begin() + r * static_cast<size_t>(c), c, out.values.begin() + static_cast<size_t>(idx[r]) * c);
    std::vector<int> ix = idx;
    return with_node(tape, std::move(out), {nx}, [nx, c, ix = std::move(ix)](Tape& t, int self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad(nx);
        for (size_t r = 0; r < ix.size(); ++r)
            for (int j = 0; j < c; ++j) gx[r * static_cast<size_t>(c) + j] += g[static_cast<size_t>(ix[r]) * c + j];
    });
}

Tensor sum_all(Tape& tape, const Tensor& x) {
    const int nx = tape.input_id(x);
    double s = 0.0;
    for (double v : x.values) s += v;
    Tensor out(Shape{1}, {s});
    const int64_t n = x.size();
    return with_node(tape, std::move(out), {nx}, [nx, n](Tape& t, int self) {
        const double g = t.grad(self)[0];
        auto& gx = t.grad(nx);
        for (int64_t i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += g;
    });
}

Tensor mean_all(Tape& tape, const Tensor& x) {
    const int nx = tape.input_id(x);
    double s = 0.0;
    for (double v : x.values) s += v;
    const int64_t n = x.size();
    Tensor out(Shape{1}, {s / n});
    return with_node(tape, std::move(out), {nx}, [nx, n](Tape& t, int self) {
        const double g = t.grad(self)[0] / n;
        auto& gx = t.grad(nx);
        for (int64_t i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += g;
    });
}

}  // namespace vtc
