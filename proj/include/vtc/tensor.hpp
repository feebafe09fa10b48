#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vtc {

using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense row-major tensor. `grad` is allocated only while the tensor is watched
// as a leaf of a computation record; `node`/`tape_serial` link it into that
// record and are cleared again by Tape::backward.
struct Tensor {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    int node = -1;
    uint64_t tape_serial = 0;

    Tensor() = default;
    explicit Tensor(Shape s);
    Tensor(Shape s, std::vector<double> v);
    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double fill);

    int64_t size() const { return static_cast<int64_t>(values.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    // 2-D view used by the row/last-dim ops: cols = last extent, rows = rest.
    int cols() const;
    int rows() const;

    bool all_finite() const;
    void zero_grad();
};

// Reverse-mode computation record. Operations append nodes in topological
// order; backward() replays them once in reverse, accumulates gradients into
// every watched leaf, then clears the record. A consumed tape rejects further
// recording and further backward calls.
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    uint64_t serial() const { return serial_; }
    size_t num_nodes() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    // Registers `leaf` as a tracked input. Its grad buffer is allocated (and
    // kept across records so gradients accumulate until explicitly zeroed).
    void watch(Tensor& leaf);

    // Appends an operation node; returns its id.
    int record(int64_t out_size, std::vector<int> inputs, BackwardFn fn);

    // Seeds d(loss)/d(loss) = 1 and accumulates d(loss)/d(leaf) into every
    // watched leaf's grad. The record is cleared afterwards.
    void backward(const Tensor& loss);

    std::vector<double>& grad(int node);
    void touch_grad(int node);  // marks node as having incoming gradient

    // True when `t` is tracked by this tape.
    bool tracked(const Tensor& t) const { return t.node >= 0 && t.tape_serial == serial_; }
    int input_id(const Tensor& t) const;

  private:
    struct NodeRec {
        int64_t size;
        std::vector<int> inputs;
        BackwardFn fn;
        std::vector<double> grad;
        bool touched = false;
        Tensor* leaf = nullptr;
    };

    std::vector<NodeRec> nodes_;
    std::vector<Tensor*> leaves_;
    uint64_t serial_;
    bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Inputs that are not tracked by `tape` behave as
// constants; an op whose inputs are all constants records nothing.
// ---------------------------------------------------------------------------

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, double c);
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);
// Broadcasts `b` over the last dimension of `x` (the only broadcast we allow).
Tensor bias_add(Tape& tape, const Tensor& x, const Tensor& b);
Tensor softmax_lastdim(Tape& tape, const Tensor& x);
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor gelu(Tape& tape, const Tensor& x);
// Mean over the batch of -log softmax(logits)[label]; logits are [batch x C].
Tensor cross_entropy(Tape& tape, const Tensor& logits, const std::vector<int>& labels);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor slice_lastdim(Tape& tape, const Tensor& x, int start, int len);
Tensor concat_lastdim(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
// Row ops act on the 2-D view [rows x cols]. gather may repeat indices;
// scatter requires unique indices and fills unlisted rows with zero.
Tensor gather_rows(Tape& tape, const Tensor& x, const std::vector<int>& idx);
Tensor scatter_rows(Tape& tape, const Tensor& x, const std::vector<int>& idx, int out_rows);
Tensor sum_all(Tape& tape, const Tensor& x);
Tensor mean_all(Tape& tape, const Tensor& x);

// Raw matrix kernels (fixed summation order, shared by forward and backward).
namespace kernel {
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n);  // c += a*b
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n);  // c += a*b^T, b is [n x k]
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n);  // c += a^T*b, a is [k x m]
}  // namespace kernel

}  // namespace vtc
