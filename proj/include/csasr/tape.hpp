#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "csasr/tensor.hpp"

namespace csasr::ag {

// Reverse-mode tape. Nodes are appended in forward order, so the list is
// topologically ordered by construction; backward() walks it once in
// reverse. One thread per tape.
class Tape {
public:
    // -- elementwise ops (equal shapes, or one operand a 1-element scalar) --
    Tensor add(const Tensor& a, const Tensor& b);
    Tensor mul(const Tensor& a, const Tensor& b);
    Tensor neg(const Tensor& x);
    Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }
    Tensor tanh(const Tensor& x);
    Tensor sigmoid(const Tensor& x);
    Tensor exp(const Tensor& x);
    Tensor log(const Tensor& x);
    Tensor add_scalar(const Tensor& x, double c);
    Tensor mul_scalar(const Tensor& x, double c);

    // -- linear algebra / structure --
    Tensor matmul(const Tensor& a, const Tensor& b);
    Tensor add_rowvec(const Tensor& x, const Tensor& bias);  // [T,V] + [1,V]
    Tensor row(const Tensor& x, int r);
    Tensor slice_rows(const Tensor& x, int r0, int n);
    Tensor slice_cols(const Tensor& x, int c0, int n);
    Tensor concat_rows(std::span<const Tensor> parts);
    Tensor concat_cols(const Tensor& a, const Tensor& b);
    Tensor reshape(const Tensor& x, std::vector<int> shape);
    Tensor mean_rows(const Tensor& x);  // [T,D] -> [1,D]

    // -- reductions / heads --
    Tensor sum(const Tensor& x);  // -> scalar
    // row-wise log-softmax via max-subtracted logsumexp; rows exp-sum to 1
    Tensor log_softmax(const Tensor& logits);
    // stable binary cross-entropy on a single logit against target in {0,1}
    Tensor bce_with_logits(const Tensor& logit, double target);

    // identity forward; backward replaces upstream gradient g by -scale*g
    Tensor grl(const Tensor& x, double scale = 1.0);

    // Custom-node hook for losses with hand-written backward rules (CTC).
    // `backward` receives the output gradient and must accumulate into the
    // inputs it captured.
    Tensor make_output(std::vector<int> shape, std::vector<double> data, bool requires_grad);
    void record(std::string op, std::function<void()> backward);

    // Seeds d(loss)/d(loss)=1 and runs every node once in reverse order.
    // A second call without reset() is an error, not accumulation.
    void backward(const Tensor& loss);

    void reset();
    bool consumed() const { return consumed_; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        std::string op;
        std::function<void()> backward;
    };
    std::vector<Node> nodes_;
    bool consumed_ = false;
};

}  // namespace csasr::ag
