#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "csasr/errors.hpp"
#include "csasr/rng.hpp"

namespace csasr::ag {

namespace detail {
struct TensorImpl {
    std::vector<int> shape;        // immutable after construction
    std::vector<double> data;      // row-major
    std::vector<double> grad;      // empty until materialized; data.size() once present
    bool requires_grad = false;
};
}  // namespace detail

// Dense 64-bit float tensor with an optional gradient record. Copying a
// Tensor copies the handle, not the storage; ops that fan one value out to
// several consumers accumulate gradients additively into the one record.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    // uniform in [-bound, bound]
    static Tensor uniform(std::vector<int> shape, double bound, rng::Rng& rng,
                          bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::size_t numel() const { return impl_->data.size(); }
    bool is_scalar() const { return defined() && numel() == 1; }

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    double value() const;  // scalar accessor

    double operator()(int r, int c) const;  // 2-D accessor
    double& at(int r, int c);

    bool requires_grad() const { return impl_->requires_grad; }

    // Gradient record. grad() materializes a zero record on first access so
    // leaves never reached by backward() read as zero.
    bool grad_present() const { return !impl_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad();                                // materialize + clear
    void clear_grad() { impl_->grad.clear(); }       // drop the record
    void accumulate_grad(std::span<const double> g);

    // Identity of the underlying storage (fan-out detection, naming).
    const void* id() const { return impl_.get(); }
    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

    std::string shape_str() const;

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

int rows(const Tensor& t);
int cols(const Tensor& t);
void check_2d(const Tensor& t, const char* what);

}  // namespace csasr::ag
