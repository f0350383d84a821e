#include "csasr/tensor.hpp"

#include <numeric>
#include <sstream>

namespace csasr::ag {

namespace {
std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    if (n != data.size()) {
        throw DimensionError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(n));
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(std::vector<int> shape, double bound, rng::Rng& rng, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (auto& v : data) v = rng.uniform(-bound, bound);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

double Tensor::value() const {
    if (!is_scalar()) throw ContractError("value() called on non-scalar tensor " + shape_str());
    return impl_->data[0];
}

double Tensor::operator()(int r, int c) const {
    return impl_->data[static_cast<std::size_t>(r) * static_cast<std::size_t>(impl_->shape[1]) +
                       static_cast<std::size_t>(c)];
}

double& Tensor::at(int r, int c) {
    return impl_->data[static_cast<std::size_t>(r) * static_cast<std::size_t>(impl_->shape[1]) +
                       static_cast<std::size_t>(c)];
}

const std::vector<double>& Tensor::grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->data.size(), 0.0);
}

void Tensor::accumulate_grad(std::span<const double> g) {
    if (g.size() != impl_->data.size()) {
        throw DimensionError("gradient length " + std::to_string(g.size()) +
                             " does not match tensor of " + std::to_string(impl_->data.size()));
    }
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) impl_->grad[i] += g[i];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < impl_->shape.size(); ++i) {
        if (i) os << "x";
        os << impl_->shape[i];
    }
    os << "]";
    return os.str();
}

int rows(const Tensor& t) { return t.shape()[0]; }
int cols(const Tensor& t) { return t.shape()[1]; }

void check_2d(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(what) + " expects a 2-D tensor, got " + t.shape_str());
    }
}

}  // namespace csasr::ag
