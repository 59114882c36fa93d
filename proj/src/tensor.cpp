#include "depthkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace depthkit {

const char* dtype_name(Dtype dt) { return dt == Dtype::F32 ? "f32" : "f64"; }
std::size_t dtype_size(Dtype dt) { return dt == Dtype::F32 ? 4 : 8; }

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

Tensor Tensor::empty(Shape shape, Dtype dt) {
    for (auto e : shape) {
        if (e < 1) throw ShapeMismatch("all extents >= 1", shape_str(shape));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = shape_numel(t.shape_);
    t.dtype_ = dt;
    t.defined_ = true;
    if (dt == Dtype::F32) {
        t.buf_ = std::vector<float>(static_cast<std::size_t>(t.numel_));
    } else {
        t.buf_ = std::vector<double>(static_cast<std::size_t>(t.numel_));
    }
    return t;
}

Tensor Tensor::zeros(Shape shape, Dtype dt) { return empty(std::move(shape), dt); }

Tensor Tensor::full(Shape shape, double value, Dtype dt) {
    Tensor t = empty(std::move(shape), dt);
    if (dt == Dtype::F32) {
        std::fill(t.data<float>().begin(), t.data<float>().end(), static_cast<float>(value));
    } else {
        std::fill(t.data<double>().begin(), t.data<double>().end(), value);
    }
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw ShapeMismatch(shape_str(shape), std::to_string(data.size()) + " elements");
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = static_cast<std::int64_t>(data.size());
    t.dtype_ = Dtype::F64;
    t.defined_ = true;
    t.buf_ = std::move(data);
    return t;
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data) {
    if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
        throw ShapeMismatch(shape_str(shape), std::to_string(data.size()) + " elements");
    Tensor t;
    t.shape_ = std::move(shape);
    t.numel_ = static_cast<std::int64_t>(data.size());
    t.dtype_ = Dtype::F32;
    t.defined_ = true;
    t.buf_ = std::move(data);
    return t;
}

double Tensor::get(std::int64_t flat) const {
    if (dtype_ == Dtype::F32) return static_cast<double>(data<float>()[static_cast<std::size_t>(flat)]);
    return data<double>()[static_cast<std::size_t>(flat)];
}

void Tensor::set(std::int64_t flat, double value) {
    if (dtype_ == Dtype::F32)
        data<float>()[static_cast<std::size_t>(flat)] = static_cast<float>(value);
    else
        data<double>()[static_cast<std::size_t>(flat)] = value;
}

double Tensor::at(std::span<const std::int64_t> index) const {
    if (index.size() != shape_.size())
        throw ShapeMismatch("rank " + std::to_string(shape_.size()), "rank " + std::to_string(index.size()));
    std::int64_t flat = 0;
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (index[i] < 0 || index[i] >= shape_[i])
            throw std::out_of_range("tensor index out of range");
        flat = flat * shape_[i] + index[i];
    }
    return get(flat);
}

Tensor Tensor::astype(Dtype dt) const {
    if (dt == dtype_) return *this;
    Tensor out = Tensor::empty(shape_, dt);
    for (std::int64_t i = 0; i < numel_; ++i) out.set(i, get(i));
    return out;
}

Tensor Tensor::reshaped(Shape new_shape) const {
    if (shape_numel(new_shape) != numel_)
        throw ShapeMismatch(shape_str(shape_) + " reshape target of equal size", shape_str(new_shape));
    Tensor out = *this;
    out.shape_ = std::move(new_shape);
    return out;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape() || a.dtype() != b.dtype()) return false;
    if (a.dtype() == Dtype::F32) {
        auto da = a.data<float>();
        auto db = b.data<float>();
        return std::equal(da.begin(), da.end(), db.begin(),
                          [](float x, float y) { return std::memcmp(&x, &y, sizeof(x)) == 0; });
    }
    auto da = a.data<double>();
    auto db = b.data<double>();
    return std::equal(da.begin(), da.end(), db.begin(),
                      [](double x, double y) { return std::memcmp(&x, &y, sizeof(x)) == 0; });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeMismatch(shape_str(a.shape()), shape_str(b.shape()));
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a.get(i) - b.get(i)));
    return m;
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<std::int64_t>(next_u64() % span);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi, Dtype dt) {
    Tensor t = Tensor::empty(std::move(shape), dt);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, uniform(lo, hi));
    return t;
}

Tensor Rng::normal_tensor(Shape shape, double mean, double sigma, Dtype dt) {
    Tensor t = Tensor::empty(std::move(shape), dt);
    for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, normal(mean, sigma));
    return t;
}

}  // namespace depthkit
