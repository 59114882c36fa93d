#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace depthkit {

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

const char* dtype_name(Dtype dt);
std::size_t dtype_size(Dtype dt);

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct ShapeMismatch : std::runtime_error {
    ShapeMismatch(const std::string& expected, const std::string& got)
        : std::runtime_error("shape mismatch: expected " + expected + ", got " + got) {}
};

/// Dense row-major n-dimensional array. Value semantics: operations copy,
/// never alias. A rank-0 tensor is a scalar with one element.
class Tensor {
public:
    Tensor() : dtype_(Dtype::F64), buf_(std::vector<double>{}) {}

    static Tensor empty(Shape shape, Dtype dt);
    static Tensor zeros(Shape shape, Dtype dt);
    static Tensor full(Shape shape, double value, Dtype dt);
    static Tensor ones(Shape shape, Dtype dt) { return full(std::move(shape), 1.0, dt); }
    static Tensor scalar(double value, Dtype dt) { return full({}, value, dt); }
    static Tensor from_data(Shape shape, std::vector<double> data);
    static Tensor from_data(Shape shape, std::vector<float> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::int64_t extent(std::size_t axis) const { return shape_.at(axis); }
    std::int64_t numel() const { return numel_; }
    Dtype dtype() const { return dtype_; }
    bool defined() const { return defined_; }

    template <typename T>
    std::span<T> data() {
        auto* v = std::get_if<std::vector<T>>(&buf_);
        if (!v) throw std::logic_error("tensor dtype access mismatch");
        return std::span<T>(v->data(), v->size());
    }
    template <typename T>
    std::span<const T> data() const {
        const auto* v = std::get_if<std::vector<T>>(&buf_);
        if (!v) throw std::logic_error("tensor dtype access mismatch");
        return std::span<const T>(v->data(), v->size());
    }

    // dtype-agnostic element access, used by tests and oracles
    double get(std::int64_t flat) const;
    void set(std::int64_t flat, double value);
    double at(std::span<const std::int64_t> index) const;
    double at(std::initializer_list<std::int64_t> index) const {
        return at(std::span<const std::int64_t>(index.begin(), index.size()));
    }

    Tensor astype(Dtype dt) const;
    Tensor reshaped(Shape new_shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::int64_t numel_ = 0;
    Dtype dtype_;
    bool defined_ = false;
    std::variant<std::vector<float>, std::vector<double>> buf_;
};

bool bit_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Deterministic random source. Uniform/normal draws are derived from the
/// raw mt19937_64 stream so the value sequence is pinned by the seed alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // inclusive range
    double normal();
    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    Tensor uniform_tensor(Shape shape, double lo, double hi, Dtype dt);
    Tensor normal_tensor(Shape shape, double mean, double sigma, Dtype dt);

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace depthkit
