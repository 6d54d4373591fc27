#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "secnn/error.hpp"

namespace secnn {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::string_view to_string(DType dtype) noexcept;
std::size_t dtype_size(DType dtype) noexcept;

template <class T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

// Calls f with a value-initialized float or double matching dtype.
template <class F>
decltype(auto) visit_dtype(DType dtype, F&& f) {
    if (dtype == DType::f32) return f(float{});
    return f(double{});
}

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. Copies share storage; the buffer is treated as
// immutable except through mutable_data(), which optimizers and other
// explicit in-place updates use. clone() makes an independent copy.
class Tensor {
public:
    // Rank-0 f32 zero.
    Tensor();
    // Zero-filled.
    explicit Tensor(Shape shape, DType dtype = DType::f32);

    static Tensor zeros(Shape shape, DType dtype = DType::f32);
    static Tensor full(Shape shape, double value, DType dtype = DType::f32);
    static Tensor scalar(double value, DType dtype = DType::f32);
    static Tensor from_vector(Shape shape, std::vector<float> values);
    static Tensor from_vector(Shape shape, std::vector<double> values);
    // Converts values to dtype.
    static Tensor from_values(Shape shape, const std::vector<double>& values,
                              DType dtype = DType::f32);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t numel() const noexcept { return numel_; }
    std::size_t extent(std::size_t axis) const;
    DType dtype() const noexcept { return dtype_; }

    template <class T>
    std::span<const T> data() const {
        check_dtype(dtype_of<T>());
        const auto& v = std::get<std::vector<T>>(*storage_);
        return {v.data(), v.size()};
    }

    // Writes are visible through every handle sharing this storage.
    template <class T>
    std::span<T> mutable_data() {
        check_dtype(dtype_of<T>());
        auto& v = std::get<std::vector<T>>(*storage_);
        return {v.data(), v.size()};
    }

    double at(std::size_t flat_index) const;
    double item() const;
    std::vector<double> to_vector() const;

    Tensor clone() const;
    Tensor to(DType dtype) const;
    // Shares storage; element count must match.
    Tensor reshape(Shape shape) const;

    bool shares_storage_with(const Tensor& other) const noexcept {
        return storage_ == other.storage_;
    }

    // Bitwise equality of shape, dtype and buffer.
    bool identical(const Tensor& other) const;

private:
    using Storage = std::variant<std::vector<float>, std::vector<double>>;

    Tensor(Shape shape, DType dtype, std::shared_ptr<Storage> storage);
    void check_dtype(DType requested) const;

    Shape shape_;
    std::size_t numel_ = 1;
    DType dtype_ = DType::f32;
    std::shared_ptr<Storage> storage_;
};

// ---- elementwise ---------------------------------------------------------

enum class ElementwiseOp { add, sub, mul, div, relu, sigmoid, exp, log };

// Binary ops require b; unary ops ignore it.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b = std::nullopt);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor scale(const Tensor& a, double alpha);

// Right-aligned broadcast where extent 1 stretches.
Shape broadcast_shape(const Shape& a, const Shape& b);
// Sums t down to `shape`, undoing a broadcast that produced t's shape.
Tensor sum_to(const Tensor& t, const Shape& shape);

// ---- linear algebra ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& t);

// ---- convolution support -------------------------------------------------

struct Window {
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t padding = 0;
};

// floor((in + 2*padding - kernel)/stride) + 1; throws ShapeMismatch if < 1.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding);

// [N,C,H,W] -> [N, C*kh*kw, Hout*Wout]; zero padding at the borders.
Tensor im2col(const Tensor& input, const Window& window);
// Adjoint of im2col: scatters columns back onto [N,C,H,W], summing overlaps
// and dropping the padded border.
Tensor col2im(const Tensor& cols, const Shape& input_shape, const Window& window);

// ---- reductions ----------------------------------------------------------

enum class ReduceOp { sum, mean, max };

// Accumulates in ascending flat index order. An empty axis list copies t.
Tensor reduce(ReduceOp op, const Tensor& t, std::vector<std::size_t> axes, bool keep_dims);

// ---- serialization -------------------------------------------------------

// dtype tag (u8), rank (u32), extents (u64 each), little-endian IEEE-754 data.
void write_tensor(std::ostream& out, const Tensor& t);
// Throws CorruptCheckpoint on a malformed or truncated record.
Tensor read_tensor(std::istream& in);

}  // namespace secnn
