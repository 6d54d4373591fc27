#include "secnn/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lowering.hpp"
#include "secnn/kernels.hpp"

namespace secnn {

std::string_view to_string(DType dtype) noexcept { return dtype == DType::f32 ? "f32" : "f64"; }

std::size_t dtype_size(DType dtype) noexcept { return dtype == DType::f32 ? 4 : 8; }

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

void check_extents(const Shape& shape) {
    for (std::size_t e : shape)
        if (e == 0) fail(ErrorKind::ShapeMismatch, "zero extent in shape " + shape_str(shape));
}

}  // namespace

Tensor::Tensor() : Tensor(Shape{}, DType::f32) {}

Tensor::Tensor(Shape shape, DType dtype) : shape_(std::move(shape)), dtype_(dtype) {
    check_extents(shape_);
    numel_ = secnn::numel(shape_);
    if (dtype == DType::f32)
        storage_ = std::make_shared<Storage>(std::vector<float>(numel_, 0.0f));
    else
        storage_ = std::make_shared<Storage>(std::vector<double>(numel_, 0.0));
}

Tensor::Tensor(Shape shape, DType dtype, std::shared_ptr<Storage> storage)
    : shape_(std::move(shape)), numel_(secnn::numel(shape_)), dtype_(dtype),
      storage_(std::move(storage)) {}

Tensor Tensor::zeros(Shape shape, DType dtype) { return Tensor(std::move(shape), dtype); }

Tensor Tensor::full(Shape shape, double value, DType dtype) {
    Tensor t(std::move(shape), dtype);
    visit_dtype(dtype, [&](auto tag) {
        using T = decltype(tag);
        auto d = t.mutable_data<T>();
        std::fill(d.begin(), d.end(), static_cast<T>(value));
    });
    return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::from_vector(Shape shape, std::vector<float> values) {
    check_extents(shape);
    if (secnn::numel(shape) != values.size())
        fail(ErrorKind::ShapeMismatch, "buffer length " + std::to_string(values.size()) +
                                           " does not match shape " + shape_str(shape));
    return Tensor(std::move(shape), DType::f32, std::make_shared<Storage>(std::move(values)));
}

Tensor Tensor::from_vector(Shape shape, std::vector<double> values) {
    check_extents(shape);
    if (secnn::numel(shape) != values.size())
        fail(ErrorKind::ShapeMismatch, "buffer length " + std::to_string(values.size()) +
                                           " does not match shape " + shape_str(shape));
    return Tensor(std::move(shape), DType::f64, std::make_shared<Storage>(std::move(values)));
}

Tensor Tensor::from_values(Shape shape, const std::vector<double>& values, DType dtype) {
    if (dtype == DType::f64) return from_vector(std::move(shape), values);
    return from_vector(std::move(shape), std::vector<float>(values.begin(), values.end()));
}

std::size_t Tensor::extent(std::size_t axis) const {
    if (axis >= shape_.size())
        fail(ErrorKind::InvalidAxis, "axis " + std::to_string(axis) + " for shape " + shape_str(shape_));
    return shape_[axis];
}

void Tensor::check_dtype(DType requested) const {
    if (requested != dtype_)
        fail(ErrorKind::DtypeMismatch, "requested " + std::string(to_string(requested)) +
                                           " view of " + std::string(to_string(dtype_)) + " tensor");
}

double Tensor::at(std::size_t flat_index) const {
    if (flat_index >= numel_) fail(ErrorKind::ShapeMismatch, "flat index out of range");
    return visit_dtype(dtype_, [&](auto tag) -> double {
        return static_cast<double>(data<decltype(tag)>()[flat_index]);
    });
}

double Tensor::item() const {
    if (numel_ != 1) fail(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_str(shape_));
    return at(0);
}

std::vector<double> Tensor::to_vector() const {
    return visit_dtype(dtype_, [&](auto tag) {
        auto d = data<decltype(tag)>();
        return std::vector<double>(d.begin(), d.end());
    });
}

Tensor Tensor::clone() const { return Tensor(shape_, dtype_, std::make_shared<Storage>(*storage_)); }

Tensor Tensor::to(DType dtype) const {
    if (dtype == dtype_) return clone();
    Tensor out(shape_, dtype);
    visit_dtype(dtype_, [&](auto src_tag) {
        using S = decltype(src_tag);
        visit_dtype(dtype, [&](auto dst_tag) {
            using D = decltype(dst_tag);
            auto src = data<S>();
            auto dst = out.mutable_data<D>();
            for (std::size_t i = 0; i < numel_; ++i) dst[i] = static_cast<D>(src[i]);
        });
    });
    return out;
}

Tensor Tensor::reshape(Shape shape) const {
    check_extents(shape);
    if (secnn::numel(shape) != numel_)
        fail(ErrorKind::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), dtype_, storage_);
}

bool Tensor::identical(const Tensor& other) const {
    if (shape_ != other.shape_ || dtype_ != other.dtype_) return false;
    return visit_dtype(dtype_, [&](auto tag) {
        using T = decltype(tag);
        auto a = data<T>();
        auto b = other.data<T>();
        return std::memcmp(a.data(), b.data(), a.size_bytes()) == 0;
    });
}

// ---- elementwise ---------------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t ea = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t eb = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            fail(ErrorKind::ShapeMismatch, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        out[i] = std::max(ea, eb);
    }
    return out;
}

namespace {

// Strides of `shape` laid against `out_shape`, with 0 on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& shape, const Shape& out_shape) {
    const std::size_t rank = out_shape.size();
    std::vector<std::size_t> strides(rank, 0);
    std::size_t stride = 1;
    for (std::size_t i = shape.size(); i-- > 0;) {
        const std::size_t oi = i + (rank - shape.size());
        strides[oi] = shape[i] == 1 ? 0 : stride;
        stride *= shape[i];
    }
    return strides;
}

template <class T, class F>
void broadcast_apply(const Tensor& a, const Tensor& b, Tensor& out, F f) {
    const Shape& os = out.shape();
    auto sa = broadcast_strides(a.shape(), os);
    auto sb = broadcast_strides(b.shape(), os);
    auto da = a.data<T>();
    auto db = b.data<T>();
    auto dout = out.mutable_data<T>();
    const std::size_t rank = os.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t flat = 0; flat < dout.size(); ++flat) {
        dout[flat] = f(da[ia], db[ib]);
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < os[d]) break;
            ia -= sa[d] * os[d];
            ib -= sb[d] * os[d];
            idx[d] = 0;
        }
    }
}

template <class T>
T stable_sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <class T>
Tensor binary_op(ElementwiseOp op, const Tensor& a, const Tensor& b) {
    Shape out_shape = a.shape() == b.shape() ? a.shape() : broadcast_shape(a.shape(), b.shape());
    Tensor out(out_shape, a.dtype());
    const auto& k = kernels<T>();
    if (a.shape() == b.shape()) {
        const T* pa = a.data<T>().data();
        const T* pb = b.data<T>().data();
        T* po = out.mutable_data<T>().data();
        const std::size_t n = out.numel();
        switch (op) {
            case ElementwiseOp::add: k.add(pa, pb, po, n); return out;
            case ElementwiseOp::sub: k.sub(pa, pb, po, n); return out;
            case ElementwiseOp::mul: k.mul(pa, pb, po, n); return out;
            case ElementwiseOp::div:
                for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i];
                return out;
            default: break;
        }
    }
    switch (op) {
        case ElementwiseOp::add: broadcast_apply<T>(a, b, out, [](T x, T y) { return x + y; }); break;
        case ElementwiseOp::sub: broadcast_apply<T>(a, b, out, [](T x, T y) { return x - y; }); break;
        case ElementwiseOp::mul: broadcast_apply<T>(a, b, out, [](T x, T y) { return x * y; }); break;
        case ElementwiseOp::div: broadcast_apply<T>(a, b, out, [](T x, T y) { return x / y; }); break;
        default: fail(ErrorKind::InvalidConfig, "not a binary op");
    }
    return out;
}

template <class T>
Tensor unary_op(ElementwiseOp op, const Tensor& a) {
    Tensor out(a.shape(), a.dtype());
    auto src = a.data<T>();
    auto dst = out.mutable_data<T>();
    switch (op) {
        case ElementwiseOp::relu: kernels<T>().relu(src.data(), dst.data(), src.size()); break;
        case ElementwiseOp::sigmoid:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = stable_sigmoid(src[i]);
            break;
        case ElementwiseOp::exp:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::exp(src[i]);
            break;
        case ElementwiseOp::log:
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::log(src[i]);
            break;
        default: fail(ErrorKind::InvalidConfig, "not a unary op");
    }
    return out;
}

bool is_binary(ElementwiseOp op) {
    return op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul ||
           op == ElementwiseOp::div;
}

}  // namespace

Tensor elementwise(ElementwiseOp op, const Tensor& a, const std::optional<Tensor>& b) {
    if (is_binary(op)) {
        if (!b) fail(ErrorKind::ShapeMismatch, "binary op without second operand");
        if (a.dtype() != b->dtype())
            fail(ErrorKind::DtypeMismatch, std::string(to_string(a.dtype())) + " vs " +
                                               std::string(to_string(b->dtype())));
        return visit_dtype(a.dtype(), [&](auto tag) { return binary_op<decltype(tag)>(op, a, *b); });
    }
    return visit_dtype(a.dtype(), [&](auto tag) { return unary_op<decltype(tag)>(op, a); });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::div, a, b); }
Tensor relu(const Tensor& a) { return elementwise(ElementwiseOp::relu, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(ElementwiseOp::sigmoid, a); }
Tensor exp(const Tensor& a) { return elementwise(ElementwiseOp::exp, a); }
Tensor log(const Tensor& a) { return elementwise(ElementwiseOp::log, a); }

Tensor scale(const Tensor& a, double alpha) {
    Tensor out(a.shape(), a.dtype());
    visit_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels<T>().scale(static_cast<T>(alpha), a.data<T>().data(), out.mutable_data<T>().data(),
                           a.numel());
    });
    return out;
}

Tensor sum_to(const Tensor& t, const Shape& shape) {
    if (t.shape() == shape) return t;
    if (broadcast_shape(shape, t.shape()) != t.shape())
        fail(ErrorKind::ShapeMismatch, "cannot sum " + shape_str(t.shape()) + " to " + shape_str(shape));
    const std::size_t lead = t.rank() - shape.size();
    std::vector<std::size_t> axes;
    for (std::size_t i = 0; i < t.rank(); ++i)
        if (i < lead || shape[i - lead] == 1) axes.push_back(i);
    Tensor r = reduce(ReduceOp::sum, t, axes, true);
    return r.reshape(shape);
}

// ---- linear algebra ------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        fail(ErrorKind::ShapeMismatch, "matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    if (a.dtype() != b.dtype()) fail(ErrorKind::DtypeMismatch, "matmul operands differ in dtype");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor out({m, n}, a.dtype());
    visit_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels<T>().gemm(false, false, m, n, k, a.data<T>().data(), b.data<T>().data(),
                          out.mutable_data<T>().data(), false);
    });
    return out;
}

Tensor transpose2d(const Tensor& t) {
    if (t.rank() != 2) fail(ErrorKind::ShapeMismatch, "transpose2d of rank " + std::to_string(t.rank()));
    const std::size_t r = t.shape()[0], c = t.shape()[1];
    Tensor out({c, r}, t.dtype());
    visit_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = t.data<T>();
        auto dst = out.mutable_data<T>();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
    });
    return out;
}

// ---- convolution support -------------------------------------------------

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
    if (stride == 0) fail(ErrorKind::ShapeMismatch, "stride must be positive");
    const std::size_t padded = in + 2 * padding;
    if (padded < kernel)
        fail(ErrorKind::ShapeMismatch, "kernel " + std::to_string(kernel) + " exceeds padded extent " +
                                           std::to_string(padded));
    return (padded - kernel) / stride + 1;
}

Tensor im2col(const Tensor& input, const Window& win) {
    if (input.rank() != 4) fail(ErrorKind::ShapeMismatch, "im2col expects [N,C,H,W], got " + shape_str(input.shape()));
    const auto& s = input.shape();
    const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
    const std::size_t oh = conv_out_extent(h, win.kernel_h, win.stride, win.padding);
    const std::size_t ow = conv_out_extent(w, win.kernel_w, win.stride, win.padding);
    const std::size_t rows = c * win.kernel_h * win.kernel_w;
    Tensor out({n, rows, oh * ow}, input.dtype());
    visit_dtype(input.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* src = input.data<T>().data();
        T* dst = out.mutable_data<T>().data();
        for (std::size_t i = 0; i < n; ++i)
            detail::im2col_sample(src + i * c * h * w, dst + i * rows * oh * ow, c, h, w, win, oh, ow);
    });
    return out;
}

Tensor col2im(const Tensor& cols, const Shape& input_shape, const Window& win) {
    if (input_shape.size() != 4) fail(ErrorKind::ShapeMismatch, "col2im target must be rank 4");
    const std::size_t n = input_shape[0], c = input_shape[1], h = input_shape[2], w = input_shape[3];
    const std::size_t oh = conv_out_extent(h, win.kernel_h, win.stride, win.padding);
    const std::size_t ow = conv_out_extent(w, win.kernel_w, win.stride, win.padding);
    const std::size_t rows = c * win.kernel_h * win.kernel_w;
    if (cols.shape() != Shape{n, rows, oh * ow})
        fail(ErrorKind::ShapeMismatch, "col2im input " + shape_str(cols.shape()));
    Tensor out(input_shape, cols.dtype());
    visit_dtype(cols.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* src = cols.data<T>().data();
        T* dst = out.mutable_data<T>().data();
        for (std::size_t i = 0; i < n; ++i)
            detail::col2im_sample(src + i * rows * oh * ow, dst + i * c * h * w, c, h, w, win, oh, ow);
    });
    return out;
}

// ---- reductions ----------------------------------------------------------

Tensor reduce(ReduceOp op, const Tensor& t, std::vector<std::size_t> axes, bool keep_dims) {
    std::sort(axes.begin(), axes.end());
    for (std::size_t i = 0; i < axes.size(); ++i) {
        if (axes[i] >= t.rank())
            fail(ErrorKind::InvalidAxis, "axis " + std::to_string(axes[i]) + " for rank " + std::to_string(t.rank()));
        if (i > 0 && axes[i] == axes[i - 1])
            fail(ErrorKind::InvalidAxis, "duplicate axis " + std::to_string(axes[i]));
    }
    if (axes.empty()) return t.clone();

    const Shape& in = t.shape();
    std::vector<bool> reduced(in.size(), false);
    for (std::size_t a : axes) reduced[a] = true;
    Shape kept(in.size());
    Shape dropped;
    std::size_t count = 1;
    for (std::size_t i = 0; i < in.size(); ++i) {
        kept[i] = reduced[i] ? 1 : in[i];
        if (reduced[i]) count *= in[i];
        else dropped.push_back(in[i]);
    }
    Tensor out(kept, t.dtype());
    auto out_strides = broadcast_strides(kept, in);

    visit_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto src = t.data<T>();
        auto dst = out.mutable_data<T>();
        if (op == ReduceOp::max) std::fill(dst.begin(), dst.end(), -std::numeric_limits<T>::infinity());
        std::vector<std::size_t> idx(in.size(), 0);
        std::size_t oi = 0;
        for (std::size_t flat = 0; flat < src.size(); ++flat) {
            if (op == ReduceOp::max) dst[oi] = std::max(dst[oi], src[flat]);
            else dst[oi] += src[flat];
            for (std::size_t d = in.size(); d-- > 0;) {
                ++idx[d];
                oi += out_strides[d];
                if (idx[d] < in[d]) break;
                oi -= out_strides[d] * in[d];
                idx[d] = 0;
            }
        }
        if (op == ReduceOp::mean) {
            const T denom = T(count);
            for (auto& v : dst) v = v / denom;
        }
    });
    if (keep_dims) return out;
    return dropped.empty() ? out.reshape({}) : out.reshape(dropped);
}

// ---- serialization -------------------------------------------------------

namespace {

template <class U>
void put_le(std::ostream& out, U value) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
    unsigned char bytes[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U)))
        fail(ErrorKind::CorruptCheckpoint, "truncated tensor record");
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

constexpr std::uint32_t kMaxRank = 16;

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
    visit_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = t.data<T>();
        if constexpr (std::endian::native == std::endian::little) {
            out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
        } else {
            using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            for (T v : d) put_le<Bits>(out, std::bit_cast<Bits>(v));
        }
    });
    if (!out) fail(ErrorKind::IoFailure, "failed writing tensor");
}

Tensor read_tensor(std::istream& in) {
    const auto tag = get_le<std::uint8_t>(in);
    if (tag > 1) fail(ErrorKind::CorruptCheckpoint, "unknown dtype tag " + std::to_string(tag));
    const DType dtype = static_cast<DType>(tag);
    const auto rank = get_le<std::uint32_t>(in);
    if (rank > kMaxRank) fail(ErrorKind::CorruptCheckpoint, "implausible rank " + std::to_string(rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& e : shape) {
        e = get_le<std::uint64_t>(in);
        if (e == 0 || e > (std::size_t{1} << 40)) fail(ErrorKind::CorruptCheckpoint, "implausible extent");
        count *= e;
    }
    return visit_dtype(dtype, [&](auto t) {
        using T = decltype(t);
        std::vector<T> values(count);
        if constexpr (std::endian::native == std::endian::little) {
            const auto bytes = static_cast<std::streamsize>(count * sizeof(T));
            if (!in.read(reinterpret_cast<char*>(values.data()), bytes))
                fail(ErrorKind::CorruptCheckpoint, "truncated tensor data");
        } else {
            using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            for (auto& v : values) v = std::bit_cast<T>(get_le<Bits>(in));
        }
        return Tensor::from_vector(shape, std::move(values));
    });
}

}  // namespace secnn
