#include "secnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstring>
#include <random>

namespace secnn {
namespace {

double evaluate(const LossFn& fn) {
    Tape tape;
    Var loss = fn(tape);
    if (loss.value().rank() != 0)
        fail(ErrorKind::ShapeMismatch, "grad_check needs a scalar function, got " + shape_str(loss.shape()));
    return loss.value().item();
}

std::vector<std::size_t> pick_coords(std::size_t count, const GradCheckOptions& options, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (options.max_coords_per_tensor == 0 || options.max_coords_per_tensor >= count) return idx;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(options.max_coords_per_tensor);
    std::sort(idx.begin(), idx.end());
    return idx;
}

void set_coord(Tensor& t, std::size_t i, double v) {
    visit_dtype(t.dtype(), [&](auto tag) {
        using T = decltype(tag);
        t.mutable_data<T>()[i] = static_cast<T>(v);
    });
}

}  // namespace

GradCheckReport grad_check_parameters(const LossFn& fn, const std::vector<Parameter*>& params,
                                      double tolerance, const GradCheckOptions& options) {
    const double base = evaluate(fn);
    const double again = evaluate(fn);
    if (std::memcmp(&base, &again, sizeof base) != 0)
        fail(ErrorKind::NondeterministicFunction,
             "two evaluations at the same point differ (" + std::to_string(base) + " vs " + std::to_string(again) + ")");

    for (Parameter* p : params) p->zero_grad();
    {
        Tape tape;
        Var loss = fn(tape);
        tape.backward(loss);
    }

    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    for (Parameter* p : params) {
        const Tensor analytic = p->grad().clone();
        Tensor& value = p->value();
        for (std::size_t i : pick_coords(value.numel(), options, rng)) {
            const double x = value.at(i);
            const double h = options.step_scale * (1.0 + std::abs(x));
            set_coord(value, i, x + h);
            const double up = evaluate(fn);
            set_coord(value, i, x - h);
            const double down = evaluate(fn);
            set_coord(value, i, x);
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(analytic.at(i) - numeric) / std::max(1.0, std::abs(numeric));
            ++report.coords_checked;
            if (report.worst.empty() || err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst = p->name() + "[" + std::to_string(i) + "]";
            }
        }
    }
    report.pass = report.max_rel_err <= tolerance;
    return report;
}

GradCheckReport grad_check(const ScalarFn& fn, const Tensor& point, double tolerance,
                           const GradCheckOptions& options) {
    Parameter input("input", point.shape(), ParamRole::weight);
    input.assign(point);
    return grad_check_parameters([&](Tape& tape) { return fn(tape, tape.param(input)); }, {&input}, tolerance,
                                 options);
}

}  // namespace secnn
