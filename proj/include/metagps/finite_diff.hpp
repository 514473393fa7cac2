#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "metagps/autodiff.hpp"
#include "metagps/paramset.hpp"

namespace metagps::ad {

// Scalar-valued function of a ParamSet, evaluated by building a fresh tape.
using LossBuilder = std::function<Var(Tape&, TapedParams&)>;

inline double eval_loss(const LossBuilder& f, const ParamSet& params, Mode mode = Mode::FirstOrder) {
    Tape tape(mode);
    TapedParams tp(tape, params);
    Var loss = f(tape, tp);
    if (!loss.value().is_scalar()) throw std::invalid_argument("eval_loss: f must return a scalar");
    double v = loss.value().values[0];
    if (!std::isfinite(v)) throw std::runtime_error("eval_loss: non-finite value at probe point");
    return v;
}

// Central differences against backward(); returns
// max over coordinates of |analytic - numeric| / max(1, |numeric|).
// The analytic tape runs in exact-second-order mode: builders that detach
// inner gradients in first-order mode would otherwise be compared against
// the true derivative of their own forward value.
inline double finite_diff_check(const LossBuilder& f, const ParamSet& params, double h = 1e-5) {
    if (h < 1e-7 || h > 1e-3) throw std::invalid_argument("finite_diff_check: h outside [1e-7, 1e-3]");

    Tape tape(Mode::ExactSecondOrder);
    TapedParams tp(tape, params);
    Var loss = f(tape, tp);
    if (!loss.value().is_scalar()) throw std::invalid_argument("finite_diff_check: f must return a scalar");
    ParamSet analytic = backward_params(loss, tp);

    double max_rel = 0.0;
    ParamSet probe = params;
    for (std::size_t e = 0; e < params.size(); ++e) {
        const auto& name = params.entry(e).first;
        auto& t = probe[name];
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            const double saved = t.values[i];
            t.values[i] = saved + h;
            const double up = eval_loss(f, probe);
            t.values[i] = saved - h;
            const double down = eval_loss(f, probe);
            t.values[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double rel = std::abs(analytic[name].values[i] - numeric) / std::max(1.0, std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace metagps::ad
