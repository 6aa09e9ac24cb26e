#pragma once

#include <functional>
#include <string>
#include <vector>

#include "in2/ops.hpp"

namespace in2 {

// Central-finite-difference check of analytic gradients. Probes name leaf
// Vars (parameters or inputs) plus a flat element index; the loss closure
// must rebuild its graph from the current leaf values on every call.
template <typename T>
struct GradProbeT {
    ag::Var<T> target;
    std::int64_t index = 0;
    std::string label;
};

struct GradCheckEntry {
    std::string label;
    std::int64_t index = 0;
    double analytic = 0;
    double numeric = 0;
    double rel_error = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0;
    std::string worst;

    bool pass(double tol) const { return max_rel_error <= tol; }
};

template <typename T>
GradCheckReport grad_check_t(const std::function<ag::Var<T>()>& loss_fn,
                             const std::vector<GradProbeT<T>>& probes, double eps = 1e-5) {
    GradCheckReport report;
    ag::Var<T> loss = loss_fn();
    check(loss.val().numel() == 1, "grad_check: loss must be scalar");
    ag::GradMap<T> gm = ag::backward(loss);
    for (const GradProbeT<T>& p : probes) {
        ag::Var<T> g = gm.grad(p.target);
        double analytic = g.defined() ? static_cast<double>(g.val()[p.index]) : 0.0;

        T* slot = &p.target.node()->value[p.index];
        T saved = *slot;
        *slot = static_cast<T>(saved + eps);
        double up = static_cast<double>(loss_fn().val()[0]);
        *slot = static_cast<T>(saved - eps);
        double dn = static_cast<double>(loss_fn().val()[0]);
        *slot = saved;
        double numeric = (up - dn) / (2.0 * eps);

        double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
        GradCheckEntry e{p.label, p.index, analytic, numeric,
                         std::abs(analytic - numeric) / denom};
        if (e.rel_error >= report.max_rel_error) {
            report.max_rel_error = e.rel_error;
            report.worst = e.label;
        }
        report.entries.push_back(e);
    }
    return report;
}

using GradProbe = GradProbeT<double>;

inline GradCheckReport grad_check(const std::function<ag::Var<double>()>& loss_fn,
                                  const std::vector<GradProbe>& probes, double eps = 1e-5) {
    return grad_check_t<double>(loss_fn, probes, eps);
}

}  // namespace in2
