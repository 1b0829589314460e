#ifndef DGEA_OPTIMIZE_HPP
#define DGEA_OPTIMIZE_HPP

#include <cmath>
#include <limits>

#include "errors.hpp"
#include "linalg.hpp"

namespace dgea {

    struct OptimizerConfig {
        int max_iterations = 100;
        double gradient_tolerance = 1e-6;
        // Stop when an accepted step improves the objective by less than this, relative to |f|.
        double function_tolerance = 1e-12;
        int max_backtracks = 40;
        double armijo = 1e-4;
        // Cap on the log-parameter step length of a single iteration.
        double max_step = 2.0;
    };

    struct OptimizerResult {
        Vector x;
        double value = 0.0;
        double initial_value = 0.0;
        Vector gradient;
        int iterations = 0;
        bool converged = false;
    };

    /// Quasi-Newton (BFGS) ascent with Armijo backtracking.
    ///
    /// `objective(x, grad)` returns f(x) and, when `grad` is non-null, writes the gradient.
    /// It may throw NumericalError at a trial point; such points are treated as f = -inf and the
    /// line search backs off. The accepted sequence of values is non-decreasing, so the result is
    /// never worse than the starting point.
    template <typename Objective>
    OptimizerResult bfgs_maximize(Objective&& objective, Vector x0, const OptimizerConfig& cfg) {
        const Index n = x0.size();
        OptimizerResult res;
        res.x = std::move(x0);
        res.gradient = Vector::Zero(n);
        res.value = objective(res.x, &res.gradient);
        res.initial_value = res.value;
        if (!std::isfinite(res.value) || !res.gradient.allFinite())
            detail::invalid("objective is not finite at the initial point");

        auto try_eval = [&](const Vector& x, Vector* g) {
            try {
                const double v = objective(x, g);
                if (!std::isfinite(v) || (g && !g->allFinite()))
                    return -std::numeric_limits<double>::infinity();
                return v;
            } catch (const NumericalError&) {
                return -std::numeric_limits<double>::infinity();
            }
        };

        // Inverse Hessian approximation of -f.
        Matrix h = Matrix::Identity(n, n);
        bool fresh = true;
        Vector g_new(n);

        while (res.iterations < cfg.max_iterations) {
            if (res.gradient.norm() < cfg.gradient_tolerance) {
                res.converged = true;
                break;
            }
            Vector dir = h * res.gradient;
            double slope = res.gradient.dot(dir);
            if (!(slope > 0.0)) {
                h.setIdentity();
                fresh = true;
                dir = res.gradient;
                slope = res.gradient.squaredNorm();
            }
            const double dn = dir.norm();
            if (dn > cfg.max_step) {
                dir *= cfg.max_step / dn;
                slope *= cfg.max_step / dn;
            }

            double t = 1.0;
            double f_new = -std::numeric_limits<double>::infinity();
            bool have_grad = false;
            Vector x_new(n);
            bool accepted = false;
            for (int k = 0; k <= cfg.max_backtracks; ++k) {
                x_new = res.x + t * dir;
                have_grad = (k == 0);
                f_new = try_eval(x_new, have_grad ? &g_new : nullptr);
                if (f_new >= res.value + cfg.armijo * t * slope) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) {
                if (fresh)
                    break; // steepest ascent cannot make progress either
                h.setIdentity();
                fresh = true;
                continue;
            }
            if (!have_grad)
                f_new = objective(x_new, &g_new);

            const Vector s = x_new - res.x;
            const Vector y = res.gradient - g_new; // gradient change of -f
            const double improvement = f_new - res.value;
            res.x = x_new;
            res.value = f_new;
            res.gradient = g_new;
            ++res.iterations;

            const double sy = s.dot(y);
            if (sy > 1e-12 * s.norm() * y.norm()) {
                if (fresh) {
                    h *= sy / y.squaredNorm();
                    fresh = false;
                }
                const double rho = 1.0 / sy;
                const Vector hy = h * y;
                h += rho * ((1.0 + rho * y.dot(hy)) * (s * s.transpose()) - (hy * s.transpose() + s * hy.transpose()));
            }
            if (improvement <= cfg.function_tolerance * std::max(1.0, std::abs(res.value))) {
                res.converged = res.gradient.norm() < cfg.gradient_tolerance;
                if (!res.converged && !fresh) {
                    // Stalled with a stale curvature model: restart once from steepest ascent.
                    h.setIdentity();
                    fresh = true;
                    continue;
                }
                break;
            }
        }
        if (res.gradient.norm() < cfg.gradient_tolerance)
            res.converged = true;
        return res;
    }

} // namespace dgea

#endif
