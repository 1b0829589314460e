#ifndef DGEA_LINALG_HPP
#define DGEA_LINALG_HPP

#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace dgea {

    using Matrix = Eigen::MatrixXd;
    using Vector = Eigen::VectorXd;
    using Index = Eigen::Index;

    /// Cholesky factor of a symmetric positive-definite matrix plus the jitter it needed.
    struct CholeskyFactor {
        Eigen::LLT<Matrix> llt;
        double jitter = 0.0;

        [[nodiscard]] double log_determinant() const {
            const auto& l = llt.matrixLLT();
            double acc = 0.0;
            for (Index i = 0; i < l.rows(); ++i)
                acc += std::log(l(i, i));
            return 2.0 * acc;
        }
    };

    struct JitterPolicy {
        double first = 1e-10; // relative to mean(diag)
        double last = 1e-4;
        double growth = 10.0;
    };

    /// Factor `c`; on failure retry with jitter·mean(diag) added to the diagonal, escalating
    /// geometrically from policy.first to policy.last. Throws NumericalError listing every level tried.
    inline CholeskyFactor robust_cholesky(const Matrix& c, const JitterPolicy& policy = {}) {
        CholeskyFactor out;
        out.llt.compute(c);
        if (out.llt.info() == Eigen::Success)
            return out;

        const double scale = c.diagonal().mean();
        std::vector<double> tried;
        if (std::isfinite(scale) && scale > 0.0) {
            Matrix work = c;
            double applied = 0.0;
            for (double rel = policy.first; rel <= policy.last * (1.0 + 1e-12); rel *= policy.growth) {
                const double jitter = rel * scale;
                work.diagonal().array() += jitter - applied;
                applied = jitter;
                tried.push_back(jitter);
                out.llt.compute(work);
                if (out.llt.info() == Eigen::Success) {
                    out.jitter = jitter;
                    return out;
                }
            }
        }
        std::ostringstream os;
        os << "Cholesky factorization failed for a " << c.rows() << "x" << c.cols() << " matrix after jitter levels [";
        for (std::size_t i = 0; i < tried.size(); ++i)
            os << (i ? ", " : "") << tried[i];
        os << "]";
        throw NumericalError(os.str(), std::move(tried));
    }

    inline bool all_finite(const Matrix& m) { return m.allFinite(); }

} // namespace dgea

#endif
