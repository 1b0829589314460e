#ifndef DGEA_ERRORS_HPP
#define DGEA_ERRORS_HPP

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dgea {

    /// Precondition violated by the caller (bad shapes, non-positive parameters, ...).
    class InvalidArgument : public std::invalid_argument {
    public:
        using std::invalid_argument::invalid_argument;
    };

    /// A factorization or aggregation step broke down numerically.
    class NumericalError : public std::runtime_error {
    public:
        explicit NumericalError(const std::string& what, std::vector<double> jitter_levels = {})
            : std::runtime_error(what), jitter_levels_(std::move(jitter_levels)) {}

        /// Jitter values that were added to the diagonal before giving up (empty if not a Cholesky failure).
        [[nodiscard]] const std::vector<double>& jitter_levels() const { return jitter_levels_; }

    private:
        std::vector<double> jitter_levels_;
    };

    /// Malformed input file. Row and column are 1-based; row counts file lines including the header.
    class ParseError : public std::runtime_error {
    public:
        ParseError(const std::string& path, std::size_t row, std::size_t column, const std::string& detail)
            : std::runtime_error(format(path, row, column, detail)), row_(row), column_(column) {}

        [[nodiscard]] std::size_t row() const { return row_; }
        [[nodiscard]] std::size_t column() const { return column_; }

    private:
        static std::string format(const std::string& path, std::size_t row, std::size_t column,
                                  const std::string& detail) {
            std::ostringstream os;
            os << path << ": row " << row << ", column " << column << ": " << detail;
            return os.str();
        }

        std::size_t row_;
        std::size_t column_;
    };

    namespace detail {
        [[noreturn]] inline void invalid(const std::string& msg) { throw InvalidArgument(msg); }

        inline void require(bool cond, const std::string& msg) {
            if (!cond)
                invalid(msg);
        }
    } // namespace detail

} // namespace dgea

#endif
