#pragma once

#include <stdexcept>
#include <string>

namespace shelab {

// Bad arguments to a pure function (t <= 0, r outside (0,1/2), ...).
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// Invalid experiment configuration. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Blow-up, indefinite covariance, failed fits. The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Grid alignment and resolution problems.
struct GridError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

}  // namespace shelab
