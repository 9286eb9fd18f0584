#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace dirmax {

/// Least-squares line y = intercept + slope * x.
struct LinearFit {
    double intercept = 0;
    double slope = 0;
    std::vector<double> residuals;
    /// False when x has fewer than two distinct values; slope is then 0.
    bool determined = false;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit input size mismatch");
    LinearFit fit;
    const auto n = x.size();
    if (n == 0) return fit;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    fit.determined = sxx > 0;
    fit.slope = fit.determined ? sxy / sxx : 0.0;
    fit.intercept = my - fit.slope * mx;
    for (std::size_t i = 0; i < n; ++i) fit.residuals.push_back(y[i] - (fit.intercept + fit.slope * x[i]));
    return fit;
}

/// y = a * x^b fitted on log-log axes; residuals are in log space.
struct PowerFit {
    double a = 0;
    double b = 0;
    std::vector<double> residuals;
    bool determined = false;
};

inline PowerFit fit_power(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] <= 0 || y[i] <= 0) throw std::invalid_argument("power fit needs positive data");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    auto line = fit_line(lx, ly);
    return {std::exp(line.intercept), line.slope, line.residuals, line.determined};
}

}  // namespace dirmax
