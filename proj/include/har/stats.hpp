#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "har/errors.hpp"

namespace har::stats {

// n x p observations with a group id per row; covariates, when present,
// are residualized out of the dependent variables before the test.
struct MancovaInput {
    std::vector<std::vector<double>> observations;  // n rows, p columns
    std::vector<int> group;                         // n group ids
    std::vector<std::vector<double>> covariates;    // n rows, q columns (may be empty)
};

struct WilksResult {
    double lambda = 1.0;   // det(E) / det(E + H), in (0, 1]
    double f_stat = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    double p_value = 1.0;
};

// One-way MANOVA via Wilks' Lambda with Rao's F approximation (exact for
// p <= 2 or for two groups). Throws SingularErrorMatrix when the pooled
// within-group scatter is numerically singular, InsufficientData when the
// row/group counts cannot support the test.
WilksResult wilks_manova(const MancovaInput& input);

struct DeviceDifferenceReport {
    WilksResult wilks;
    bool reject_null = false;  // strict p < alpha
    double alpha = 0.05;
    std::string summary;
};

// Phone-vs-watch two-group test over matching dependent variables.
DeviceDifferenceReport device_difference_report(
    const std::vector<std::vector<double>>& phone_rows,
    const std::vector<std::vector<double>>& watch_rows,
    const std::string& sensor_label,
    double alpha = 0.05);

// Regularized incomplete beta I_x(a, b); exposed for tests.
double regularized_incomplete_beta(double a, double b, double x);

// Upper-tail F-distribution probability P(F > f).
double f_sf(double f, double df1, double df2);

} // namespace har::stats
