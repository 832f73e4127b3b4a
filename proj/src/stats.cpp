#include "har/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace har::stats {

namespace {

// Square-matrix determinant via LU with partial pivoting. Returns 0 when a
// pivot falls below the relative threshold.
double lu_determinant(std::vector<std::vector<double>> a, double* scale_out) {
    const std::size_t n = a.size();
    double scale = 0.0;
    for (const auto& row : a)
        for (double v : row) scale = std::max(scale, std::abs(v));
    if (scale_out) *scale_out = scale;
    if (n == 0) return 1.0;
    if (scale == 0.0) return 0.0;

    double det = 1.0;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[pivot][k])) pivot = i;
        if (pivot != k) {
            std::swap(a[pivot], a[k]);
            det = -det;
        }
        const double p = a[k][k];
        if (std::abs(p) <= 1e-14 * scale) return 0.0;
        det *= p;
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i][k] / p;
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
        }
    }
    return det;
}

// Least-squares solve of (X^T X) b = X^T y via Gaussian elimination with
// partial pivoting; columns with a zero pivot get coefficient 0.
std::vector<double> solve_normal_equations(std::vector<std::vector<double>> ata,
                                           std::vector<double> atb) {
    const std::size_t n = ata.size();
    double scale = 0.0;
    for (const auto& row : ata)
        for (double v : row) scale = std::max(scale, std::abs(v));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t pivot = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(ata[i][k]) > std::abs(ata[pivot][k])) pivot = i;
        std::swap(ata[pivot], ata[k]);
        std::swap(atb[pivot], atb[k]);
        std::swap(perm[pivot], perm[k]);
        if (std::abs(ata[k][k]) <= 1e-12 * std::max(scale, 1e-300)) {
            // Dependent column: zero the row so its coefficient stays 0.
            std::fill(ata[k].begin(), ata[k].end(), 0.0);
            atb[k] = 0.0;
            ata[k][k] = 1.0;
            continue;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = ata[i][k] / ata[k][k];
            for (std::size_t j = k; j < n; ++j) ata[i][j] -= f * ata[k][j];
            atb[i] -= f * atb[k];
        }
    }
    std::vector<double> b(n, 0.0);
    for (std::size_t k = n; k-- > 0;) {
        double acc = atb[k];
        for (std::size_t j = k + 1; j < n; ++j) acc -= ata[k][j] * b[j];
        b[k] = acc / ata[k][k];
    }
    return b;
}

// Continued-fraction evaluation of the incomplete beta (Lentz's method).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 400;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

} // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double f_sf(double f, double df1, double df2) {
    if (f <= 0.0) return 1.0;
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f));
}

WilksResult wilks_manova(const MancovaInput& input) {
    const std::size_t n = input.observations.size();
    if (n == 0) throw InsufficientData("no observations");
    const std::size_t p = input.observations.front().size();
    if (p == 0) throw InsufficientData("no dependent variables");
    if (input.group.size() != n) throw LengthMismatch("group vector length != observation count");
    for (const auto& row : input.observations)
        if (row.size() != p) throw ShapeMismatch("ragged observation matrix");

    // Residualize on [1, covariates]; the effective covariate count is the
    // number of centered columns that carry independent variation.
    std::vector<std::vector<double>> y = input.observations;
    std::size_t q_eff = 0;
    if (!input.covariates.empty()) {
        if (input.covariates.size() != n)
            throw LengthMismatch("covariate row count != observation count");
        const std::size_t q = input.covariates.front().size();
        std::vector<std::vector<double>> x(n, std::vector<double>(q + 1, 1.0));
        for (std::size_t i = 0; i < n; ++i) {
            if (input.covariates[i].size() != q) throw ShapeMismatch("ragged covariate matrix");
            for (std::size_t j = 0; j < q; ++j) x[i][j + 1] = input.covariates[i][j];
        }
        // X^T X and per-column X^T y.
        std::vector<std::vector<double>> ata(q + 1, std::vector<double>(q + 1, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a <= q; ++a)
                for (std::size_t b = 0; b <= q; ++b) ata[a][b] += x[i][a] * x[i][b];

        // Count informative covariate columns: nonzero variance after
        // centering and not duplicating earlier columns (rank via pivots).
        {
            auto gram = ata;
            double scale = 0.0;
            for (const auto& row : gram)
                for (double v : row) scale = std::max(scale, std::abs(v));
            std::size_t rank = 0;
            for (std::size_t k = 0; k <= q; ++k) {
                std::size_t pivot = k;
                for (std::size_t i = k + 1; i <= q; ++i)
                    if (std::abs(gram[i][k]) > std::abs(gram[pivot][k])) pivot = i;
                std::swap(gram[pivot], gram[k]);
                if (std::abs(gram[k][k]) <= 1e-12 * std::max(scale, 1e-300)) continue;
                ++rank;
                for (std::size_t i = k + 1; i <= q; ++i) {
                    const double f = gram[i][k] / gram[k][k];
                    for (std::size_t j = k; j <= q; ++j) gram[i][j] -= f * gram[k][j];
                }
            }
            q_eff = rank > 0 ? rank - 1 : 0;  // intercept column is not a covariate
        }

        for (std::size_t col = 0; col < p; ++col) {
            std::vector<double> atb(q + 1, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t a = 0; a <= q; ++a) atb[a] += x[i][a] * input.observations[i][col];
            const auto beta = solve_normal_equations(ata, atb);
            for (std::size_t i = 0; i < n; ++i) {
                double fit = 0.0;
                for (std::size_t a = 0; a <= q; ++a) fit += x[i][a] * beta[a];
                y[i][col] = input.observations[i][col] - fit;
            }
        }
    }

    // Group means and counts.
    std::map<int, std::pair<std::vector<double>, std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        auto& [mean, count] = groups[input.group[i]];
        if (mean.empty()) mean.assign(p, 0.0);
        for (std::size_t j = 0; j < p; ++j) mean[j] += y[i][j];
        ++count;
    }
    const std::size_t g = groups.size();
    if (g < 2) throw InsufficientData("need at least 2 groups");
    for (auto& [id, mc] : groups) {
        if (mc.second < 2)
            throw InsufficientData("group " + std::to_string(id) + " has fewer than 2 rows");
        for (double& v : mc.first) v /= static_cast<double>(mc.second);
    }
    if (n <= p + q_eff + g)
        throw InsufficientData("need n > p + q + groups (" + std::to_string(n) + " rows)");

    std::vector<double> grand(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) grand[j] += y[i][j];
    for (double& v : grand) v /= static_cast<double>(n);

    // Between-group hypothesis matrix H and pooled within-group error E.
    std::vector<std::vector<double>> H(p, std::vector<double>(p, 0.0));
    std::vector<std::vector<double>> E(p, std::vector<double>(p, 0.0));
    for (const auto& [id, mc] : groups) {
        const auto& mean = mc.first;
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b)
                H[a][b] += static_cast<double>(mc.second) * (mean[a] - grand[a]) * (mean[b] - grand[b]);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& mean = groups[input.group[i]].first;
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b)
                E[a][b] += (y[i][a] - mean[a]) * (y[i][b] - mean[b]);
    }

    // Singularity guards, both relative to the matrix scale: a dependent
    // whose within-group scatter sits at rounding noise for the raw data
    // magnitude, or a determinant collapsing against the Hadamard bound
    // (collinear dependents).
    double diag_scale = 1.0;
    for (std::size_t j = 0; j < p; ++j) {
        double max_abs = 0.0;
        for (std::size_t i = 0; i < n; ++i) max_abs = std::max(max_abs, std::abs(y[i][j]));
        const double noise_floor = 1e-12 * static_cast<double>(n) * std::max(max_abs * max_abs, 1e-300);
        if (E[j][j] <= noise_floor)
            throw SingularErrorMatrix("dependent variable " + std::to_string(j) +
                                      " is (numerically) constant within groups");
        diag_scale *= E[j][j];
    }
    const double det_e = lu_determinant(E, nullptr);
    std::vector<std::vector<double>> EH(p, std::vector<double>(p, 0.0));
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b) EH[a][b] = E[a][b] + H[a][b];
    const double det_eh = lu_determinant(EH, nullptr);
    if (det_e <= 1e-12 * diag_scale || det_eh == 0.0)
        throw SingularErrorMatrix("within-group scatter matrix is singular (det_E=" +
                                  std::to_string(det_e) + ")");

    WilksResult r;
    r.lambda = det_e / det_eh;
    r.lambda = std::clamp(r.lambda, 1e-300, 1.0);

    const double pd = static_cast<double>(p);
    const double nu_h = static_cast<double>(g) - 1.0;
    const double nu_e = static_cast<double>(n) - static_cast<double>(g) - static_cast<double>(q_eff);

    const double denom = pd * pd + nu_h * nu_h - 5.0;
    const double t = denom > 0.0 ? std::sqrt((pd * pd * nu_h * nu_h - 4.0) / denom) : 1.0;
    const double w = nu_e + nu_h - (pd + nu_h + 1.0) / 2.0;
    r.df1 = pd * nu_h;
    r.df2 = w * t - (pd * nu_h) / 2.0 + 1.0;
    if (r.df2 <= 0.0) throw InsufficientData("nonpositive denominator degrees of freedom");
    const double lam_t = std::pow(r.lambda, 1.0 / t);
    r.f_stat = (1.0 - lam_t) / lam_t * (r.df2 / r.df1);
    r.p_value = std::clamp(f_sf(r.f_stat, r.df1, r.df2), 0.0, 1.0);
    return r;
}

DeviceDifferenceReport device_difference_report(
    const std::vector<std::vector<double>>& phone_rows,
    const std::vector<std::vector<double>>& watch_rows,
    const std::string& sensor_label, double alpha) {
    if (phone_rows.empty() || watch_rows.empty())
        throw InsufficientData("both device groups must be non-empty");
    if (phone_rows.front().size() != watch_rows.front().size())
        throw ShapeMismatch("phone and watch rows have different variable counts");

    MancovaInput in;
    in.observations = phone_rows;
    in.observations.insert(in.observations.end(), watch_rows.begin(), watch_rows.end());
    in.group.assign(phone_rows.size(), 0);
    in.group.insert(in.group.end(), watch_rows.size(), 1);

    DeviceDifferenceReport rep;
    rep.alpha = alpha;
    rep.wilks = wilks_manova(in);
    rep.reject_null = rep.wilks.p_value < alpha;

    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "%s: Wilks' Lambda = %.6f, F(%.1f, %.1f) = %.4f, p = %.6g -> %s the null "
                  "hypothesis of equal phone/watch means at alpha = %.2f",
                  sensor_label.c_str(), rep.wilks.lambda, rep.wilks.df1, rep.wilks.df2,
                  rep.wilks.f_stat, rep.wilks.p_value,
                  rep.reject_null ? "reject" : "fail to reject", alpha);
    rep.summary = buf;
    return rep;
}

} // namespace har::stats
