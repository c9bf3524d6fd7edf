#pragma once

#include <span>

namespace snob::stats {

// Logistic function clamped to the open interval (0, 1).
double sigmoid(double z);

// log(1 + exp(z)) without overflow.
double log1pexp(double z);

// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Two-sided tail probability P(|T| >= t) for Student's t with df degrees of
// freedom; the convention used for correlation significance throughout.
double t_two_sided_p(double t, double df);

// Survival function of chi-squared with one degree of freedom. Exact via the
// normal tail: P(chi2_1 > x) = erfc(sqrt(x/2)).
double chi2_sf_df1(double x);

// Average ranks (1-based, ties get the mean of their rank range).
// Used by the production Spearman path.
void average_ranks(std::span<const double> values, std::span<double> out);

// Pearson correlation; returns false if either input has zero variance.
bool pearson(std::span<const double> xs, std::span<const double> ys, double& out);

}  // namespace snob::stats
