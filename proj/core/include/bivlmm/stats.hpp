// Tail probabilities and quantiles used for test statistics and sampling.
// Chi-square tails go through the regularized incomplete gamma function,
// normal tails through erfc; no table lookups.
#ifndef BIVLMM_STATS_HPP
#define BIVLMM_STATS_HPP

namespace bivlmm {

// P(Z <= z) for standard normal Z.
double norm_cdf(double z);

// Two-sided tail 2*P(Z >= |z|).
double norm_two_sided_p(double z);

// Standard normal quantile (inverse CDF), p in (0,1).
// Wichura's AS 241 rational approximation, ~1e-15 relative accuracy.
double norm_quantile(double p);

// Regularized upper incomplete gamma Q(a, x) = Gamma(a,x)/Gamma(a),
// a > 0, x >= 0. Series for x < a+1, continued fraction otherwise.
double regularized_gamma_q(double a, double x);

// Upper tail P(X >= x) of a chi-square with df degrees of freedom.
double chisq_tail(double x, int df);

}  // namespace bivlmm

#endif  // BIVLMM_STATS_HPP
