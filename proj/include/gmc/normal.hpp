#pragma once

namespace gmc {

double normal_pdf(double x);
double normal_cdf(double x);
// Upper tail 1 - Phi(x), accurate for large x.
double normal_sf(double x);
double normal_log_cdf(double x);
double normal_quantile(double p);

}  // namespace gmc
