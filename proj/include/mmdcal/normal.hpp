#pragma once

namespace mmdcal {

/// Standard normal CDF via erfc.
double normal_cdf(double x);
double normal_pdf(double x);

/// Standard normal quantile for p in (0,1): Acklam's rational approximation
/// (relative error ~1.2e-9) refined by one Newton step on normal_cdf.
/// Throws POutOfRange outside (0,1).
double normal_quantile(double p);

}  // namespace mmdcal
