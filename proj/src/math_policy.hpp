#pragma once

#include <boost/math/policies/policy.hpp>

namespace pwer::mvdist {

// Boost promotes double arguments to long double by default; the kernels
// only need double accuracy and are evaluated millions of times.
using DoublePolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

}  // namespace pwer::mvdist
