// Central finite-difference check of tape gradients.
#pragma once

#include <cmath>
#include <functional>

#include "fsbnet/autodiff.hpp"

namespace fsbnet {

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_var = -1;
  long long worst_index = -1;
};

// Builds the graph with `build` (returns the scalar loss var), runs backward,
// then perturbs every element of every listed leaf with central differences.
// The graph is rebuilt per perturbation so saved state stays consistent.
inline GradCheckResult grad_check(const std::vector<TensorD>& leaves,
                                  const std::function<int(ad::Tape&, const std::vector<int>&)>& build,
                                  double step = 1e-5) {
  ad::Tape tape;
  std::vector<int> ids;
  ids.reserve(leaves.size());
  for (const auto& leaf : leaves) ids.push_back(tape.input(leaf));
  const int loss = build(tape, ids);
  tape.backward(loss);

  auto eval = [&](const std::vector<TensorD>& pts) {
    ad::Tape t2;
    std::vector<int> ids2;
    for (const auto& leaf : pts) ids2.push_back(t2.input(leaf));
    const int l2 = build(t2, ids2);
    return t2.val(l2)(0);
  };

  GradCheckResult res;
  std::vector<TensorD> work = leaves;
  for (size_t v = 0; v < leaves.size(); ++v) {
    const TensorD& analytic = tape.grad(ids[v]);
    for (long long i = 0; i < work[v].size(); ++i) {
      const double saved = work[v].data()[i];
      work[v].data()[i] = saved + step;
      const double up = eval(work);
      work[v].data()[i] = saved - step;
      const double down = eval(work);
      work[v].data()[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic.data()[i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      const double rel = std::abs(fd - an) / denom;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_var = static_cast<int>(v);
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace fsbnet
