#include "sals/reference.hpp"

#include <cmath>
#include <vector>

namespace sals::ref {

DenseTensor cp_reconstruct_naive(const CpModel& m) {
  DenseTensor out(m.dims());
  std::vector<index_t> sub(m.order(), 0);
  for (index_t t = 0; t < out.size(); ++t) {
    unravel_index(t, out.dims().data(), m.order(), sub.data());
    double v = 0.0;
    for (index_t r = 0; r < m.rank(); ++r) {
      double p = 1.0;
      for (int n = 0; n < m.order(); ++n) p *= m.factors[n](sub[n], r);
      v += p;
    }
    out[t] = v;
  }
  return out;
}

DenseTensor tr_reconstruct_naive(const TrModel& m) {
  DenseTensor out(m.dims());
  std::vector<index_t> sub(m.order(), 0);
  for (index_t t = 0; t < out.size(); ++t) {
    unravel_index(t, out.dims().data(), m.order(), sub.data());
    Matrix acc = m.slice(0, sub[0]);
    for (int n = 1; n < m.order(); ++n) acc = acc * m.slice(n, sub[n]);
    out[t] = acc.trace();
  }
  return out;
}

namespace {

double rel_from(const DenseTensor& approx, const DenseTensor& x) {
  double num = 0.0, den = 0.0;
  for (index_t t = 0; t < x.size(); ++t) {
    const double d = approx[t] - x[t];
    num += d * d;
    den += x[t] * x[t];
  }
  require(den > 0.0, "rel_error_naive: zero reference tensor");
  return std::sqrt(num / den);
}

}  // namespace

double rel_error_naive(const CpModel& m, const DenseTensor& x) {
  return rel_from(cp_reconstruct_naive(m), x);
}

double rel_error_naive(const TrModel& m, const DenseTensor& x) {
  return rel_from(tr_reconstruct_naive(m), x);
}

Matrix mttkrp_naive(const DenseTensor& x, const CpModel& m, int mode) {
  return classical_unfold(x, mode) * cp_design_matrix(m, mode);
}

Matrix tr_normal_matrix_naive(const TrModel& m, int mode) {
  Matrix d = subchain_design(m, mode);
  return d.transpose() * d;
}

Matrix tr_rhs_naive(const DenseTensor& x, const TrModel& m, int mode) {
  return cyclic_unfold(x, mode) * subchain_design(m, mode);
}

Vector cp_chain_masses_naive(const CpModel& m, int mode, const Matrix& phi) {
  Matrix d = cp_design_matrix(m, mode);
  return ((d * phi).cwiseProduct(d)).rowwise().sum();
}

Vector tr_chain_masses_naive(const TrModel& m, int mode, const Matrix& phi) {
  Matrix d = subchain_design(m, mode);
  return ((d * phi).cwiseProduct(d)).rowwise().sum();
}

namespace {

double prefix_mass_from(const Vector& masses, const std::vector<index_t>& chain_dims,
                        const index_t* prefix, int depth) {
  const int L = static_cast<int>(chain_dims.size());
  std::vector<index_t> sub(L, 0);
  double total = 0.0;
  for (index_t t = 0; t < masses.size(); ++t) {
    unravel_index(t, chain_dims.data(), L, sub.data());
    bool match = true;
    for (int d = 0; d < depth && match; ++d) match = sub[d] == prefix[d];
    if (match) total += masses[t];
  }
  return total;
}

}  // namespace

double cp_prefix_mass_naive(const CpModel& m, int mode, const Matrix& phi, const index_t* prefix,
                            int depth) {
  std::vector<index_t> chain_dims;
  for (int j : classical_mode_order(m.order(), mode)) chain_dims.push_back(m.dims()[j]);
  return prefix_mass_from(cp_chain_masses_naive(m, mode, phi), chain_dims, prefix, depth);
}

double tr_prefix_mass_naive(const TrModel& m, int mode, const Matrix& phi, const index_t* prefix,
                            int depth) {
  std::vector<index_t> chain_dims;
  for (int j : cyclic_mode_order(m.order(), mode)) chain_dims.push_back(m.dims()[j]);
  return prefix_mass_from(tr_chain_masses_naive(m, mode, phi), chain_dims, prefix, depth);
}

}  // namespace sals::ref
