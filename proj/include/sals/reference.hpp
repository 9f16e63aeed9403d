#pragma once

#include "sals/cp.hpp"
#include "sals/tr.hpp"

// Plain serial implementations of the hot kernels, written as directly from
// the definitions as possible.  They pin down the OpenMP/streaming versions in
// tests and give the benchmark a baseline; none of them are meant to scale.
namespace sals::ref {

DenseTensor cp_reconstruct_naive(const CpModel& m);
DenseTensor tr_reconstruct_naive(const TrModel& m);

double rel_error_naive(const CpModel& m, const DenseTensor& x);
double rel_error_naive(const TrModel& m, const DenseTensor& x);

// Matricised tensor times Khatri-Rao product via explicit materialisation.
Matrix mttkrp_naive(const DenseTensor& x, const CpModel& m, int mode);

// Mode-n normal-equation matrix and right-hand side for the ring, both via
// the materialised subchain design.
Matrix tr_normal_matrix_naive(const TrModel& m, int mode);
Matrix tr_rhs_naive(const DenseTensor& x, const TrModel& m, int mode);

// Unnormalised sampling masses straight from the materialised design: row i
// scores design.row(i) * phi * design.row(i)'.
Vector cp_chain_masses_naive(const CpModel& m, int mode, const Matrix& phi);
Vector tr_chain_masses_naive(const TrModel& m, int mode, const Matrix& phi);

// Prefix mass by brute enumeration of all completions; prefix fixes the first
// `depth` chain positions (classical order for CP, cyclic for the ring).
double cp_prefix_mass_naive(const CpModel& m, int mode, const Matrix& phi, const index_t* prefix,
                            int depth);
double tr_prefix_mass_naive(const TrModel& m, int mode, const Matrix& phi, const index_t* prefix,
                            int depth);

}  // namespace sals::ref
