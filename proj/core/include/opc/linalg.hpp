#ifndef OPC_LINALG_HPP_
#define OPC_LINALG_HPP_

#include <cstddef>

namespace opc {

// Dense row-major kernels. All accumulate into C, which the caller zeroes.
// Loop order is fixed, so results are deterministic.

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, std::size_t m, std::size_t k, const double* b,
           std::size_t n, double* c);

// C[m,k] += A[m,n] * B[k,n]^T
void mm_nt(const double* a, std::size_t m, std::size_t n, const double* b,
           std::size_t k, double* c);

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, std::size_t m, std::size_t k, const double* b,
           std::size_t n, double* c);

}  // namespace opc

#endif  // OPC_LINALG_HPP_
