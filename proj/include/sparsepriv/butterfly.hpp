#pragma once

#include <cstdint>
#include <vector>

#include "sparsepriv/rng.hpp"
#include "sparsepriv/tensor.hpp"

namespace sparsepriv::nn {
class Model;
}

namespace sparsepriv::butterfly {

/// Kronecker support pattern I_a (x) 1_{b x c} (x) I_d: a*b*d rows, a*c*d
/// columns, exactly c nonzeros per row and b per column. The square butterfly
/// factor of size N = 2^L at level l is (2^(l-1), 2, 2, N/2^l).
struct SupportPattern {
  std::size_t a = 1, b = 1, c = 1, d = 1;

  std::size_t rows() const { return a * b * d; }
  std::size_t cols() const { return a * c * d; }
  std::size_t nnz() const { return a * b * c * d; }

  /// Column index of the j-th nonzero (j in [0, c)) of row r.
  std::size_t col_of(std::size_t r, std::size_t j) const {
    std::size_t i = r / (b * d);
    std::size_t k = r % d;
    return i * (c * d) + j * d + k;
  }

  bool operator==(const SupportPattern&) const = default;
  auto operator<=>(const SupportPattern&) const = default;
};

/// Level-l square butterfly support for size n = 2^L. Throws ConfigError if n
/// is not a power of two or the level is out of [1, log2(n)].
SupportPattern square_pattern(std::size_t n, std::size_t level);

std::size_t pattern_nnz(const SupportPattern& p);

/// Dense 0/1 expansion, for oracles and small checks only.
Tensor pattern_dense(const SupportPattern& p);

/// Support-constrained sparse factor. Nonzero values are stored row-major
/// over the expanded pattern: value index of (row r, slot j) is r*c + j.
/// Entries outside the support do not exist in this representation.
struct ButterflyFactor {
  SupportPattern pattern;
  std::vector<double> values;  // length pattern.nnz()

  explicit ButterflyFactor(SupportPattern p)
      : pattern(p), values(p.nnz(), 0.0) {}
  ButterflyFactor(SupportPattern p, std::vector<double> v);
};

/// Sets a square factor (b == c) to the identity matrix; the diagonal of every
/// square butterfly support is in-support.
void set_identity(ButterflyFactor& f);

/// W = X^(1) ... X^(L) as an ordered factor list. Adjacent dimensions must be
/// compatible; rows()/cols() are the represented matrix dimensions.
struct ButterflyChain {
  std::vector<ButterflyFactor> factors;

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t param_count() const;
  void validate() const;  // throws ConfigError on incompatible factors
};

/// Factor shape sequence for one rows x cols matrix, before values exist.
struct ChainSpec {
  std::size_t rows = 0, cols = 0;
  std::vector<SupportPattern> factors;

  std::size_t param_count() const;

  bool operator==(const ChainSpec&) const = default;
};

/// All monotone chains of L factors for a rows x cols matrix, deduplicated and
/// sorted by factor shape sequence.
///
/// A chain is monotone iff (i) the product of its support patterns is the
/// all-ones rows x cols matrix with exactly one nonzero path per (row, col)
/// pair, and (ii) the intermediate dimensions are monotone between rows and
/// cols. Such chains are exactly the pairs of ordered factorizations
/// rows = b_1...b_L, cols = c_1...c_L with factor l equal to
/// (c_1...c_{l-1}, b_l, c_l, b_{l+1}...b_L); a_l is then non-decreasing and
/// d_l non-increasing. L = 1 yields the single dense factor (1, rows, cols, 1)
/// and rows = cols = 2^L yields the square butterfly among the candidates.
std::vector<ChainSpec> enumerate_monotone_chains(std::size_t rows,
                                                 std::size_t cols,
                                                 std::size_t factor_count);

/// Minimal-parameter chain among enumerate_monotone_chains; ties broken by the
/// lexicographically smallest factor shape sequence.
ChainSpec select_min_param_chain(std::size_t rows, std::size_t cols,
                                 std::size_t factor_count);

/// Chain with zero values from a spec.
ButterflyChain make_chain(const ChainSpec& spec);

/// Draws each factor's nonzeros uniformly on (-1/sqrt(c), 1/sqrt(c)) with c
/// the factor's per-row fan-in, mirroring the dense initialization rule.
void init_chain_values(ButterflyChain& chain, Rng& rng);

/// y = X^(1)(X^(2)(...(X^(L) x))). If madds is non-null it receives the exact
/// multiply-add count, which equals the total nonzero count of the chain.
Tensor chain_matvec(const ButterflyChain& chain, const Tensor& x,
                    std::uint64_t* madds = nullptr);

/// Explicit dense product of the factors, 64-bit. Test oracle and
/// densification helper; not used on the training fast path.
Tensor chain_to_dense(const ButterflyChain& chain);

/// Applies the chain to a column batch m of shape (cols, width), returning all
/// L+1 stages: stages[L] = m, stages[l-1] = X^(l) stages[l]; the product is
/// stages[0]. The stages are what chain_backward needs.
std::vector<Tensor> chain_apply_stages(const ButterflyChain& chain,
                                       const Tensor& m);

/// Given the stages of a forward application and grad_out = dLoss/d(stages[0]),
/// accumulates dLoss/d(values of factor l) into value_grads[l] (each pointing
/// at a buffer of length factor l's nnz) and returns dLoss/dm.
Tensor chain_backward(const ButterflyChain& chain,
                      const std::vector<Tensor>& stages, const Tensor& grad_out,
                      const std::vector<double*>& value_grads);

/// Replaces every convolution weight in the last `segments` segments of the
/// model by a minimal-parameter monotone chain with `factor_count` factors
/// over the (out_channels) x (in_channels*kh*kw) matrix, and initializes the
/// chain values deterministically from `seed`.
void substitute_butterfly(nn::Model& model, std::size_t segments,
                          std::size_t factor_count, std::uint64_t seed);

struct ParamCount {
  std::size_t total = 0;    // dense-equivalent structural count
  std::size_t nonzero = 0;  // chain values, mask survivors, everything else
  double percentage() const;  // throws ConfigError when total == 0
};

/// Structural parameter counts: butterfly layers contribute their chain value
/// count against the dense rows*cols equivalent; masked tensors contribute
/// their surviving entries.
ParamCount count_model_params(const nn::Model& model);

}  // namespace sparsepriv::butterfly
