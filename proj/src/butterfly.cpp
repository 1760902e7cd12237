#include "sparsepriv/butterfly.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "sparsepriv/errors.hpp"
#include "sparsepriv/layers.hpp"
#include "sparsepriv/model.hpp"

namespace sparsepriv::butterfly {

SupportPattern square_pattern(std::size_t n, std::size_t level) {
  if (n == 0 || (n & (n - 1)) != 0)
    throw ConfigError("square_pattern: size " + std::to_string(n) +
                      " is not a power of two");
  std::size_t log2n = 0;
  for (std::size_t m = n; m > 1; m >>= 1) ++log2n;
  if (level < 1 || level > log2n)
    throw ConfigError("square_pattern: level " + std::to_string(level) +
                      " out of [1, " + std::to_string(log2n) + "]");
  return SupportPattern{std::size_t{1} << (level - 1), 2, 2, n >> level};
}

std::size_t pattern_nnz(const SupportPattern& p) { return p.nnz(); }

Tensor pattern_dense(const SupportPattern& p) {
  Tensor m({p.rows(), p.cols()});
  for (std::size_t r = 0; r < p.rows(); ++r)
    for (std::size_t j = 0; j < p.c; ++j) m.at({r, p.col_of(r, j)}) = 1.0;
  return m;
}

ButterflyFactor::ButterflyFactor(SupportPattern p, std::vector<double> v)
    : pattern(p), values(std::move(v)) {
  if (values.size() != pattern.nnz())
    throw ConfigError("ButterflyFactor: " + std::to_string(values.size()) +
                      " values for a support of " +
                      std::to_string(pattern.nnz()) + " nonzeros");
}

void set_identity(ButterflyFactor& f) {
  const auto& p = f.pattern;
  if (p.b != p.c)
    throw ConfigError("set_identity: factor is not square per block (b != c)");
  std::fill(f.values.begin(), f.values.end(), 0.0);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    std::size_t j = (r % (p.b * p.d)) / p.d;  // diagonal slot of row r
    f.values[r * p.c + j] = 1.0;
  }
}

std::size_t ButterflyChain::rows() const {
  if (factors.empty()) throw ConfigError("empty butterfly chain");
  return factors.front().pattern.rows();
}

std::size_t ButterflyChain::cols() const {
  if (factors.empty()) throw ConfigError("empty butterfly chain");
  return factors.back().pattern.cols();
}

std::size_t ButterflyChain::param_count() const {
  std::size_t n = 0;
  for (const auto& f : factors) n += f.pattern.nnz();
  return n;
}

void ButterflyChain::validate() const {
  if (factors.empty()) throw ConfigError("empty butterfly chain");
  for (std::size_t l = 0; l + 1 < factors.size(); ++l) {
    if (factors[l].pattern.cols() != factors[l + 1].pattern.rows())
      throw ConfigError("butterfly chain: factor " + std::to_string(l) +
                        " has " + std::to_string(factors[l].pattern.cols()) +
                        " columns but factor " + std::to_string(l + 1) +
                        " has " + std::to_string(factors[l + 1].pattern.rows()) +
                        " rows");
  }
  for (const auto& f : factors)
    if (f.values.size() != f.pattern.nnz())
      throw ConfigError("butterfly chain: factor value count mismatch");
}

std::size_t ChainSpec::param_count() const {
  std::size_t n = 0;
  for (const auto& p : factors) n += p.nnz();
  return n;
}

namespace {

// Ordered L-tuples of positive integers with product n, memoized on (n, L).
const std::vector<std::vector<std::size_t>>& ordered_factorizations(
    std::size_t n, std::size_t parts,
    std::map<std::pair<std::size_t, std::size_t>,
             std::vector<std::vector<std::size_t>>>& memo) {
  auto key = std::make_pair(n, parts);
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;
  std::vector<std::vector<std::size_t>> out;
  if (parts == 1) {
    out.push_back({n});
  } else {
    for (std::size_t f = 1; f <= n; ++f) {
      if (n % f != 0) continue;
      for (const auto& rest : ordered_factorizations(n / f, parts - 1, memo)) {
        std::vector<std::size_t> tuple;
        tuple.reserve(parts);
        tuple.push_back(f);
        tuple.insert(tuple.end(), rest.begin(), rest.end());
        out.push_back(std::move(tuple));
      }
    }
  }
  return memo.emplace(key, std::move(out)).first->second;
}

bool dims_monotone(const std::vector<std::size_t>& dims) {
  bool up = true, down = true;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] > dims[i + 1]) up = false;
    if (dims[i] < dims[i + 1]) down = false;
  }
  return up || down;
}

}  // namespace

std::vector<ChainSpec> enumerate_monotone_chains(std::size_t rows,
                                                 std::size_t cols,
                                                 std::size_t factor_count) {
  if (rows < 1 || cols < 1)
    throw ConfigError("enumerate_monotone_chains: dimensions must be >= 1");
  if (factor_count < 1)
    throw ConfigError("enumerate_monotone_chains: need at least one factor");

  std::map<std::pair<std::size_t, std::size_t>,
           std::vector<std::vector<std::size_t>>>
      memo;
  const auto& row_facts = ordered_factorizations(rows, factor_count, memo);
  const auto& col_facts = ordered_factorizations(cols, factor_count, memo);

  std::vector<ChainSpec> out;
  std::vector<std::size_t> dims(factor_count + 1);
  for (const auto& bs : row_facts) {
    for (const auto& cs : col_facts) {
      // dims[l] = (c_1...c_l) * (b_{l+1}...b_L); dims[0] = rows, dims[L] = cols
      dims[0] = rows;
      for (std::size_t l = 1; l <= factor_count; ++l)
        dims[l] = dims[l - 1] / bs[l - 1] * cs[l - 1];
      if (!dims_monotone(dims)) continue;

      ChainSpec spec;
      spec.rows = rows;
      spec.cols = cols;
      spec.factors.reserve(factor_count);
      std::size_t a = 1;
      for (std::size_t l = 0; l < factor_count; ++l) {
        std::size_t d = 1;
        for (std::size_t j = l + 1; j < factor_count; ++j) d *= bs[j];
        spec.factors.push_back(SupportPattern{a, bs[l], cs[l], d});
        a *= cs[l];
      }
      out.push_back(std::move(spec));
    }
  }
  std::sort(out.begin(), out.end(), [](const ChainSpec& x, const ChainSpec& y) {
    return x.factors < y.factors;
  });
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

ChainSpec select_min_param_chain(std::size_t rows, std::size_t cols,
                                 std::size_t factor_count) {
  auto chains = enumerate_monotone_chains(rows, cols, factor_count);
  if (chains.empty())
    throw ConfigError("select_min_param_chain: no valid monotone chain for " +
                      std::to_string(rows) + "x" + std::to_string(cols) +
                      " with " + std::to_string(factor_count) + " factors");
  const ChainSpec* best = &chains.front();
  for (const auto& c : chains)
    if (c.param_count() < best->param_count()) best = &c;
  return *best;  // enumeration is lex-sorted, first minimum wins ties
}

ButterflyChain make_chain(const ChainSpec& spec) {
  ButterflyChain chain;
  chain.factors.reserve(spec.factors.size());
  for (const auto& p : spec.factors) chain.factors.emplace_back(p);
  chain.validate();
  return chain;
}

void init_chain_values(ButterflyChain& chain, Rng& rng) {
  for (auto& f : chain.factors) {
    double bound = 1.0 / std::sqrt(static_cast<double>(f.pattern.c));
    for (double& v : f.values) v = rng.uniform(-bound, bound);
  }
}

namespace {

// out(rows, w) = factor * m(cols, w); each nonzero contributes one madd per
// batch column.
void factor_apply(const ButterflyFactor& f, const Tensor& m, Tensor& out) {
  const auto& p = f.pattern;
  std::size_t w = m.dim(1);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    double* orow = out.data() + r * w;
    for (std::size_t j = 0; j < p.c; ++j) {
      double v = f.values[r * p.c + j];
      const double* mrow = m.data() + p.col_of(r, j) * w;
      for (std::size_t t = 0; t < w; ++t) orow[t] += v * mrow[t];
    }
  }
}

// out(cols, w) += factor^T * g(rows, w)
void factor_apply_transpose(const ButterflyFactor& f, const Tensor& g,
                            Tensor& out) {
  const auto& p = f.pattern;
  std::size_t w = g.dim(1);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double* grow = g.data() + r * w;
    for (std::size_t j = 0; j < p.c; ++j) {
      double v = f.values[r * p.c + j];
      double* orow = out.data() + p.col_of(r, j) * w;
      for (std::size_t t = 0; t < w; ++t) orow[t] += v * grow[t];
    }
  }
}

// gv[r*c + j] += sum_t g(r, t) * m(col_of(r, j), t)
void factor_value_grads(const ButterflyFactor& f, const Tensor& g,
                        const Tensor& m, double* gv) {
  const auto& p = f.pattern;
  std::size_t w = g.dim(1);
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double* grow = g.data() + r * w;
    for (std::size_t j = 0; j < p.c; ++j) {
      const double* mrow = m.data() + p.col_of(r, j) * w;
      double acc = 0.0;
      for (std::size_t t = 0; t < w; ++t) acc += grow[t] * mrow[t];
      gv[r * p.c + j] += acc;
    }
  }
}

}  // namespace

Tensor chain_matvec(const ButterflyChain& chain, const Tensor& x,
                    std::uint64_t* madds) {
  chain.validate();
  if (x.size() != chain.cols())
    throw ShapeError("chain_matvec: input length " + std::to_string(x.size()) +
                     " != chain columns " + std::to_string(chain.cols()));
  Tensor cur = x.reshaped({x.size(), 1});
  std::uint64_t ops = 0;
  for (std::size_t l = chain.factors.size(); l-- > 0;) {
    const auto& f = chain.factors[l];
    Tensor next({f.pattern.rows(), 1});
    factor_apply(f, cur, next);
    ops += f.pattern.nnz();
    cur = std::move(next);
  }
  if (madds) *madds = ops;
  return cur.reshaped({chain.rows()});
}

Tensor chain_to_dense(const ButterflyChain& chain) {
  chain.validate();
  // Right-to-left accumulation: start from the dense expansion of the last
  // factor and multiply the remaining sparse factors onto it.
  const auto& last = chain.factors.back();
  Tensor acc({last.pattern.rows(), last.pattern.cols()});
  for (std::size_t r = 0; r < last.pattern.rows(); ++r)
    for (std::size_t j = 0; j < last.pattern.c; ++j)
      acc.at({r, last.pattern.col_of(r, j)}) = last.values[r * last.pattern.c + j];
  for (std::size_t l = chain.factors.size() - 1; l-- > 0;) {
    const auto& f = chain.factors[l];
    Tensor next({f.pattern.rows(), acc.dim(1)});
    factor_apply(f, acc, next);
    acc = std::move(next);
  }
  return acc;
}

std::vector<Tensor> chain_apply_stages(const ButterflyChain& chain,
                                       const Tensor& m) {
  chain.validate();
  if (m.ndim() != 2 || m.dim(0) != chain.cols())
    throw ShapeError("chain_apply_stages: batch shape (" +
                     Tensor::shape_str(m.shape()) + ") incompatible with chain columns " +
                     std::to_string(chain.cols()));
  std::size_t L = chain.factors.size();
  std::vector<Tensor> stages(L + 1);
  stages[L] = m;
  for (std::size_t l = L; l-- > 0;) {
    const auto& f = chain.factors[l];
    stages[l] = Tensor({f.pattern.rows(), m.dim(1)});
    factor_apply(f, stages[l + 1], stages[l]);
  }
  return stages;
}

Tensor chain_backward(const ButterflyChain& chain,
                      const std::vector<Tensor>& stages, const Tensor& grad_out,
                      const std::vector<double*>& value_grads) {
  std::size_t L = chain.factors.size();
  if (stages.size() != L + 1 || value_grads.size() != L)
    throw UsageError("chain_backward: stage or gradient buffer count mismatch");
  Tensor g = grad_out;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& f = chain.factors[l];
    factor_value_grads(f, g, stages[l + 1], value_grads[l]);
    Tensor gin({f.pattern.cols(), g.dim(1)});
    factor_apply_transpose(f, g, gin);
    g = std::move(gin);
  }
  return g;
}

double ParamCount::percentage() const {
  if (total == 0)
    throw ConfigError("count_model_params: empty model has no percentage");
  return 100.0 * static_cast<double>(nonzero) / static_cast<double>(total);
}

void substitute_butterfly(nn::Model& model, std::size_t segments,
                          std::size_t factor_count, std::uint64_t seed) {
  if (segments > model.segments().size())
    throw ConfigError("substitute_butterfly: model has " +
                      std::to_string(model.segments().size()) +
                      " segments, requested " + std::to_string(segments));
  if (segments == 0) return;
  std::size_t first = model.segments().size() - segments;
  std::size_t layer_counter = 0;
  for (std::size_t s = first; s < model.segments().size(); ++s) {
    for (std::size_t bi : model.segments()[s].block_indices) {
      auto* block = dynamic_cast<nn::ResidualBlock*>(model.layers()[bi].get());
      if (!block)
        throw ConfigError("substitute_butterfly: segment entry is not a residual block");
      for (nn::Conv2d** conv : block->conv_slots()) {
        Rng rng(derive_seed(seed, {0x62660000ULL + s, layer_counter++}));
        nn::replace_conv_with_butterfly(*conv, factor_count, rng);
      }
    }
  }
  model.record_substitution(segments, factor_count, seed);
}

ParamCount count_model_params(const nn::Model& model) {
  ParamCount pc;
  for (const auto* p : model.parameters()) {
    if (p->dense_equiv > 0) {
      // butterfly factor: structural values count against the dense matrix
      pc.total += p->dense_equiv;
      pc.nonzero += p->value.size();
    } else {
      pc.total += p->value.size();
      if (p->has_mask()) {
        for (std::size_t i = 0; i < p->mask.size(); ++i)
          if (p->mask[i] != 0.0) ++pc.nonzero;
      } else {
        pc.nonzero += p->value.size();
      }
    }
  }
  return pc;
}

}  // namespace sparsepriv::butterfly
