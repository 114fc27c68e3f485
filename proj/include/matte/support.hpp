#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "matte/types.hpp"

namespace matte {

// Boolean influence pattern of a Jacobian: entry (i, j) is set when output i
// responds to input j somewhere on the domain.
class SupportMatrix {
 public:
  SupportMatrix() = default;
  SupportMatrix(Index rows, Index cols) : e_(BoolMatrix::Constant(rows, cols, false)) {}
  explicit SupportMatrix(BoolMatrix entries) : e_(std::move(entries)) {}

  static SupportMatrix identity(Index n) {
    SupportMatrix s(n, n);
    for (Index i = 0; i < n; ++i) s.e_(i, i) = true;
    return s;
  }

  Index rows() const { return e_.rows(); }
  Index cols() const { return e_.cols(); }

  bool operator()(Index i, Index j) const { return e_(i, j); }
  void set(Index i, Index j, bool v = true) { e_(i, j) = v; }

  const BoolMatrix& entries() const { return e_; }

  // S_{i,:} — column indices set in row i.
  std::vector<Index> row_support(Index i) const;
  // S_{:,j} — row indices set in column j.
  std::vector<Index> col_support(Index j) const;

  Index col_norm0(Index j) const;
  Index row_norm0(Index i) const;
  Index count() const;

  bool operator==(const SupportMatrix& o) const { return e_ == o.e_; }
  bool operator!=(const SupportMatrix& o) const { return !(*this == o); }

  // Entrywise subset relation.
  bool contained_in(const SupportMatrix& o) const;

 private:
  BoolMatrix e_;
};

Index col_intersection_count(const SupportMatrix& s, Index j1, Index j2);

// Support of a matrix-valued function probed at sample points: entry (i, j)
// is set when |J(z)_{i,j}| > tol at any sampled z.
SupportMatrix estimate_support(const std::function<Matrix(const Vector&)>& jacobian_sampler,
                               const std::vector<Vector>& sample_points, double tol);

// Relative sparsity: every style column strictly sparser than every content
// column.
bool check_assumption_sparsity(const SupportMatrix& g, const PartitionSpec& p);

// Partially intersecting influences: no content/style column pair nests.
bool check_assumption_partial(const SupportMatrix& g, const PartitionSpec& p);

// Total l0 mass of the style columns.
long objective_style_sparsity(const SupportMatrix& ghat, const PartitionSpec& p);

// Total pairwise content/style column intersection mass.
long objective_partial_overlap(const SupportMatrix& ghat, const PartitionSpec& p);

// Worst-case support of J_g * T in generic position: boolean matrix product.
SupportMatrix propagate_support(const SupportMatrix& g, const SupportMatrix& t);

// A permutation sigma with (sigma(j), j) in T for all j, when one exists.
// Absence means T cannot be the support of an invertible matrix.
std::optional<std::vector<Index>> permutation_witness(const SupportMatrix& t);

struct TheoremReport {
  bool assumption_iii_holds = false;
  bool assumption2_holds = false;
  long objective3_min = 0;
  long objective4_min = 0;
  bool all_minimizers_block_zero_upper_right = false;
  bool all_minimizers_block_zero_lower_left = false;
  // Minimizing T supports, capped at kWitnessCap entries; n_minimizers counts
  // the full set.
  std::vector<SupportMatrix> witness_minimizers;
  long n_minimizers = 0;

  static constexpr int kWitnessCap = 64;
};

// Exhaustive check of the two identifiability conclusions on one instance:
// enumerates every 2^(d_z*d_z) transform support that admits a permutation
// witness, minimizes the style-sparsity objective (lexicographically followed
// by the overlap objective when enforce_eq4), and reports whether every
// minimizer leaves the forbidden T blocks empty. Budget d_z <= 5, d_x <= 8;
// anything larger is refused rather than truncated. With require_assumptions
// the assumptions are preconditions; without it they are merely recorded,
// which is how counterexamples are probed.
TheoremReport brute_force_theorem_check(const SupportMatrix& g, const PartitionSpec& p,
                                        bool enforce_eq4, bool require_assumptions = true);

// JSON forms: {"rows": n, "cols": m, "d_c": k, "bits": [[0|1,...],...]}.
std::string support_to_json(const SupportMatrix& s, int d_c);
SupportMatrix support_from_json(const std::string& text, int* d_c_out = nullptr);
std::string theorem_report_to_json(const TheoremReport& r, int d_c);

}  // namespace matte
