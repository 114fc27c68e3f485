#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "matte/rng.hpp"
#include "matte/support.hpp"
#include "matte/synth.hpp"

using namespace matte;

namespace {

// Rows as strings of 0/1, e.g. {"110", "101"}.
SupportMatrix sup(const std::vector<std::string>& rows) {
  SupportMatrix s(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      s.set(static_cast<Index>(i), static_cast<Index>(j), rows[i][j] == '1');
  return s;
}

// Independent oracle: boolean product by definition.
SupportMatrix bool_product(const SupportMatrix& g, const SupportMatrix& t) {
  SupportMatrix out(g.rows(), t.cols());
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j)
      for (Index k = 0; k < g.cols(); ++k)
        if (g(i, k) && t(k, j)) out.set(i, j);
  return out;
}

// Independent oracle: count permutations sigma with (sigma(j), j) in T.
long count_valid_permutations(const SupportMatrix& t) {
  const Index n = t.rows();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  long count = 0;
  do {
    bool ok = true;
    for (Index j = 0; j < n && ok; ++j) ok = t(perm[static_cast<std::size_t>(j)], j);
    if (ok) ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return count;
}

SupportMatrix random_support(Index rows, Index cols, double density, Rng& rng) {
  SupportMatrix s(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i)
      if (rng.uniform() < density) s.set(i, j);
  return s;
}

}  // namespace

TEST_CASE("estimate_support identity and zero cases") {
  std::vector<Vector> pts;
  for (int k = 0; k < 5; ++k) pts.push_back(Vector::Constant(3, k));
  const SupportMatrix id = estimate_support(
      [](const Vector& z) { return Matrix(Matrix::Identity(z.size(), z.size())); }, pts, 1e-8);
  CHECK(id == SupportMatrix::identity(3));

  const SupportMatrix zero = estimate_support(
      [](const Vector& z) { return Matrix(Matrix::Zero(z.size(), z.size())); }, pts, 0.0);
  CHECK(zero.count() == 0);
}

TEST_CASE("estimate_support rejects varying shapes") {
  std::vector<Vector> pts = {Vector::Zero(2), Vector::Ones(2)};
  int call = 0;
  const auto sampler = [&call](const Vector&) {
    ++call;
    return Matrix(Matrix::Zero(call, 2));
  };
  CHECK_THROWS_AS(estimate_support(sampler, pts, 0.0), ValidationError);
}

TEST_CASE("assumption 1-iii needs strictly denser content columns") {
  const PartitionSpec p{2, 1, 5};
  CHECK(check_assumption_sparsity(sup({"111", "110", "110", "110", "000"}), p));
  // style column identical to a content column: equality breaks strictness
  CHECK_FALSE(check_assumption_sparsity(sup({"111", "111", "011", "000", "000"}), p));
}

TEST_CASE("valid mask generator always satisfies assumption 1-iii") {
  const PartitionSpec p{2, 1, 8};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const SupportMatrix m = random_valid_mask(p, 8, rng, 4, 6, 1, 3, false);
    // direct count, not via the checker
    Index min_content = 99, max_style = 0;
    for (Index j = 0; j < p.d_c; ++j) min_content = std::min(min_content, m.col_norm0(j));
    for (Index j = p.d_c; j < p.d_z(); ++j) max_style = std::max(max_style, m.col_norm0(j));
    CHECK(min_content > max_style);
    CHECK(check_assumption_sparsity(m, p));
  }
}

TEST_CASE("assumption 2 forbids nested pairs") {
  const PartitionSpec p{1, 1, 5};
  CHECK(check_assumption_partial(sup({"10", "10", "10", "01", "01"}), p));  // disjoint
  // style support strictly inside the content support
  CHECK_FALSE(check_assumption_partial(sup({"11", "11", "10", "10", "00"}), p));
  // one shared row per pair, norms >= 2
  const PartitionSpec p2{2, 1, 5};
  const SupportMatrix h = sup({"101", "110", "011", "100", "010"});
  CHECK(h.col_norm0(0) == 3);
  CHECK(h.col_norm0(1) == 3);
  CHECK(h.col_norm0(2) == 2);
  CHECK(col_intersection_count(h, 0, 2) == 1);
  CHECK(col_intersection_count(h, 1, 2) == 1);
  CHECK(check_assumption_partial(h, p2));
}

TEST_CASE("style-sparsity objective counts style column mass") {
  const PartitionSpec p{2, 1, 5};
  const SupportMatrix g = sup({"111", "110", "110", "011", "100"});
  CHECK(objective_style_sparsity(g, p) == 2);  // style column holds rows 0 and 3

  const SupportMatrix empty(5, 3);
  CHECK(objective_style_sparsity(empty, p) == 0);
}

TEST_CASE("partial-overlap objective sums pairwise intersections") {
  const PartitionSpec p{1, 1, 5};
  CHECK(objective_partial_overlap(sup({"10", "10", "01", "01", "00"}), p) == 0);
  // single pair sharing exactly k = 2 rows
  CHECK(objective_partial_overlap(sup({"11", "11", "10", "01", "00"}), p) == 2);

  const PartitionSpec p2{2, 1, 6};
  Rng rng(3);
  const SupportMatrix m = random_valid_mask(p2, 6, rng, 4, 5, 2, 2, true);
  long hand = 0;
  for (Index jc = 0; jc < p2.d_c; ++jc)
    for (Index js = p2.d_c; js < p2.d_z(); ++js)
      for (Index i = 0; i < 6; ++i)
        if (m(i, jc) && m(i, js)) ++hand;
  CHECK(objective_partial_overlap(m, p2) == hand);
}

TEST_CASE("propagate_support equals the boolean product") {
  Rng rng(11);
  const SupportMatrix g = random_support(6, 4, 0.5, rng);
  CHECK(propagate_support(g, SupportMatrix::identity(4)) == g);

  // permutation support permutes columns
  SupportMatrix perm(4, 4);
  const std::vector<Index> sigma = {2, 0, 3, 1};
  for (Index j = 0; j < 4; ++j) perm.set(sigma[static_cast<std::size_t>(j)], j);
  const SupportMatrix permuted = propagate_support(g, perm);
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 6; ++i)
      CHECK(permuted(i, j) == g(i, sigma[static_cast<std::size_t>(j)]));

  for (int trial = 0; trial < 20; ++trial) {
    const SupportMatrix a = random_support(5, 4, 0.4, rng);
    const SupportMatrix t = random_support(4, 4, 0.5, rng);
    CHECK(propagate_support(a, t) == bool_product(a, t));
  }
}

TEST_CASE("propagate_support is monotone under entrywise containment") {
  Rng rng(13);
  for (int trial = 0; trial < 30; ++trial) {
    SupportMatrix g = random_support(5, 3, 0.4, rng);
    SupportMatrix t = random_support(3, 3, 0.4, rng);
    SupportMatrix g2 = g, t2 = t;
    // grow both by a few extra entries
    for (int k = 0; k < 3; ++k) {
      g2.set(rng.uniform_int(0, 4), rng.uniform_int(0, 2));
      t2.set(rng.uniform_int(0, 2), rng.uniform_int(0, 2));
    }
    CHECK(propagate_support(g, t).contained_in(propagate_support(g2, t2)));
  }
}

TEST_CASE("permutation witness basics") {
  const SupportMatrix id = SupportMatrix::identity(4);
  const auto sigma = permutation_witness(id);
  REQUIRE(sigma.has_value());
  for (Index j = 0; j < 4; ++j) CHECK((*sigma)[static_cast<std::size_t>(j)] == j);

  SupportMatrix dead(3, 3);
  dead.set(0, 0);
  dead.set(1, 0);
  dead.set(2, 0);
  dead.set(0, 1);  // column 2 stays empty
  CHECK_FALSE(permutation_witness(dead).has_value());
}

TEST_CASE("planted permutation plus noise yields a valid witness") {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = 4;
    std::vector<Index> planted(static_cast<std::size_t>(n));
    std::iota(planted.begin(), planted.end(), 0);
    for (std::size_t i = planted.size(); i > 1; --i)
      std::swap(planted[i - 1],
                planted[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    SupportMatrix t(n, n);
    for (Index j = 0; j < n; ++j) t.set(planted[static_cast<std::size_t>(j)], j);
    for (int k = 0; k < 4; ++k) t.set(rng.uniform_int(0, n - 1), rng.uniform_int(0, n - 1));
    const auto sigma = permutation_witness(t);
    REQUIRE(sigma.has_value());
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    for (Index j = 0; j < n; ++j) {
      const Index row = (*sigma)[static_cast<std::size_t>(j)];
      CHECK(t(row, j));
      CHECK_FALSE(used[static_cast<std::size_t>(row)]);
      used[static_cast<std::size_t>(row)] = true;
    }
  }
}

TEST_CASE("witness absence agrees with exhaustive permutation count") {
  Rng rng(19);
  for (Index n = 2; n <= 5; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      const SupportMatrix t = random_support(n, n, 0.35, rng);
      const bool has = permutation_witness(t).has_value();
      CHECK(has == (count_valid_permutations(t) > 0));
    }
  }
}

TEST_CASE("theorem oracle on the block-diagonal instance") {
  // content drives rows 0-2, style drives rows 3-4
  const SupportMatrix g = sup({"10", "10", "10", "01", "01"});
  const PartitionSpec p{1, 1, 5};
  const TheoremReport rep = brute_force_theorem_check(g, p, true);
  CHECK(rep.assumption_iii_holds);
  CHECK(rep.assumption2_holds);
  CHECK(rep.all_minimizers_block_zero_upper_right);
  CHECK(rep.all_minimizers_block_zero_lower_left);
  CHECK(rep.objective3_min == 2);
  CHECK(rep.objective4_min == 0);
  CHECK(rep.n_minimizers > 0);
  CHECK_FALSE(rep.witness_minimizers.empty());
}

TEST_CASE("theorem oracle guards assumption 1-iii") {
  const SupportMatrix g = sup({"11", "11", "00"});  // equal norms
  const PartitionSpec p{1, 1, 3};
  CHECK_THROWS_AS(brute_force_theorem_check(g, p, false), ValidationError);
}

TEST_CASE("minimal instance attains the true style norm sum") {
  const SupportMatrix g = sup({"10", "10", "01"});
  const PartitionSpec p{1, 1, 3};
  const TheoremReport rep = brute_force_theorem_check(g, p, false);
  CHECK(rep.objective3_min == 1);
  CHECK(rep.all_minimizers_block_zero_upper_right);
}

TEST_CASE("enumeration budget is refused, not truncated") {
  const PartitionSpec p{3, 3, 7};
  SupportMatrix g(7, 6);
  for (Index j = 0; j < 3; ++j)
    for (Index i = 0; i < 5; ++i) g.set(i, j);
  for (Index j = 3; j < 6; ++j) g.set(j + 1, j);
  CHECK_THROWS_AS(brute_force_theorem_check(g, p, false), ValidationError);
}

TEST_CASE("lower bound of the style objective over all witnessed transforms") {
  // exhaustively at d_z = 3 and d_z = 4 for several random valid masks
  Rng rng(23);
  for (int dz : {3, 4}) {
    const PartitionSpec p{dz - 1, 1, 7};
    for (int rep = 0; rep < 3; ++rep) {
      const SupportMatrix g = random_valid_mask(p, 7, rng, 4, 6, 1, 3, false);
      const long base = objective_style_sparsity(g, p);
      const std::uint64_t total = 1ull << (dz * dz);
      for (std::uint64_t bits = 0; bits < total; ++bits) {
        SupportMatrix t(dz, dz);
        for (int j = 0; j < dz; ++j)
          for (int i = 0; i < dz; ++i)
            if (bits & (1ull << (j * dz + i))) t.set(i, j);
        if (!permutation_witness(t).has_value()) continue;
        CHECK(objective_style_sparsity(propagate_support(g, t), p) >= base);
      }
    }
  }
}

TEST_CASE("support JSON round trip") {
  Rng rng(29);
  const SupportMatrix m = random_support(5, 3, 0.5, rng);
  int d_c = -1;
  const SupportMatrix back = support_from_json(support_to_json(m, 2), &d_c);
  CHECK(back == m);
  CHECK(d_c == 2);
  CHECK_THROWS_AS(support_from_json("{\"rows\": 2}"), ValidationError);
}

TEST_CASE("theorem report serializes") {
  const SupportMatrix g = sup({"10", "10", "01"});
  const PartitionSpec p{1, 1, 3};
  const TheoremReport rep = brute_force_theorem_check(g, p, true);
  const std::string j = theorem_report_to_json(rep, p.d_c);
  CHECK(j.find("objective3_min") != std::string::npos);
  CHECK(j.find("witness_minimizers") != std::string::npos);
}
