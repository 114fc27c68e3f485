#include "matte/support.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstdlib>

#include "json.hpp"

namespace matte {

std::vector<Index> SupportMatrix::row_support(Index i) const {
  std::vector<Index> out;
  for (Index j = 0; j < e_.cols(); ++j)
    if (e_(i, j)) out.push_back(j);
  return out;
}

std::vector<Index> SupportMatrix::col_support(Index j) const {
  std::vector<Index> out;
  for (Index i = 0; i < e_.rows(); ++i)
    if (e_(i, j)) out.push_back(i);
  return out;
}

Index SupportMatrix::col_norm0(Index j) const {
  Index n = 0;
  for (Index i = 0; i < e_.rows(); ++i) n += e_(i, j) ? 1 : 0;
  return n;
}

Index SupportMatrix::row_norm0(Index i) const {
  Index n = 0;
  for (Index j = 0; j < e_.cols(); ++j) n += e_(i, j) ? 1 : 0;
  return n;
}

Index SupportMatrix::count() const {
  Index n = 0;
  for (Index j = 0; j < e_.cols(); ++j) n += col_norm0(j);
  return n;
}

bool SupportMatrix::contained_in(const SupportMatrix& o) const {
  if (rows() != o.rows() || cols() != o.cols()) return false;
  for (Index j = 0; j < cols(); ++j)
    for (Index i = 0; i < rows(); ++i)
      if (e_(i, j) && !o.e_(i, j)) return false;
  return true;
}

Index col_intersection_count(const SupportMatrix& s, Index j1, Index j2) {
  Index n = 0;
  for (Index i = 0; i < s.rows(); ++i)
    if (s(i, j1) && s(i, j2)) ++n;
  return n;
}

SupportMatrix estimate_support(const std::function<Matrix(const Vector&)>& jacobian_sampler,
                               const std::vector<Vector>& sample_points, double tol) {
  if (tol < 0.0) throw ValidationError("estimate_support: tol must be >= 0");
  if (sample_points.empty()) throw ValidationError("estimate_support: no sample points");
  Matrix first = jacobian_sampler(sample_points.front());
  SupportMatrix out(first.rows(), first.cols());
  for (const Vector& z : sample_points) {
    const Matrix j = jacobian_sampler(z);
    if (j.rows() != first.rows() || j.cols() != first.cols())
      throw ValidationError("estimate_support: Jacobian shape varies across sample points");
    for (Index c = 0; c < j.cols(); ++c)
      for (Index r = 0; r < j.rows(); ++r)
        if (std::abs(j(r, c)) > tol) out.set(r, c);
  }
  return out;
}

bool check_assumption_sparsity(const SupportMatrix& g, const PartitionSpec& p) {
  if (g.cols() != p.d_z())
    throw ValidationError("check_assumption_sparsity: G must have d_z columns");
  for (Index jc = 0; jc < p.d_c; ++jc)
    for (Index js = p.d_c; js < p.d_z(); ++js)
      if (g.col_norm0(jc) <= g.col_norm0(js)) return false;
  return true;
}

bool check_assumption_partial(const SupportMatrix& g, const PartitionSpec& p) {
  if (g.cols() != p.d_z())
    throw ValidationError("check_assumption_partial: G must have d_z columns");
  for (Index jc = 0; jc < p.d_c; ++jc)
    for (Index js = p.d_c; js < p.d_z(); ++js) {
      const Index inter = col_intersection_count(g, jc, js);
      const Index lo = std::min(g.col_norm0(jc), g.col_norm0(js));
      if (inter >= lo) return false;
    }
  return true;
}

long objective_style_sparsity(const SupportMatrix& ghat, const PartitionSpec& p) {
  if (ghat.cols() != p.d_z())
    throw ValidationError("objective_style_sparsity: Ghat must have d_z columns");
  long sum = 0;
  for (Index js = p.d_c; js < p.d_z(); ++js) sum += static_cast<long>(ghat.col_norm0(js));
  return sum;
}

long objective_partial_overlap(const SupportMatrix& ghat, const PartitionSpec& p) {
  if (ghat.cols() != p.d_z())
    throw ValidationError("objective_partial_overlap: Ghat must have d_z columns");
  long sum = 0;
  for (Index jc = 0; jc < p.d_c; ++jc)
    for (Index js = p.d_c; js < p.d_z(); ++js)
      sum += static_cast<long>(col_intersection_count(ghat, jc, js));
  return sum;
}

SupportMatrix propagate_support(const SupportMatrix& g, const SupportMatrix& t) {
  if (g.cols() != t.rows())
    throw ValidationError("propagate_support: G cols must equal T rows");
  SupportMatrix out(g.rows(), t.cols());
  for (Index i = 0; i < g.rows(); ++i)
    for (Index j = 0; j < t.cols(); ++j) {
      bool hit = false;
      for (Index k = 0; k < g.cols() && !hit; ++k) hit = g(i, k) && t(k, j);
      out.set(i, j, hit);
    }
  return out;
}

namespace {

// Kuhn's augmenting-path matching; rows and columns are scanned in index
// order so the returned assignment is deterministic.
bool try_assign(const SupportMatrix& t, Index col, std::vector<Index>& row_match,
                std::vector<bool>& visited) {
  for (Index row = 0; row < t.rows(); ++row) {
    if (!t(row, col) || visited[static_cast<std::size_t>(row)]) continue;
    visited[static_cast<std::size_t>(row)] = true;
    if (row_match[static_cast<std::size_t>(row)] < 0 ||
        try_assign(t, row_match[static_cast<std::size_t>(row)], row_match, visited)) {
      row_match[static_cast<std::size_t>(row)] = col;
      return true;
    }
  }
  return false;
}

}  // namespace

std::optional<std::vector<Index>> permutation_witness(const SupportMatrix& t) {
  if (t.rows() != t.cols()) throw ValidationError("permutation_witness: T must be square");
  const Index n = t.rows();
  std::vector<Index> row_match(static_cast<std::size_t>(n), -1);
  for (Index col = 0; col < n; ++col) {
    std::vector<bool> visited(static_cast<std::size_t>(n), false);
    if (!try_assign(t, col, row_match, visited)) return std::nullopt;
  }
  // sigma(j) = row matched to column j.
  std::vector<Index> sigma(static_cast<std::size_t>(n), -1);
  for (Index row = 0; row < n; ++row)
    sigma[static_cast<std::size_t>(row_match[static_cast<std::size_t>(row)])] = row;
  return sigma;
}

namespace {

// Bitmask mirror of the public types used inside the 2^(d_z^2) enumeration.
// G columns are masks over observation rows; T columns are masks over d_z.

struct MaskedG {
  std::array<std::uint32_t, 8> col = {};  // d_z <= 5 < 8
  int d_x = 0;
  int d_z = 0;
};

// Perfect matching feasibility via subset DP: reach[m] holds after
// processing k columns iff the rows in m can cover columns 0..k-1.
// n <= 5 keeps the DP table in a fixed 32-entry array.
bool has_witness_mask(const std::array<std::uint32_t, 8>& tcol, int n) {
  const std::uint32_t full = (1u << n) - 1u;
  std::array<std::uint8_t, 32> reach{}, next{};
  reach[0] = 1;
  for (int j = 0; j < n; ++j) {
    next.fill(0);
    bool any = false;
    for (std::uint32_t m = 0; m <= full; ++m) {
      if (!reach[m]) continue;
      std::uint32_t avail = tcol[static_cast<std::size_t>(j)] & ~m;
      while (avail) {
        const std::uint32_t bit = avail & (~avail + 1u);
        next[m | bit] = 1;
        any = true;
        avail ^= bit;
      }
    }
    if (!any) return false;
    reach = next;
  }
  return true;
}

SupportMatrix t_from_bits(std::uint64_t bits, int n) {
  SupportMatrix t(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      if (bits & (1ull << (j * n + i))) t.set(i, j);
  return t;
}

}  // namespace

TheoremReport brute_force_theorem_check(const SupportMatrix& g, const PartitionSpec& p,
                                        bool enforce_eq4, bool require_assumptions) {
  p.validate();
  const int dz = p.d_z();
  const int dx = static_cast<int>(g.rows());
  if (g.cols() != dz)
    throw ValidationError("brute_force_theorem_check: G must have d_z columns");
  if (dz > 5 || dx > 8)
    throw ValidationError(
        "brute_force_theorem_check: enumeration budget exceeded (need d_z <= 5, d_x <= 8); "
        "refusing rather than truncating");

  TheoremReport rep;
  rep.assumption_iii_holds = check_assumption_sparsity(g, p);
  rep.assumption2_holds = check_assumption_partial(g, p);
  if (require_assumptions) {
    if (!rep.assumption_iii_holds)
      throw ValidationError("brute_force_theorem_check: G violates Assumption 1-iii "
                            "(a style column is at least as dense as a content column)");
    if (enforce_eq4 && !rep.assumption2_holds)
      throw ValidationError("brute_force_theorem_check: G violates Assumption 2 "
                            "(a content/style support pair nests)");
  }

  MaskedG gm;
  gm.d_x = dx;
  gm.d_z = dz;
  for (int j = 0; j < dz; ++j) {
    std::uint32_t m = 0;
    for (int i = 0; i < dx; ++i)
      if (g(i, j)) m |= (1u << i);
    gm.col[static_cast<std::size_t>(j)] = m;
  }

  // Streaming minima. set3 tracks argmin of objective 3 alone; set34 tracks
  // the lexicographic (obj3, obj4) argmin inside it.
  long min3 = -1, min4_in_min3 = -1;
  bool set3_ur = true, set3_ll = true;
  bool set34_ur = true, set34_ll = true;
  long n3 = 0, n34 = 0;
  std::vector<std::uint64_t> wit3, wit34;

  const int dc = p.d_c;
  auto block_flags = [&](std::uint64_t bits, bool& ur, bool& ll) {
    // Upper-right: content rows x style columns of T. Lower-left: style rows x
    // content columns.
    for (int j = dc; j < dz; ++j)
      for (int i = 0; i < dc; ++i)
        if (bits & (1ull << (j * dz + i))) ur = false;
    for (int j = 0; j < dc; ++j)
      for (int i = dc; i < dz; ++i)
        if (bits & (1ull << (j * dz + i))) ll = false;
  };

  const std::uint64_t total = 1ull << (dz * dz);
  std::array<std::uint32_t, 8> tcol;
  for (std::uint64_t bits = 0; bits < total; ++bits) {
    for (int j = 0; j < dz; ++j)
      tcol[static_cast<std::size_t>(j)] =
          static_cast<std::uint32_t>((bits >> (j * dz)) & ((1u << dz) - 1u));
    if (!has_witness_mask(tcol, dz)) continue;

    long o3 = 0;
    std::array<std::uint32_t, 8> ghat = {};
    for (int j = 0; j < dz; ++j) {
      std::uint32_t acc = 0;
      std::uint32_t sel = tcol[static_cast<std::size_t>(j)];
      while (sel) {
        const int k = std::countr_zero(sel);
        acc |= gm.col[static_cast<std::size_t>(k)];
        sel &= sel - 1u;
      }
      ghat[static_cast<std::size_t>(j)] = acc;
      if (j >= dc) o3 += std::popcount(acc);
    }

    if (min3 >= 0 && o3 > min3) continue;
    if (min3 < 0 || o3 < min3) {
      min3 = o3;
      min4_in_min3 = -1;
      set3_ur = set3_ll = true;
      n3 = 0;
      wit3.clear();
      set34_ur = set34_ll = true;
      n34 = 0;
      wit34.clear();
    }

    // Member of set3.
    bool ur = true, ll = true;
    block_flags(bits, ur, ll);
    set3_ur = set3_ur && ur;
    set3_ll = set3_ll && ll;
    ++n3;
    if (wit3.size() < static_cast<std::size_t>(TheoremReport::kWitnessCap)) wit3.push_back(bits);

    long o4 = 0;
    for (int jc = 0; jc < dc; ++jc)
      for (int js = dc; js < dz; ++js)
        o4 += std::popcount(ghat[static_cast<std::size_t>(jc)] &
                            ghat[static_cast<std::size_t>(js)]);
    if (min4_in_min3 < 0 || o4 < min4_in_min3) {
      min4_in_min3 = o4;
      set34_ur = set34_ll = true;
      n34 = 0;
      wit34.clear();
    }
    if (o4 == min4_in_min3) {
      set34_ur = set34_ur && ur;
      set34_ll = set34_ll && ll;
      ++n34;
      if (wit34.size() < static_cast<std::size_t>(TheoremReport::kWitnessCap)) wit34.push_back(bits);
    }
  }

  rep.objective3_min = min3;
  rep.objective4_min = min4_in_min3;
  if (enforce_eq4) {
    rep.all_minimizers_block_zero_upper_right = set34_ur;
    rep.all_minimizers_block_zero_lower_left = set34_ll;
    rep.n_minimizers = n34;
    for (std::uint64_t b : wit34) rep.witness_minimizers.push_back(t_from_bits(b, dz));
  } else {
    rep.all_minimizers_block_zero_upper_right = set3_ur;
    rep.all_minimizers_block_zero_lower_left = set3_ll;
    rep.n_minimizers = n3;
    for (std::uint64_t b : wit3) rep.witness_minimizers.push_back(t_from_bits(b, dz));
  }
  return rep;
}

namespace {

nlohmann::json support_json_obj(const SupportMatrix& s, int d_c) {
  nlohmann::json bits = nlohmann::json::array();
  for (Index i = 0; i < s.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < s.cols(); ++j) row.push_back(s(i, j) ? 1 : 0);
    bits.push_back(std::move(row));
  }
  return nlohmann::json{{"rows", s.rows()}, {"cols", s.cols()}, {"d_c", d_c}, {"bits", bits}};
}

}  // namespace

std::string support_to_json(const SupportMatrix& s, int d_c) {
  return support_json_obj(s, d_c).dump(2);
}

SupportMatrix support_from_json(const std::string& text, int* d_c_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("support_from_json: parse failure: ") + e.what());
  }
  if (!j.contains("rows") || !j.contains("cols") || !j.contains("bits"))
    throw ValidationError("support_from_json: need rows, cols, bits");
  const Index rows = j["rows"].get<Index>();
  const Index cols = j["cols"].get<Index>();
  const auto& bits = j["bits"];
  if (static_cast<Index>(bits.size()) != rows)
    throw ValidationError("support_from_json: bits row count mismatch");
  SupportMatrix s(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = bits[static_cast<std::size_t>(i)];
    if (static_cast<Index>(row.size()) != cols)
      throw ValidationError("support_from_json: bits col count mismatch");
    for (Index jj = 0; jj < cols; ++jj)
      s.set(i, jj, row[static_cast<std::size_t>(jj)].get<int>() != 0);
  }
  if (d_c_out) *d_c_out = j.value("d_c", 0);
  return s;
}

std::string theorem_report_to_json(const TheoremReport& r, int d_c) {
  nlohmann::json wit = nlohmann::json::array();
  for (const SupportMatrix& t : r.witness_minimizers) wit.push_back(support_json_obj(t, d_c));
  nlohmann::json j{
      {"assumption_iii_holds", r.assumption_iii_holds},
      {"assumption2_holds", r.assumption2_holds},
      {"objective3_min", r.objective3_min},
      {"objective4_min", r.objective4_min},
      {"all_minimizers_block_zero_upper_right", r.all_minimizers_block_zero_upper_right},
      {"all_minimizers_block_zero_lower_left", r.all_minimizers_block_zero_lower_left},
      {"n_minimizers", r.n_minimizers},
      {"witness_minimizers", wit},
  };
  return j.dump(2);
}

}  // namespace matte
