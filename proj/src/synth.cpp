#include "matte/synth.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "json.hpp"
#include "matte/io.hpp"

namespace matte {

void ProcessConfig::validate() const {
  partition.validate();
  if (n_domains < 1) throw ValidationError("ProcessConfig: n_domains must be >= 1");
  if (u_dim < 1) throw ValidationError("ProcessConfig: u_dim must be >= 1");
  if (dependence_strength < 0.0 || dependence_strength > 1.0)
    throw ValidationError("ProcessConfig: dependence_strength must lie in [0, 1]");
  if (domain_shift_strength < 0.0)
    throw ValidationError("ProcessConfig: domain_shift_strength must be >= 0");
  if (support_mask.rows() != partition.d_x || support_mask.cols() != partition.d_z())
    throw ValidationError("ProcessConfig: support_mask must be d_x x d_z");
  if (require_sparsity && !check_assumption_sparsity(support_mask, partition))
    throw ValidationError(
        "ProcessConfig: support_mask violates Assumption 1-iii (every style column must be "
        "strictly sparser than every content column)");
  if (require_partial && !check_assumption_partial(support_mask, partition))
    throw ValidationError(
        "ProcessConfig: support_mask violates Assumption 2 (a content/style support pair "
        "fully nests)");
  for (Index i = 0; i < support_mask.rows(); ++i)
    if (support_mask.row_norm0(i) == 0)
      throw ValidationError("ProcessConfig: support_mask row " + std::to_string(i) +
                            " has no true entries");
  for (Index j = 0; j < support_mask.cols(); ++j)
    if (support_mask.col_norm0(j) == 0)
      throw ValidationError("ProcessConfig: support_mask column " + std::to_string(j) +
                            " has no true entries");
}

namespace {

Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

Vector style_shift(const GroundTruthProcess& p, const Vector& c, int d) {
  const double dep = p.cfg.dependence_strength;
  Vector out = p.style_shift_base[static_cast<std::size_t>(d)];
  if (dep > 0.0) {
    const Matrix& w = p.style_Wshift[static_cast<std::size_t>(d)];
    for (Index j = 0; j < out.size(); ++j) out[j] += dep * std::tanh(w.row(j).dot(c));
  }
  return out;
}

Vector style_scale(const GroundTruthProcess& p, const Vector& c, int d) {
  const double dep = p.cfg.dependence_strength;
  Vector out(p.cfg.partition.d_s);
  const Vector& base = p.style_logscale_base[static_cast<std::size_t>(d)];
  const Matrix& w = p.style_Wscale[static_cast<std::size_t>(d)];
  for (Index j = 0; j < out.size(); ++j) {
    double ls = base[j];
    if (dep > 0.0) ls += 0.4 * dep * std::tanh(w.row(j).dot(c));
    out[j] = std::exp(ls);
  }
  return out;
}

struct LatentDraw {
  Vector c;
  Vector s_tilde;
  Vector s;
};

LatentDraw draw_latents(const GroundTruthProcess& p, int domain, Rng& rng) {
  LatentDraw d;
  d.c = sample_content(p, domain, rng);
  d.s_tilde.resize(p.cfg.partition.d_s);
  for (Index j = 0; j < d.s_tilde.size(); ++j) d.s_tilde[j] = rng.normal();
  d.s = gs_forward(p, d.s_tilde, d.c, domain);
  return d;
}

constexpr int kBuildAttempts = 8;
constexpr double kTargetObsStd = 1.5;
constexpr double kSkipDominance = 0.7;
constexpr double kInjectivityFloor = 1e-4;
constexpr double kSupportTol = 1e-6;

}  // namespace

Vector sample_content(const GroundTruthProcess& proc, int domain, Rng& rng) {
  const int d_c = proc.cfg.partition.d_c;
  Vector eps(d_c);
  for (Index i = 0; i < d_c; ++i) eps[i] = rng.normal();
  Vector pushed(d_c);
  for (Index i = 0; i < d_c; ++i) pushed[i] = eps[i] + 0.5 * std::tanh(eps[i]);
  return proc.prior_mu[static_cast<std::size_t>(domain)] +
         proc.prior_A[static_cast<std::size_t>(domain)] * pushed;
}

Vector gs_forward(const GroundTruthProcess& proc, const Vector& s_tilde, const Vector& c,
                  int domain) {
  const Vector shift = style_shift(proc, c, domain);
  const Vector scale = style_scale(proc, c, domain);
  return s_tilde.cwiseProduct(scale) + shift;
}

Vector gs_inverse(const GroundTruthProcess& proc, const Vector& s, const Vector& c,
                  int domain) {
  const Vector shift = style_shift(proc, c, domain);
  const Vector scale = style_scale(proc, c, domain);
  return (s - shift).cwiseQuotient(scale);
}

Vector g_forward(const GroundTruthProcess& proc, const Vector& z) {
  const Index d_x = proc.mix_skip.rows();
  Vector x(d_x);
  for (Index i = 0; i < d_x; ++i) {
    const Vector h = (proc.mix_W1[static_cast<std::size_t>(i)] * z).array().tanh().matrix();
    x[i] = proc.mix_b[i] + proc.mix_skip.row(i).dot(z) + proc.mix_W2.row(i).dot(h);
  }
  return x;
}

Matrix g_jacobian(const GroundTruthProcess& proc, const Vector& z) {
  const Index d_x = proc.mix_skip.rows();
  Matrix jac(d_x, z.size());
  for (Index i = 0; i < d_x; ++i) {
    const Matrix& w1 = proc.mix_W1[static_cast<std::size_t>(i)];
    const Vector t = (w1 * z).array().tanh().matrix();
    Eigen::RowVectorXd row = proc.mix_skip.row(i);
    for (Index h = 0; h < t.size(); ++h)
      row += proc.mix_W2(i, h) * (1.0 - t[h] * t[h]) * w1.row(h);
    jac.row(i) = row;
  }
  return jac;
}

GroundTruthProcess build_process(const ProcessConfig& cfg) {
  cfg.validate();
  const PartitionSpec& p = cfg.partition;
  const int d_c = p.d_c, d_s = p.d_s, d_x = p.d_x, d_z = p.d_z();
  const double shift = cfg.domain_shift_strength;

  Rng root(cfg.seed);
  std::string failure = "no draw attempted";
  for (int attempt = 0; attempt < kBuildAttempts; ++attempt) {
    Rng r = root.fork(static_cast<std::uint64_t>(attempt));
    GroundTruthProcess proc;
    proc.cfg = cfg;

    proc.domain_embeddings = random_matrix(cfg.n_domains, cfg.u_dim, r);
    const double inv_sqrt_u = 1.0 / std::sqrt(static_cast<double>(cfg.u_dim));
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(d_c));

    const Matrix m_mu = random_matrix(d_c, cfg.u_dim, r);
    const Matrix m_a = random_matrix(d_c * d_c, cfg.u_dim, r);
    const Matrix m_shift = random_matrix(d_s, cfg.u_dim, r);
    const Matrix m_scale = random_matrix(d_s, cfg.u_dim, r);
    const Matrix m_wshift = random_matrix(d_s * d_c, cfg.u_dim, r);
    const Matrix m_wscale = random_matrix(d_s * d_c, cfg.u_dim, r);
    const Matrix a0 = Matrix::Identity(d_c, d_c) + 0.3 * inv_sqrt_c * random_matrix(d_c, d_c, r);
    const Matrix w0_shift = inv_sqrt_c * random_matrix(d_s, d_c, r);
    const Matrix w0_scale = inv_sqrt_c * random_matrix(d_s, d_c, r);

    bool prior_ok = true;
    for (int d = 0; d < cfg.n_domains; ++d) {
      const Vector v = proc.domain_embeddings.row(d).transpose() * inv_sqrt_u;
      proc.prior_mu.push_back(shift * 0.8 * (m_mu * v));
      Matrix delta(d_c, d_c);
      const Vector flat_a = m_a * v;
      for (Index j = 0; j < d_c; ++j)
        for (Index i = 0; i < d_c; ++i) delta(i, j) = flat_a[j * d_c + i];
      Matrix a_d = a0 + shift * 0.3 * inv_sqrt_c * delta;
      Eigen::JacobiSVD<Matrix> svd(a_d);
      if (svd.singularValues().minCoeff() < 0.2) prior_ok = false;
      proc.prior_A.push_back(std::move(a_d));

      proc.style_shift_base.push_back(shift * 0.8 * (m_shift * v));
      proc.style_logscale_base.push_back(
          Vector(shift * 0.3 * (m_scale * v).array().tanh().matrix()));
      Matrix wsh(d_s, d_c), wsc(d_s, d_c);
      const Vector flat_sh = m_wshift * v, flat_sc = m_wscale * v;
      for (Index j = 0; j < d_c; ++j)
        for (Index i = 0; i < d_s; ++i) {
          wsh(i, j) = flat_sh[j * d_s + i];
          wsc(i, j) = flat_sc[j * d_s + i];
        }
      proc.style_Wshift.push_back(w0_shift + shift * 0.5 * inv_sqrt_c * wsh);
      proc.style_Wscale.push_back(w0_scale + shift * 0.5 * inv_sqrt_c * wsc);
    }
    if (!prior_ok) continue;

    // Mixing function over the masked inputs.
    proc.mix_hidden = 6;
    proc.mix_W2 = random_matrix(d_x, proc.mix_hidden, r, 0.5);
    proc.mix_skip = Matrix::Zero(d_x, d_z);
    proc.mix_b = Vector::Zero(d_x);
    for (Index i = 0; i < d_x; ++i) {
      const auto row_sup = cfg.support_mask.row_support(i);
      const double in_scale = 1.0 / std::sqrt(static_cast<double>(row_sup.size()));
      Matrix w1 = Matrix::Zero(proc.mix_hidden, d_z);
      for (Index j : row_sup) {
        for (Index h = 0; h < proc.mix_hidden; ++h) w1(h, j) = in_scale * r.normal();
        const double sign = r.uniform() < 0.5 ? -1.0 : 1.0;
        proc.mix_skip(i, j) = sign * r.uniform(0.8, 1.6);
      }
      proc.mix_W1.push_back(std::move(w1));
    }
    // Scale the tanh branch so the skip term dominates every masked entry;
    // Jacobian entries then never change sign or vanish.
    for (Index i = 0; i < d_x; ++i) {
      double factor = 1.0;
      for (Index j : cfg.support_mask.row_support(i)) {
        double q = 0.0;
        for (Index h = 0; h < proc.mix_hidden; ++h)
          q += std::abs(proc.mix_W2(i, h) * proc.mix_W1[static_cast<std::size_t>(i)](h, j));
        if (q > 0.0)
          factor = std::min(factor, kSkipDominance * std::abs(proc.mix_skip(i, j)) / q);
      }
      proc.mix_W2.row(i) *= factor;
    }

    // Center and rescale each observation coordinate on a calibration sample.
    {
      Rng cal = r.fork(101);
      const Index n_cal = 256;
      Matrix xs(n_cal, d_x);
      for (Index k = 0; k < n_cal; ++k) {
        const int dom = static_cast<int>(k % cfg.n_domains);
        const LatentDraw ld = draw_latents(proc, dom, cal);
        Vector z(d_z);
        z << ld.c, ld.s;
        xs.row(k) = g_forward(proc, z);
      }
      for (Index i = 0; i < d_x; ++i) {
        const double mean = xs.col(i).mean();
        const double sd = std::sqrt((xs.col(i).array() - mean).square().mean());
        const double sc = kTargetObsStd / std::max(sd, 1e-6);
        proc.mix_W2.row(i) *= sc;
        proc.mix_skip.row(i) *= sc;
        proc.mix_b[i] = -sc * mean;
      }
    }

    // Verify support fidelity and injectivity before accepting the draw.
    Rng ver = r.fork(202);
    std::vector<Vector> pts;
    for (Index k = 0; k < 80; ++k) {
      const int dom = static_cast<int>(k % cfg.n_domains);
      const LatentDraw ld = draw_latents(proc, dom, ver);
      Vector z(d_z);
      z << ld.c, ld.s;
      pts.push_back(std::move(z));
    }
    const SupportMatrix est = estimate_support(
        [&proc](const Vector& z) { return g_jacobian(proc, z); }, pts, kSupportTol);
    if (est != cfg.support_mask) {
      bool found = false;
      for (Index i = 0; i < d_x && !found; ++i)
        for (Index j = 0; j < d_z; ++j)
          if (est(i, j) != cfg.support_mask(i, j)) {
            failure = "Jacobian support mismatch at observation row " + std::to_string(i);
            found = true;
            break;
          }
      continue;
    }
    bool injective = true;
    for (std::size_t k = 0; k < pts.size() && injective; k += 2) {
      Eigen::JacobiSVD<Matrix> svd(g_jacobian(proc, pts[k]));
      if (svd.singularValues().minCoeff() <= kInjectivityFloor) {
        injective = false;
        failure = "injectivity margin below " + std::to_string(kInjectivityFloor);
      }
    }
    if (!injective) continue;
    return proc;
  }
  throw NumericError("build_process: verification failed after " +
                     std::to_string(kBuildAttempts) + " draws (" + failure + ")");
}

LatentBatch sample_batch(const GroundTruthProcess& proc, Index n, int domain,
                         std::uint64_t seed) {
  if (domain < 0 || domain >= proc.cfg.n_domains)
    throw ValidationError("sample_batch: domain id out of range");
  const PartitionSpec& p = proc.cfg.partition;
  LatentBatch b;
  b.x.resize(n, p.d_x);
  b.c.resize(n, p.d_c);
  b.s.resize(n, p.d_s);
  b.s_tilde.resize(n, p.d_s);
  b.domain.assign(static_cast<std::size_t>(n), static_cast<std::uint32_t>(domain));
  Rng r = Rng(seed).fork(static_cast<std::uint64_t>(domain));
  for (Index k = 0; k < n; ++k) {
    const LatentDraw ld = draw_latents(proc, domain, r);
    Vector z(p.d_z());
    z << ld.c, ld.s;
    b.c.row(k) = ld.c;
    b.s.row(k) = ld.s;
    b.s_tilde.row(k) = ld.s_tilde;
    b.x.row(k) = g_forward(proc, z);
  }
  return b;
}

LatentBatch sample_mixed_batch(const GroundTruthProcess& proc, Index n, std::uint64_t seed) {
  const int nd = proc.cfg.n_domains;
  const PartitionSpec& p = proc.cfg.partition;
  LatentBatch all;
  all.x.resize(n, p.d_x);
  all.c.resize(n, p.d_c);
  all.s.resize(n, p.d_s);
  all.s_tilde.resize(n, p.d_s);
  Index at = 0;
  for (int d = 0; d < nd; ++d) {
    const Index take = d + 1 == nd ? n - at : n / nd;
    const LatentBatch b = sample_batch(proc, take, d, seed + 17 * static_cast<std::uint64_t>(d));
    all.x.middleRows(at, take) = b.x;
    all.c.middleRows(at, take) = b.c;
    all.s.middleRows(at, take) = b.s;
    all.s_tilde.middleRows(at, take) = b.s_tilde;
    all.domain.insert(all.domain.end(), b.domain.begin(), b.domain.end());
    at += take;
  }
  return all;
}

double domain_kl_diagnostic(const GroundTruthProcess& proc, int d1, int d2, Index n) {
  const std::uint64_t base = proc.cfg.seed ^ 0x9e3779b97f4a7c15ULL;
  const auto moments = [&](int d) {
    const LatentBatch b = sample_batch(proc, n, d, base);
    Matrix zs(n, proc.cfg.partition.d_z());
    zs << b.c, b.s;
    const Vector mu = zs.colwise().mean().transpose();
    const Matrix centered = zs.rowwise() - mu.transpose();
    Matrix cov = (centered.transpose() * centered) / std::max<Index>(n - 1, 1);
    cov += 1e-9 * Matrix::Identity(cov.rows(), cov.cols());
    return std::make_pair(mu, cov);
  };
  const auto [mu1, cov1] = moments(d1);
  const auto [mu2, cov2] = moments(d2);
  const Index d = mu1.size();
  const auto kl = [&](const Vector& ma, const Matrix& ca, const Vector& mb, const Matrix& cb) {
    const Eigen::LDLT<Matrix> solver(cb);
    const double tr = solver.solve(ca).trace();
    const Vector diff = mb - ma;
    const double quad = diff.dot(solver.solve(diff));
    const double logdet_b = std::log(cb.determinant());
    const double logdet_a = std::log(ca.determinant());
    return 0.5 * (tr + quad - static_cast<double>(d) + logdet_b - logdet_a);
  };
  return 0.5 * (kl(mu1, cov1, mu2, cov2) + kl(mu2, cov2, mu1, cov1));
}

SupportMatrix random_valid_mask(const PartitionSpec& p, Index d_x, Rng& rng,
                                int content_lo, int content_hi, int style_lo, int style_hi,
                                bool require_partial) {
  if (style_lo < 1 || style_lo > style_hi || content_lo > content_hi)
    throw ValidationError("random_valid_mask: bad norm ranges");
  if (style_hi >= content_lo)
    throw ValidationError(
        "random_valid_mask: style norms must be strictly below content norms");
  if (content_hi > d_x) throw ValidationError("random_valid_mask: content norm exceeds d_x");

  std::vector<Index> rows(static_cast<std::size_t>(d_x));
  std::iota(rows.begin(), rows.end(), 0);
  const auto pick_rows = [&](int k) {
    for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(rows.size() - i - 1)));
      std::swap(rows[i], rows[j]);
    }
    return std::vector<Index>(rows.begin(), rows.begin() + k);
  };

  for (int attempt = 0; attempt < 10000; ++attempt) {
    SupportMatrix m(d_x, p.d_z());
    for (int j = 0; j < p.d_c; ++j) {
      const int k = static_cast<int>(rng.uniform_int(content_lo, content_hi));
      for (Index i : pick_rows(k)) m.set(i, j);
    }
    for (int j = p.d_c; j < p.d_z(); ++j) {
      const int k = static_cast<int>(rng.uniform_int(style_lo, style_hi));
      for (Index i : pick_rows(k)) m.set(i, j);
    }
    bool rows_ok = true;
    for (Index i = 0; i < d_x && rows_ok; ++i) rows_ok = m.row_norm0(i) > 0;
    if (!rows_ok) continue;
    if (require_partial && !check_assumption_partial(m, p)) continue;
    return m;
  }
  throw ValidationError("random_valid_mask: could not satisfy the constraints; "
                        "loosen the norm ranges or enlarge d_x");
}

// --- dataset directory ------------------------------------------------------

namespace {

std::vector<double> row_major(const Matrix& m) {
  std::vector<double> v(static_cast<std::size_t>(m.rows() * m.cols()));
  std::size_t k = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) v[k++] = m(i, j);
  return v;
}

Matrix from_row_major(const std::vector<double>& v, Index rows, Index cols,
                      const std::string& what) {
  if (static_cast<Index>(v.size()) != rows * cols)
    throw ValidationError("dataset array size mismatch for " + what);
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = v[k++];
  return m;
}

nlohmann::json process_config_json(const ProcessConfig& cfg) {
  nlohmann::json j;
  j["d_c"] = cfg.partition.d_c;
  j["d_s"] = cfg.partition.d_s;
  j["d_x"] = cfg.partition.d_x;
  j["n_domains"] = cfg.n_domains;
  j["u_dim"] = cfg.u_dim;
  j["dependence_strength"] = cfg.dependence_strength;
  j["domain_shift_strength"] = cfg.domain_shift_strength;
  j["seed"] = cfg.seed;
  j["require_sparsity"] = cfg.require_sparsity;
  j["require_partial"] = cfg.require_partial;
  j["support_mask"] = nlohmann::json::parse(support_to_json(cfg.support_mask, cfg.partition.d_c));
  return j;
}

ProcessConfig process_config_from(const nlohmann::json& j) {
  ProcessConfig cfg;
  cfg.partition.d_c = j.at("d_c").get<int>();
  cfg.partition.d_s = j.at("d_s").get<int>();
  cfg.partition.d_x = j.at("d_x").get<int>();
  cfg.n_domains = j.at("n_domains").get<int>();
  cfg.u_dim = j.at("u_dim").get<int>();
  cfg.dependence_strength = j.at("dependence_strength").get<double>();
  cfg.domain_shift_strength = j.at("domain_shift_strength").get<double>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.require_sparsity = j.value("require_sparsity", true);
  cfg.require_partial = j.value("require_partial", true);
  cfg.support_mask = support_from_json(j.at("support_mask").dump());
  return cfg;
}

std::string file_checksum(const std::string& path) {
  const std::vector<char> b = io::read_bytes(path);
  return io::fnv1a64_hex(b.data(), b.size());
}

}  // namespace

std::string process_config_to_json(const ProcessConfig& cfg) {
  return process_config_json(cfg).dump(2);
}

ProcessConfig process_config_from_json(const std::string& text) {
  try {
    return process_config_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("process config parse failure: " + std::string(e.what()));
  }
}

void save_batch_dir(const std::string& dir, const ProcessConfig& cfg, const LatentBatch& b) {
  std::filesystem::create_directories(dir);
  const auto path = [&](const char* name) { return dir + "/" + name; };
  io::write_f64(path("x.bin"), row_major(b.x));
  io::write_f64(path("c.bin"), row_major(b.c));
  io::write_f64(path("s.bin"), row_major(b.s));
  io::write_f64(path("stilde.bin"), row_major(b.s_tilde));
  io::write_u32(path("domain.u32.bin"), b.domain);

  nlohmann::json meta;
  meta["process"] = process_config_json(cfg);
  meta["n"] = b.size();
  meta["layout"] = "row-major";
  nlohmann::json sums;
  for (const char* name : {"x.bin", "c.bin", "s.bin", "stilde.bin", "domain.u32.bin"})
    sums[name] = file_checksum(path(name));
  meta["checksums"] = std::move(sums);
  io::write_text(path("meta.json"), meta.dump(2));
}

LatentBatch load_batch_dir(const std::string& dir, ProcessConfig* cfg_out) {
  const auto path = [&](const char* name) { return dir + "/" + name; };
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_text(path("meta.json")));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("meta.json parse failure: " + std::string(e.what()));
  }
  for (const auto& [name, sum] : meta.at("checksums").items()) {
    if (file_checksum(path(name.c_str())) != sum.get<std::string>())
      throw ValidationError("dataset checksum mismatch for " + name + " in " + dir);
  }
  const ProcessConfig cfg = process_config_from(meta.at("process"));
  const Index n = meta.at("n").get<Index>();
  LatentBatch b;
  b.x = from_row_major(io::read_f64(path("x.bin")), n, cfg.partition.d_x, "x");
  b.c = from_row_major(io::read_f64(path("c.bin")), n, cfg.partition.d_c, "c");
  b.s = from_row_major(io::read_f64(path("s.bin")), n, cfg.partition.d_s, "s");
  b.s_tilde = from_row_major(io::read_f64(path("stilde.bin")), n, cfg.partition.d_s, "stilde");
  b.domain = io::read_u32(path("domain.u32.bin"));
  if (static_cast<Index>(b.domain.size()) != n)
    throw ValidationError("dataset domain array size mismatch");
  if (cfg_out) *cfg_out = cfg;
  return b;
}

}  // namespace matte
