#include "matte/model.hpp"

#include <filesystem>
#include <map>

#include "json.hpp"
#include "matte/io.hpp"
#include "matte/rng.hpp"

namespace matte {

ModelParams init_model(const PartitionSpec& part, int n_domains, int u_dim,
                       const ModelArch& arch, std::uint64_t seed) {
  part.validate();
  if (n_domains < 1 || u_dim < 1)
    throw ValidationError("init_model: n_domains and u_dim must be >= 1");
  Rng rng(seed);
  ModelParams p;
  p.part = part;
  p.n_domains = n_domains;
  p.u_dim = u_dim;

  const int d_z = part.d_z();
  p.encoder = make_dense({part.d_x, arch.enc_hidden, 2 * d_z}, {Act::Tanh, Act::Identity},
                         rng, 0.2);
  p.decoder = make_dense({d_z, arch.dec_hidden, part.d_x}, {Act::Tanh, Act::Identity},
                         rng, 0.2);

  // Flow hyper-maps start at zero: the content flow is the plain sigmoid link
  // per layer and the style spline is the identity.
  p.r_c = make_content_flow(part.d_c, arch.flow_layers, arch.flow_hidden, u_dim,
                            arch.hyper_hidden);
  if (arch.flow_layers > 0) {
    for (Index j = 0; j < p.r_c.hyper.W[0].cols(); ++j)
      for (Index i = 0; i < p.r_c.hyper.W[0].rows(); ++i)
        p.r_c.hyper.W[0](i, j) = 0.1 * rng.normal();
  }
  p.r_s = make_style_flow(part.d_s, arch.spline_bins, arch.spline_bound, part.d_c,
                          arch.hyper_hidden);
  for (Index j = 0; j < p.r_s.hyper.W[0].cols(); ++j)
    for (Index i = 0; i < p.r_s.hyper.W[0].rows(); ++i)
      p.r_s.hyper.W[0](i, j) = 0.1 * rng.normal();

  p.attention = make_dense({part.d_c + u_dim, part.d_c}, {Act::Tanh}, rng, 0.2);
  p.U = Matrix(n_domains, u_dim);
  for (Index j = 0; j < p.U.cols(); ++j)
    for (Index i = 0; i < p.U.rows(); ++i) p.U(i, j) = 0.5 * rng.normal();
  p.mask_logits = Vector::Constant(part.d_c, 2.0);  // mask starts close to open
  return p;
}

ModelParams extract_grads(const ModelParamsT<ad::Var>& lifted, const std::vector<double>& adj) {
  ModelParams grads = cast_params<double>(lifted, [](const ad::Var&) { return 0.0; });
  std::vector<const ad::Var*> vars;
  std::vector<Index> sizes;
  for_each_tensor(lifted, [&](const std::string&, const auto& t) {
    vars.push_back(t.data());
    sizes.push_back(t.size());
  });
  std::size_t ti = 0;
  for_each_tensor(grads, [&](const std::string&, auto& t) {
    const ad::Var* src = vars[ti];
    for (Index i = 0; i < sizes[ti]; ++i) {
      const std::int32_t idx = src[i].idx;
      t.data()[i] = idx >= 0 ? adj[static_cast<std::size_t>(idx)] : 0.0;
    }
    ++ti;
  });
  return grads;
}

namespace {

nlohmann::json dense_arch(const DenseMap& m) {
  nlohmann::json j;
  nlohmann::json sizes = nlohmann::json::array();
  if (!m.W.empty()) {
    sizes.push_back(m.W.front().cols());
    for (const auto& w : m.W) sizes.push_back(w.rows());
  }
  nlohmann::json acts = nlohmann::json::array();
  for (Act a : m.act) acts.push_back(a == Act::Tanh ? "tanh" : "identity");
  j["sizes"] = sizes;
  j["acts"] = acts;
  return j;
}

DenseMap dense_from_arch(const nlohmann::json& j) {
  DenseMap m;
  const auto& sizes = j.at("sizes");
  const auto& acts = j.at("acts");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const Index in = sizes[l].get<Index>();
    const Index out = sizes[l + 1].get<Index>();
    m.W.push_back(Matrix::Zero(out, in));
    m.b.push_back(Vector::Zero(out));
    m.act.push_back(acts[l].get<std::string>() == "tanh" ? Act::Tanh : Act::Identity);
  }
  return m;
}

}  // namespace

void save_model(const std::string& dir, const ModelParams& p) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["d_c"] = p.part.d_c;
  j["d_s"] = p.part.d_s;
  j["d_x"] = p.part.d_x;
  j["n_domains"] = p.n_domains;
  j["u_dim"] = p.u_dim;
  j["style_context_uses_content"] = p.style_context_uses_content;
  j["encoder"] = dense_arch(p.encoder);
  j["decoder"] = dense_arch(p.decoder);
  j["attention"] = dense_arch(p.attention);
  j["r_c"] = {{"dim", p.r_c.dim},
              {"n_layers", p.r_c.n_layers},
              {"hidden", p.r_c.hidden},
              {"hyper", dense_arch(p.r_c.hyper)}};
  j["r_s"] = {{"dim", p.r_s.dim},
              {"n_bins", p.r_s.n_bins},
              {"bound", p.r_s.bound},
              {"hyper", dense_arch(p.r_s.hyper)}};
  io::write_text(dir + "/model.json", j.dump(2));

  std::vector<NamedTensor> tensors;
  for_each_tensor(p, [&](const std::string& name, const auto& t) {
    tensors.push_back({name, Matrix(t)});
  });
  save_tensors(dir + "/params", tensors);
}

ModelParams load_model(const std::string& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(dir + "/model.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model.json parse failure: " + std::string(e.what()));
  }
  ModelParams p;
  p.part.d_c = j.at("d_c").get<int>();
  p.part.d_s = j.at("d_s").get<int>();
  p.part.d_x = j.at("d_x").get<int>();
  p.n_domains = j.at("n_domains").get<int>();
  p.u_dim = j.at("u_dim").get<int>();
  p.style_context_uses_content = j.at("style_context_uses_content").get<bool>();
  p.encoder = dense_from_arch(j.at("encoder"));
  p.decoder = dense_from_arch(j.at("decoder"));
  p.attention = dense_from_arch(j.at("attention"));
  p.r_c.dim = j.at("r_c").at("dim").get<int>();
  p.r_c.n_layers = j.at("r_c").at("n_layers").get<int>();
  p.r_c.hidden = j.at("r_c").at("hidden").get<int>();
  p.r_c.hyper = dense_from_arch(j.at("r_c").at("hyper"));
  p.r_s.dim = j.at("r_s").at("dim").get<int>();
  p.r_s.n_bins = j.at("r_s").at("n_bins").get<int>();
  p.r_s.bound = j.at("r_s").at("bound").get<double>();
  p.r_s.hyper = dense_from_arch(j.at("r_s").at("hyper"));
  p.U = Matrix::Zero(p.n_domains, p.u_dim);
  p.mask_logits = Vector::Zero(p.part.d_c);

  std::map<std::string, Matrix> loaded;
  for (NamedTensor& t : load_tensors(dir + "/params")) loaded[t.name] = std::move(t.value);
  for_each_tensor(p, [&](const std::string& name, auto& t) {
    const auto it = loaded.find(name);
    if (it == loaded.end()) throw ValidationError("checkpoint missing tensor " + name);
    if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
      throw ValidationError("checkpoint tensor shape mismatch for " + name);
    for (Index j2 = 0; j2 < t.cols(); ++j2)
      for (Index i = 0; i < t.rows(); ++i) t(i, j2) = it->second(i, j2);
  });
  return p;
}

}  // namespace matte
