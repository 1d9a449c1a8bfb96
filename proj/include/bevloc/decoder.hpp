#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bevloc/attention.hpp"
#include "bevloc/blob.hpp"
#include "bevloc/grid_ops.hpp"
#include "bevloc/grids.hpp"
#include "bevloc/rng.hpp"

namespace bevloc {

enum class PoolingKind { kGem, kMean, kMax };

inline std::string pooling_name(PoolingKind k) {
  switch (k) {
    case PoolingKind::kGem: return "gem";
    case PoolingKind::kMean: return "mean";
    case PoolingKind::kMax: return "max";
  }
  throw std::invalid_argument("pooling_name: unknown kind");
}

inline PoolingKind pooling_from_name(const std::string& s) {
  if (s == "gem") return PoolingKind::kGem;
  if (s == "mean") return PoolingKind::kMean;
  if (s == "max") return PoolingKind::kMax;
  throw std::invalid_argument("pooling_from_name: unknown pooling '" + s + "'");
}

struct DecoderHyper {
  std::size_t T = 120, R = 12, C = 16;
  int heads = 4;
  std::size_t radial_layers = 1;  // self-attention depth over radial bins
  std::size_t rounds = 3;         // interaction rounds (angular + cross per round)
  double sigma_r = 4.8;           // radial embedding temperature, meters scale
  double sigma_a = 15.0;          // angular embedding temperature, degrees scale
  PoolingKind pooling = PoolingKind::kGem;
  double gem_p = 3.0;

  void validate() const {
    if (T == 0 || R == 0 || C == 0) throw std::invalid_argument("DecoderHyper: zero dims");
    if (C % 2 != 0) throw std::invalid_argument("DecoderHyper: C must be even");
    if (heads < 1 || C % static_cast<std::size_t>(heads) != 0)
      throw std::invalid_argument("DecoderHyper: heads must divide C");
    if (rounds < 1) throw std::invalid_argument("DecoderHyper: rounds must be >= 1");
    if (!(sigma_r > 0.0) || !(sigma_a > 0.0))
      throw std::invalid_argument("DecoderHyper: temperatures must be positive");
    if (!(gem_p > 0.0) || !std::isfinite(gem_p))
      throw std::invalid_argument("DecoderHyper: gem_p must be positive");
  }
};

/** @brief Residual two-layer MLP applied per sector row after radial collapse. */
struct MlpWeights {
  MatX w1;  // C x C
  VecX b1;  // C
  MatX w2;  // C x C
  VecX b2;  // C

  void validate(std::size_t C) const {
    const auto ci = static_cast<Eigen::Index>(C);
    if (w1.rows() != ci || w1.cols() != ci || w2.rows() != ci || w2.cols() != ci ||
        b1.size() != ci || b2.size() != ci)
      throw std::invalid_argument("MlpWeights: shapes must be C x C / C");
  }
};

struct DecoderWeights {
  DecoderHyper hyper;
  std::vector<AttentionBlockWeights> radial_stack;   // size hyper.radial_layers
  std::vector<AttentionBlockWeights> angular_stack;  // size hyper.rounds
  std::vector<AttentionBlockWeights> cross_stack;    // size hyper.rounds
  MlpWeights mlp;

  void validate() const {
    hyper.validate();
    if (radial_stack.size() != hyper.radial_layers)
      throw std::invalid_argument("DecoderWeights: radial stack size mismatch");
    if (angular_stack.size() != hyper.rounds || cross_stack.size() != hyper.rounds)
      throw std::invalid_argument("DecoderWeights: interaction stack size mismatch");
    for (const auto& b : radial_stack) b.validate(hyper.C);
    for (const auto& b : angular_stack) b.validate(hyper.C);
    for (const auto& b : cross_stack) b.validate(hyper.C);
    mlp.validate(hyper.C);
  }
};

namespace detail {

inline MatX seeded_matrix(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  MatX m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

inline VecX seeded_vector(Rng& rng, std::size_t n, double bound) {
  VecX v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(-bound, bound);
  return v;
}

inline AttentionBlockWeights seeded_block(Rng& rng, std::size_t C, int heads, double bound,
                                          bool with_bias_path) {
  AttentionBlockWeights b;
  b.attn.heads = heads;
  b.attn.wq = seeded_matrix(rng, C, C, bound);
  b.attn.wk = seeded_matrix(rng, C, C, bound);
  b.attn.wv = seeded_matrix(rng, C, C, bound);
  if (with_bias_path) b.attn.wr = seeded_matrix(rng, C, C, bound);
  b.attn.wo = seeded_matrix(rng, C, C, bound);
  b.ln1.gamma = VecX::Ones(static_cast<Eigen::Index>(C));
  b.ln1.beta = VecX::Zero(static_cast<Eigen::Index>(C));
  b.ffn.w1 = seeded_matrix(rng, C, 2 * C, bound);
  b.ffn.b1 = seeded_vector(rng, 2 * C, bound);
  b.ffn.w2 = seeded_matrix(rng, 2 * C, C, bound);
  b.ffn.b2 = seeded_vector(rng, C, bound);
  b.ln2.gamma = VecX::Ones(static_cast<Eigen::Index>(C));
  b.ln2.beta = VecX::Zero(static_cast<Eigen::Index>(C));
  return b;
}

}  // namespace detail

/**
 * @brief Deterministic weight construction for runs without an archive:
 * projections, feed-forward weights, and biases drawn uniform in
 * [-1/sqrt(C), 1/sqrt(C)] from the seed; layer norm starts at identity.
 */
inline DecoderWeights seeded_decoder_weights(const DecoderHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hyper.C));
  DecoderWeights w;
  w.hyper = hyper;
  for (std::size_t i = 0; i < hyper.radial_layers; ++i)
    w.radial_stack.push_back(detail::seeded_block(rng, hyper.C, hyper.heads, bound, true));
  for (std::size_t i = 0; i < hyper.rounds; ++i)
    w.angular_stack.push_back(detail::seeded_block(rng, hyper.C, hyper.heads, bound, true));
  for (std::size_t i = 0; i < hyper.rounds; ++i)
    w.cross_stack.push_back(detail::seeded_block(rng, hyper.C, hyper.heads, bound, false));
  w.mlp.w1 = detail::seeded_matrix(rng, hyper.C, hyper.C, bound);
  w.mlp.b1 = detail::seeded_vector(rng, hyper.C, bound);
  w.mlp.w2 = detail::seeded_matrix(rng, hyper.C, hyper.C, bound);
  w.mlp.b2 = detail::seeded_vector(rng, hyper.C, bound);
  w.validate();
  return w;
}

/**
 * @brief Decodes a polar grid into a per-sector local-view descriptor:
 * radial attention stack, mean collapse over the radial axis, residual MLP,
 * then row L2 normalization.
 */
inline LocalViewDescriptor decode_local_view(const PolarGrid& polar, const DecoderWeights& w) {
  if (polar.T() != w.hyper.T || polar.R() != w.hyper.R || polar.C() != w.hyper.C)
    throw std::invalid_argument("decode_local_view: polar shape does not match weights");
  PolarGrid x = polar;
  for (const auto& block : w.radial_stack)
    x = radial_self_attention(x, block, w.hyper.sigma_r);

  const std::size_t T = x.T(), R = x.R(), C = x.C();
  MatX collapsed(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(C));
  auto rows = x.data.as_rows();
  for (std::size_t t = 0; t < T; ++t)
    collapsed.row(static_cast<Eigen::Index>(t)) =
        rows.middleRows(static_cast<Eigen::Index>(t * R), static_cast<Eigen::Index>(R))
            .colwise()
            .mean();

  MatX hidden = collapsed * w.mlp.w1;
  hidden.rowwise() += w.mlp.b1.transpose();
  for (Eigen::Index i = 0; i < hidden.size(); ++i) hidden.data()[i] = gelu(hidden.data()[i]);
  MatX delta = hidden * w.mlp.w2;
  delta.rowwise() += w.mlp.b2.transpose();
  MatX out = collapsed + delta;

  LocalViewDescriptor desc(std::move(out));
  desc.normalize_rows();
  return desc;
}

/**
 * @brief Couples two descriptors: per round, angular self-attention on each,
 * then symmetric cross-attention; rows are normalized at the end.
 */
inline std::pair<LocalViewDescriptor, LocalViewDescriptor> interact(
    const LocalViewDescriptor& ds, const LocalViewDescriptor& dp, const DecoderWeights& w) {
  if (ds.T() != dp.T() || ds.C() != dp.C())
    throw std::invalid_argument("interact: descriptor shapes differ");
  if (ds.T() != w.hyper.T || ds.C() != w.hyper.C)
    throw std::invalid_argument("interact: descriptor shape does not match weights");
  MatX x = ds.data, y = dp.data;
  for (std::size_t r = 0; r < w.hyper.rounds; ++r) {
    x = angular_self_attention(x, w.angular_stack[r], w.hyper.sigma_a);
    y = angular_self_attention(y, w.angular_stack[r], w.hyper.sigma_a);
    auto [nx, ny] = cross_attention(x, y, w.cross_stack[r]);
    x = std::move(nx);
    y = std::move(ny);
  }
  LocalViewDescriptor ox(std::move(x)), oy(std::move(y));
  ox.normalize_rows();
  oy.normalize_rows();
  return {std::move(ox), std::move(oy)};
}

/**
 * @brief Pools a polar grid into a unit-norm global descriptor. All kinds
 * reduce per-cell magnitudes channel-wise: GeM is the generalized mean with
 * exponent p, mean is its p=1 case and max its p->inf limit. Working on
 * magnitudes keeps signed features from cancelling and makes the three kinds
 * one family.
 */
inline GlobalDescriptor global_pool(const PolarGrid& polar, PoolingKind kind, double p = 3.0) {
  const std::size_t C = polar.C();
  const std::size_t n = polar.T() * polar.R();
  if (kind == PoolingKind::kGem && (!(p > 0.0) || !std::isfinite(p)))
    throw std::invalid_argument("global_pool: gem exponent must be positive and finite");
  auto rows = polar.data.as_rows();
  GlobalDescriptor g;
  g.values = VecX::Zero(static_cast<Eigen::Index>(C));
  switch (kind) {
    case PoolingKind::kGem:
      for (Eigen::Index c = 0; c < g.values.size(); ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          acc += std::pow(std::abs(rows(static_cast<Eigen::Index>(i), c)), p);
        g.values[c] = std::pow(acc / static_cast<double>(n), 1.0 / p);
      }
      break;
    case PoolingKind::kMean:
      g.values = rows.cwiseAbs().colwise().mean().transpose();
      break;
    case PoolingKind::kMax:
      g.values = rows.cwiseAbs().colwise().maxCoeff().transpose();
      break;
  }
  const double norm = g.values.norm();
  if (norm > 1e-300) g.values /= norm;
  return g;
}

//============================================================================
// Weight archive: directory with manifest.json plus one tensor blob per
// named tensor (float32, shapes recorded in the manifest).
//============================================================================

namespace detail {

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  const double* values;
};

inline void collect_block(const std::string& prefix, const AttentionBlockWeights& b,
                          std::vector<NamedTensor>& out) {
  auto mat = [&](const std::string& n, const MatX& m) {
    if (m.size() != 0)
      out.push_back({prefix + n,
                     {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                     m.data()});
  };
  auto vec = [&](const std::string& n, const VecX& v) {
    out.push_back({prefix + n, {static_cast<std::size_t>(v.size())}, v.data()});
  };
  mat("attn.wq", b.attn.wq);
  mat("attn.wk", b.attn.wk);
  mat("attn.wv", b.attn.wv);
  mat("attn.wr", b.attn.wr);
  mat("attn.wo", b.attn.wo);
  vec("ln1.gamma", b.ln1.gamma);
  vec("ln1.beta", b.ln1.beta);
  mat("ffn.w1", b.ffn.w1);
  vec("ffn.b1", b.ffn.b1);
  mat("ffn.w2", b.ffn.w2);
  vec("ffn.b2", b.ffn.b2);
  vec("ln2.gamma", b.ln2.gamma);
  vec("ln2.beta", b.ln2.beta);
}

inline MatX blob_to_matrix(const Blob& blob) {
  if (blob.dims.size() != 2) throw std::runtime_error("weight archive: expected rank-2 tensor");
  MatX m(static_cast<Eigen::Index>(blob.dims[0]), static_cast<Eigen::Index>(blob.dims[1]));
  std::copy(blob.values.begin(), blob.values.end(), m.data());
  return m;
}

inline VecX blob_to_vector(const Blob& blob) {
  if (blob.dims.size() != 1) throw std::runtime_error("weight archive: expected rank-1 tensor");
  VecX v(static_cast<Eigen::Index>(blob.dims[0]));
  std::copy(blob.values.begin(), blob.values.end(), v.data());
  return v;
}

}  // namespace detail

inline void save_weights(const std::filesystem::path& dir, const DecoderWeights& w) {
  w.validate();
  std::filesystem::create_directories(dir);

  std::vector<detail::NamedTensor> tensors;
  for (std::size_t i = 0; i < w.radial_stack.size(); ++i)
    detail::collect_block("radial." + std::to_string(i) + ".", w.radial_stack[i], tensors);
  for (std::size_t i = 0; i < w.angular_stack.size(); ++i)
    detail::collect_block("angular." + std::to_string(i) + ".", w.angular_stack[i], tensors);
  for (std::size_t i = 0; i < w.cross_stack.size(); ++i)
    detail::collect_block("cross." + std::to_string(i) + ".", w.cross_stack[i], tensors);
  tensors.push_back({"mlp.w1", {w.hyper.C, w.hyper.C}, w.mlp.w1.data()});
  tensors.push_back({"mlp.b1", {w.hyper.C}, w.mlp.b1.data()});
  tensors.push_back({"mlp.w2", {w.hyper.C, w.hyper.C}, w.mlp.w2.data()});
  tensors.push_back({"mlp.b2", {w.hyper.C}, w.mlp.b2.data()});

  nlohmann::ordered_json manifest;
  manifest["format"] = "bevloc-weights-v1";
  manifest["hyper"] = {{"T", w.hyper.T},
                       {"R", w.hyper.R},
                       {"C", w.hyper.C},
                       {"heads", w.hyper.heads},
                       {"radial_layers", w.hyper.radial_layers},
                       {"rounds", w.hyper.rounds},
                       {"sigma_r", w.hyper.sigma_r},
                       {"sigma_a", w.hyper.sigma_a},
                       {"pooling", pooling_name(w.hyper.pooling)},
                       {"gem_p", w.hyper.gem_p}};
  manifest["activation"] = "gelu_erf";  // 0.5 x (1 + erf(x / sqrt 2))
  manifest["layer_norm_eps"] = kLayerNormEps;
  manifest["mlp_form"] = "residual";  // out = x + w2 * gelu(w1 * x + b1) + b2
  manifest["graph"] = {"radial self-attention stack", "mean collapse over radial axis",
                       "residual mlp", "row l2 normalize",
                       "interaction rounds: angular self-attention + shared cross-attention"};
  nlohmann::ordered_json tlist = nlohmann::ordered_json::array();
  for (const auto& t : tensors) {
    tlist.push_back({{"name", t.name}, {"shape", t.shape}, {"file", t.name + ".bvl"}});
    write_blob_file(dir / (t.name + ".bvl"), t.shape, t.values);
  }
  manifest["tensors"] = tlist;

  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("save_weights: cannot write manifest");
  out << manifest.dump(2) << "\n";
}

inline DecoderWeights load_weights(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw std::runtime_error("load_weights: missing manifest.json in " + dir.string());
  nlohmann::json manifest = nlohmann::json::parse(in);
  if (manifest.value("format", "") != "bevloc-weights-v1")
    throw std::runtime_error("load_weights: unsupported archive format");

  DecoderWeights w;
  const auto& h = manifest.at("hyper");
  w.hyper.T = h.at("T").get<std::size_t>();
  w.hyper.R = h.at("R").get<std::size_t>();
  w.hyper.C = h.at("C").get<std::size_t>();
  w.hyper.heads = h.at("heads").get<int>();
  w.hyper.radial_layers = h.at("radial_layers").get<std::size_t>();
  w.hyper.rounds = h.at("rounds").get<std::size_t>();
  w.hyper.sigma_r = h.at("sigma_r").get<double>();
  w.hyper.sigma_a = h.at("sigma_a").get<double>();
  w.hyper.pooling = pooling_from_name(h.at("pooling").get<std::string>());
  w.hyper.gem_p = h.at("gem_p").get<double>();
  w.hyper.validate();

  auto read_named = [&](const std::string& name) {
    return read_blob_file(dir / (name + ".bvl"));
  };
  auto read_block = [&](const std::string& prefix, bool with_bias_path) {
    AttentionBlockWeights b;
    b.attn.heads = w.hyper.heads;
    b.attn.wq = detail::blob_to_matrix(read_named(prefix + "attn.wq"));
    b.attn.wk = detail::blob_to_matrix(read_named(prefix + "attn.wk"));
    b.attn.wv = detail::blob_to_matrix(read_named(prefix + "attn.wv"));
    if (with_bias_path) b.attn.wr = detail::blob_to_matrix(read_named(prefix + "attn.wr"));
    b.attn.wo = detail::blob_to_matrix(read_named(prefix + "attn.wo"));
    b.ln1.gamma = detail::blob_to_vector(read_named(prefix + "ln1.gamma"));
    b.ln1.beta = detail::blob_to_vector(read_named(prefix + "ln1.beta"));
    b.ffn.w1 = detail::blob_to_matrix(read_named(prefix + "ffn.w1"));
    b.ffn.b1 = detail::blob_to_vector(read_named(prefix + "ffn.b1"));
    b.ffn.w2 = detail::blob_to_matrix(read_named(prefix + "ffn.w2"));
    b.ffn.b2 = detail::blob_to_vector(read_named(prefix + "ffn.b2"));
    b.ln2.gamma = detail::blob_to_vector(read_named(prefix + "ln2.gamma"));
    b.ln2.beta = detail::blob_to_vector(read_named(prefix + "ln2.beta"));
    return b;
  };

  for (std::size_t i = 0; i < w.hyper.radial_layers; ++i)
    w.radial_stack.push_back(read_block("radial." + std::to_string(i) + ".", true));
  for (std::size_t i = 0; i < w.hyper.rounds; ++i)
    w.angular_stack.push_back(read_block("angular." + std::to_string(i) + ".", true));
  for (std::size_t i = 0; i < w.hyper.rounds; ++i)
    w.cross_stack.push_back(read_block("cross." + std::to_string(i) + ".", false));
  w.mlp.w1 = detail::blob_to_matrix(read_named("mlp.w1"));
  w.mlp.b1 = detail::blob_to_vector(read_named("mlp.b1"));
  w.mlp.w2 = detail::blob_to_matrix(read_named("mlp.w2"));
  w.mlp.b2 = detail::blob_to_vector(read_named("mlp.b2"));
  w.validate();
  return w;
}

}  // namespace bevloc
