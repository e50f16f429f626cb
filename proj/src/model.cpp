#include "lgmatch/model.hpp"

#include <cmath>
#include <filesystem>

#include "lgmatch/feature_io.hpp"
#include "lgmatch/image.hpp"
#include "lgmatch/ot.hpp"
#include "lgmatch/rng.hpp"

namespace lgmatch::model {

namespace fs = std::filesystem;

void ModelConfig::validate() const {
  if (d_feat == 0 || d_g == 0 || gcn_hidden == 0 || d_embed == 0)
    throw Error("model config: dimensions must be > 0");
  if (heads == 0 || token_dim() % heads != 0)
    throw Error("model config: token dim " + std::to_string(token_dim()) +
                " must be divisible by heads " + std::to_string(heads));
  if (knn_k == 0) throw Error("model config: knn_k must be > 0");
  if (ot_epsilon <= 0.0) throw Error("model config: ot_epsilon must be > 0");
  if (sinkhorn_iters == 0) throw Error("model config: sinkhorn_iters must be > 0");
}

void ModelParams::zero_grads() {
  for_each([](ad::Parameter& p) { p.zero_grad(); });
}

std::size_t ModelParams::scalar_count() {
  std::size_t n = 0;
  for_each([&n](ad::Parameter& p) { n += p.value.size(); });
  return n;
}

namespace {

Mat uniform_fan_in(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  Mat m(rows, cols);
  for (auto& x : m.data()) x = rng.uniform(-bound, bound);
  return m;
}

}  // namespace

ModelParams init_params(const ModelConfig& mc, std::uint64_t seed) {
  mc.validate();
  Rng rng = Rng::derive(seed, 0x1217);
  const std::size_t d = mc.token_dim();
  const std::size_t d_ff = mc.ffn_mult * d;
  ModelParams p;
  p.gcn_w0 = ad::Parameter("gcn.W0", uniform_fan_in(2 + mc.d_feat, mc.gcn_hidden, rng));
  p.gcn_w1 = ad::Parameter("gcn.W1", uniform_fan_in(mc.gcn_hidden, mc.d_embed, rng));
  p.wq = ad::Parameter("attn.WQ", uniform_fan_in(d, d, rng));
  p.wk = ad::Parameter("attn.WK", uniform_fan_in(d, d, rng));
  p.wv = ad::Parameter("attn.WV", uniform_fan_in(d, d, rng));
  p.wo = ad::Parameter("attn.WO", uniform_fan_in(d, d, rng));
  p.wqp = ad::Parameter("attn.WQp", uniform_fan_in(d, d, rng));
  p.wkp = ad::Parameter("attn.WKp", uniform_fan_in(d, d, rng));
  p.wvp = ad::Parameter("attn.WVp", uniform_fan_in(d, d, rng));
  p.wop = ad::Parameter("attn.WOp", uniform_fan_in(d, d, rng));
  p.ffn_w1 = ad::Parameter("ffn.W1", uniform_fan_in(d, d_ff, rng));
  p.ffn_w2 = ad::Parameter("ffn.W2", uniform_fan_in(d_ff, d, rng));
  p.ffn_w1p = ad::Parameter("ffn.W1p", uniform_fan_in(d, d_ff, rng));
  p.ffn_w2p = ad::Parameter("ffn.W2p", uniform_fan_in(d_ff, d, rng));
  p.ln_g1 = ad::Parameter("ln.G1", Mat::full(1, d, 1.0));
  p.ln_b1 = ad::Parameter("ln.B1", Mat(1, d));
  p.ln_g2 = ad::Parameter("ln.G2", Mat::full(1, d, 1.0));
  p.ln_b2 = ad::Parameter("ln.B2", Mat(1, d));
  p.ln_g1p = ad::Parameter("ln.G1p", Mat::full(1, d, 1.0));
  p.ln_b1p = ad::Parameter("ln.B1p", Mat(1, d));
  p.ln_g2p = ad::Parameter("ln.G2p", Mat::full(1, d, 1.0));
  p.ln_b2p = ad::Parameter("ln.B2p", Mat(1, d));
  return p;
}

io::Checkpoint params_to_checkpoint(ModelParams& p,
                                    const std::map<std::string, std::string>& config) {
  io::Checkpoint c;
  c.config = config;
  p.for_each([&c](ad::Parameter& par) { c.tensors.emplace_back(par.name, par.value); });
  return c;
}

ModelParams params_from_checkpoint(const io::Checkpoint& c) {
  ModelParams p;
  // Establish names/ordering, then overwrite values from the checkpoint.
  p.for_each([](ad::Parameter&) {});
  ModelConfig mc = model_config_from_checkpoint(c);
  p = init_params(mc, 0);
  p.for_each([&c](ad::Parameter& par) {
    const Mat& m = c.tensor(par.name);
    if (m.rows() != par.value.rows() || m.cols() != par.value.cols())
      throw Error("checkpoint tensor '" + par.name + "' has shape " +
                  std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                  ", expected " + std::to_string(par.value.rows()) + "x" +
                  std::to_string(par.value.cols()));
    par.value = m;
    par.zero_grad();
  });
  return p;
}

namespace {

std::string get_cfg(const io::Checkpoint& c, const std::string& key) {
  auto it = c.config.find(key);
  if (it == c.config.end()) throw Error("checkpoint missing config key '" + key + "'");
  return it->second;
}

}  // namespace

ModelConfig model_config_from_checkpoint(const io::Checkpoint& c) {
  ModelConfig mc;
  mc.d_feat = std::stoul(get_cfg(c, "d_feat"));
  mc.d_g = std::stoul(get_cfg(c, "d_g"));
  mc.gcn_hidden = std::stoul(get_cfg(c, "gcn_hidden"));
  mc.d_embed = std::stoul(get_cfg(c, "d_embed"));
  mc.heads = std::stoul(get_cfg(c, "heads"));
  mc.ffn_mult = std::stoul(get_cfg(c, "ffn_mult"));
  mc.knn_k = std::stoul(get_cfg(c, "knn_k"));
  mc.patch_half = std::stoul(get_cfg(c, "patch_half"));
  mc.relu_last = get_cfg(c, "relu_last") == "1";
  mc.normalize_coords = get_cfg(c, "normalize_coords") == "1";
  mc.use_cross_attention = get_cfg(c, "use_cross_attention") == "1";
  mc.use_ot = get_cfg(c, "use_ot") == "1";
  mc.envelope_ot = get_cfg(c, "envelope_ot") == "1";
  mc.ot_epsilon = std::stod(get_cfg(c, "ot_epsilon"));
  mc.sinkhorn_iters = std::stoul(get_cfg(c, "sinkhorn_iters"));
  return mc;
}

std::map<std::string, std::string> model_config_to_map(const ModelConfig& mc) {
  std::map<std::string, std::string> m;
  auto put_num = [&m](const std::string& k, std::size_t v) { m[k] = std::to_string(v); };
  auto put_bool = [&m](const std::string& k, bool v) { m[k] = v ? "1" : "0"; };
  put_num("d_feat", mc.d_feat);
  put_num("d_g", mc.d_g);
  put_num("gcn_hidden", mc.gcn_hidden);
  put_num("d_embed", mc.d_embed);
  put_num("heads", mc.heads);
  put_num("ffn_mult", mc.ffn_mult);
  put_num("knn_k", mc.knn_k);
  put_num("patch_half", mc.patch_half);
  put_bool("relu_last", mc.relu_last);
  put_bool("normalize_coords", mc.normalize_coords);
  put_bool("use_cross_attention", mc.use_cross_attention);
  put_bool("use_ot", mc.use_ot);
  put_bool("envelope_ot", mc.envelope_ot);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", mc.ot_epsilon);
  m["ot_epsilon"] = buf;
  put_num("sinkhorn_iters", mc.sinkhorn_iters);
  return m;
}

namespace {

std::string resolve_ref(const std::string& ref, const std::string& base_dir) {
  fs::path p(ref);
  if (p.is_absolute() || base_dir.empty()) return ref;
  return (fs::path(base_dir) / p).string();
}

}  // namespace

PreparedSample prepare_sample(const SampleRecord& record, const std::string& base_dir,
                              ModelConfig& mc) {
  PreparedSample s;
  s.id = record.id;
  s.modality = record.modality;
  s.view = record.view;

  const std::size_t n = record.landmarks.size();
  Mat image;
  bool have_image = false;
  if (record.image_ref) {
    image = io::load_pgm(resolve_ref(*record.image_ref, base_dir));
    have_image = true;
  }

  Mat features;
  if (record.patch_features_ref) {
    features = io::load_feature_file(resolve_ref(*record.patch_features_ref, base_dir));
    if (features.rows() != n)
      throw Error("sample '" + record.id + "': feature rows (" +
                  std::to_string(features.rows()) + ") do not match landmark count (" +
                  std::to_string(n) + ")");
    if (mc.d_feat == 0) mc.d_feat = features.cols();
    if (features.cols() != mc.d_feat)
      throw Error("sample '" + record.id + "': patch feature dim " +
                  std::to_string(features.cols()) + " does not match configured d_feat " +
                  std::to_string(mc.d_feat));
  } else if (have_image) {
    if (mc.d_feat == 0) throw Error("toy feature extraction requires configured d_feat");
    features = Mat(n, mc.d_feat);
    graph::PatchConfig pc{mc.patch_half, mc.d_feat};
    for (std::size_t i = 0; i < n; ++i) {
      if (record.landmarks[i].v != 1) continue;
      const Mat patch = graph::extract_patch(image, record.landmarks[i], pc.half_size);
      const Mat f = graph::toy_patch_features(patch, pc.d_feat);
      for (std::size_t j = 0; j < pc.d_feat; ++j) features(i, j) = f(0, j);
    }
  } else {
    throw Error("sample '" + record.id + "': neither patch_features_ref nor image_ref present");
  }

  graph::BuildGraphOptions opts;
  opts.k = mc.knn_k;
  opts.normalize_coords = mc.normalize_coords;
  opts.width = record.width > 0.0 ? record.width : (have_image ? double(image.cols()) : 0.0);
  opts.height = record.height > 0.0 ? record.height : (have_image ? double(image.rows()) : 0.0);
  graph::LandmarkGraph g = graph::build_graph(record.landmarks, features, opts);
  s.x = std::move(g.x);
  s.a_hat = gcn::normalize_adjacency(g.edges, g.n);

  if (record.global_feature_ref) {
    Mat gf = io::load_feature_file(resolve_ref(*record.global_feature_ref, base_dir));
    if (gf.rows() != 1)
      throw Error("sample '" + record.id + "': global feature file must hold a single row");
    if (mc.d_g == 0) mc.d_g = gf.cols();
    if (gf.cols() != mc.d_g)
      throw Error("sample '" + record.id + "': global feature dim " +
                  std::to_string(gf.cols()) + " does not match configured d_g " +
                  std::to_string(mc.d_g));
    s.f_global = std::move(gf);
  } else if (have_image) {
    if (mc.d_g == 0) throw Error("toy global extraction requires configured d_g");
    s.f_global = graph::toy_global_feature(image, mc.d_g);
  } else {
    throw Error("sample '" + record.id + "': neither global_feature_ref nor image_ref present");
  }
  return s;
}

std::vector<PreparedSample> prepare_samples(const DatasetManifest& manifest,
                                            const std::string& base_dir, ModelConfig& mc) {
  std::vector<PreparedSample> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) out.push_back(prepare_sample(r, base_dir, mc));
  return out;
}

ParamVars bind_params(ad::Tape& t, ModelParams& p) {
  ParamVars v;
  v.gcn_w0 = t.param(p.gcn_w0);
  v.gcn_w1 = t.param(p.gcn_w1);
  v.bank_s = attn::BankVars{t.param(p.wq),     t.param(p.wk),    t.param(p.wv),
                            t.param(p.wo),     t.param(p.ffn_w1), t.param(p.ffn_w2),
                            t.param(p.ln_g1),  t.param(p.ln_b1),  t.param(p.ln_g2),
                            t.param(p.ln_b2)};
  v.bank_f = attn::BankVars{t.param(p.wqp),    t.param(p.wkp),    t.param(p.wvp),
                            t.param(p.wop),    t.param(p.ffn_w1p), t.param(p.ffn_w2p),
                            t.param(p.ln_g1p), t.param(p.ln_b1p), t.param(p.ln_g2p),
                            t.param(p.ln_b2p)};
  return v;
}

ad::Var sample_tokens(ad::Tape& t, const PreparedSample& s, const ParamVars& pv,
                      const ModelConfig& mc) {
  ad::Var x = t.constant(s.x);
  ad::Var a_hat = t.constant(s.a_hat);
  ad::Var h = gcn::gcn_forward(t, x, a_hat, {pv.gcn_w0, pv.gcn_w1}, mc.relu_last);
  return gcn::build_tokens(t, h, t.constant(s.f_global));
}

PairForward pair_forward_tokens(ad::Tape& t, ad::Var tokens_s, ad::Var tokens_f,
                                const ParamVars& pv, const ModelConfig& mc) {
  PairForward out;
  out.tokens_s = tokens_s;
  out.tokens_f = tokens_f;
  if (mc.use_cross_attention) {
    attn::EnhanceOptions eo{mc.heads, mc.ln_identity};
    attn::EnhancedTokens enh = attn::enhance(t, tokens_s, tokens_f, pv.bank_s, pv.bank_f, eo);
    out.enh_s = enh.s;
    out.enh_f = enh.f;
  } else {
    out.enh_s = tokens_s;
    out.enh_f = tokens_f;
  }
  out.g_s = attn::global_embed(t, out.enh_s);
  out.g_f = attn::global_embed(t, out.enh_f);
  return out;
}

PairForward pair_forward(ad::Tape& t, const PreparedSample& a, const PreparedSample& b,
                         const ParamVars& pv, const ModelConfig& mc) {
  return pair_forward_tokens(t, sample_tokens(t, a, pv, mc), sample_tokens(t, b, pv, mc), pv,
                             mc);
}

ad::Var transport_cost_var(ad::Tape& t, ad::Var enh_s, ad::Var enh_f, const ModelConfig& mc) {
  ad::Var cost = ot::cosine_cost_var(t, enh_s, enh_f);
  const auto mu = ot::uniform_marginal(t.val(cost).rows());
  const auto nu = ot::uniform_marginal(t.val(cost).cols());
  if (mc.envelope_ot) {
    ot::TransportPlan p = ot::sinkhorn(t.val(cost), mu, nu, mc.ot_epsilon, mc.sinkhorn_iters);
    return t.dot(t.constant(std::move(p.plan)), cost);
  }
  ad::Var plan = ot::sinkhorn_var(t, cost, mu, nu, mc.ot_epsilon, mc.sinkhorn_iters);
  return t.dot(plan, cost);
}

double pair_score_with_plan(const PreparedSample& query, const PreparedSample& gallery,
                            ModelParams& p, const ModelConfig& mc, double beta, Mat* plan_out,
                            Mat* cost_out) {
  if (beta < 0.0 || beta > 1.0) throw Error("pair_score: beta must be in [0,1]");
  ad::Tape t(false);
  ParamVars pv = bind_params(t, p);
  PairForward pf = pair_forward(t, query, gallery, pv, mc);
  const double global_cos = frobenius_dot(t.val(pf.g_s), t.val(pf.g_f));
  const bool want_ot = mc.use_ot && (beta < 1.0 || plan_out || cost_out);
  if (!want_ot) {
    if (!mc.use_ot) return global_cos;  // beta has no OT term to weight
    return beta * global_cos;           // (1-beta)=0, tanh term drops out
  }
  const Mat cost = ot::cosine_cost(t.val(pf.enh_s), t.val(pf.enh_f));
  ot::TransportPlan plan = ot::sinkhorn(cost, ot::uniform_marginal(cost.rows()),
                                        ot::uniform_marginal(cost.cols()), mc.ot_epsilon,
                                        mc.sinkhorn_iters);
  const double s_ot = ot::ot_similarity(plan.plan, cost);
  if (plan_out) *plan_out = plan.plan;
  if (cost_out) *cost_out = cost;
  return beta * global_cos + (1.0 - beta) * std::tanh(s_ot);
}

double pair_score(const PreparedSample& query, const PreparedSample& gallery, ModelParams& p,
                  const ModelConfig& mc, double beta) {
  return pair_score_with_plan(query, gallery, p, mc, beta, nullptr, nullptr);
}

Mat fused_embedding(const PreparedSample& s, ModelParams& p, const ModelConfig& mc) {
  ad::Tape t(false);
  ad::Var x = t.constant(s.x);
  ad::Var a_hat = t.constant(s.a_hat);
  ad::Var w0 = t.constant(p.gcn_w0.value);
  ad::Var w1 = t.constant(p.gcn_w1.value);
  ad::Var h = gcn::gcn_forward(t, x, a_hat, {w0, w1}, mc.relu_last);
  return t.val(gcn::pooled_fused(t, h, t.constant(s.f_global)));
}

}  // namespace lgmatch::model
