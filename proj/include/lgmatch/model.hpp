#pragma once

#include <string>
#include <vector>

#include "lgmatch/attention.hpp"
#include "lgmatch/autodiff.hpp"
#include "lgmatch/checkpoint.hpp"
#include "lgmatch/gcn.hpp"
#include "lgmatch/types.hpp"

namespace lgmatch::model {

struct ModelConfig {
  std::size_t d_feat = 128;       // patch feature dim (per node)
  std::size_t d_g = 128;          // global feature dim
  std::size_t gcn_hidden = 128;
  std::size_t d_embed = 128;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;       // d_ff = ffn_mult * token dim
  std::size_t knn_k = 4;
  std::size_t patch_half = 16;    // toy extractor patch half-size
  bool relu_last = true;          // activation on the final GCN layer
  bool normalize_coords = true;   // coords scaled to [0,1] in node features
  bool ln_identity = false;       // bypass layer norms (testing hook)
  bool use_cross_attention = true;
  bool use_ot = true;
  bool envelope_ot = false;       // freeze the plan during differentiation
  double ot_epsilon = 0.1;
  std::size_t sinkhorn_iters = 80;

  std::size_t token_dim() const { return d_embed + d_g; }
  void validate() const;
};

// All learnable tensors. The unprimed attention bank serves the
// query-modality direction, the primed bank the gallery direction; the GCN
// is shared across modalities.
struct ModelParams {
  ad::Parameter gcn_w0, gcn_w1;
  ad::Parameter wq, wk, wv, wo;
  ad::Parameter wqp, wkp, wvp, wop;
  ad::Parameter ffn_w1, ffn_w2, ffn_w1p, ffn_w2p;
  ad::Parameter ln_g1, ln_b1, ln_g2, ln_b2;
  ad::Parameter ln_g1p, ln_b1p, ln_g2p, ln_b2p;

  template <typename F>
  void for_each(F&& f) {
    f(gcn_w0); f(gcn_w1);
    f(wq); f(wk); f(wv); f(wo);
    f(wqp); f(wkp); f(wvp); f(wop);
    f(ffn_w1); f(ffn_w2); f(ffn_w1p); f(ffn_w2p);
    f(ln_g1); f(ln_b1); f(ln_g2); f(ln_b2);
    f(ln_g1p); f(ln_b1p); f(ln_g2p); f(ln_b2p);
  }

  void zero_grads();
  std::size_t scalar_count();
};

// Seeded uniform init scaled by 1/sqrt(fan_in); layer-norm scales start at 1.
ModelParams init_params(const ModelConfig& mc, std::uint64_t seed);

io::Checkpoint params_to_checkpoint(ModelParams& p,
                                    const std::map<std::string, std::string>& config);
ModelParams params_from_checkpoint(const io::Checkpoint& c);
ModelConfig model_config_from_checkpoint(const io::Checkpoint& c);
std::map<std::string, std::string> model_config_to_map(const ModelConfig& mc);

// A record with its graph built and features resolved: everything the
// forward pass needs, independent of file I/O.
struct PreparedSample {
  std::string id;
  Modality modality = Modality::A;
  View view = View::Front;
  Mat x;         // N x (2 + d_feat) node features
  Mat a_hat;     // N x N normalized adjacency
  Mat f_global;  // 1 x d_g
};

// Loads features (file-ingested or toy-extracted from image_ref), builds the
// kNN graph and normalized adjacency. Relative refs resolve against
// base_dir. May update mc.d_feat / mc.d_g from ingested files (0 = infer).
std::vector<PreparedSample> prepare_samples(const DatasetManifest& manifest,
                                            const std::string& base_dir, ModelConfig& mc);

PreparedSample prepare_sample(const SampleRecord& record, const std::string& base_dir,
                              ModelConfig& mc);

// Tape leaves for every parameter.
struct ParamVars {
  ad::Var gcn_w0, gcn_w1;
  attn::BankVars bank_s, bank_f;
};
ParamVars bind_params(ad::Tape& t, ModelParams& p);

// GCN + token assembly for one sample.
ad::Var sample_tokens(ad::Tape& t, const PreparedSample& s, const ParamVars& pv,
                      const ModelConfig& mc);

struct PairForward {
  ad::Var tokens_s, tokens_f;  // pre-enhancement token sequences
  ad::Var enh_s, enh_f;        // enhanced tokens (== tokens when CA is off)
  ad::Var g_s, g_f;            // pooled, normalized global embeddings
};

PairForward pair_forward(ad::Tape& t, const PreparedSample& a, const PreparedSample& b,
                         const ParamVars& pv, const ModelConfig& mc);

// Enhancement + pooling for already-computed token vars (used for mined
// negative pairs, where GCN outputs are reused).
PairForward pair_forward_tokens(ad::Tape& t, ad::Var tokens_s, ad::Var tokens_f,
                                const ParamVars& pv, const ModelConfig& mc);

// Transport cost <T*, C> between enhanced token sets, on the tape. In
// envelope mode the plan is solved off-tape and treated as constant.
ad::Var transport_cost_var(ad::Tape& t, ad::Var enh_s, ad::Var enh_f, const ModelConfig& mc);

// Inference-time combined score for one (query, gallery) pair:
// beta * cos(g_s, g_f) + (1 - beta) * tanh(S_OT). With OT disabled the
// cosine term alone is used.
double pair_score(const PreparedSample& query, const PreparedSample& gallery, ModelParams& p,
                  const ModelConfig& mc, double beta);

// Same, also returning the transport plan and cost matrix (plan dumps).
double pair_score_with_plan(const PreparedSample& query, const PreparedSample& gallery,
                            ModelParams& p, const ModelConfig& mc, double beta, Mat* plan_out,
                            Mat* cost_out);

// Pooled fused per-item embedding [z || f_global] (pre-attention), used for
// the 2D projection export.
Mat fused_embedding(const PreparedSample& s, ModelParams& p, const ModelConfig& mc);

}  // namespace lgmatch::model
