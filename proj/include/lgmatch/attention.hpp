#pragma once

#include "lgmatch/autodiff.hpp"
#include "lgmatch/mat.hpp"

namespace lgmatch::attn {

// One direction's parameter bank as tape leaves. The unprimed bank serves
// the query-modality-attends-gallery direction; the primed bank the reverse.
struct BankVars {
  ad::Var wq, wk, wv, wo;          // d x d projections
  ad::Var ffn_w1, ffn_w2;          // d x d_ff, d_ff x d
  ad::Var ln1_g, ln1_b, ln2_g, ln2_b;  // 1 x d layer-norm scale/shift
};

struct EnhanceOptions {
  std::size_t heads = 4;
  bool ln_identity = false;  // bypass layer norms (testing hook)
};

// Multi-head cross-attention: Q from x_q, K/V from x_kv, per-head softmax
// over T_kv, heads concatenated and passed through the output projection.
ad::Var multi_head_cross_attention(ad::Tape& t, ad::Var x_q, ad::Var x_kv, ad::Var wq,
                                   ad::Var wk, ad::Var wv, ad::Var wo, std::size_t heads);

struct EnhancedTokens {
  ad::Var s;  // query-side enhanced tokens
  ad::Var f;  // gallery-side enhanced tokens
};

// Bidirectional enhancement with residual + layer norm + FFN refinement:
// Y = LN1(tokens + attended), F_enh = LN2(Y + FFN(Y)).
EnhancedTokens enhance(ad::Tape& t, ad::Var tokens_s, ad::Var tokens_f, const BankVars& bank_s,
                       const BankVars& bank_f, const EnhanceOptions& opts);

// Mean pooling over tokens followed by L2 normalization.
ad::Var global_embed(ad::Tape& t, ad::Var enhanced);

// Plain wrapper; sets *degenerate when the pooled mean is the zero vector
// (output stays zero in that case).
Mat global_embed_plain(const Mat& enhanced, bool* degenerate = nullptr);

Mat multi_head_cross_attention_plain(const Mat& x_q, const Mat& x_kv, const Mat& wq,
                                     const Mat& wk, const Mat& wv, const Mat& wo,
                                     std::size_t heads);

}  // namespace lgmatch::attn
