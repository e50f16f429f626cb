#include "lgmatch/attention.hpp"

#include <cmath>

namespace lgmatch::attn {

ad::Var multi_head_cross_attention(ad::Tape& t, ad::Var x_q, ad::Var x_kv, ad::Var wq,
                                   ad::Var wk, ad::Var wv, ad::Var wo, std::size_t heads) {
  const std::size_t d = t.val(x_q).cols();
  if (t.val(x_kv).cols() != d) throw Error("cross_attention: token dims differ");
  if (heads == 0 || d % heads != 0)
    throw Error("cross_attention: token dim " + std::to_string(d) +
                " not divisible by heads " + std::to_string(heads));
  const std::size_t d_k = d / heads;
  ad::Var q = t.matmul(x_q, wq);
  ad::Var k = t.matmul(x_kv, wk);
  ad::Var v = t.matmul(x_kv, wv);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d_k));
  ad::Var merged;
  for (std::size_t h = 0; h < heads; ++h) {
    ad::Var qh = t.slice_cols(q, h * d_k, (h + 1) * d_k);
    ad::Var kh = t.slice_cols(k, h * d_k, (h + 1) * d_k);
    ad::Var vh = t.slice_cols(v, h * d_k, (h + 1) * d_k);
    ad::Var logits = t.scale(t.matmul_nt(qh, kh), inv_sqrt_dk);
    ad::Var attended = t.matmul(t.row_softmax(logits), vh);
    merged = h == 0 ? attended : t.concat_cols(merged, attended);
  }
  return t.matmul(merged, wo);
}

namespace {

ad::Var refine(ad::Tape& t, ad::Var tokens, ad::Var attended, const BankVars& bank,
               bool ln_identity) {
  ad::Var y = t.add(tokens, attended);
  if (!ln_identity) y = t.layer_norm_rows(y, bank.ln1_g, bank.ln1_b);
  ad::Var ffn = t.matmul(t.relu(t.matmul(y, bank.ffn_w1)), bank.ffn_w2);
  ad::Var out = t.add(y, ffn);
  if (!ln_identity) out = t.layer_norm_rows(out, bank.ln2_g, bank.ln2_b);
  return out;
}

}  // namespace

EnhancedTokens enhance(ad::Tape& t, ad::Var tokens_s, ad::Var tokens_f, const BankVars& bank_s,
                       const BankVars& bank_f, const EnhanceOptions& opts) {
  // Unprimed bank: queries from s, keys/values from f. Primed bank: reverse.
  ad::Var att_s = multi_head_cross_attention(t, tokens_s, tokens_f, bank_s.wq, bank_s.wk,
                                             bank_s.wv, bank_s.wo, opts.heads);
  ad::Var att_f = multi_head_cross_attention(t, tokens_f, tokens_s, bank_f.wq, bank_f.wk,
                                             bank_f.wv, bank_f.wo, opts.heads);
  EnhancedTokens out;
  out.s = refine(t, tokens_s, att_s, bank_s, opts.ln_identity);
  out.f = refine(t, tokens_f, att_f, bank_f, opts.ln_identity);
  return out;
}

ad::Var global_embed(ad::Tape& t, ad::Var enhanced) {
  if (t.val(enhanced).rows() == 0) throw Error("global_embed: empty token sequence");
  return t.l2_normalize_rows(t.mean_rows(enhanced));
}

Mat global_embed_plain(const Mat& enhanced, bool* degenerate) {
  if (enhanced.rows() == 0) throw Error("global_embed: empty token sequence");
  Mat m = mean_rows(enhanced);
  const double nrm = vec_norm(m);
  if (degenerate) *degenerate = (nrm == 0.0);
  return l2_normalize_rows(m);
}

Mat multi_head_cross_attention_plain(const Mat& x_q, const Mat& x_kv, const Mat& wq,
                                     const Mat& wk, const Mat& wv, const Mat& wo,
                                     std::size_t heads) {
  ad::Tape t(false);
  return t.val(multi_head_cross_attention(t, t.constant(x_q), t.constant(x_kv), t.constant(wq),
                                          t.constant(wk), t.constant(wv), t.constant(wo),
                                          heads));
}

}  // namespace lgmatch::attn
