#include "lgmatch/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "lgmatch/ot.hpp"
#include "lgmatch/rng.hpp"

namespace lgmatch::train {

void TripletConfig::validate() const {
  if (beta < 0.0 || beta > 1.0) throw Error("triplet config: beta must be in [0,1]");
  if (margin <= 0.0) throw Error("triplet config: margin must be > 0");
  if (lambda_ot < 0.0) throw Error("triplet config: lambda_ot must be >= 0");
  if (batch_size < 2) throw Error("triplet config: batch size must be >= 2");
  if (lr <= 0.0) throw Error("triplet config: learning rate must be > 0");
  if (weight_decay < 0.0) throw Error("triplet config: weight decay must be >= 0");
}

Mat global_similarity_matrix(const Mat& g_s, const Mat& g_f) {
  if (g_s.cols() != g_f.cols() || g_s.rows() != g_f.rows())
    throw Error("global_similarity_matrix: shape mismatch");
  return matmul_nt(g_s, g_f);
}

std::size_t mine_hardest_negative(const Mat& s, std::size_t i) {
  if (s.rows() < 2 || s.cols() < 2) throw Error("mine_hardest_negative: need batch size >= 2");
  std::size_t best = i == 0 ? 1 : 0;
  for (std::size_t j = 0; j < s.cols(); ++j) {
    if (j == i) continue;
    if (s(i, j) > s(i, best)) best = j;
  }
  return best;
}

double combined_similarity(double s_global, double s_ot, double beta) {
  if (beta < 0.0 || beta > 1.0) throw Error("combined_similarity: beta must be in [0,1]");
  return beta * s_global + (1.0 - beta) * std::tanh(s_ot);
}

double triplet_loss(const std::vector<double>& sim_pos, const std::vector<double>& sim_neg,
                    double margin) {
  if (sim_pos.size() != sim_neg.size()) throw Error("triplet_loss: length mismatch");
  if (sim_pos.empty()) throw Error("triplet_loss: empty batch");
  double s = 0.0;
  for (std::size_t i = 0; i < sim_pos.size(); ++i)
    s += std::max(0.0, margin - sim_pos[i] + sim_neg[i]);
  return s / static_cast<double>(sim_pos.size());
}

double total_loss(double l_triplet, double l_ot_mean, double lambda_ot) {
  if (lambda_ot < 0.0) throw Error("total_loss: lambda_ot must be >= 0");
  return l_triplet + lambda_ot * l_ot_mean;
}

std::vector<IdentityPair> pair_up(std::vector<model::PreparedSample> a_samples,
                                  std::vector<model::PreparedSample> b_samples) {
  std::map<std::string, model::PreparedSample*> b_by_id;
  for (auto& s : b_samples) b_by_id[s.id + "|" + to_string(s.view)] = &s;
  std::vector<IdentityPair> pairs;
  pairs.reserve(a_samples.size());
  for (auto& a : a_samples) {
    auto it = b_by_id.find(a.id + "|" + to_string(a.view));
    if (it == b_by_id.end())
      throw Error("id '" + a.id + "' present in modality A but not B");
    pairs.push_back(IdentityPair{a.id, std::move(a), std::move(*it->second)});
    b_by_id.erase(it);
  }
  if (!b_by_id.empty())
    throw Error("id '" + b_by_id.begin()->second->id + "' present in modality B but not A");
  return pairs;
}

BatchResult batch_loss(ad::Tape& t, const std::vector<const IdentityPair*>& batch,
                       const model::ParamVars& pv, const model::ModelConfig& mc,
                       const TripletConfig& tc) {
  const std::size_t b = batch.size();
  if (b < 2) throw Error("batch_loss: need at least 2 identities per batch");
  std::vector<model::PairForward> pf(b);
  for (std::size_t i = 0; i < b; ++i)
    pf[i] = model::pair_forward(t, batch[i]->a, batch[i]->b, pv, mc);

  // Global cosine matrix over embedding values; only the entries entering
  // the loss become tape nodes.
  Mat s(b, b);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < b; ++j)
      s(i, j) = frobenius_dot(t.val(pf[i].g_s), t.val(pf[j].g_f));

  std::size_t correct = 0;
  std::vector<std::size_t> hardest(b);
  for (std::size_t i = 0; i < b; ++i) {
    hardest[i] = mine_hardest_negative(s, i);
    std::size_t arg = 0;
    for (std::size_t j = 1; j < b; ++j)
      if (s(i, j) > s(i, arg)) arg = j;
    if (arg == i) ++correct;
  }

  const bool with_ot = mc.use_ot;
  ad::Var trip_sum, ot_sum;
  for (std::size_t i = 0; i < b; ++i) {
    const std::size_t j = hardest[i];
    ad::Var s_pos = t.dot(pf[i].g_s, pf[i].g_f);
    ad::Var s_neg = t.dot(pf[i].g_s, pf[j].g_f);
    ad::Var sim_pos, sim_neg;
    if (with_ot) {
      ad::Var pos_cost = model::transport_cost_var(t, pf[i].enh_s, pf[i].enh_f, mc);
      model::PairForward nf =
          model::pair_forward_tokens(t, pf[i].tokens_s, pf[j].tokens_f, pv, mc);
      ad::Var neg_cost = model::transport_cost_var(t, nf.enh_s, nf.enh_f, mc);
      // sim = beta * S + (1 - beta) * tanh(-cost)
      sim_pos = t.add(t.scale(s_pos, tc.beta),
                      t.scale(t.tanh_(t.scale(pos_cost, -1.0)), 1.0 - tc.beta));
      sim_neg = t.add(t.scale(s_neg, tc.beta),
                      t.scale(t.tanh_(t.scale(neg_cost, -1.0)), 1.0 - tc.beta));
      ot_sum = ot_sum.valid() ? t.add(ot_sum, pos_cost) : pos_cost;
    } else {
      sim_pos = s_pos;
      sim_neg = s_neg;
    }
    ad::Var hinge = t.relu(t.add_scalar(t.sub(sim_neg, sim_pos), tc.margin));
    trip_sum = trip_sum.valid() ? t.add(trip_sum, hinge) : hinge;
  }

  const double inv_b = 1.0 / static_cast<double>(b);
  BatchResult out;
  ad::Var l_trip = t.scale(trip_sum, inv_b);
  out.l_triplet = t.scalar(l_trip);
  if (with_ot) {
    ad::Var l_ot = t.scale(ot_sum, inv_b);
    out.l_ot = t.scalar(l_ot);
    out.total = t.add(l_trip, t.scale(l_ot, tc.lambda_ot));
  } else {
    out.total = l_trip;
  }
  out.r1 = static_cast<double>(correct) * inv_b;
  return out;
}

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(model::ModelParams& params, double lr, double weight_decay) {
  if (!initialized_) {
    params.for_each([this](ad::Parameter& p) {
      m_.emplace_back(p.value.rows(), p.value.cols());
      v_.emplace_back(p.value.rows(), p.value.cols());
    });
    initialized_ = true;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t idx = 0;
  params.for_each([&](ad::Parameter& p) {
    Mat& m = m_[idx];
    Mat& v = v_[idx];
    ++idx;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data()[i];
      m.data()[i] = beta1_ * m.data()[i] + (1.0 - beta1_) * g;
      v.data()[i] = beta2_ * v.data()[i] + (1.0 - beta2_) * g * g;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      p.value.data()[i] -=
          lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * p.value.data()[i]);
    }
  });
}

double retrieval_r1(const std::vector<IdentityPair>& pairs, model::ModelParams& params,
                    const model::ModelConfig& mc, double beta) {
  if (pairs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& q : pairs) {
    double best_score = -1e300;
    std::string best_id;
    for (const auto& g : pairs) {
      const double sc = model::pair_score(q.a, g.b, params, mc, beta);
      if (sc > best_score || (sc == best_score && g.id < best_id)) {
        best_score = sc;
        best_id = g.id;
      }
    }
    if (best_id == q.id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

std::string format_epoch_log(const EpochLog& e) {
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "epoch=%zu L_triplet=%.6f L_OT=%.6f L_total=%.6f val_r1=%.4f wall_s=%.2f",
                e.epoch, e.l_triplet, e.l_ot, e.l_total, e.val_r1, e.wall_seconds);
  return buf;
}

FitResult fit(const std::vector<IdentityPair>& train_pairs,
              const std::vector<IdentityPair>& val_pairs, const model::ModelConfig& mc,
              const TripletConfig& tc, std::ostream* progress) {
  mc.validate();
  tc.validate();
  if (tc.epochs == 0) throw Error("nothing to train: epochs is 0");
  if (train_pairs.size() < 2) throw Error("training requires at least 2 identities");

  FitResult res;
  model::ModelParams params = model::init_params(mc, tc.seed);
  Adam opt;
  const bool have_val = !val_pairs.empty();
  double best_r1 = -1.0;

  std::vector<std::size_t> order(train_pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng = Rng::derive(tc.seed, 0xE60C000ull + epoch);
    shuffle_rng.shuffle(order);

    double sum_trip = 0.0, sum_ot = 0.0, sum_total = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t end = std::min(order.size(), start + tc.batch_size);
      if (end - start < 2) continue;  // negatives must exist
      std::vector<const IdentityPair*> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_pairs[order[i]]);

      ad::Tape tape;
      model::ParamVars pv = model::bind_params(tape, params);
      BatchResult br = batch_loss(tape, batch, pv, mc, tc);
      const double loss = tape.scalar(br.total);
      if (!std::isfinite(loss)) {
        std::string diag = "non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(n_batches) +
                           " (L_triplet=" + std::to_string(br.l_triplet) +
                           ", L_OT=" + std::to_string(br.l_ot) + "); ids:";
        for (const auto* ip : batch) diag += " " + ip->id;
        throw NumericError(diag);
      }
      params.zero_grads();
      tape.backward(br.total);
      opt.step(params, tc.lr, tc.weight_decay);
      sum_trip += br.l_triplet;
      sum_ot += br.l_ot;
      sum_total += loss;
      ++n_batches;
    }
    if (n_batches == 0) throw Error("no usable batches (batch size vs identity count)");

    EpochLog el;
    el.epoch = epoch;
    el.l_triplet = sum_trip / static_cast<double>(n_batches);
    el.l_ot = sum_ot / static_cast<double>(n_batches);
    el.l_total = sum_total / static_cast<double>(n_batches);
    if (have_val) {
      el.val_r1 = retrieval_r1(val_pairs, params, mc, tc.beta);
      if (el.val_r1 > best_r1) {  // strict: ties keep the earlier epoch
        best_r1 = el.val_r1;
        res.best_epoch = epoch;
        res.best_params = params;
      }
    }
    el.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (progress) (*progress) << format_epoch_log(el) << "\n" << std::flush;
    res.log.push_back(el);
  }

  if (!have_val) {
    res.best_params = params;
    res.best_epoch = 0;
    res.best_val_r1 = 0.0;
  } else {
    res.best_val_r1 = best_r1;
  }
  return res;
}

std::function<double(bool)> make_batch_loss_fn(const std::vector<IdentityPair>& pairs,
                                               model::ModelParams& params,
                                               const model::ModelConfig& mc,
                                               const TripletConfig& tc) {
  return [&pairs, &params, &mc, &tc](bool with_grad) {
    std::vector<const IdentityPair*> batch;
    batch.reserve(pairs.size());
    for (const auto& p : pairs) batch.push_back(&p);
    ad::Tape tape(with_grad);
    model::ParamVars pv = model::bind_params(tape, params);
    BatchResult br = batch_loss(tape, batch, pv, mc, tc);
    const double loss = tape.scalar(br.total);
    if (with_grad) tape.backward(br.total);
    return loss;
  };
}

GradCheckResult finite_difference_check(const std::function<double(bool)>& loss_fn,
                                        model::ModelParams& params, std::size_t probe_count,
                                        double h, std::uint64_t seed) {
  if (h <= 0.0) throw Error("finite_difference_check: step h must be > 0");

  params.zero_grads();
  loss_fn(true);  // analytic gradients into params.grad

  struct Probe { ad::Parameter* p; std::size_t idx; };
  std::vector<Probe> probes;
  std::size_t total = 0;
  params.for_each([&total](ad::Parameter& p) { total += p.value.size(); });
  if (probe_count == 0 || probe_count >= total) {
    params.for_each([&probes](ad::Parameter& p) {
      for (std::size_t i = 0; i < p.value.size(); ++i) probes.push_back({&p, i});
    });
  } else {
    std::vector<Probe> all;
    all.reserve(total);
    params.for_each([&all](ad::Parameter& p) {
      for (std::size_t i = 0; i < p.value.size(); ++i) all.push_back({&p, i});
    });
    Rng rng = Rng::derive(seed, 0xFDFD);
    rng.shuffle(all);
    probes.assign(all.begin(), all.begin() + static_cast<long>(probe_count));
  }

  GradCheckResult res;
  res.probes = probes.size();
  for (const Probe& pr : probes) {
    double& w = pr.p->value.data()[pr.idx];
    const double saved = w;
    w = saved + h;
    const double lp = loss_fn(false);
    w = saved - h;
    const double lm = loss_fn(false);
    w = saved;
    const double fd = (lp - lm) / (2.0 * h);
    const double an = pr.p->grad.data()[pr.idx];
    const double denom = std::max({1e-8, std::fabs(an), std::fabs(fd)});
    const double rel = std::fabs(an - fd) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_param = pr.p->name;
      res.worst_index = pr.idx;
    }
  }
  return res;
}

TinyInstance make_tiny_instance(std::uint64_t seed) {
  TinyInstance ti;
  ti.mc.d_feat = 4;
  ti.mc.d_g = 2;
  ti.mc.gcn_hidden = 4;
  ti.mc.d_embed = 4;
  ti.mc.heads = 2;          // token dim 6, d_k = 3
  ti.mc.ffn_mult = 4;
  ti.mc.knn_k = 2;
  ti.mc.sinkhorn_iters = 10;
  ti.mc.ot_epsilon = 0.1;
  ti.tc.batch_size = 2;
  ti.tc.seed = seed;

  Rng rng = Rng::derive(seed, 0x717E);
  const std::size_t n_landmarks = 4;
  for (std::size_t id = 0; id < 2; ++id) {
    IdentityPair ip;
    ip.id = "t" + std::to_string(id);
    for (int m = 0; m < 2; ++m) {
      model::PreparedSample s;
      s.id = ip.id;
      s.modality = m == 0 ? Modality::A : Modality::B;
      std::vector<Landmark> lms(n_landmarks);
      Mat pts(n_landmarks, 2);
      for (std::size_t i = 0; i < n_landmarks; ++i) {
        lms[i].x = rng.uniform(10.0, 630.0);
        lms[i].y = rng.uniform(10.0, 630.0);
        lms[i].v = 1;
        pts(i, 0) = lms[i].x;
        pts(i, 1) = lms[i].y;
      }
      Mat feats(n_landmarks, ti.mc.d_feat);
      for (auto& x : feats.data()) x = rng.normal();
      feats = l2_normalize_rows(feats);
      graph::BuildGraphOptions opts;
      opts.k = ti.mc.knn_k;
      opts.normalize_coords = true;
      opts.width = 640.0;
      opts.height = 640.0;
      graph::LandmarkGraph g = graph::build_graph(lms, feats, opts);
      s.x = std::move(g.x);
      s.a_hat = gcn::normalize_adjacency(g.edges, g.n);
      s.f_global = Mat(1, ti.mc.d_g);
      for (auto& x : s.f_global.data()) x = rng.normal();
      s.f_global = l2_normalize_rows(s.f_global);
      (m == 0 ? ip.a : ip.b) = std::move(s);
    }
    ti.pairs.push_back(std::move(ip));
  }
  ti.params = model::init_params(ti.mc, seed);
  return ti;
}

}  // namespace lgmatch::train
