#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "lgmatch/model.hpp"

namespace lgmatch::train {

// Raised when the loss goes non-finite; the CLI maps it to exit code 2.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

struct TripletConfig {
  double margin = 0.3;
  double beta = 0.5;         // global/OT similarity mix
  double lambda_ot = 0.1;    // weight of the positive-pair transport cost
  std::size_t batch_size = 16;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;

  void validate() const;
};

// --- similarity / loss primitives -----------------------------------------

// S_ij = g_s_i . g_f_j (rows are unit-norm, so this is the cosine).
Mat global_similarity_matrix(const Mat& g_s, const Mat& g_f);

// argmax over j != i, ties to the lowest index.
std::size_t mine_hardest_negative(const Mat& s, std::size_t i);

double combined_similarity(double s_global, double s_ot, double beta);

double triplet_loss(const std::vector<double>& sim_pos, const std::vector<double>& sim_neg,
                    double margin);

double total_loss(double l_triplet, double l_ot_mean, double lambda_ot);

// --- training --------------------------------------------------------------

struct IdentityPair {
  std::string id;
  model::PreparedSample a;  // query modality
  model::PreparedSample b;  // gallery modality
};

std::vector<IdentityPair> pair_up(std::vector<model::PreparedSample> a_samples,
                                  std::vector<model::PreparedSample> b_samples);

struct BatchResult {
  ad::Var total;        // scalar loss on the tape
  double l_triplet = 0.0;
  double l_ot = 0.0;    // mean positive transport cost
  double r1 = 0.0;      // in-batch retrieval accuracy on S
};

// Builds the full differentiable batch loss: positive-pair forwards, hardest
// negatives mined on the global cosine matrix, OT evaluated for the B
// positive and B mined-negative pairs.
BatchResult batch_loss(ad::Tape& t, const std::vector<const IdentityPair*>& batch,
                       const model::ParamVars& pv, const model::ModelConfig& mc,
                       const TripletConfig& tc);

// Adam with decoupled weight decay.
class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(model::ModelParams& params, double lr, double weight_decay);

 private:
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Mat> m_, v_;
  bool initialized_ = false;
};

struct EpochLog {
  std::size_t epoch = 0;
  double l_triplet = 0.0;
  double l_ot = 0.0;
  double l_total = 0.0;
  double val_r1 = 0.0;
  double wall_seconds = 0.0;
};

struct FitResult {
  model::ModelParams best_params;
  std::size_t best_epoch = 0;   // 1-based; 0 = no validation performed
  double best_val_r1 = 0.0;
  std::vector<EpochLog> log;
};

// Full training loop: seeded identity-disjoint batches, Adam updates,
// per-epoch validation R@1, best-validation snapshot (ties to the earlier
// epoch). With an empty validation set the final parameters are returned.
// progress, when given, receives one formatted line per epoch.
FitResult fit(const std::vector<IdentityPair>& train_pairs,
              const std::vector<IdentityPair>& val_pairs, const model::ModelConfig& mc,
              const TripletConfig& tc, std::ostream* progress = nullptr);

std::string format_epoch_log(const EpochLog& e);

// Validation-protocol R@1: every query scored against the full gallery.
double retrieval_r1(const std::vector<IdentityPair>& pairs, model::ModelParams& params,
                    const model::ModelConfig& mc, double beta);

// --- gradient verification --------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t probes = 0;
};

// Central finite differences on probe_count randomly selected parameter
// scalars (0 = all) against analytic tape gradients. rel = |a - fd| /
// max(1e-8, |a|, |fd|).
GradCheckResult finite_difference_check(const std::function<double(bool)>& loss_fn,
                                        model::ModelParams& params, std::size_t probe_count,
                                        double h, std::uint64_t seed = 7);

// The canonical tiny instance: 2 identities, 4 landmarks, d_feat = 4,
// d_embed = 4, d_g = 2, 2 heads, 10 Sinkhorn iterations.
struct TinyInstance {
  model::ModelConfig mc;
  TripletConfig tc;
  std::vector<IdentityPair> pairs;
  model::ModelParams params;
};
TinyInstance make_tiny_instance(std::uint64_t seed = 11);

// Batch loss closure over a fixed pair list (used by gradcheck paths).
std::function<double(bool)> make_batch_loss_fn(const std::vector<IdentityPair>& pairs,
                                               model::ModelParams& params,
                                               const model::ModelConfig& mc,
                                               const TripletConfig& tc);

}  // namespace lgmatch::train
