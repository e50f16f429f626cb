// lgmatch: cross-modal landmark-graph matching pipeline.
//
// Subcommands: synth, build-graphs, train, eval, retrieve, project,
// gradcheck. Exit codes: 0 success, 1 validation/check failure, 2 numeric
// abort during training.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include <CLI11.hpp>

#include "lgmatch/eval.hpp"
#include "lgmatch/feature_io.hpp"
#include "lgmatch/manifest.hpp"
#include "lgmatch/synthetic.hpp"
#include "lgmatch/train.hpp"

namespace fs = std::filesystem;
using namespace lgmatch;

namespace {

std::string manifest_dir(const std::string& path) {
  return fs::path(path).parent_path().string();
}

struct LoadedSet {
  std::vector<model::PreparedSample> samples;
};

std::vector<model::PreparedSample> load_prepared(const std::string& manifest_path,
                                                 model::ModelConfig& mc) {
  DatasetManifest man = io::load_manifest(manifest_path);
  return model::prepare_samples(man, manifest_dir(manifest_path), mc);
}

std::vector<train::IdentityPair> load_pairs(const std::string& manifest_a,
                                            const std::string& manifest_b,
                                            model::ModelConfig& mc) {
  return train::pair_up(load_prepared(manifest_a, mc), load_prepared(manifest_b, mc));
}

std::map<std::string, std::string> truth_by_id(const std::vector<model::PreparedSample>& qs) {
  std::map<std::string, std::string> t;
  for (const auto& q : qs) t[q.id] = q.id;  // the paired item shares the id
  return t;
}

// Per-view rows plus a merged row (queries pooled, gallery pooled).
std::vector<std::pair<std::string, eval::MetricReport>> evaluate_sets(
    const std::vector<model::PreparedSample>& queries,
    const std::vector<model::PreparedSample>& gallery, model::ModelParams& params,
    const model::ModelConfig& mc, double beta, const std::vector<std::size_t>& ks) {
  std::vector<std::pair<std::string, eval::MetricReport>> rows;
  std::set<View> views;
  for (const auto& q : queries) views.insert(q.view);
  const auto truth = truth_by_id(queries);
  std::vector<eval::RankedRetrieval> merged;
  for (View v : views) {
    std::vector<model::PreparedSample> gal;
    for (const auto& g : gallery)
      if (g.view == v) gal.push_back(g);
    std::vector<eval::RankedRetrieval> rankings;
    for (const auto& q : queries) {
      if (q.view != v) continue;
      rankings.push_back(eval::score_gallery(q, gal, params, mc, beta));
      merged.push_back(rankings.back());
    }
    if (!rankings.empty())
      rows.emplace_back(to_string(v), eval::compute_metrics(rankings, truth, ks));
  }
  if (views.size() > 1 && !merged.empty())
    rows.emplace_back("merged", eval::compute_metrics(merged, truth, ks));
  return rows;
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> ks;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      if (!cur.empty()) ks.push_back(std::stoul(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (ks.empty()) throw Error("empty k list");
  return ks;
}

struct TrainArgs {
  std::string train_a, train_b, val_a, val_b, out_dir;
  model::ModelConfig mc;
  train::TripletConfig tc;
};

int run_train(TrainArgs& args) {
  fs::create_directories(args.out_dir);
  args.mc.d_feat = 0;  // infer from ingested features
  args.mc.d_g = 0;
  auto train_pairs = load_pairs(args.train_a, args.train_b, args.mc);
  std::vector<train::IdentityPair> val_pairs;
  if (!args.val_a.empty()) val_pairs = load_pairs(args.val_a, args.val_b, args.mc);
  args.mc.validate();

  std::ofstream log_file(fs::path(args.out_dir) / "train_log.txt");
  struct Tee : std::ostream, std::streambuf {
    std::ostream &a, &b;
    Tee(std::ostream& a_, std::ostream& b_) : std::ostream(this), a(a_), b(b_) {}
    int overflow(int c) override {
      a.put(static_cast<char>(c));
      b.put(static_cast<char>(c));
      return c;
    }
  } tee(std::cout, log_file);

  train::FitResult res = train::fit(train_pairs, val_pairs, args.mc, args.tc, &tee);

  auto cfg = model::model_config_to_map(args.mc);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", args.tc.margin);
  cfg["margin"] = buf;
  std::snprintf(buf, sizeof(buf), "%.17g", args.tc.beta);
  cfg["beta"] = buf;
  std::snprintf(buf, sizeof(buf), "%.17g", args.tc.lambda_ot);
  cfg["lambda_ot"] = buf;
  std::snprintf(buf, sizeof(buf), "%.17g", args.tc.lr);
  cfg["lr"] = buf;
  std::snprintf(buf, sizeof(buf), "%.17g", args.tc.weight_decay);
  cfg["weight_decay"] = buf;
  cfg["batch_size"] = std::to_string(args.tc.batch_size);
  cfg["epochs"] = std::to_string(args.tc.epochs);
  cfg["seed"] = std::to_string(args.tc.seed);
  cfg["best_epoch"] = std::to_string(res.best_epoch);

  const std::string ckpt_path = (fs::path(args.out_dir) / "model.ckpt").string();
  io::Checkpoint ckpt = model::params_to_checkpoint(res.best_params, cfg);
  io::save_checkpoint(ckpt, ckpt_path);
  std::cout << "checkpoint written to " << ckpt_path << " (best epoch " << res.best_epoch
            << ", val R@1 " << res.best_val_r1 << ")\n";
  return 0;
}

double beta_from_checkpoint(const io::Checkpoint& ckpt) {
  auto it = ckpt.config.find("beta");
  return it == ckpt.config.end() ? 1.0 : std::stod(it->second);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-modal landmark-graph matching pipeline"};
  app.require_subcommand(1);
  app.set_config("--config")->configurable(false);

  // ---- synth -------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
  io::SyntheticSpec sspec;
  std::string synth_out = "synthetic";
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--identities", sspec.n_identities, "train identity count");
  synth->add_option("--val", sspec.n_val, "held-out val identity count");
  synth->add_option("--test", sspec.n_test, "held-out test identity count");
  synth->add_option("--landmarks", sspec.n_landmarks, "landmarks per sample");
  synth->add_option("--d-feat", sspec.d_feat, "patch feature dim");
  synth->add_option("--d-global", sspec.d_global, "global feature dim (0 = d-feat)");
  synth->add_option("--noise", sspec.cross_modal_noise, "cross-modal noise scale");
  synth->add_option("--seed", sspec.seed, "generator seed");
  synth->add_flag("--identity-maps", sspec.identity_feature_maps,
                  "use identity modality transforms");

  // ---- build-graphs --------------------------------------------------------
  auto* bg = app.add_subcommand("build-graphs", "build and cache landmark graphs");
  std::string bg_manifest, bg_out = "graphs.lgc";
  model::ModelConfig bg_mc;
  bg->add_option("--manifest", bg_manifest, "input manifest")->required();
  bg->add_option("--out", bg_out, "output cache file");
  bg->add_option("--k", bg_mc.knn_k, "kNN neighbour count");
  bg->add_option("--patch", bg_mc.patch_half, "patch half-size for the toy extractor");
  bg->add_option("--d-feat", bg_mc.d_feat, "toy extractor feature dim");
  bool bg_raw_coords = false;
  bg->add_flag("--raw-coords", bg_raw_coords, "keep pixel coordinates in node features");

  // ---- train ---------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train the matching model");
  TrainArgs targs;
  tr->add_option("--train-a", targs.train_a, "query-modality train manifest")->required();
  tr->add_option("--train-b", targs.train_b, "gallery-modality train manifest")->required();
  tr->add_option("--val-a", targs.val_a, "query-modality val manifest");
  tr->add_option("--val-b", targs.val_b, "gallery-modality val manifest");
  tr->add_option("--out", targs.out_dir, "output directory")->required();
  tr->add_option("--gcn-hidden", targs.mc.gcn_hidden, "GCN hidden dim");
  tr->add_option("--d-embed", targs.mc.d_embed, "GCN embedding dim");
  tr->add_option("--heads", targs.mc.heads, "attention heads");
  tr->add_option("--ffn-mult", targs.mc.ffn_mult, "FFN width multiplier");
  tr->add_option("--k", targs.mc.knn_k, "kNN neighbour count");
  tr->add_option("--epsilon", targs.mc.ot_epsilon, "Sinkhorn entropic weight");
  tr->add_option("--sinkhorn-iters", targs.mc.sinkhorn_iters, "Sinkhorn iterations");
  bool no_ca = false, no_ot = false, envelope = false, raw_coords = false, no_relu_last = false;
  tr->add_flag("--no-cross-attention", no_ca, "disable the cross-attention block");
  tr->add_flag("--no-ot", no_ot, "disable the OT branch");
  tr->add_flag("--envelope-ot", envelope, "freeze the plan during differentiation");
  tr->add_flag("--raw-coords", raw_coords, "keep pixel coordinates in node features");
  tr->add_flag("--no-relu-last", no_relu_last, "no activation on the last GCN layer");
  tr->add_option("--margin", targs.tc.margin, "triplet margin");
  tr->add_option("--beta", targs.tc.beta, "global/OT similarity mix");
  tr->add_option("--lambda-ot", targs.tc.lambda_ot, "OT loss weight");
  tr->add_option("--batch", targs.tc.batch_size, "batch size");
  tr->add_option("--lr", targs.tc.lr, "learning rate");
  tr->add_option("--weight-decay", targs.tc.weight_decay, "decoupled weight decay");
  tr->add_option("--epochs", targs.tc.epochs, "training epochs");
  tr->add_option("--seed", targs.tc.seed, "training seed");

  // ---- eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "retrieval metrics for a trained checkpoint");
  std::string ev_ckpt, ev_query, ev_gallery, ev_klist = "1,5,10,20", ev_out;
  double ev_beta = -1.0;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--query-manifest", ev_query)->required();
  ev->add_option("--gallery-manifest", ev_gallery)->required();
  ev->add_option("--k", ev_klist, "comma-separated K values");
  ev->add_option("--beta", ev_beta, "override the checkpoint's beta");
  ev->add_option("--out", ev_out, "also write the report to this file");

  // ---- retrieve --------------------------------------------------------------
  auto* rt = app.add_subcommand("retrieve", "top-k listing for one query");
  std::string rt_ckpt, rt_query, rt_gallery, rt_id, rt_plan_csv;
  std::size_t rt_topk = 10;
  double rt_beta = -1.0;
  rt->add_option("--checkpoint", rt_ckpt)->required();
  rt->add_option("--query-manifest", rt_query)->required();
  rt->add_option("--gallery-manifest", rt_gallery)->required();
  rt->add_option("--query-id", rt_id)->required();
  rt->add_option("--topk", rt_topk);
  rt->add_option("--beta", rt_beta, "override the checkpoint's beta");
  rt->add_option("--plan-csv", rt_plan_csv, "dump the top match's transport plan");

  // ---- project -----------------------------------------------------------------
  auto* pj = app.add_subcommand("project", "2D embedding projection export");
  std::string pj_ckpt, pj_out = "projection.csv";
  std::vector<std::string> pj_manifests;
  std::uint64_t pj_seed = 1;
  pj->add_option("--checkpoint", pj_ckpt)->required();
  pj->add_option("--manifest", pj_manifests, "manifests to project")->required();
  pj->add_option("--out", pj_out, "output CSV");
  pj->add_option("--seed", pj_seed, "projection seed");

  // ---- gradcheck -----------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  std::size_t gc_probes = 0;
  double gc_h = 1e-5;
  std::uint64_t gc_seed = 11;
  bool gc_envelope = false;
  gc->add_option("--probes", gc_probes, "probed parameter count (0 = all)");
  gc->add_option("--h", gc_h, "central difference step");
  gc->add_option("--seed", gc_seed, "instance seed");
  gc->add_flag("--envelope-ot", gc_envelope, "request envelope mode (refused)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      io::SyntheticPaths paths = io::generate_synthetic(sspec, synth_out);
      for (const auto& p : paths.manifests) std::cout << "wrote " << p << "\n";
      return 0;
    }

    if (bg->parsed()) {
      model::ModelConfig mc = bg_mc;
      mc.normalize_coords = !bg_raw_coords;
      mc.d_feat = 0;
      mc.d_g = 1;  // globals are not part of the cache
      DatasetManifest man = io::load_manifest(bg_manifest);
      std::vector<std::pair<std::string, graph::LandmarkGraph>> graphs;
      std::map<std::string, std::size_t> per_view;
      for (const auto& r : man.records) {
        model::ModelConfig sample_mc = mc;
        if (!r.patch_features_ref && r.image_ref) sample_mc.d_feat = bg_mc.d_feat;
        model::PreparedSample s = model::prepare_sample(r, manifest_dir(bg_manifest), sample_mc);
        graph::LandmarkGraph g;
        g.x = s.x;
        g.n = s.x.rows();
        g.k = mc.knn_k;
        Mat pts(r.landmarks.size(), 2);
        for (std::size_t i = 0; i < r.landmarks.size(); ++i) {
          pts(i, 0) = r.landmarks[i].x;
          pts(i, 1) = r.landmarks[i].y;
        }
        g.edges = graph::knn_edges(pts, mc.knn_k);
        per_view[to_string(r.view)]++;
        graphs.emplace_back(r.id + "_" + to_string(r.modality) + "_" + to_string(r.view),
                            std::move(g));
      }
      graph::write_graph_cache(graphs, bg_out);
      for (const auto& [view, count] : per_view)
        std::cout << view << ": " << count << " graphs\n";
      std::cout << "cache written to " << bg_out << "\n";
      return 0;
    }

    if (tr->parsed()) {
      targs.mc.use_cross_attention = !no_ca;
      targs.mc.use_ot = !no_ot;
      targs.mc.envelope_ot = envelope;
      targs.mc.normalize_coords = !raw_coords;
      targs.mc.relu_last = !no_relu_last;
      if (!targs.mc.use_ot) {
        targs.tc.beta = 1.0;
        targs.tc.lambda_ot = 0.0;
      }
      if (targs.val_a.empty() != targs.val_b.empty())
        throw Error("--val-a and --val-b must be given together");
      return run_train(targs);
    }

    if (ev->parsed()) {
      io::Checkpoint ckpt = io::load_checkpoint(ev_ckpt);
      model::ModelConfig mc = model::model_config_from_checkpoint(ckpt);
      model::ModelParams params = model::params_from_checkpoint(ckpt);
      const double beta = ev_beta >= 0.0 ? ev_beta : beta_from_checkpoint(ckpt);
      auto queries = load_prepared(ev_query, mc);
      auto gallery = load_prepared(ev_gallery, mc);
      auto rows = evaluate_sets(queries, gallery, params, mc, beta, parse_k_list(ev_klist));
      const std::string report = eval::format_report(rows);
      std::cout << report;
      if (!ev_out.empty()) {
        std::ofstream out(ev_out);
        out << report;
      }
      return 0;
    }

    if (rt->parsed()) {
      io::Checkpoint ckpt = io::load_checkpoint(rt_ckpt);
      model::ModelConfig mc = model::model_config_from_checkpoint(ckpt);
      model::ModelParams params = model::params_from_checkpoint(ckpt);
      const double beta = rt_beta >= 0.0 ? rt_beta : beta_from_checkpoint(ckpt);
      auto queries = load_prepared(rt_query, mc);
      auto gallery = load_prepared(rt_gallery, mc);
      const model::PreparedSample* query = nullptr;
      for (const auto& q : queries)
        if (q.id == rt_id) query = &q;
      if (!query) throw Error("query id '" + rt_id + "' not found in query manifest");
      eval::RankedRetrieval r = eval::score_gallery(*query, gallery, params, mc, beta);
      const std::size_t k = std::min(rt_topk, r.gallery_ids.size());
      for (std::size_t i = 0; i < k; ++i)
        std::printf("%3zu  %-16s  %.6f\n", i + 1, r.gallery_ids[i].c_str(), r.scores[i]);
      if (!rt_plan_csv.empty()) {
        const model::PreparedSample* top = nullptr;
        for (const auto& g : gallery)
          if (g.id == r.gallery_ids.front()) top = &g;
        Mat plan, cost;
        model::pair_score_with_plan(*query, *top, params, mc, beta, &plan, &cost);
        std::ofstream out(rt_plan_csv);
        for (std::size_t i = 0; i < plan.rows(); ++i) {
          for (std::size_t j = 0; j < plan.cols(); ++j) {
            if (j) out << ",";
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.9g", plan(i, j));
            out << buf;
          }
          out << "\n";
        }
        std::cout << "plan for top match '" << r.gallery_ids.front() << "' written to "
                  << rt_plan_csv << "\n";
      }
      return 0;
    }

    if (pj->parsed()) {
      io::Checkpoint ckpt = io::load_checkpoint(pj_ckpt);
      model::ModelConfig mc = model::model_config_from_checkpoint(ckpt);
      model::ModelParams params = model::params_from_checkpoint(ckpt);
      std::vector<model::PreparedSample> samples;
      for (const auto& mpath : pj_manifests) {
        auto s = load_prepared(mpath, mc);
        samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                       std::make_move_iterator(s.end()));
      }
      if (samples.size() < 2) throw Error("projection needs at least 2 samples");
      Mat emb(samples.size(), mc.d_embed + mc.d_g);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        Mat f = model::fused_embedding(samples[i], params, mc);
        for (std::size_t j = 0; j < f.cols(); ++j) emb(i, j) = f(0, j);
      }
      bool degenerate = false;
      Mat coords = eval::pca_project(emb, pj_seed, &degenerate);
      std::ofstream out(pj_out);
      out << "id,modality,x,y\n";
      for (std::size_t i = 0; i < samples.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g", coords(i, 0), coords(i, 1));
        out << samples[i].id << "," << to_string(samples[i].modality) << "," << buf << "\n";
      }
      std::cout << "projection (" << samples.size() << " rows) written to " << pj_out
                << (degenerate ? " [degenerate: rank-0 embeddings]" : "") << "\n";
      return 0;
    }

    if (gc->parsed()) {
      if (gc_envelope) {
        std::cerr << "gradcheck: envelope-OT mode freezes the plan and its gradients are "
                     "intentionally approximate; run without --envelope-ot\n";
        return 1;
      }
      if (gc_h <= 0.0) throw Error("gradcheck: --h must be > 0");
      train::TinyInstance ti = train::make_tiny_instance(gc_seed);
      auto loss_fn = train::make_batch_loss_fn(ti.pairs, ti.params, ti.mc, ti.tc);
      train::GradCheckResult r =
          train::finite_difference_check(loss_fn, ti.params, gc_probes, gc_h);
      std::printf("max relative error %.3e over %zu probes (worst: %s[%zu])\n", r.max_rel_err,
                  r.probes, r.worst_param.c_str(), r.worst_index);
      return r.max_rel_err <= 1e-4 ? 0 : 1;
    }
  } catch (const train::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
