// SPDX-License-Identifier: Apache-2.0
// ssdl: command-line front end for corpus preparation, training and evaluation.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ssdl/dataio/synthetic.hpp"
#include "ssdl/pgraph/graph.hpp"
#include "ssdl/pipeline/probe.hpp"

namespace fs = std::filesystem;
using namespace ssdl;

namespace {

// Flags that override a key of the run config.
struct Overrides {
  std::map<std::string, std::string> values;

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values[key] = v; },
                                          help + " (config: " + key + ")");
  }
};

Overrides& add_run_flags(CLI::App* app, Overrides& o) {
  o.bind(app, "--corpus", "corpus", "corpus directory");
  o.bind(app, "--graph", "graph", "prebuilt graph directory");
  o.bind(app, "--out", "out", "run directory");
  o.bind(app, "--seed", "seed", "run seed");
  o.bind(app, "--variant", "variant", "full, base, no_graph or no_mi");
  o.bind(app, "--delta-g", "graph.delta_g_km", "geographic radius in km");
  o.bind(app, "--batch-size", "batch_size", "batch size");
  o.bind(app, "--pretrain-epochs", "pretrain.epochs", "phase-1 epochs");
  o.bind(app, "--pretrain-lr", "pretrain.lr", "phase-1 learning rate");
  o.bind(app, "--plateau-tol", "pretrain.plateau_tol", "phase-1 plateau stop; 0 disables");
  o.bind(app, "--task-epochs", "task.epochs", "phase-2 epochs");
  o.bind(app, "--task-lr", "task.lr", "phase-2 learning rate");
  o.bind(app, "--dropout", "task.dropout", "dropout before the output layer");
  o.bind(app, "--freeze", "task.freeze", "freeze pretrained weights in phase 2 (true/false)");
  o.bind(app, "--alpha", "ssl.alpha", "KL weight");
  o.bind(app, "--beta", "ssl.beta", "contrastive MI weight");
  o.bind(app, "--gamma", "ssl.gamma", "MWS penalty weight");
  o.bind(app, "--eta", "ssl.eta", "NCE temperature");
  o.bind(app, "--negatives", "ssl.negatives", "cap on negatives per anchor");
  o.bind(app, "--replace-ratio", "ssl.replace_ratio", "share of positions replaced by collective POIs");
  o.bind(app, "--collective-radius", "ssl.collective_radius_m", "collective POI radius in metres");
  return o;
}

pipeline::RunConfig resolve_config(const std::string& path, const Overrides& o) {
  data::KeyValues kv = path.empty() ? data::KeyValues{} : data::KeyValues::load(path);
  for (const auto& [key, value] : o.values) kv.set(key, value);
  return pipeline::RunConfig::from(kv);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

pipeline::TrainOptions progress(const fs::path& log, const fs::path& checkpoint) {
  pipeline::TrainOptions opt;
  opt.log = log;
  opt.checkpoint = checkpoint;
  opt.on_epoch = [](const pipeline::EpochLog& l) {
    std::fprintf(stderr, "%s epoch %zu  total %.4f  recon %.4f  (%.1fs)\n", l.phase.c_str(), l.epoch, l.total, l.recon,
                 l.seconds);
  };
  return opt;
}

graph::PGraph graph_for(const pipeline::RunConfig& cfg, const data::Corpus& corpus, const std::string& hash) {
  if (!cfg.graph.empty()) return graph::load_pgraph(cfg.graph, hash);
  return graph::build_pgraph(corpus, cfg.delta_g_km);
}

// Training fields may change between runs; the architecture may not.
void adopt_config(pipeline::Model& model, const pipeline::RunConfig& cfg) {
  const auto& a = model.config.dims;
  const auto& b = cfg.dims;
  if (a.embed != b.embed || a.z_s != b.z_s || a.z_r != b.z_r || a.prior_hidden != b.prior_hidden ||
      a.attention != b.attention || a.history_cap != b.history_cap)
    throw std::invalid_argument("config dims differ from the checkpoint");
  if (model.config.variant != cfg.variant)
    throw std::invalid_argument(std::string("config variant differs from the checkpoint (") +
                                pipeline::variant_name(model.config.variant) + ")");
  model.config = cfg;
}

data::Corpus corpus_for(const std::string& flag, const pipeline::Model& model) {
  const fs::path dir = flag.empty() ? model.config.corpus : fs::path(flag);
  if (dir.empty()) throw std::invalid_argument("no corpus given and the checkpoint does not name one");
  return data::load_corpus(dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised disentangled next-POI prediction"};
  app.require_subcommand(1);

  // preprocess
  std::string pp_in, pp_out;
  data::PreprocessOptions pp;
  double gap_hours = 24.0;
  auto* preprocess = app.add_subcommand("preprocess", "Filter check-ins, cut sessions and split a corpus");
  preprocess->add_option("--in", pp_in, "check-in CSV")->required();
  preprocess->add_option("--out", pp_out, "corpus directory")->required();
  preprocess->add_option("--min-poi-freq", pp.min_poi_freq, "drop POIs with fewer visits")->capture_default_str();
  preprocess->add_option("--min-user-checkins", pp.min_user_checkins, "drop users with fewer check-ins")
      ->capture_default_str();
  preprocess->add_option("--session-gap-hours", gap_hours, "session window")->capture_default_str();
  preprocess->add_option("--train-ratio", pp.train_ratio, "share of each user's sessions used for training")
      ->capture_default_str();

  // build-graph
  std::string bg_corpus, bg_out;
  double bg_delta = 3.0;
  auto* build_graph = app.add_subcommand("build-graph", "Build the POI graph from the training split");
  build_graph->add_option("--corpus", bg_corpus, "corpus directory")->required();
  build_graph->add_option("--delta-g", bg_delta, "geographic radius in km")->capture_default_str();
  build_graph->add_option("--out", bg_out, "graph directory (default: <corpus>/graph)");

  // pretrain / train
  std::string pt_config, tr_config, tr_from;
  bool pt_resume = false;
  Overrides pt_over, tr_over;
  auto* pretrain = app.add_subcommand("pretrain", "Phase 1: self-supervised training");
  pretrain->add_option("--config", pt_config, "run config file");
  pretrain->add_flag("--resume", pt_resume, "continue from <out>/pretrain if it exists");
  add_run_flags(pretrain, pt_over);
  auto* train = app.add_subcommand("train", "Phase 2: next-POI training");
  train->add_option("--config", tr_config, "run config file");
  train->add_option("--from", tr_from, "phase-1 checkpoint; fresh parameters when omitted");
  add_run_flags(train, tr_over);

  // evaluate
  std::string ev_ckpt, ev_corpus, ev_out = "metrics.json", ev_ranks, ev_split = "test";
  auto* evaluate = app.add_subcommand("evaluate", "Ranking metrics on a split");
  evaluate->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
  evaluate->add_option("--corpus", ev_corpus, "corpus directory (default: the one in the checkpoint)");
  evaluate->add_option("--out", ev_out, "metrics file")->capture_default_str();
  evaluate->add_option("--ranks", ev_ranks, "optional per-instance ranks TSV");
  evaluate->add_option("--split", ev_split, "train or test")->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();

  // probe
  std::string pr_ckpt, pr_corpus, pr_out, pr_labels;
  std::uint64_t pr_seed = 0;
  auto* probe = app.add_subcommand("probe", "Linear probes of user identity on the latent factors");
  probe->add_option("--ckpt", pr_ckpt, "checkpoint directory")->required();
  probe->add_option("--corpus", pr_corpus, "corpus directory (default: the one in the checkpoint)");
  probe->add_option("--out", pr_out, "report file; stdout when omitted");
  probe->add_option("--labels", pr_labels, "labels.tsv mapping users to cluster labels; user identity otherwise");
  probe->add_option("--seed", pr_seed, "fold shuffle seed")->capture_default_str();

  // synth
  std::string sy_spec, sy_out;
  std::optional<std::uint64_t> sy_seed;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic check-in file with known user structure");
  synth->add_option("--spec", sy_spec, "generator spec file; defaults otherwise");
  synth->add_option("--out", sy_out, "output directory")->required();
  synth->add_option("--seed", sy_seed, "overrides the spec seed");

  // export-embeddings
  std::string ex_ckpt, ex_corpus, ex_out;
  auto* exportemb = app.add_subcommand("export-embeddings", "Posterior means of every trajectory as TSV");
  exportemb->add_option("--ckpt", ex_ckpt, "checkpoint directory")->required();
  exportemb->add_option("--corpus", ex_corpus, "corpus directory (default: the one in the checkpoint)");
  exportemb->add_option("--out", ex_out, "output TSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*preprocess) {
      pp.session_gap = static_cast<data::Timestamp>(gap_hours * 3600.0);
      data::LoadReport lr;
      const auto checkins = data::load_checkins(pp_in, {}, &lr);
      data::PreprocessReport rep;
      const data::Corpus corpus = data::preprocess(checkins, pp, &rep);
      data::save_corpus(corpus, pp_out);
      std::printf("rows %zu, malformed %zu, kept %zu of %zu check-ins after %zu filter passes\n", lr.rows,
                  lr.malformed, rep.kept_checkins, rep.input_checkins, rep.filter_passes);
      std::printf("%zu users, %zu POIs, %zu trajectories (%zu train, %zu test)\n", corpus.num_users(),
                  corpus.num_pois(), corpus.trajectories.size(), corpus.indices(data::Split::Train).size(),
                  corpus.indices(data::Split::Test).size());
    } else if (*build_graph) {
      const data::Corpus corpus = data::load_corpus(bg_corpus);
      const fs::path out = bg_out.empty() ? fs::path(bg_corpus) / "graph" : fs::path(bg_out);
      const graph::PGraph g = graph::build_pgraph(corpus, bg_delta);
      graph::save_pgraph(g, out, data::corpus_hash(corpus));
      std::printf("graph over %zu POIs written to %s\n", g.num_pois(), out.c_str());
    } else if (*pretrain) {
      const pipeline::RunConfig cfg = resolve_config(pt_config, pt_over);
      const std::uint64_t seed = cfg.require_seed();
      if (cfg.corpus.empty()) throw std::invalid_argument("no corpus given (--corpus or `corpus` in the config)");
      const data::Corpus corpus = data::load_corpus(cfg.corpus);
      const std::string hash = data::corpus_hash(corpus);
      const fs::path ckpt = cfg.out / "pretrain";

      std::unique_ptr<pipeline::Model> model;
      pipeline::TrainingState state;
      if (pt_resume && fs::exists(ckpt / "manifest.json")) {
        auto ck = pipeline::load_checkpoint(ckpt, hash);
        model = std::move(ck.model);
        state = std::move(ck.state);
        adopt_config(*model, cfg);
        std::fprintf(stderr, "resuming %s after epoch %zu\n", state.phase.c_str(), state.epoch);
      } else {
        num::Rng rng(pipeline::epoch_seed(seed, 0, 0));
        model = pipeline::Model::create(cfg, graph_for(cfg, corpus, hash), hash, rng);
        fs::remove(cfg.out / "pretrain.jsonl");
      }
      pipeline::pretrain(*model, corpus, state, progress(cfg.out / "pretrain.jsonl", ckpt));
      pipeline::save_checkpoint(*model, state, ckpt);
      std::printf("checkpoint %s\n", ckpt.c_str());
    } else if (*train) {
      const pipeline::RunConfig cfg = resolve_config(tr_config, tr_over);
      const std::uint64_t seed = cfg.require_seed();
      std::unique_ptr<pipeline::Model> model;
      pipeline::TrainingState state;
      data::Corpus corpus;
      if (!tr_from.empty()) {
        auto ck = pipeline::load_checkpoint(tr_from);
        model = std::move(ck.model);
        state = std::move(ck.state);
        adopt_config(*model, cfg);
        corpus = corpus_for(cfg.corpus.string(), *model);
        if (data::corpus_hash(corpus) != model->corpus_hash)
          throw std::runtime_error("checkpoint " + tr_from + " was trained on a different corpus");
      } else {
        if (cfg.corpus.empty()) throw std::invalid_argument("no corpus given (--corpus or `corpus` in the config)");
        corpus = data::load_corpus(cfg.corpus);
        const std::string hash = data::corpus_hash(corpus);
        num::Rng rng(pipeline::epoch_seed(seed, 0, 0));
        model = pipeline::Model::create(cfg, graph_for(cfg, corpus, hash), hash, rng);
      }
      fs::remove(cfg.out / "train.jsonl");
      const fs::path ckpt = cfg.out / "train";
      pipeline::train_task(*model, corpus, state, progress(cfg.out / "train.jsonl", ckpt));
      pipeline::save_checkpoint(*model, state, ckpt);
      std::printf("checkpoint %s\n", ckpt.c_str());
    } else if (*evaluate) {
      auto ck = pipeline::load_checkpoint(ev_ckpt);
      const data::Corpus corpus = corpus_for(ev_corpus, *ck.model);
      if (data::corpus_hash(corpus) != ck.model->corpus_hash)
        throw std::runtime_error("checkpoint was trained on a different corpus");
      const auto split = ev_split == "train" ? data::Split::Train : data::Split::Test;
      const task::EvalReport r = pipeline::evaluate(*ck.model, corpus, split);
      task::write_metrics(r, ev_out);
      if (!ev_ranks.empty()) task::write_ranks(r, ev_ranks);
      std::printf("ACC@1 %.4f  ACC@5 %.4f  ACC@10 %.4f  AUC %.4f  MAP %.4f  (%zu instances)\n", r.acc1, r.acc5,
                  r.acc10, r.auc, r.map, r.instances);
    } else if (*probe) {
      auto ck = pipeline::load_checkpoint(pr_ckpt);
      const data::Corpus corpus = corpus_for(pr_corpus, *ck.model);
      if (data::corpus_hash(corpus) != ck.model->corpus_hash)
        throw std::runtime_error("checkpoint was trained on a different corpus");
      pipeline::ProbeReport r;
      if (pr_labels.empty()) {
        r = pipeline::run_probe(*ck.model, corpus, pr_seed);
      } else {
        const auto by_user = data::load_labels(pr_labels);
        std::vector<std::size_t> idx, labels;
        for (std::size_t i = 0; i < corpus.trajectories.size(); ++i) {
          const auto it = by_user.find(corpus.users[corpus.trajectories[i].user]);
          if (it == by_user.end() || it->second < 0) continue;
          idx.push_back(i);
          labels.push_back(static_cast<std::size_t>(it->second));
        }
        r = pipeline::probe_embeddings(pipeline::embed_trajectories(*ck.model, corpus, idx), labels, pr_seed);
      }
      if (pr_out.empty())
        std::cout << r.to_json();
      else
        write_text(pr_out, r.to_json());
    } else if (*synth) {
      data::SyntheticSpec spec = sy_spec.empty() ? data::SyntheticSpec{} : data::load_synthetic_spec(sy_spec);
      if (sy_seed) spec.seed = *sy_seed;
      const data::SyntheticCorpus s = data::gen_synthetic(spec);
      fs::create_directories(sy_out);
      data::write_checkins(fs::path(sy_out) / "checkins.csv", s.checkins);
      data::save_labels(fs::path(sy_out) / "labels.tsv", s.corpus.users, s.labels);
      std::printf("%zu check-ins from %zu users over %zu POIs written to %s\n", s.checkins.size(), spec.users,
                  spec.pois, sy_out.c_str());
    } else if (*exportemb) {
      auto ck = pipeline::load_checkpoint(ex_ckpt);
      const data::Corpus corpus = corpus_for(ex_corpus, *ck.model);
      std::vector<std::size_t> idx(corpus.trajectories.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      pipeline::write_embeddings(pipeline::embed_trajectories(*ck.model, corpus, idx), corpus, ex_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "ssdl: %s\n", e.what());
    return 1;
  }
  return 0;
}
