// SPDX-License-Identifier: Apache-2.0
#include "ssdl/pipeline/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "ssdl/ssl/objective.hpp"

namespace ssdl::pipeline {

using num::Tensor;
using num::Var;

namespace {

void fisher_yates(std::vector<std::size_t>& v, num::Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::size_t distinct_users(const std::vector<std::size_t>& batch, std::span<const std::size_t> users) {
  std::set<std::size_t> s;
  for (std::size_t i : batch) s.insert(users[i]);
  return s.size();
}

void append_log(const std::filesystem::path& path, const EpochLog& log) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw std::runtime_error("cannot append to " + path.string());
  out << log.to_json() << "\n";
}

void check_vocabulary(const Model& model, const data::Corpus& corpus) {
  if (model.num_pois() != corpus.num_pois())
    throw std::invalid_argument("model vocabulary has " + std::to_string(model.num_pois()) + " POIs but the corpus has " +
                                std::to_string(corpus.num_pois()));
}

bool finite(Var v) { return std::isfinite(v.value().item()); }

// Sum over steps of z_t restricted to each row's final valid step.
Var last_step(num::Tape& tape, std::span<const Var> steps, const vae::SequenceBatch& batch) {
  Var out;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    Tensor sel = Tensor::zeros(batch.batch, 1);
    bool any = false;
    for (std::size_t b = 0; b < batch.batch; ++b) {
      if (batch.lengths[b] == t + 1) {
        sel(b, 0) = 1.0;
        any = true;
      }
    }
    if (!any) continue;
    const Var part = steps[t] * tape.constant(std::move(sel));
    out = out.valid() ? out + part : part;
  }
  return out;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j;
  j["phase"] = phase;
  j["epoch"] = epoch;
  j["recon"] = recon;
  j["kl_s"] = kl_s;
  j["kl_r"] = kl_r;
  j["mi_zs"] = mi_zs;
  j["mi_zr"] = mi_zr;
  j["mws"] = mws;
  j["total"] = total;
  j["ssl_calls"] = ssl_calls;
  j["seconds"] = seconds;
  return j.dump();
}

std::vector<Instance> make_instances(const data::Corpus& corpus, data::Split split, std::size_t history_cap) {
  std::vector<Instance> out;
  for (std::size_t i : corpus.indices(split)) {
    const auto& t = corpus.trajectories[i];
    if (t.length() < 2) continue;
    Instance in;
    in.trajectory = i;
    in.user = t.user;
    in.session = t.session;
    in.prefix.assign(t.pois.begin(), t.pois.end() - 1);
    in.target = t.pois.back();
    in.history = corpus.history_before(i, history_cap);
    out.push_back(std::move(in));
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> items,
                                                   std::span<const std::size_t> users, std::size_t batch_size,
                                                   bool mixed_users, num::Rng& rng) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> order(items.begin(), items.end());
  fisher_yates(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  if (!mixed_users) return batches;
  for (std::size_t b = 0; b < batches.size() && batches.size() > 1;) {
    if (distinct_users(batches[b], users) >= 2) {
      ++b;
      continue;
    }
    const std::size_t into = b + 1 < batches.size() ? b + 1 : b - 1;
    batches[into].insert(batches[into].end(), batches[b].begin(), batches[b].end());
    batches.erase(batches.begin() + static_cast<std::ptrdiff_t>(b));
    b = 0;
  }
  return batches;
}

std::vector<EpochLog> pretrain(Model& model, const data::Corpus& corpus, TrainingState& state,
                               const TrainOptions& options) {
  check_vocabulary(model, corpus);
  const RunConfig& cfg = model.config;
  const std::uint64_t seed = cfg.require_seed();
  const ssl::SSLConfig ssl_cfg = cfg.effective_ssl();
  ssl_cfg.validate();
  const auto collective = ssl::build_collective_map(corpus.pois, cfg.ssl.collective_radius_m / 1000.0);
  const auto train = corpus.indices(data::Split::Train);
  if (train.empty()) throw std::invalid_argument("pretrain: the corpus has no training trajectories");
  std::vector<std::size_t> users(corpus.trajectories.size());
  for (std::size_t i = 0; i < users.size(); ++i) users[i] = corpus.trajectories[i].user;

  if (state.phase != "pretrain") {
    state = {};
    state.phase = "pretrain";
  }
  state.adam.lr = cfg.pretrain_lr;
  const bool mixed = ssl_cfg.beta > 0;

  std::vector<EpochLog> logs;
  std::vector<double> totals;
  for (std::size_t epoch = state.epoch; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto start = Clock::now();
    const auto calls_before = ssl::call_counts().total();
    num::Rng rng(epoch_seed(seed, 1, epoch));
    const auto snapshot = model.params.values();
    const num::AdamState adam_snapshot = state.adam;
    EpochLog log;
    log.phase = "pretrain";
    log.epoch = epoch;
    std::size_t seen = 0;
    try {
      for (const auto& batch : make_batches(train, users, cfg.batch_size, mixed, rng)) {
        std::vector<const data::Trajectory*> ptrs;
        for (std::size_t i : batch) ptrs.push_back(&corpus.trajectories[i]);
        num::Tape tape;
        const auto terms = ssl::ssl_objective(tape, model.vae, model.table(tape), ptrs, collective, train.size(),
                                              ssl_cfg, rng);
        if (!finite(terms.loss)) throw vae::NonFiniteValue("loss");
        model.params.zero_grad();
        tape.backward(terms.loss);
        num::adam_step(model.params, state.adam);
        const double w = static_cast<double>(batch.size());
        log.recon += w * terms.recon.value().item();
        log.kl_s += w * terms.kl_s.value().item();
        log.kl_r += w * terms.kl_r.value().item();
        log.mi_zs += w * terms.mi_zs.value().item();
        log.mi_zr += w * terms.mi_zr.value().item();
        log.mws += w * terms.mws.value().item();
        log.total += w * terms.loss.value().item();
        seen += batch.size();
      }
    } catch (const std::runtime_error& e) {
      const bool numeric = dynamic_cast<const vae::NonFiniteValue*>(&e) || dynamic_cast<const num::NonFiniteGradient*>(&e);
      if (!numeric) throw;
      model.params.assign(snapshot);
      state.adam = adam_snapshot;
      if (!options.checkpoint.empty()) save_checkpoint(model, state, options.checkpoint);
      throw TrainingDiverged("pretrain", epoch, e.what());
    }
    for (double* v : {&log.recon, &log.kl_s, &log.kl_r, &log.mi_zs, &log.mi_zr, &log.mws, &log.total})
      *v /= static_cast<double>(seen);
    log.ssl_calls = ssl::call_counts().total() - calls_before;
    log.seconds = seconds_since(start);
    state.epoch = epoch + 1;
    append_log(options.log, log);
    if (!options.checkpoint.empty()) save_checkpoint(model, state, options.checkpoint);
    if (options.on_epoch) options.on_epoch(log);
    logs.push_back(log);

    totals.push_back(log.total);
    if (cfg.plateau_tol > 0 && totals.size() > 10) {
      double worst = 0;
      for (std::size_t k = totals.size() - 10; k < totals.size(); ++k)
        worst = std::max(worst, std::abs(totals[k] - totals[k - 1]) / std::max(std::abs(totals[k - 1]), 1e-12));
      if (worst < cfg.plateau_tol) break;
    }
  }
  return logs;
}

Var task_logits(num::Tape& tape, const Model& model, std::span<const Instance* const> batch, num::Rng* rng) {
  if (batch.empty()) throw std::invalid_argument("task_logits: empty batch");
  std::vector<std::vector<std::size_t>> prefixes, histories;
  for (const auto* in : batch) {
    prefixes.push_back(in->prefix);
    histories.push_back(in->history);
  }
  const auto seq = vae::SequenceBatch::from(prefixes);
  const Var table = model.table(tape);
  const Var stacked = vae::embed_batch(tape, table, seq);
  const auto states = vae::encode_sequence(tape, model.vae, stacked, seq);
  const auto post = vae::posterior(tape, model.vae, states, seq.masks, rng);
  const Var zr_last = last_step(tape, post.zr_sample, seq);
  const Var history = task::history_encode(tape, model.task, table, histories);
  return task::predict_logits(tape, model.task, zr_last, post.zs_sample, history, model.config.dropout, rng);
}

std::vector<EpochLog> train_task(Model& model, const data::Corpus& corpus, TrainingState& state,
                                 const TrainOptions& options) {
  check_vocabulary(model, corpus);
  const RunConfig& cfg = model.config;
  const std::uint64_t seed = cfg.require_seed();
  const auto instances = make_instances(corpus, data::Split::Train, cfg.dims.history_cap);
  if (instances.empty()) throw std::invalid_argument("train_task: no training sessions with two or more check-ins");
  std::vector<std::size_t> items(instances.size()), users(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    items[i] = i;
    users[i] = instances[i].user;
  }

  if (state.phase != "task") {
    state = {};
    state.phase = "task";
  }
  state.adam.lr = cfg.task_lr;

  std::vector<EpochLog> logs;
  for (std::size_t epoch = state.epoch; epoch < cfg.task_epochs; ++epoch) {
    const auto start = Clock::now();
    const auto calls_before = ssl::call_counts().total();
    num::Rng rng(epoch_seed(seed, 2, epoch));
    const auto snapshot = model.params.values();
    const num::AdamState adam_snapshot = state.adam;
    EpochLog log;
    log.phase = "task";
    log.epoch = epoch;
    try {
      for (const auto& batch : make_batches(items, users, cfg.batch_size, false, rng)) {
        std::vector<const Instance*> ptrs;
        std::vector<std::size_t> targets;
        for (std::size_t i : batch) {
          ptrs.push_back(&instances[i]);
          targets.push_back(instances[i].target);
        }
        num::Tape tape;
        const Var loss = task::task_loss(task_logits(tape, model, ptrs, &rng), targets);
        if (!finite(loss)) throw vae::NonFiniteValue("task loss");
        model.params.zero_grad();
        tape.backward(loss);
        if (cfg.freeze_pretrained) {
          for (auto& p : model.params)
            if (p.name.rfind("task.", 0) != 0) p.grad.fill(0.0);
        }
        num::adam_step(model.params, state.adam);
        log.total += static_cast<double>(batch.size()) * loss.value().item();
      }
    } catch (const std::runtime_error& e) {
      const bool numeric = dynamic_cast<const vae::NonFiniteValue*>(&e) || dynamic_cast<const num::NonFiniteGradient*>(&e);
      if (!numeric) throw;
      model.params.assign(snapshot);
      state.adam = adam_snapshot;
      if (!options.checkpoint.empty()) save_checkpoint(model, state, options.checkpoint);
      throw TrainingDiverged("task", epoch, e.what());
    }
    log.total /= static_cast<double>(instances.size());
    log.ssl_calls = ssl::call_counts().total() - calls_before;
    log.seconds = seconds_since(start);
    state.epoch = epoch + 1;
    append_log(options.log, log);
    if (!options.checkpoint.empty()) save_checkpoint(model, state, options.checkpoint);
    if (options.on_epoch) options.on_epoch(log);
    logs.push_back(log);
  }
  return logs;
}

task::EvalReport evaluate(const Model& model, const data::Corpus& corpus, data::Split split) {
  check_vocabulary(model, corpus);
  const auto instances = make_instances(corpus, split, model.config.dims.history_cap);
  if (instances.empty())
    throw std::invalid_argument(std::string("no ") + data::split_name(split) + " instances to evaluate");
  constexpr std::size_t kChunk = 64;
  std::vector<task::InstanceRank> ranks;
  for (std::size_t start = 0; start < instances.size(); start += kChunk) {
    std::vector<const Instance*> ptrs;
    for (std::size_t i = start; i < std::min(instances.size(), start + kChunk); ++i) ptrs.push_back(&instances[i]);
    num::Tape tape(false);
    const Tensor& logits = task_logits(tape, model, ptrs, nullptr).value();
    for (std::size_t b = 0; b < ptrs.size(); ++b) {
      const auto row = logits.data().subspan(b * logits.cols(), logits.cols());
      ranks.push_back({ptrs[b]->user, ptrs[b]->session, task::rank_of(row, ptrs[b]->target)});
    }
  }
  return task::summarize(std::move(ranks), model.num_pois());
}

Embeddings embed_trajectories(const Model& model, const data::Corpus& corpus, std::span<const std::size_t> indices) {
  check_vocabulary(model, corpus);
  Embeddings e;
  e.trajectories.assign(indices.begin(), indices.end());
  e.zs = Tensor::zeros(indices.size(), model.config.dims.z_s);
  e.zr = Tensor::zeros(indices.size(), model.config.dims.z_r);
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::size_t end = std::min(indices.size(), start + kChunk);
    std::vector<std::vector<std::size_t>> seqs;
    for (std::size_t i = start; i < end; ++i) seqs.push_back(corpus.trajectories.at(indices[i]).pois);
    const auto seq = vae::SequenceBatch::from(seqs);
    num::Tape tape(false);
    const Var table = model.table(tape);
    const auto states = vae::encode_sequence(tape, model.vae, vae::embed_batch(tape, table, seq), seq);
    const auto post = vae::posterior(tape, model.vae, states, seq.masks, nullptr);
    const Tensor& zs = post.zs.mean.value();
    const Tensor& zr = last_step(tape, post.zr_sample, seq).value();
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      for (std::size_t c = 0; c < zs.cols(); ++c) e.zs(start + b, c) = zs(b, c);
      for (std::size_t c = 0; c < zr.cols(); ++c) e.zr(start + b, c) = zr(b, c);
    }
  }
  return e;
}

void write_embeddings(const Embeddings& e, const data::Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "user\tsession\tsplit";
  for (std::size_t c = 0; c < e.zs.cols(); ++c) out << "\tzs_" << c;
  for (std::size_t c = 0; c < e.zr.cols(); ++c) out << "\tzr_" << c;
  out << '\n';
  out.precision(17);
  for (std::size_t r = 0; r < e.trajectories.size(); ++r) {
    const auto& t = corpus.trajectories[e.trajectories[r]];
    out << corpus.users[t.user] << '\t' << t.session << '\t' << data::split_name(t.split);
    for (std::size_t c = 0; c < e.zs.cols(); ++c) out << '\t' << e.zs(r, c);
    for (std::size_t c = 0; c < e.zr.cols(); ++c) out << '\t' << e.zr(r, c);
    out << '\n';
  }
}

}  // namespace ssdl::pipeline
