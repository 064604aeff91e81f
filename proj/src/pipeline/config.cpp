// SPDX-License-Identifier: Apache-2.0
#include "ssdl/pipeline/config.hpp"

#include <charconv>
#include <random>
#include <sstream>
#include <stdexcept>

namespace ssdl::pipeline {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::Base: return "base";
    case Variant::NoGraph: return "no_graph";
    case Variant::NoMi: return "no_mi";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Full, Variant::Base, Variant::NoGraph, Variant::NoMi})
    if (name == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant '" + name + "' (expected full, base, no_graph or no_mi)");
}

ssl::SSLConfig RunConfig::effective_ssl() const {
  ssl::SSLConfig s = ssl;
  if (!uses_mi()) s.beta = s.gamma = 0.0;
  return s;
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw std::invalid_argument("a seed is required for training (--seed or `seed` in the config)");
  return *seed;
}

void RunConfig::validate() const {
  if (pretrain_epochs == 0 && task_epochs == 0) throw std::invalid_argument("at least one phase needs epochs");
  if (!(pretrain_lr > 0) || !(task_lr > 0)) throw std::invalid_argument("learning rates must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("dropout must lie in [0, 1)");
  if (dims.embed == 0 || dims.z_s == 0 || dims.z_r == 0 || dims.prior_hidden == 0 || dims.attention == 0 ||
      dims.history_cap == 0)
    throw std::invalid_argument("model dimensions must be positive");
  if (!(delta_g_km > 0)) throw std::invalid_argument("delta_g_km must be positive");
  ssl.validate();
}

RunConfig RunConfig::from(const data::KeyValues& kv) {
  RunConfig c;
  c.corpus = kv.get("corpus", std::string());
  c.graph = kv.get("graph", std::string());
  c.out = kv.get("out", std::string("run"));
  if (kv.has("seed")) c.seed = static_cast<std::uint64_t>(kv.get("seed", std::int64_t{0}));
  c.variant = parse_variant(kv.get("variant", std::string("full")));
  c.delta_g_km = kv.get("graph.delta_g_km", c.delta_g_km);

  c.dims.embed = kv.get("dims.embed", c.dims.embed);
  c.dims.z_s = kv.get("dims.z_s", c.dims.z_s);
  c.dims.z_r = kv.get("dims.z_r", c.dims.z_r);
  c.dims.prior_hidden = kv.get("dims.prior_hidden", c.dims.prior_hidden);
  c.dims.attention = kv.get("dims.attention", c.dims.attention);
  c.dims.history_cap = kv.get("dims.history_cap", c.dims.history_cap);

  c.pretrain_epochs = kv.get("pretrain.epochs", c.pretrain_epochs);
  c.pretrain_lr = kv.get("pretrain.lr", c.pretrain_lr);
  c.plateau_tol = kv.get("pretrain.plateau_tol", c.plateau_tol);
  c.task_epochs = kv.get("task.epochs", c.task_epochs);
  c.task_lr = kv.get("task.lr", c.task_lr);
  c.dropout = kv.get("task.dropout", c.dropout);
  c.freeze_pretrained = kv.get("task.freeze", c.freeze_pretrained);
  c.batch_size = kv.get("batch_size", c.batch_size);

  c.ssl.alpha = kv.get("ssl.alpha", c.ssl.alpha);
  c.ssl.beta = kv.get("ssl.beta", c.ssl.beta);
  c.ssl.gamma = kv.get("ssl.gamma", c.ssl.gamma);
  c.ssl.eta = kv.get("ssl.eta", c.ssl.eta);
  if (kv.has("ssl.negatives")) c.ssl.negatives = kv.get("ssl.negatives", std::size_t{1});
  c.ssl.replace_ratio = kv.get("ssl.replace_ratio", c.ssl.replace_ratio);
  c.ssl.collective_radius_m = kv.get("ssl.collective_radius_m", c.ssl.collective_radius_m);
  kv.reject_unknown();
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return from(data::KeyValues::load(path)); }

namespace {

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string quoted(const std::filesystem::path& p) { return "\"" + p.generic_string() + "\""; }

}  // namespace

std::string RunConfig::to_text() const {
  std::ostringstream o;
  o << "corpus = " << quoted(corpus) << "\n";
  o << "graph = " << quoted(graph) << "\n";
  o << "out = " << quoted(out) << "\n";
  if (seed) o << "seed = " << *seed << "\n";
  o << "variant = \"" << variant_name(variant) << "\"\n";
  o << "batch_size = " << batch_size << "\n";
  o << "\n[graph]\ndelta_g_km = " << num(delta_g_km) << "\n";
  o << "\n[dims]\nembed = " << dims.embed << "\nz_s = " << dims.z_s << "\nz_r = " << dims.z_r
    << "\nprior_hidden = " << dims.prior_hidden << "\nattention = " << dims.attention
    << "\nhistory_cap = " << dims.history_cap << "\n";
  o << "\n[pretrain]\nepochs = " << pretrain_epochs << "\nlr = " << num(pretrain_lr)
    << "\nplateau_tol = " << num(plateau_tol) << "\n";
  o << "\n[task]\nepochs = " << task_epochs << "\nlr = " << num(task_lr) << "\ndropout = " << num(dropout)
    << "\nfreeze = " << (freeze_pretrained ? "true" : "false") << "\n";
  o << "\n[ssl]\nalpha = " << num(ssl.alpha) << "\nbeta = " << num(ssl.beta) << "\ngamma = " << num(ssl.gamma)
    << "\neta = " << num(ssl.eta) << "\n";
  if (ssl.negatives != std::numeric_limits<std::size_t>::max()) o << "negatives = " << ssl.negatives << "\n";
  o << "replace_ratio = " << num(ssl.replace_ratio) << "\ncollective_radius_m = " << num(ssl.collective_radius_m)
    << "\n";
  return o.str();
}

std::uint64_t epoch_seed(std::uint64_t seed, std::uint64_t phase, std::uint64_t epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(phase), static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(epoch >> 32)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace ssdl::pipeline
