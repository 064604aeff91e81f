// SPDX-License-Identifier: Apache-2.0
#include "ssdl/pipeline/model.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ssdl::pipeline {

using num::Tensor;
using num::Var;

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

vae::VaeDims Model::vae_dims() const {
  vae::VaeDims d;
  d.num_pois = num_pois();
  d.embed = config.dims.embed;
  d.z_s = config.dims.z_s;
  d.z_r = config.dims.z_r;
  d.prior_hidden = config.dims.prior_hidden;
  return d;
}

task::TaskDims Model::task_dims() const {
  task::TaskDims d;
  d.num_pois = num_pois();
  d.embed = config.dims.embed;
  d.z_s = config.dims.z_s;
  d.z_r = config.dims.z_r;
  d.attention = config.dims.attention;
  d.history_cap = config.dims.history_cap;
  return d;
}

Var Model::table(num::Tape& tape) const {
  if (!config.uses_graph()) return vae::contextual_table(tape, vae, tape.param(*free_table));
  const Var e_l = graph::hosa(tape, edges, aggregation).embeddings;
  const Var e_t = graph::hesa(tape, graph.time, *aggregation.W_t);
  const Var e_a = graph::hesa(tape, graph.activity, *aggregation.W_a);
  return vae::contextual_table(tape, vae, e_l, e_t, e_a);
}

std::unique_ptr<Model> Model::create(const RunConfig& config, graph::PGraph graph, std::string corpus_hash,
                                     num::Rng& rng) {
  auto m = std::make_unique<Model>();
  m->config = config;
  m->corpus_hash = std::move(corpus_hash);
  m->graph = std::move(graph);
  m->edges = graph::HosaEdges::from(m->graph.homogeneous);
  const std::size_t d = config.dims.embed;
  if (config.uses_graph())
    m->aggregation = graph::AggregationParams::create(m->params, m->num_pois(), m->graph.activity.cols, d, rng);
  else
    m->free_table = &m->params.add("table.features", m->num_pois(), 3 * d, num::Init::Glorot, rng);
  m->vae = vae::VaeParams::create(m->params, m->vae_dims(), rng);
  m->task = task::TaskParams::create(m->params, m->task_dims(), rng);
  return m;
}

namespace {

using json = nlohmann::ordered_json;

struct Entry {
  std::string name;
  const Tensor* tensor;
};

void write_tensor(std::ofstream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace

void save_checkpoint(const Model& model, const TrainingState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<Entry> entries;
  for (const auto& p : model.params) entries.push_back({p.name, &p.value});
  for (const auto& [name, t] : state.adam.first_moment) entries.push_back({"adam.m:" + name, &t});
  for (const auto& [name, t] : state.adam.second_moment) entries.push_back({"adam.v:" + name, &t});

  const auto tmp = dir / "params.bin.tmp";
  json tensors = json::array();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    std::size_t offset = 0;
    for (const auto& e : entries) {
      tensors.push_back({{"name", e.name}, {"rows", e.tensor->rows()}, {"cols", e.tensor->cols()}, {"offset", offset}});
      write_tensor(out, *e.tensor);
      offset += e.tensor->size();
    }
  }
  std::filesystem::rename(tmp, dir / "params.bin");
  graph::save_pgraph(model.graph, dir / "graph", model.corpus_hash);

  const auto& c = model.config;
  json j;
  j["format"] = "ssdl-checkpoint";
  j["version"] = 1;
  j["corpus_hash"] = model.corpus_hash;
  j["seed"] = c.seed ? json(*c.seed) : json(nullptr);
  j["variant"] = variant_name(c.variant);
  j["dims"] = {{"num_pois", model.num_pois()},     {"embed", c.dims.embed},
               {"z_s", c.dims.z_s},                {"z_r", c.dims.z_r},
               {"prior_hidden", c.dims.prior_hidden}, {"attention", c.dims.attention},
               {"history_cap", c.dims.history_cap}};
  j["phase"] = state.phase;
  j["epoch"] = state.epoch;
  j["adam"] = {{"step", state.adam.step}, {"lr", state.adam.lr}, {"beta1", state.adam.beta1},
               {"beta2", state.adam.beta2}, {"eps", state.adam.eps}};
  j["config"] = c.to_text();
  j["tensors"] = std::move(tensors);
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& expected_corpus_hash) {
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("no checkpoint manifest in " + dir.string());
  const json j = json::parse(mf);
  if (j.value("format", "") != "ssdl-checkpoint") throw std::runtime_error("not a checkpoint: " + dir.string());
  const std::string hash = j.at("corpus_hash").get<std::string>();
  if (!expected_corpus_hash.empty() && hash != expected_corpus_hash)
    throw std::runtime_error("checkpoint was trained on corpus " + hash + ", not " + expected_corpus_hash);

  const RunConfig config = RunConfig::from(data::KeyValues::parse(j.at("config").get<std::string>()));
  graph::PGraph g = graph::load_pgraph(dir / "graph", hash);
  num::Rng rng(0);
  Checkpoint ck;
  ck.model = Model::create(config, std::move(g), hash, rng);
  ck.state.phase = j.at("phase").get<std::string>();
  ck.state.epoch = j.at("epoch").get<std::size_t>();
  const auto& a = j.at("adam");
  ck.state.adam.step = a.at("step").get<std::uint64_t>();
  ck.state.adam.lr = a.at("lr").get<double>();
  ck.state.adam.beta1 = a.at("beta1").get<double>();
  ck.state.adam.beta2 = a.at("beta2").get<double>();
  ck.state.adam.eps = a.at("eps").get<double>();

  std::ifstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("missing params.bin in " + dir.string());
  std::size_t loaded = 0;
  for (const auto& t : j.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    Tensor value = Tensor::zeros(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::size_t>() * sizeof(double)));
    bin.read(reinterpret_cast<char*>(value.data().data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("params.bin truncated at tensor " + name);
    if (name.rfind("adam.m:", 0) == 0) {
      ck.state.adam.first_moment[name.substr(7)] = std::move(value);
    } else if (name.rfind("adam.v:", 0) == 0) {
      ck.state.adam.second_moment[name.substr(7)] = std::move(value);
    } else {
      num::Parameter* p = ck.model->params.find(name);
      if (!p) throw std::runtime_error("checkpoint tensor " + name + " has no matching parameter");
      if (p->value.rows() != value.rows() || p->value.cols() != value.cols())
        throw std::runtime_error("checkpoint tensor " + name + " has the wrong shape");
      p->value = std::move(value);
      ++loaded;
    }
  }
  if (loaded != ck.model->params.size()) throw std::runtime_error("checkpoint is missing parameters");
  return ck;
}

}  // namespace ssdl::pipeline
