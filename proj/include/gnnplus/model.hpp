#pragma once

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gnnplus/common.hpp"
#include "gnnplus/graph.hpp"
#include "gnnplus/layers.hpp"
#include "gnnplus/parameter_store.hpp"
#include "gnnplus/rwse.hpp"
#include "gnnplus/tensor.hpp"

namespace gnnplus {

enum class Readout { mean, sum, max, node_level };

inline const char* readout_name(Readout r) {
  switch (r) {
    case Readout::mean: return "mean";
    case Readout::sum: return "sum";
    case Readout::max: return "max";
    case Readout::node_level: return "node_level";
  }
  return "?";
}

inline Readout readout_from_name(const std::string& s) {
  if (s == "mean") return Readout::mean;
  if (s == "sum" || s == "add") return Readout::sum;
  if (s == "max") return Readout::max;
  if (s == "node_level") return Readout::node_level;
  throw ConfigError("unknown readout '" + s + "'");
}

struct ModelConfig {
  Backbone backbone = Backbone::gcn;
  int num_layers = 3;
  int64_t hidden_dim = 64;
  TechniqueFlags flags;
  int pe_steps = 20;
  Readout readout = Readout::mean;
  uint64_t seed = 1;
};

struct Prediction {
  Tensor values;  // one row per graph, or per node for node-level tasks
  Task task = Task::graph_regression;
};

inline void validate_model_config(const ModelConfig& cfg, const DatasetInfo& info) {
  if (cfg.num_layers < 3 || cfg.num_layers > 20)
    throw ConfigError("model: layers must be in [3,20], got " +
                      std::to_string(cfg.num_layers));
  if (cfg.hidden_dim < 1) throw ConfigError("model: hidden dim must be positive");
  if (cfg.flags.dropout_rate < 0.0 || cfg.flags.dropout_rate >= 1.0)
    throw ConfigError("model: dropout rate outside [0,1)");
  if (cfg.flags.use_pe && cfg.pe_steps < 1)
    throw ConfigError("model: pe enabled but pe_steps < 1");
  bool node_task = info.task == Task::node_classification;
  if ((cfg.readout == Readout::node_level) != node_task)
    throw ConfigError("model: node_level readout is required for (and only for) "
                      "node classification");
  if (cfg.flags.use_edge_features && info.edge_feat.kind == FeatKind::none)
    throw ConfigError("model: edge features enabled but dataset has none");
  if (info.out_dim < 1) throw ConfigError("model: out_dim must be positive");
}

// ---------------------------------------------------------------------------
// text round-trip for ModelConfig + DatasetInfo (checkpoints, config files)

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string schema_to_str(const FeatureSchema& s) {
  switch (s.kind) {
    case FeatKind::none:
      return "none";
    case FeatKind::continuous:
      return "continuous:" + std::to_string(s.dim);
    case FeatKind::categorical: {
      std::string out = "categorical:";
      for (size_t i = 0; i < s.vocab.size(); ++i)
        out += (i ? "," : "") + std::to_string(s.vocab[i]);
      return out;
    }
  }
  return "none";
}

inline FeatureSchema schema_from_str(const std::string& s) {
  FeatureSchema out;
  if (s == "none") return out;
  auto colon = s.find(':');
  if (colon == std::string::npos)
    throw ConfigError("feature schema '" + s +
                      "' must look like categorical:28 or continuous:3");
  std::string kind = s.substr(0, colon);
  std::string rest = s.substr(colon + 1);
  if (kind == "continuous") {
    out.kind = FeatKind::continuous;
    out.dim = std::stoll(rest);
    if (out.dim < 1) throw ConfigError("feature schema '" + s + "': bad dim");
  } else if (kind == "categorical") {
    out.kind = FeatKind::categorical;
    std::stringstream ss(rest);
    std::string tok;
    while (std::getline(ss, tok, ','))
      out.vocab.push_back(std::stoll(tok));
    if (out.vocab.empty()) throw ConfigError("feature schema '" + s + "': no vocab");
    for (int64_t v : out.vocab)
      if (v < 1) throw ConfigError("feature schema '" + s + "': bad vocab size");
  } else {
    throw ConfigError("feature schema '" + s + "': unknown kind '" + kind + "'");
  }
  return out;
}

}  // namespace detail

inline std::string model_config_to_text(const ModelConfig& cfg,
                                        const DatasetInfo& info) {
  std::ostringstream os;
  os << "[model]\n";
  os << "backbone=" << backbone_name(cfg.backbone) << "\n";
  os << "layers=" << cfg.num_layers << "\n";
  os << "hidden=" << cfg.hidden_dim << "\n";
  os << "edge_features=" << (cfg.flags.use_edge_features ? "true" : "false") << "\n";
  os << "norm=" << (cfg.flags.use_norm ? "true" : "false") << "\n";
  os << "dropout=" << detail::fmt_double(cfg.flags.dropout_rate) << "\n";
  os << "residual=" << (cfg.flags.use_residual ? "true" : "false") << "\n";
  os << "ffn=" << (cfg.flags.use_ffn ? "true" : "false") << "\n";
  os << "pe=" << (cfg.flags.use_pe ? "true" : "false") << "\n";
  os << "pe_steps=" << cfg.pe_steps << "\n";
  os << "readout=" << readout_name(cfg.readout) << "\n";
  os << "seed=" << cfg.seed << "\n";
  os << "[data]\n";
  os << "task=" << task_name(info.task) << "\n";
  os << "node_feat=" << detail::schema_to_str(info.node_feat) << "\n";
  os << "edge_feat=" << detail::schema_to_str(info.edge_feat) << "\n";
  os << "out_dim=" << info.out_dim << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------

// The assembled GNN+: input encoders, optional encoding fusion, L layers,
// readout, linear head.
class GnnModel {
 public:
  GnnModel(const ModelConfig& cfg, const DatasetInfo& info)
      : cfg_(cfg), info_(info) {
    validate_model_config(cfg_, info_);
    build();
  }

  const ModelConfig& config() const { return cfg_; }
  const DatasetInfo& info() const { return info_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  int64_t num_trainable() const { return store_.num_trainable_scalars(); }

  Prediction forward(const GraphBatch& batch, Mode mode, RngState& rng) {
    Tensor x = apply_feature_encoder(node_enc_, batch.node_feat);
    if (cfg_.flags.use_pe) {
      if (!batch.rwse.defined() || batch.rwse.dim(1) != cfg_.pe_steps)
        throw StateError("forward: positional encoding enabled but the batch "
                         "has no RWSE cache for K=" +
                         std::to_string(cfg_.pe_steps));
      x = fuse_pe(x, batch.rwse, pe_w_);
    }
    Tensor hat_deg;
    if (cfg_.backbone == Backbone::gcn) hat_deg = compute_hat_degrees(batch);
    Tensor e_hidden;
    if (cfg_.backbone == Backbone::gatedgcn && cfg_.flags.use_edge_features)
      e_hidden = apply_feature_encoder(edge_enc_, batch.edge_feat);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      switch (cfg_.backbone) {
        case Backbone::gcn:
          x = gcn_plus_forward(x, &batch.edge_feat, batch, hat_deg, layers_[l],
                               cfg_.flags, mode, rng);
          break;
        case Backbone::gin:
          x = gin_plus_forward(x, &batch.edge_feat, batch, layers_[l],
                               cfg_.flags, mode, rng);
          break;
        case Backbone::gatedgcn: {
          auto [nx, ne] = gatedgcn_plus_forward(x, e_hidden, batch, layers_[l],
                                                cfg_.flags, mode, rng);
          x = nx;
          e_hidden = ne;
          break;
        }
      }
    }
    Tensor pooled;
    switch (cfg_.readout) {
      case Readout::node_level: pooled = x; break;
      case Readout::mean:
        pooled = segment_mean(x, batch.graph_id, batch.num_graphs);
        break;
      case Readout::sum:
        pooled = segment_sum(x, batch.graph_id, batch.num_graphs);
        break;
      case Readout::max:
        pooled = segment_max(x, batch.graph_id, batch.num_graphs);
        break;
    }
    Prediction pred;
    pred.task = info_.task;
    pred.values = add(matmul(pooled, head_w_), head_b_);
    return pred;
  }

  Tensor loss(const Prediction& pred, const GraphBatch& batch) const {
    switch (info_.task) {
      case Task::graph_regression: {
        Tensor target = Tensor::from_data({batch.num_graphs, info_.out_dim},
                                          batch.labels.values);
        return mae_loss(pred.values, target);
      }
      case Task::graph_classification:
        return softmax_cross_entropy(pred.values, batch.labels.classes);
      case Task::node_classification:
        return softmax_cross_entropy(pred.values, batch.labels.classes);
      case Task::graph_multilabel: {
        Tensor target = Tensor::from_data({batch.num_graphs, info_.out_dim},
                                          batch.labels.values);
        return bce_with_logits(pred.values, target);
      }
    }
    throw StateError("loss: unhandled task");
  }

  // Flat binary checkpoint: serialized config text followed by every named
  // parameter and buffer as (name, shape, fp64 payload). Bit-exact.
  void save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StateError("cannot write checkpoint '" + path + "'");
    static_assert(sizeof(double) == 8);
    const char magic[8] = {'G', 'N', 'N', 'P', 'L', 'S', '0', '1'};
    out.write(magic, 8);
    std::string cfg = model_config_to_text(cfg_, info_);
    write_u64(out, cfg.size());
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    uint64_t count = store_.num_parameters() + store_.num_buffers();
    write_u64(out, count);
    store_.for_each_parameter([&](const std::string& name, const Tensor& p,
                                  const Tensor&, const Tensor&) {
      write_tensor(out, name, p, false);
    });
    store_.for_each_buffer([&](const std::string& name, const Tensor& b) {
      write_tensor(out, name, b, true);
    });
    if (!out) throw StateError("short write on checkpoint '" + path + "'");
  }

  static GnnModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StateError("cannot open checkpoint '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "GNNPLS01", 8) != 0)
      throw ParseError("'" + path + "' is not a checkpoint file");
    uint64_t cfg_len = read_u64(in, path);
    std::string cfg_text(cfg_len, '\0');
    in.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
    auto [cfg, info] = parse_model_config_text(cfg_text);
    GnnModel model(cfg, info);
    uint64_t count = read_u64(in, path);
    std::unordered_map<std::string, Tensor> values;
    for (uint64_t i = 0; i < count; ++i) {
      auto [name, tensor] = read_tensor(in, path);
      values.emplace(std::move(name), std::move(tensor));
    }
    if (!in) throw ParseError("truncated checkpoint '" + path + "'");
    model.store_.load_values(values);
    return model;
  }

  static std::pair<ModelConfig, DatasetInfo> parse_model_config_text(
      const std::string& text);

 private:
  void build() {
    RngState rng(cfg_.seed);
    node_enc_ = detail::make_feature_encoder(store_, "encoder.node",
                                             info_.node_feat, cfg_.hidden_dim,
                                             rng);
    if (cfg_.backbone == Backbone::gatedgcn && cfg_.flags.use_edge_features)
      edge_enc_ = detail::make_feature_encoder(store_, "encoder.edge",
                                               info_.edge_feat, cfg_.hidden_dim,
                                               rng);
    if (cfg_.flags.use_pe)
      pe_w_ = store_.add_parameter(
          "pe.w", glorot({cfg_.hidden_dim + cfg_.pe_steps, cfg_.hidden_dim}, rng));
    for (int l = 0; l < cfg_.num_layers; ++l)
      layers_.push_back(make_layer_params(store_, "layer" + std::to_string(l),
                                          cfg_.backbone, cfg_.hidden_dim,
                                          info_.edge_feat, cfg_.flags, rng));
    head_w_ = store_.add_parameter("head.w",
                                   glorot({cfg_.hidden_dim, info_.out_dim}, rng));
    head_b_ = store_.add_parameter("head.b", Tensor::zeros({info_.out_dim}));
  }

  static void write_u64(std::ofstream& out, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(buf), 8);
  }

  static uint64_t read_u64(std::ifstream& in, const std::string& path) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    if (!in) throw ParseError("truncated checkpoint '" + path + "'");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
  }

  static void write_tensor(std::ofstream& out, const std::string& name,
                           const Tensor& t, bool is_buffer) {
    out.put(is_buffer ? 1 : 0);
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, t.shape().size());
    for (int64_t d : t.shape()) write_u64(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.numel() * 8));
  }

  static std::pair<std::string, Tensor> read_tensor(std::ifstream& in,
                                                    const std::string& path) {
    in.get();  // buffer flag; placement is determined by name on load
    uint64_t name_len = read_u64(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    uint64_t ndim = read_u64(in, path);
    Shape shape;
    for (uint64_t i = 0; i < ndim; ++i)
      shape.push_back(static_cast<int64_t>(read_u64(in, path)));
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data().data()),
            static_cast<std::streamsize>(t.numel() * 8));
    if (!in) throw ParseError("truncated checkpoint '" + path + "'");
    return {name, t};
  }

  ModelConfig cfg_;
  DatasetInfo info_;
  ParameterStore store_;
  FeatureEncoder node_enc_;
  FeatureEncoder edge_enc_;
  Tensor pe_w_;
  std::vector<LayerParams> layers_;
  Tensor head_w_, head_b_;
};

// Strict parser for the canonical text emitted by model_config_to_text; also
// used by the run-config reader for its [model]/[data] sections.
inline std::pair<ModelConfig, DatasetInfo> parse_model_data_sections(
    const std::unordered_map<std::string, std::string>& model_kv,
    const std::unordered_map<std::string, std::string>& data_kv) {
  auto need = [](const std::unordered_map<std::string, std::string>& kv,
                 const std::string& key, const char* section) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw ConfigError(std::string("[") + section + "] is missing key '" + key + "'");
    return it->second;
  };
  auto parse_bool = [](const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("'" + key + "' must be true or false, got '" + v + "'");
  };
  static const std::vector<std::string> model_keys = {
      "backbone", "layers", "hidden", "edge_features", "norm", "dropout",
      "residual", "ffn", "pe", "pe_steps", "readout", "seed"};
  static const std::vector<std::string> data_keys = {"task", "node_feat",
                                                     "edge_feat", "out_dim",
                                                     "path"};
  for (const auto& [k, v] : model_kv)
    if (std::find(model_keys.begin(), model_keys.end(), k) == model_keys.end())
      throw ConfigError("[model] has unknown key '" + k + "'");
  for (const auto& [k, v] : data_kv)
    if (std::find(data_keys.begin(), data_keys.end(), k) == data_keys.end())
      throw ConfigError("[data] has unknown key '" + k + "'");

  ModelConfig cfg;
  cfg.backbone = backbone_from_name(need(model_kv, "backbone", "model"));
  cfg.num_layers = std::stoi(need(model_kv, "layers", "model"));
  cfg.hidden_dim = std::stoll(need(model_kv, "hidden", "model"));
  cfg.flags.use_edge_features =
      parse_bool("edge_features", need(model_kv, "edge_features", "model"));
  cfg.flags.use_norm = parse_bool("norm", need(model_kv, "norm", "model"));
  cfg.flags.dropout_rate = std::stod(need(model_kv, "dropout", "model"));
  cfg.flags.use_residual =
      parse_bool("residual", need(model_kv, "residual", "model"));
  cfg.flags.use_ffn = parse_bool("ffn", need(model_kv, "ffn", "model"));
  cfg.flags.use_pe = parse_bool("pe", need(model_kv, "pe", "model"));
  if (auto it = model_kv.find("pe_steps"); it != model_kv.end())
    cfg.pe_steps = std::stoi(it->second);
  cfg.readout = readout_from_name(need(model_kv, "readout", "model"));
  if (auto it = model_kv.find("seed"); it != model_kv.end())
    cfg.seed = std::stoull(it->second);

  DatasetInfo info;
  info.task = task_from_name(need(data_kv, "task", "data"));
  info.node_feat = detail::schema_from_str(need(data_kv, "node_feat", "data"));
  info.edge_feat = detail::schema_from_str(need(data_kv, "edge_feat", "data"));
  info.out_dim = std::stoll(need(data_kv, "out_dim", "data"));
  return {cfg, info};
}

inline std::pair<ModelConfig, DatasetInfo> GnnModel::parse_model_config_text(
    const std::string& text) {
  std::unordered_map<std::string, std::string> model_kv, data_kv;
  std::unordered_map<std::string, std::string>* cur = nullptr;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "[model]") {
      cur = &model_kv;
    } else if (line == "[data]") {
      cur = &data_kv;
    } else {
      auto eq = line.find('=');
      if (cur == nullptr || eq == std::string::npos)
        throw ParseError("bad checkpoint config line '" + line + "'");
      (*cur)[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  return parse_model_data_sections(model_kv, data_kv);
}

}  // namespace gnnplus
