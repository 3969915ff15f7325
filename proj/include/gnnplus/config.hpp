#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>

#include "gnnplus/common.hpp"
#include "gnnplus/model.hpp"
#include "gnnplus/training.hpp"

namespace gnnplus {

// A full run description: model + training hyperparameters plus the dataset
// schema and file path, parsed from flat key=value sections.
struct RunSpec {
  ModelConfig model;
  DatasetInfo data_info;
  std::string data_path;
  TrainConfig train;
};

namespace detail {

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

// Accepts '#' comment lines and blank lines; every key is validated against
// the schema and duplicates are rejected.
inline RunSpec parse_run_spec_text(const std::string& text) {
  std::unordered_map<std::string, std::string> model_kv, data_kv, train_kv;
  std::unordered_map<std::string, std::string>* cur = nullptr;
  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line[0] == '[') {
      if (line == "[model]")
        cur = &model_kv;
      else if (line == "[data]")
        cur = &data_kv;
      else if (line == "[train]")
        cur = &train_kv;
      else
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unknown section " + line);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos || cur == nullptr)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key=value inside a section, got '" + line +
                        "'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (!cur->emplace(key, value).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" +
                        key + "'");
  }

  RunSpec spec;
  auto [model, info] = parse_model_data_sections(model_kv, data_kv);
  spec.model = model;
  spec.data_info = info;
  if (auto it = data_kv.find("path"); it != data_kv.end())
    spec.data_path = it->second;

  static const std::vector<std::string> train_keys = {
      "lr",   "epochs",      "warmup_epochs", "weight_decay", "batch_size",
      "seed", "eval_metric", "selection",     "grad_clip"};
  for (const auto& [k, v] : train_kv)
    if (std::find(train_keys.begin(), train_keys.end(), k) == train_keys.end())
      throw ConfigError("[train] has unknown key '" + k + "'");
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = train_kv.find(key);
    if (it == train_kv.end())
      throw ConfigError("[train] is missing key '" + key + "'");
    return it->second;
  };
  spec.train.lr = std::stod(need("lr"));
  spec.train.epochs = std::stoi(need("epochs"));
  spec.train.warmup_epochs = std::stoi(need("warmup_epochs"));
  spec.train.weight_decay = std::stod(need("weight_decay"));
  spec.train.batch_size = std::stoll(need("batch_size"));
  if (auto it = train_kv.find("seed"); it != train_kv.end())
    spec.train.seed = std::stoull(it->second);
  spec.train.eval_metric = need("eval_metric");
  std::string sel = need("selection");
  if (sel == "max")
    spec.train.select_max = true;
  else if (sel == "min")
    spec.train.select_max = false;
  else
    throw ConfigError("[train] selection must be max or min, got '" + sel + "'");
  if (auto it = train_kv.find("grad_clip"); it != train_kv.end())
    spec.train.grad_clip = std::stod(it->second);

  validate_model_config(spec.model, spec.data_info);
  validate_train_config(spec.train);
  return spec;
}

inline RunSpec parse_run_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_spec_text(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace gnnplus
