#ifndef HMVAE_CONFIG_HPP_
#define HMVAE_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "hmvae/data.hpp"
#include "hmvae/errors.hpp"
#include "hmvae/io_util.hpp"
#include "hmvae/optim.hpp"

namespace hmvae {

/// Declarative run configuration. Every key mirrors a typed field; unknown
/// keys are rejected so typos fail loudly. parse(echo(c)) == c.
struct RunConfig {
  std::uint64_t seed = 1234;

  struct Data {
    int sources = 8;
    std::array<int, 2> grid = {32, 32};
    int subjects = 200;
    std::vector<double> group_effect = {1.0, 1.0, 1.0, 0, 0, 0, 0, 0};
    double noise_sd = 0.2;
    std::string nonlinearity = "identity";
  } data;

  struct Model {
    int latent_dim = 64;
    int hidden_recognition = 500;
    int hidden_generation = 500;
  } model;

  struct Train {
    double learning_rate = 1e-4;
    double decay = 0.9;
    double epsilon = 1e-6;
    int batch_size = 10;
    int epochs = 1000;
    int mc_samples = 1;
  } train;

  struct Analysis {
    int folds = 100;
    double l2 = 0.01;
    double threshold_sd = 2.0;
    int samples = 100;
    double community_cut = 0.3;
  } analysis;

  struct Output {
    std::string dir = "out";
  } output;

  TrainConfig train_config() const {
    TrainConfig c;
    c.learning_rate = train.learning_rate;
    c.decay = train.decay;
    c.epsilon = train.epsilon;
    c.batch_size = train.batch_size;
    c.epochs = train.epochs;
    c.mc_samples = train.mc_samples;
    c.seed = seed;
    c.latent_dim = model.latent_dim;
    c.hidden_recognition = model.hidden_recognition;
    c.hidden_generation = model.hidden_generation;
    return c;
  }

  SynthConfig synth_config() const {
    SynthConfig c;
    c.sources = data.sources;
    c.grid = data.grid;
    c.subjects = data.subjects;
    c.group_effect = Eigen::Map<const ArrayXd>(data.group_effect.data(),
                                               static_cast<Eigen::Index>(data.group_effect.size()));
    c.noise_sd = data.noise_sd;
    c.nonlinearity = data.nonlinearity;
    c.seed = seed;
    return c;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed)
      if (key == a) {
        known = true;
        break;
      }
    if (!known)
      throw ArgumentError("config: unknown key \"" + where + key + "\"");
  }
}

template <typename T>
void maybe_get(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  try {
    detail::reject_unknown_keys(j, {"seed", "data", "model", "train", "analysis", "output"},
                                "");
    detail::maybe_get(j, "seed", c.seed);
    if (j.contains("data")) {
      const auto& jd = j.at("data");
      detail::reject_unknown_keys(jd,
                                  {"sources", "grid", "subjects", "group_effect",
                                   "noise_sd", "nonlinearity"},
                                  "data.");
      detail::maybe_get(jd, "sources", c.data.sources);
      detail::maybe_get(jd, "grid", c.data.grid);
      detail::maybe_get(jd, "subjects", c.data.subjects);
      detail::maybe_get(jd, "group_effect", c.data.group_effect);
      detail::maybe_get(jd, "noise_sd", c.data.noise_sd);
      detail::maybe_get(jd, "nonlinearity", c.data.nonlinearity);
    }
    if (j.contains("model")) {
      const auto& jm = j.at("model");
      detail::reject_unknown_keys(
          jm, {"latent_dim", "hidden_recognition", "hidden_generation"}, "model.");
      detail::maybe_get(jm, "latent_dim", c.model.latent_dim);
      detail::maybe_get(jm, "hidden_recognition", c.model.hidden_recognition);
      detail::maybe_get(jm, "hidden_generation", c.model.hidden_generation);
    }
    if (j.contains("train")) {
      const auto& jt = j.at("train");
      detail::reject_unknown_keys(jt,
                                  {"learning_rate", "decay", "epsilon", "batch_size",
                                   "epochs", "mc_samples"},
                                  "train.");
      detail::maybe_get(jt, "learning_rate", c.train.learning_rate);
      detail::maybe_get(jt, "decay", c.train.decay);
      detail::maybe_get(jt, "epsilon", c.train.epsilon);
      detail::maybe_get(jt, "batch_size", c.train.batch_size);
      detail::maybe_get(jt, "epochs", c.train.epochs);
      detail::maybe_get(jt, "mc_samples", c.train.mc_samples);
    }
    if (j.contains("analysis")) {
      const auto& ja = j.at("analysis");
      detail::reject_unknown_keys(
          ja, {"folds", "l2", "threshold_sd", "samples", "community_cut"}, "analysis.");
      detail::maybe_get(ja, "folds", c.analysis.folds);
      detail::maybe_get(ja, "l2", c.analysis.l2);
      detail::maybe_get(ja, "threshold_sd", c.analysis.threshold_sd);
      detail::maybe_get(ja, "samples", c.analysis.samples);
      detail::maybe_get(ja, "community_cut", c.analysis.community_cut);
    }
    if (j.contains("output")) {
      const auto& jo = j.at("output");
      detail::reject_unknown_keys(jo, {"dir"}, "output.");
      detail::maybe_get(jo, "dir", c.output.dir);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("config: ") + e.what());
  }
  return c;
}

/// Emit the full configuration with every key present.
inline nlohmann::json echo_run_config(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["data"] = {{"sources", c.data.sources},       {"grid", c.data.grid},
               {"subjects", c.data.subjects},     {"group_effect", c.data.group_effect},
               {"noise_sd", c.data.noise_sd},     {"nonlinearity", c.data.nonlinearity}};
  j["model"] = {{"latent_dim", c.model.latent_dim},
                {"hidden_recognition", c.model.hidden_recognition},
                {"hidden_generation", c.model.hidden_generation}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"decay", c.train.decay},
                {"epsilon", c.train.epsilon},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"mc_samples", c.train.mc_samples}};
  j["analysis"] = {{"folds", c.analysis.folds},
                   {"l2", c.analysis.l2},
                   {"threshold_sd", c.analysis.threshold_sd},
                   {"samples", c.analysis.samples},
                   {"community_cut", c.analysis.community_cut}};
  j["output"] = {{"dir", c.output.dir}};
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config: cannot parse " + path.string() + ": " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace hmvae

#endif  // HMVAE_CONFIG_HPP_
