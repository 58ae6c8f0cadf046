#ifndef HMVAE_OPTIM_HPP_
#define HMVAE_OPTIM_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "hmvae/data.hpp"
#include "hmvae/errors.hpp"
#include "hmvae/io_util.hpp"
#include "hmvae/model.hpp"
#include "hmvae/rng.hpp"

namespace hmvae {

struct TrainConfig {
  double learning_rate = 1e-4;
  double decay = 0.9;
  double epsilon = 1e-6;
  int batch_size = 10;
  int epochs = 1000;
  int mc_samples = 1;
  std::uint64_t seed = 0;
  int latent_dim = 64;
  int hidden_recognition = 500;
  int hidden_generation = 500;

  void validate() const {
    if (learning_rate <= 0) throw ArgumentError("TrainConfig: learning_rate must be > 0");
    if (!(decay > 0 && decay < 1)) throw ArgumentError("TrainConfig: decay must be in (0,1)");
    if (epsilon <= 0) throw ArgumentError("TrainConfig: epsilon must be > 0");
    if (batch_size < 1) throw ArgumentError("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw ArgumentError("TrainConfig: epochs must be >= 1");
    if (mc_samples < 1) throw ArgumentError("TrainConfig: mc_samples must be >= 1");
    if (latent_dim < 1 || hidden_recognition < 1 || hidden_generation < 1)
      throw ArgumentError("TrainConfig: network dimensions must be >= 1");
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"decay", c.decay},
          {"epsilon", c.epsilon},             {"batch_size", c.batch_size},
          {"epochs", c.epochs},               {"mc_samples", c.mc_samples},
          {"seed", c.seed},                   {"latent_dim", c.latent_dim},
          {"hidden_recognition", c.hidden_recognition},
          {"hidden_generation", c.hidden_generation}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.at("learning_rate").get<double>();
    c.decay = j.at("decay").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.mc_samples = j.at("mc_samples").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.latent_dim = j.at("latent_dim").get<int>();
    c.hidden_recognition = j.at("hidden_recognition").get<int>();
    c.hidden_generation = j.at("hidden_generation").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("TrainConfig: ") + e.what());
  }
  return c;
}

/// Running mean of squared gradients, one accumulator per parameter.
struct RmsState {
  ModelParams accumulators;
  std::int64_t step_count = 0;

  static RmsState zeros(const ModelDims& dims) {
    RmsState s;
    s.accumulators = zeros_like_params(dims);
    return s;
  }
};

namespace detail {
constexpr double kLogScaleClamp = 7.0;
}

/// One RMSprop ascent step on the ELBO:
///   r <- decay*r + (1-decay)*g^2,  theta <- theta + lr*g/(sqrt(r)+eps).
/// Prior log scales are clamped to [-7, 7] afterwards.
inline void rmsprop_step(ModelParams& params, const ModelGrads& grads, RmsState& state,
                         const TrainConfig& config) {
  auto p_blocks = params.blocks();
  auto g_blocks = grads.blocks();
  auto r_blocks = state.accumulators.blocks();
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    double* p = p_blocks[b].data;
    const double* g = g_blocks[b].data;
    double* r = r_blocks[b].data;
    if (g_blocks[b].size != p_blocks[b].size)
      throw ShapeError(std::string("rmsprop_step: gradient shape mismatch in ") +
                       p_blocks[b].name);
    for (Eigen::Index i = 0; i < p_blocks[b].size; ++i) {
      if (!std::isfinite(g[i]))
        throw NumericError(std::string("rmsprop_step: non-finite gradient in ") +
                           p_blocks[b].name);
      r[i] = config.decay * r[i] + (1.0 - config.decay) * g[i] * g[i];
      p[i] += config.learning_rate * g[i] / (std::sqrt(r[i]) + config.epsilon);
    }
  }
  params.prior.log_scale =
      params.prior.log_scale.min(detail::kLogScaleClamp).max(-detail::kLogScaleClamp);
  ++state.step_count;
}

/// Serialized model + trainer state. Round-trips bit-exactly through
/// save/load; carries the RMSprop accumulators and the training random
/// stream so a run can resume and reproduce an unbroken run.
struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  std::vector<double> elbo_trace;
  DataStats data_stats;
  int format_version = 1;
  RmsState rms;
  std::string rng_state;
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'H', 'M', 'V', 'A', 'E', '0', '0', '1'};

inline void run_epochs(ModelParams& params, RmsState& state, Rng& rng,
                       std::vector<double>& trace, const SubjectMatrix& data,
                       const TrainConfig& config, int epochs,
                       bool log_progress = false) {
  const Eigen::Index n = data.rows();
  const std::size_t target = trace.size() + static_cast<std::size_t>(epochs);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = rng.permutation(static_cast<std::size_t>(n));
    double elbo_sum = 0;
    for (Eigen::Index start = 0; start < n; start += config.batch_size) {
      const Eigen::Index take = std::min<Eigen::Index>(config.batch_size, n - start);
      MatrixXd batch(take, data.cols());
      for (Eigen::Index i = 0; i < take; ++i)
        batch.row(i) = data.values.row(static_cast<Eigen::Index>(order[start + i]));
      try {
        auto [grads, breakdown] = elbo_gradients(batch, params, config.mc_samples, rng);
        rmsprop_step(params, grads, state, config);
        elbo_sum += breakdown.elbo * static_cast<double>(take);
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(trace.size()) + " batch " +
                           std::to_string(start / config.batch_size) + ": " + e.what());
      }
    }
    trace.push_back(elbo_sum / static_cast<double>(n));
    if (log_progress)
      std::fprintf(stderr, "epoch %zu/%zu elbo %.6f\n", trace.size(), target,
                   trace.back());
  }
}

inline void write_params_row_major(ByteWriter& w, const ModelParams& p) {
  w.matrix_f64(p.rec1.weights);
  w.vector_f64(p.rec1.bias);
  w.matrix_f64(p.rec2.weights);
  w.vector_f64(p.rec2.bias);
  w.matrix_f64(p.gen1.weights);
  w.vector_f64(p.gen1.bias);
  w.matrix_f64(p.gen2.weights);
  w.vector_f64(p.gen2.bias);
  w.array_f64(p.prior.center);
  w.array_f64(p.prior.log_scale);
}

inline void read_params_row_major(ByteReader& r, ModelParams& p) {
  p.rec1.weights = r.matrix_f64(p.rec1.weights.rows(), p.rec1.weights.cols());
  p.rec1.bias = r.matrix_f64(p.rec1.bias.size(), 1);
  p.rec2.weights = r.matrix_f64(p.rec2.weights.rows(), p.rec2.weights.cols());
  p.rec2.bias = r.matrix_f64(p.rec2.bias.size(), 1);
  p.gen1.weights = r.matrix_f64(p.gen1.weights.rows(), p.gen1.weights.cols());
  p.gen1.bias = r.matrix_f64(p.gen1.bias.size(), 1);
  p.gen2.weights = r.matrix_f64(p.gen2.weights.rows(), p.gen2.weights.cols());
  p.gen2.bias = r.matrix_f64(p.gen2.bias.size(), 1);
  p.prior.center = r.matrix_f64(p.prior.center.size(), 1).col(0).array();
  p.prior.log_scale = r.matrix_f64(p.prior.log_scale.size(), 1).col(0).array();
}

}  // namespace detail

/// Train from scratch on standardized data. Identical seed + data + config
/// give a bitwise-identical checkpoint.
inline Checkpoint train(const SubjectMatrix& data, const TrainConfig& config,
                        const DataStats& stats = {}, bool log_progress = false) {
  config.validate();
  if (data.rows() == 0) throw ArgumentError("train: empty dataset");
  if (data.rows() < config.batch_size)
    throw ArgumentError("train: " + std::to_string(data.rows()) +
                        " rows < batch size " + std::to_string(config.batch_size));

  ModelDims dims{data.cols(), config.latent_dim, config.hidden_recognition,
                 config.hidden_generation};
  Checkpoint ck;
  ck.config = config;
  ck.data_stats = stats;
  ck.params = init_params(dims, config.seed);
  ck.rms = RmsState::zeros(dims);

  Rng rng(config.seed, streams::kTrain);
  detail::run_epochs(ck.params, ck.rms, rng, ck.elbo_trace, data, config, config.epochs,
                     log_progress);
  ck.rng_state = rng.serialize();
  return ck;
}

/// Continue a checkpointed run for extra epochs; equivalent to having
/// trained for the combined count in one go.
inline Checkpoint train_continue(const Checkpoint& from, const SubjectMatrix& data,
                                 int extra_epochs, bool log_progress = false) {
  if (extra_epochs < 1) throw ArgumentError("train_continue: extra_epochs must be >= 1");
  Checkpoint ck = from;
  Rng rng = Rng::deserialize(ck.rng_state);
  detail::run_epochs(ck.params, ck.rms, rng, ck.elbo_trace, data, ck.config, extra_epochs,
                     log_progress);
  ck.config.epochs += extra_epochs;
  ck.rng_state = rng.serialize();
  return ck;
}

inline void checkpoint_save(const Checkpoint& ck, const std::filesystem::path& path) {
  const ModelDims dims = ck.params.dims();
  nlohmann::json header;
  header["format_version"] = ck.format_version;
  header["dims"] = {{"data_dim", dims.data_dim},
                    {"latent_dim", dims.latent_dim},
                    {"hidden_recognition", dims.hidden_recognition},
                    {"hidden_generation", dims.hidden_generation}};
  header["config"] = train_config_to_json(ck.config);
  header["data_stats"] = {
      {"mean", std::vector<double>(ck.data_stats.mean.data(),
                                   ck.data_stats.mean.data() + ck.data_stats.mean.size())},
      {"sd", std::vector<double>(ck.data_stats.sd.data(),
                                 ck.data_stats.sd.data() + ck.data_stats.sd.size())},
      {"zero_variance", ck.data_stats.zero_variance}};
  header["elbo_trace"] = ck.elbo_trace;
  header["rms_step_count"] = ck.rms.step_count;
  header["rng_state"] = ck.rng_state;
  const std::string htext = header.dump();

  ByteWriter w;
  w.raw(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
  w.u64(htext.size());
  w.str(htext);
  detail::write_params_row_major(w, ck.params);
  detail::write_params_row_major(w, ck.rms.accumulators);
  atomic_write_file(path, w.bytes());
}

inline Checkpoint checkpoint_load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) != 0)
    throw BadMagicError("checkpoint: bad magic in " + path.string());
  const std::uint64_t hlen = r.u64();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: malformed header: ") + e.what());
  }

  Checkpoint ck;
  try {
    ck.format_version = header.at("format_version").get<int>();
    if (ck.format_version != 1)
      throw BadVersionError("checkpoint: unsupported format_version " +
                            std::to_string(ck.format_version));
    const auto& jd = header.at("dims");
    ModelDims dims{jd.at("data_dim").get<Eigen::Index>(),
                   jd.at("latent_dim").get<Eigen::Index>(),
                   jd.at("hidden_recognition").get<Eigen::Index>(),
                   jd.at("hidden_generation").get<Eigen::Index>()};
    ck.config = train_config_from_json(header.at("config"));
    const auto& js = header.at("data_stats");
    const auto mean = js.at("mean").get<std::vector<double>>();
    const auto sd = js.at("sd").get<std::vector<double>>();
    ck.data_stats.mean = Eigen::Map<const ArrayXd>(mean.data(), mean.size());
    ck.data_stats.sd = Eigen::Map<const ArrayXd>(sd.data(), sd.size());
    ck.data_stats.zero_variance = js.at("zero_variance").get<std::vector<Eigen::Index>>();
    ck.elbo_trace = header.at("elbo_trace").get<std::vector<double>>();
    ck.rms.step_count = header.at("rms_step_count").get<std::int64_t>();
    ck.rng_state = header.at("rng_state").get<std::string>();

    ck.params = zeros_like_params(dims);
    ck.rms.accumulators = zeros_like_params(dims);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: header field error: ") + e.what());
  }
  detail::read_params_row_major(r, ck.params);
  detail::read_params_row_major(r, ck.rms.accumulators);
  if (r.remaining() != 0)
    throw ValidationError("checkpoint: trailing bytes after parameter blobs");
  return ck;
}

inline void write_elbo_trace_csv(const std::vector<double>& trace,
                                 const std::filesystem::path& path) {
  std::string csv = "epoch,elbo\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    csv += std::to_string(i + 1) + "," + format_double(trace[i]) + "\n";
  atomic_write_file(path, csv);
}

}  // namespace hmvae

#endif  // HMVAE_OPTIM_HPP_
