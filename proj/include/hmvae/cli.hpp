#ifndef HMVAE_CLI_HPP_
#define HMVAE_CLI_HPP_

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hmvae/analysis.hpp"
#include "hmvae/config.hpp"
#include "hmvae/data.hpp"
#include "hmvae/errors.hpp"
#include "hmvae/io_util.hpp"
#include "hmvae/model.hpp"
#include "hmvae/optim.hpp"
#include "hmvae/render.hpp"

namespace hmvae::cli {

namespace fs = std::filesystem;

namespace detail {

inline std::string unit_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "unit_%03d", i);
  return buf;
}

inline std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

/// Numeric block of a CSV with one leading label column and a header row.
inline std::pair<std::vector<std::string>, MatrixXd> read_labeled_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.size() < 2) throw ValidationError("csv too short: " + path.string());
  const auto n = static_cast<Eigen::Index>(rows.size() - 1);
  const auto k = static_cast<Eigen::Index>(rows[0].size() - 1);
  std::vector<std::string> labels;
  MatrixXd m(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i) + 1];
    if (static_cast<Eigen::Index>(r.size()) != k + 1)
      throw ValidationError("ragged csv: " + path.string());
    labels.push_back(r[0]);
    for (Eigen::Index j = 0; j < k; ++j)
      m(i, j) = std::stod(r[static_cast<std::size_t>(j) + 1]);
  }
  return {std::move(labels), std::move(m)};
}

inline void write_matrix_csv(const MatrixXd& m, const std::vector<std::string>& row_ids,
                             const std::string& id_header, const std::string& col_prefix,
                             const fs::path& path) {
  std::string csv = id_header;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%s%03lld", col_prefix.c_str(),
                  static_cast<long long>(j));
    csv += ",";
    csv += buf;
  }
  csv += "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    csv += row_ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) csv += "," + format_double(m(i, j));
    csv += "\n";
  }
  atomic_write_file(path, csv);
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;

  RunConfig resolve() const {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (seed_given) cfg.seed = seed;
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    return cfg;
  }
};

inline void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--out", o.out_dir, "output directory");
  auto* s = cmd->add_option("--seed", o.seed, "run seed (all randomness derives from it)");
  s->each([&o](const std::string&) { o.seed_given = true; });
}

inline SubjectMatrix load_standardizable(const fs::path& path) {
  SubjectMatrix m = vmat_load(path);
  if (m.rows() < 2) throw ArgumentError("dataset too small: " + path.string());
  return m;
}

/// Standardize with the checkpoint's stats (encode/elbo precondition).
inline MatrixXd standardize_with(const SubjectMatrix& m, const DataStats& stats) {
  if (stats.empty()) throw ArgumentError("checkpoint carries no standardization stats");
  if (m.cols() != stats.mean.size())
    throw ShapeError("data width does not match checkpoint stats");
  MatrixXd out = m.values;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    if (stats.sd[c] == 0.0)
      out.col(c).setZero();
    else
      out.col(c) = ((out.col(c).array() - stats.mean[c]) / stats.sd[c]).matrix();
  }
  return out;
}

inline int run_gen_synthetic(const RunConfig& cfg) {
  const fs::path out(cfg.output.dir);
  auto [data, truth] = synth_generate(cfg.synth_config());
  vmat_save(data, out / "synthetic.vmat");

  SubjectMatrix sources;
  sources.values = truth.sources;
  for (Eigen::Index s = 0; s < truth.sources.rows(); ++s)
    sources.subject_ids.push_back("source-" + std::to_string(s));
  sources.mask = data.mask;
  vmat_save(sources, out / "truth_sources.vmat");

  write_matrix_csv(truth.loadings, data.subject_ids, "subject_id", "loading_",
                   out / "truth_loadings.csv");
  nlohmann::json meta;
  meta["group_effect"] = std::vector<double>(
      truth.group_effect.data(), truth.group_effect.data() + truth.group_effect.size());
  meta["noise_sd"] = truth.noise_sd;
  meta["nonlinearity"] = truth.nonlinearity;
  meta["seed"] = cfg.seed;
  atomic_write_file(out / "truth.json", meta.dump(2) + "\n");
  std::printf("gen-synthetic: %lld subjects x %lld voxels -> %s\n",
              static_cast<long long>(data.rows()), static_cast<long long>(data.cols()),
              (out / "synthetic.vmat").c_str());
  return 0;
}

inline int run_qc(const RunConfig& cfg, std::string data_path) {
  const fs::path out(cfg.output.dir);
  if (data_path.empty()) data_path = (out / "synthetic.vmat").string();
  const SubjectMatrix m = vmat_load(data_path);
  const QcResult qc = qc_filter(m);
  write_qc_csv(qc, out / "qc_report.csv");
  vmat_save(qc.kept, out / "qc_passed.vmat");
  std::printf("qc: kept %lld of %lld subjects (%zu excluded)\n",
              static_cast<long long>(qc.kept.rows()), static_cast<long long>(m.rows()),
              qc.excluded_ids.size());
  return 0;
}

inline int run_train(const RunConfig& cfg, std::string data_path) {
  const fs::path out(cfg.output.dir);
  if (data_path.empty()) data_path = (out / "qc_passed.vmat").string();
  const SubjectMatrix raw = load_standardizable(data_path);
  auto [standardized, stats] = standardize(raw);
  const Checkpoint ck = train(standardized, cfg.train_config(), stats, true);
  checkpoint_save(ck, out / "checkpoint.hmvae");
  write_elbo_trace_csv(ck.elbo_trace, out / "elbo_trace.csv");
  std::printf("train: %d epochs, final elbo %s -> %s\n", cfg.train.epochs,
              format_double(ck.elbo_trace.back()).c_str(),
              (out / "checkpoint.hmvae").c_str());
  return 0;
}

inline int run_encode(const RunConfig& cfg, std::string ck_path, std::string data_path) {
  const fs::path out(cfg.output.dir);
  if (ck_path.empty()) ck_path = (out / "checkpoint.hmvae").string();
  if (data_path.empty()) data_path = (out / "qc_passed.vmat").string();
  const Checkpoint ck = checkpoint_load(ck_path);
  const SubjectMatrix m = vmat_load(data_path);
  const MatrixXd encodings = encode_subjects(ck.params, standardize_with(m, ck.data_stats));
  write_matrix_csv(encodings, m.subject_ids, "subject_id", "unit_", out / "encodings.csv");
  std::printf("encode: %lld subjects x %lld units -> %s\n",
              static_cast<long long>(encodings.rows()),
              static_cast<long long>(encodings.cols()), (out / "encodings.csv").c_str());
  return 0;
}

inline int run_project(const RunConfig& cfg, std::string ck_path, std::string data_path,
                       double threshold_sd) {
  const fs::path out(cfg.output.dir);
  if (ck_path.empty()) ck_path = (out / "checkpoint.hmvae").string();
  if (data_path.empty()) data_path = (out / "qc_passed.vmat").string();
  const Checkpoint ck = checkpoint_load(ck_path);
  const SubjectMatrix m = vmat_load(data_path);
  if (!m.mask) throw ArgumentError("project: dataset has no volume mask");

  const int k = static_cast<int>(ck.params.latent_dim());
  std::string proj_csv;
  std::string summary = "unit,sign_flipped,empty_supra,threshold_sd\n";
  for (int i = 0; i < k; ++i) {
    ProjectionMap map = align_and_threshold(
        latent_projection(ck.params, i, ck.data_stats, threshold_sd));
    if (i == 0) {
      proj_csv = "unit";
      for (Eigen::Index d = 0; d < map.values.size(); ++d)
        proj_csv += ",v" + std::to_string(d);
      proj_csv += "\n";
    }
    proj_csv += std::to_string(i);
    for (Eigen::Index d = 0; d < map.values.size(); ++d)
      proj_csv += "," + format_double(map.values[d]);
    proj_csv += "\n";
    summary += std::to_string(i) + "," + (map.sign_flipped ? "1" : "0") + "," +
               (map.empty_supra ? "1" : "0") + "," + format_double(map.threshold_sd) + "\n";
    render_montage(map, *m.mask, out / "maps" / (unit_name(i) + ".ppm"));
  }
  atomic_write_file(out / "projections.csv", proj_csv);
  atomic_write_file(out / "projection_summary.csv", summary);
  std::printf("project: %d maps -> %s\n", k, (out / "maps").c_str());
  return 0;
}

inline int run_classify(const RunConfig& cfg, std::string ck_path, std::string data_path,
                        int folds) {
  const fs::path out(cfg.output.dir);
  if (ck_path.empty()) ck_path = (out / "checkpoint.hmvae").string();
  if (data_path.empty()) data_path = (out / "qc_passed.vmat").string();
  const Checkpoint ck = checkpoint_load(ck_path);
  const SubjectMatrix m = vmat_load(data_path);
  if (!m.has_labels()) throw ArgumentError("classify: dataset has no labels");
  const MatrixXd features = encode_subjects(ck.params, standardize_with(m, ck.data_stats));
  const ClassificationReport report =
      classify_cv(features, m.labels, folds, cfg.analysis.l2, cfg.seed);
  if (report.folds_clamped)
    std::fprintf(stderr, "classify: folds clamped to %d (smallest class size)\n",
                 report.folds);

  std::string acc = "fold,accuracy\n";
  for (int f = 0; f < report.folds; ++f)
    acc += std::to_string(f) + "," + format_double(report.fold_accuracies[f]) + "\n";
  atomic_write_file(out / "fold_accuracies.csv", acc);

  std::vector<std::string> fold_ids;
  for (int f = 0; f < report.folds; ++f) fold_ids.push_back(std::to_string(f));
  write_matrix_csv(report.fold_betas, fold_ids, "fold", "beta_", out / "betas.csv");
  std::printf("classify: mean accuracy %s over %d folds\n",
              format_double(report.mean_accuracy).c_str(), report.folds);
  return 0;
}

inline int run_stats(const RunConfig& cfg, std::string data_path) {
  const fs::path out(cfg.output.dir);
  if (data_path.empty()) data_path = (out / "qc_passed.vmat").string();
  const SubjectMatrix m = vmat_load(data_path);
  auto [enc_ids, encodings] = read_labeled_csv(out / "encodings.csv");
  auto [fold_ids, betas] = read_labeled_csv(out / "betas.csv");
  if (encodings.cols() != betas.cols())
    throw ValidationError("stats: encodings and betas disagree on unit count");

  const auto k = encodings.cols();
  std::string stats_csv = "unit,t,p,significant\n";
  std::vector<Eigen::Index> significant;
  for (Eigen::Index i = 0; i < k; ++i) {
    const ComponentStats cs = beta_ttest(betas.col(i));
    stats_csv += std::to_string(i) + "," + format_double(cs.t) + "," + format_double(cs.p) +
                 "," + (cs.significant ? "1" : "0") + "\n";
    if (cs.significant) significant.push_back(i);
  }
  atomic_write_file(out / "component_stats.csv", stats_csv);

  // Component-by-component correlation across subjects, plus communities.
  const CorrelationResult comp_corr = correlation_matrix(encodings, Axis::kColumns);
  std::vector<std::string> unit_ids;
  for (Eigen::Index i = 0; i < k; ++i) unit_ids.push_back(std::to_string(i));
  write_matrix_csv(comp_corr.corr, unit_ids, "unit", "unit_", out / "corr_components.csv");

  const LouvainResult comm =
      louvain_communities(component_graph(comp_corr.corr, cfg.analysis.community_cut),
                          cfg.seed);
  std::string comm_csv = "unit,community\n";
  for (Eigen::Index i = 0; i < k; ++i)
    comm_csv += std::to_string(i) + "," +
                std::to_string(comm.labels[static_cast<std::size_t>(i)]) + "\n";
  comm_csv += "# modularity," + format_double(comm.modularity) + "\n";
  atomic_write_file(out / "communities.csv", comm_csv);

  // Subject-by-subject correlation of the significant components (all
  // components when none are significant), controls first.
  std::vector<Eigen::Index> order;
  for (int want = 0; want <= 1; ++want)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if ((m.has_labels() ? m.labels[static_cast<std::size_t>(i)] : 0) == want)
        order.push_back(i);
  std::vector<Eigen::Index> cols = significant;
  if (cols.empty())
    for (Eigen::Index i = 0; i < k; ++i) cols.push_back(i);
  MatrixXd sub_features(m.rows(), static_cast<Eigen::Index>(cols.size()));
  std::vector<std::string> ordered_ids;
  for (std::size_t r = 0; r < order.size(); ++r) {
    ordered_ids.push_back(enc_ids[static_cast<std::size_t>(order[r])]);
    for (std::size_t cidx = 0; cidx < cols.size(); ++cidx)
      sub_features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(cidx)) =
          encodings(order[r], cols[cidx]);
  }
  const CorrelationResult sub_corr = correlation_matrix(sub_features, Axis::kRows);
  write_matrix_csv(sub_corr.corr, ordered_ids, "subject_id", "s", out / "corr_subjects.csv");

  std::printf("stats: %zu significant units, %d communities, modularity %s\n",
              significant.size(),
              comm.labels.empty() ? 0 : 1 + *std::max_element(comm.labels.begin(),
                                                              comm.labels.end()),
              format_double(comm.modularity).c_str());
  return 0;
}

inline int run_elbo(const RunConfig& cfg, std::string ck_path, std::string data_path,
                    int samples) {
  const fs::path out(cfg.output.dir);
  if (ck_path.empty()) ck_path = (out / "checkpoint.hmvae").string();
  if (data_path.empty()) data_path = (out / "qc_passed.vmat").string();
  const Checkpoint ck = checkpoint_load(ck_path);
  const SubjectMatrix m = vmat_load(data_path);
  const MatrixXd x = standardize_with(m, ck.data_stats);
  const ElboBreakdown b = elbo_estimate(x, ck.params, samples, cfg.seed);
  std::string csv = "elbo,recon,log_prior,neg_log_q,mc_samples\n" + format_double(b.elbo) +
                    "," + format_double(b.recon) + "," + format_double(b.log_prior) + "," +
                    format_double(b.neg_log_q) + "," + std::to_string(samples) + "\n";
  atomic_write_file(out / "elbo.csv", csv);
  std::printf("elbo %s (recon %s, log_prior %s, neg_log_q %s, M=%d)\n",
              format_double(b.elbo).c_str(), format_double(b.recon).c_str(),
              format_double(b.log_prior).c_str(), format_double(b.neg_log_q).c_str(),
              samples);
  return 0;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. Exit codes: 0 success,
/// 1 usage error, 2 runtime failure.
inline int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Helmholtz-machine VAE feature extraction pipeline"};
  app.require_subcommand(1);

  detail::CommonOpts common;
  std::string data_path, ck_path;
  double threshold_sd = -1;
  int folds = -1, samples = -1, epochs = -1, batch_size = -1, latent_dim = -1;

  auto add_shared = [&](CLI::App* cmd) {
    detail::add_common(cmd, common);
    return cmd;
  };

  auto* gen = add_shared(app.add_subcommand("gen-synthetic",
                                            "generate a synthetic ground-truth dataset"));
  auto* qc = add_shared(app.add_subcommand("qc", "quality-control filter"));
  qc->add_option("--data", data_path, "input .vmat");
  auto* tr = add_shared(app.add_subcommand("train", "train the model"));
  tr->add_option("--data", data_path, "input .vmat");
  tr->add_option("--epochs", epochs, "override epoch count");
  tr->add_option("--batch-size", batch_size, "override batch size");
  tr->add_option("--latent-dim", latent_dim, "override latent dimension");
  auto* enc = add_shared(app.add_subcommand("encode", "posterior centers per subject"));
  enc->add_option("--data", data_path, "input .vmat");
  enc->add_option("--checkpoint", ck_path, "trained checkpoint");
  auto* proj = add_shared(app.add_subcommand("project", "latent projection maps + montages"));
  proj->add_option("--data", data_path, "input .vmat (mask source)");
  proj->add_option("--checkpoint", ck_path, "trained checkpoint");
  proj->add_option("--threshold-sd", threshold_sd, "supra-threshold cut in SDs");
  auto* cls = add_shared(app.add_subcommand("classify", "cross-validated logistic regression"));
  cls->add_option("--data", data_path, "input .vmat (labels source)");
  cls->add_option("--checkpoint", ck_path, "trained checkpoint");
  cls->add_option("--folds", folds, "cross-validation folds");
  auto* st = add_shared(app.add_subcommand("stats", "t-tests, correlations, communities"));
  st->add_option("--data", data_path, "input .vmat (ids/labels source)");
  auto* el = add_shared(app.add_subcommand("elbo", "evaluate the bound on a dataset"));
  el->add_option("--data", data_path, "input .vmat");
  el->add_option("--checkpoint", ck_path, "trained checkpoint");
  el->add_option("--samples", samples, "Monte Carlo samples");

  std::vector<std::string> argv_s = args;
  argv_s.insert(argv_s.begin(), "hmvae");
  std::vector<const char*> argv;
  for (const auto& a : argv_s) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = common.resolve();
    if (epochs > 0) cfg.train.epochs = epochs;
    if (batch_size > 0) cfg.train.batch_size = batch_size;
    if (latent_dim > 0) cfg.model.latent_dim = latent_dim;
    if (folds < 0) folds = cfg.analysis.folds;
    if (samples < 0) samples = cfg.analysis.samples;
    if (threshold_sd < 0) threshold_sd = cfg.analysis.threshold_sd;

    if (gen->parsed()) return detail::run_gen_synthetic(cfg);
    if (qc->parsed()) return detail::run_qc(cfg, data_path);
    if (tr->parsed()) return detail::run_train(cfg, data_path);
    if (enc->parsed()) return detail::run_encode(cfg, ck_path, data_path);
    if (proj->parsed()) return detail::run_project(cfg, ck_path, data_path, threshold_sd);
    if (cls->parsed()) return detail::run_classify(cfg, ck_path, data_path, folds);
    if (st->parsed()) return detail::run_stats(cfg, data_path);
    if (el->parsed()) return detail::run_elbo(cfg, ck_path, data_path, samples);
    std::fprintf(stderr, "%s\n", app.help().c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}

}  // namespace hmvae::cli

#endif  // HMVAE_CLI_HPP_
