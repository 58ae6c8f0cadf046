#ifndef HMVAE_DATA_HPP_
#define HMVAE_DATA_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "hmvae/distributions.hpp"
#include "hmvae/errors.hpp"
#include "hmvae/io_util.hpp"
#include "hmvae/rng.hpp"

namespace hmvae {

using Eigen::ArrayXd;
using Eigen::MatrixXd;

/// Maps matrix columns onto a voxel grid: a 2-D plane for synthetic data or
/// a 3-D volume. Coordinates are (row, col) / (x, y, z) index tuples.
struct VolumeMask {
  std::vector<int> dims;                    // 2 or 3 entries
  std::vector<std::array<int, 3>> coords;   // third entry 0 for 2-D grids

  void validate(Eigen::Index expected_columns) const {
    if (dims.size() != 2 && dims.size() != 3)
      throw ValidationError("VolumeMask: dims must have 2 or 3 entries");
    if (static_cast<Eigen::Index>(coords.size()) != expected_columns)
      throw ValidationError("VolumeMask: " + std::to_string(coords.size()) +
                            " coords for " + std::to_string(expected_columns) +
                            " columns");
    std::set<std::array<int, 3>> seen;
    for (const auto& c : coords) {
      for (std::size_t a = 0; a < 3; ++a) {
        const int lim = a < dims.size() ? dims[a] : 1;
        if (c[a] < 0 || c[a] >= lim)
          throw ValidationError("VolumeMask: coordinate out of bounds");
      }
      if (!seen.insert(c).second) throw ValidationError("VolumeMask: duplicate coordinate");
    }
  }
};

/// Subjects-by-voxels data matrix with identifiers and optional binary
/// labels (1 = patient, 0 = control) and grid geometry.
struct SubjectMatrix {
  MatrixXd values;                       // N x D
  std::vector<std::string> subject_ids;  // N
  std::vector<int> labels;               // empty or N entries in {0,1}
  std::optional<VolumeMask> mask;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  bool has_labels() const { return !labels.empty(); }

  void validate() const {
    if (static_cast<Eigen::Index>(subject_ids.size()) != values.rows())
      throw ValidationError("SubjectMatrix: " + std::to_string(subject_ids.size()) +
                            " ids for " + std::to_string(values.rows()) + " rows");
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != values.rows())
      throw ValidationError("SubjectMatrix: " + std::to_string(labels.size()) +
                            " labels for " + std::to_string(values.rows()) + " rows");
    for (int l : labels)
      if (l != 0 && l != 1) throw ValidationError("SubjectMatrix: labels must be 0 or 1");
    if (!values.allFinite()) throw ValidationError("SubjectMatrix: non-finite values");
    if (mask) mask->validate(values.cols());
  }
};

/// Per-voxel standardization statistics, kept for rendering projections in
/// original data units.
struct DataStats {
  ArrayXd mean;
  ArrayXd sd;                          // population SD; 0 for flagged columns
  std::vector<Eigen::Index> zero_variance;

  bool empty() const { return mean.size() == 0; }
};

namespace detail {

constexpr char kVmatMagic[8] = {'V', 'M', 'A', 'T', '0', '0', '0', '1'};
constexpr std::uint64_t kVmatVersion = 1;

}  // namespace detail

/// Container format: 8-byte magic "VMAT0001", u64 header length, UTF-8 JSON
/// header, then the values as row-major little-endian 32-bit floats.
inline void vmat_save(const SubjectMatrix& m, const std::filesystem::path& path) {
  m.validate();
  nlohmann::json header;
  header["version"] = detail::kVmatVersion;
  header["n"] = m.values.rows();
  header["d"] = m.values.cols();
  header["subject_ids"] = m.subject_ids;
  if (m.has_labels()) header["labels"] = m.labels;
  if (m.mask) {
    nlohmann::json jm;
    jm["dims"] = m.mask->dims;
    auto& jc = jm["coords"] = nlohmann::json::array();
    for (const auto& c : m.mask->coords) {
      if (m.mask->dims.size() == 2)
        jc.push_back({c[0], c[1]});
      else
        jc.push_back({c[0], c[1], c[2]});
    }
    header["mask"] = std::move(jm);
  }
  const std::string htext = header.dump();

  ByteWriter w;
  w.raw(detail::kVmatMagic, sizeof detail::kVmatMagic);
  w.u64(htext.size());
  w.str(htext);
  w.matrix_f32(m.values);
  atomic_write_file(path, w.bytes());
}

inline SubjectMatrix vmat_load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, detail::kVmatMagic, sizeof magic) != 0)
    throw BadMagicError("vmat: bad magic in " + path.string());
  const std::uint64_t hlen = r.u64();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("vmat: malformed header: ") + e.what());
  }
  try {
    if (header.at("version").get<std::uint64_t>() != detail::kVmatVersion)
      throw BadVersionError("vmat: unsupported version " + header.at("version").dump());
    SubjectMatrix m;
    const auto n = header.at("n").get<Eigen::Index>();
    const auto d = header.at("d").get<Eigen::Index>();
    if (n < 0 || d < 0) throw ValidationError("vmat: negative dimensions");
    m.subject_ids = header.at("subject_ids").get<std::vector<std::string>>();
    if (header.contains("labels")) m.labels = header.at("labels").get<std::vector<int>>();
    if (header.contains("mask")) {
      VolumeMask mask;
      mask.dims = header.at("mask").at("dims").get<std::vector<int>>();
      for (const auto& jc : header.at("mask").at("coords")) {
        std::array<int, 3> c{0, 0, 0};
        for (std::size_t a = 0; a < jc.size() && a < 3; ++a) c[a] = jc[a].get<int>();
        mask.coords.push_back(c);
      }
      m.mask = std::move(mask);
    }
    if (r.remaining() < static_cast<std::size_t>(n) * static_cast<std::size_t>(d) * 4)
      throw TruncatedError("vmat: payload holds " + std::to_string(r.remaining() / 4) +
                           " floats, header declares " + std::to_string(n * d));
    m.values = r.matrix_f32(n, d);
    if (r.remaining() != 0)
      throw ValidationError("vmat: trailing bytes after payload");
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("vmat: header field error: ") + e.what());
  }
}

struct QcRow {
  std::string subject_id;
  double coefficient = 0;
  bool kept = true;
};

struct QcResult {
  SubjectMatrix kept;
  std::vector<std::string> excluded_ids;
  std::vector<QcRow> report;
};

/// Flags noisy volumes: correlate every row against the mean volume and
/// exclude rows more than 2 population SDs below the mean coefficient.
/// Degenerate spreads keep everyone; constant rows get coefficient 0.
inline QcResult qc_filter(const SubjectMatrix& m) {
  if (m.rows() < 1) throw ArgumentError("qc_filter: empty matrix");
  const Eigen::Index n = m.rows();
  const Eigen::RowVectorXd mean_volume = m.values.colwise().mean();
  const Eigen::RowVectorXd mv_centered = mean_volume.array() - mean_volume.mean();
  const double mv_norm = mv_centered.norm();

  ArrayXd coeff(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd row = m.values.row(i);
    const Eigen::RowVectorXd rc = row.array() - row.mean();
    const double rn = rc.norm();
    coeff[i] = (rn == 0.0 || mv_norm == 0.0) ? 0.0 : rc.dot(mv_centered) / (rn * mv_norm);
  }

  const double mean_c = coeff.mean();
  const double sd_c = std::sqrt((coeff - mean_c).square().mean());
  const double cutoff = mean_c - 2.0 * sd_c;

  QcResult out;
  std::vector<Eigen::Index> keep_rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool keep = sd_c == 0.0 || coeff[i] >= cutoff;
    out.report.push_back({m.subject_ids[i], coeff[i], keep});
    if (keep)
      keep_rows.push_back(i);
    else
      out.excluded_ids.push_back(m.subject_ids[i]);
  }

  out.kept.values.resize(static_cast<Eigen::Index>(keep_rows.size()), m.cols());
  for (std::size_t j = 0; j < keep_rows.size(); ++j) {
    out.kept.values.row(static_cast<Eigen::Index>(j)) = m.values.row(keep_rows[j]);
    out.kept.subject_ids.push_back(m.subject_ids[keep_rows[j]]);
    if (m.has_labels()) out.kept.labels.push_back(m.labels[keep_rows[j]]);
  }
  out.kept.mask = m.mask;
  return out;
}

inline void write_qc_csv(const QcResult& qc, const std::filesystem::path& path) {
  std::string csv = "subject_id,coefficient,kept\n";
  for (const auto& row : qc.report)
    csv += row.subject_id + "," + format_double(row.coefficient) + "," +
           (row.kept ? "1" : "0") + "\n";
  atomic_write_file(path, csv);
}

/// Center each column and scale to unit population SD. Zero-variance
/// columns become all zeros and are flagged in the stats.
inline std::pair<SubjectMatrix, DataStats> standardize(const SubjectMatrix& m) {
  if (m.rows() < 2) throw ArgumentError("standardize: need at least 2 rows");
  DataStats stats;
  stats.mean = m.values.colwise().mean().transpose().array();
  SubjectMatrix out = m;
  stats.sd.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const ArrayXd centered = m.values.col(c).array() - stats.mean[c];
    const double sd = std::sqrt(centered.square().mean());
    stats.sd[c] = sd;
    if (sd == 0.0) {
      stats.zero_variance.push_back(c);
      out.values.col(c).setZero();
    } else {
      out.values.col(c) = (centered / sd).matrix();
    }
  }
  return {std::move(out), std::move(stats)};
}

inline MatrixXd destandardize(const MatrixXd& values, const DataStats& stats) {
  if (values.cols() != stats.mean.size())
    throw ShapeError("destandardize: width mismatch");
  MatrixXd out = values;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    out.col(c) = (out.col(c).array() * stats.sd[c] + stats.mean[c]).matrix();
  return out;
}

struct SyntheticGroundTruth {
  MatrixXd sources;    // K x D spatial maps
  MatrixXd loadings;   // N x K
  ArrayXd group_effect;
  double noise_sd = 0;
  std::string nonlinearity;
};

struct SynthConfig {
  int sources = 8;
  std::array<int, 2> grid = {32, 32};
  int subjects = 200;
  ArrayXd group_effect;       // empty means zeros
  double noise_sd = 0.2;
  std::string nonlinearity = "identity";  // identity | tanh | softplus-mix
  std::uint64_t seed = 0;
};

inline double apply_nonlinearity(const std::string& tag, double z) {
  if (tag == "identity") return z;
  if (tag == "tanh") return std::tanh(z);
  if (tag == "softplus-mix") return 0.5 * z + 0.5 * (softplus(z) - 0.6931471805599453);
  throw ArgumentError("unknown nonlinearity: " + tag);
}

/// Synthetic ground-truth generator: smooth Gaussian-blob sources on a 2-D
/// grid, standard-logistic loadings (shifted by the group effect for
/// label-1 subjects), optional elementwise nonlinearity, Gaussian noise.
/// Fully determined by the seed.
inline std::pair<SubjectMatrix, SyntheticGroundTruth> synth_generate(const SynthConfig& cfg) {
  const Eigen::Index k = cfg.sources;
  const Eigen::Index rows_g = cfg.grid[0];
  const Eigen::Index cols_g = cfg.grid[1];
  const Eigen::Index d = rows_g * cols_g;
  const Eigen::Index n = cfg.subjects;
  if (k < 1 || rows_g < 1 || cols_g < 1) throw ArgumentError("synth_generate: bad dimensions");
  if (k > d) throw ArgumentError("synth_generate: more sources than voxels");
  if (n < 2) throw ArgumentError("synth_generate: need at least 2 subjects");
  ArrayXd effect = cfg.group_effect.size() == 0 ? ArrayXd::Zero(k) : cfg.group_effect;
  if (effect.size() != k)
    throw ArgumentError("synth_generate: group_effect size " +
                        std::to_string(effect.size()) + " != sources " + std::to_string(k));
  apply_nonlinearity(cfg.nonlinearity, 0.0);  // validate the tag up front

  Rng rng(cfg.seed, streams::kSynth);

  MatrixXd sources(k, d);
  const double smin = std::min(rows_g, cols_g) / 12.0;
  const double smax = std::min(rows_g, cols_g) / 6.0;
  for (Eigen::Index s = 0; s < k; ++s) {
    const double cr = rng.uniform(0.0, static_cast<double>(rows_g));
    const double cc = rng.uniform(0.0, static_cast<double>(cols_g));
    const double width = rng.uniform(smin, smax);
    for (Eigen::Index r = 0; r < rows_g; ++r)
      for (Eigen::Index c = 0; c < cols_g; ++c) {
        const double dr = static_cast<double>(r) - cr;
        const double dc = static_cast<double>(c) - cc;
        sources(s, r * cols_g + c) = std::exp(-(dr * dr + dc * dc) / (2.0 * width * width));
      }
  }

  const Eigen::Index n_controls = n / 2;
  std::vector<int> labels(n);
  for (Eigen::Index i = 0; i < n; ++i) labels[i] = i < n_controls ? 0 : 1;

  MatrixXd loadings(n, k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < k; ++j) {
      loadings(i, j) = logit(rng.uniform01());
      if (labels[i] == 1) loadings(i, j) += effect[j];
    }

  MatrixXd values = loadings * sources;
  if (cfg.nonlinearity != "identity")
    values = values.unaryExpr(
        [&](double z) { return apply_nonlinearity(cfg.nonlinearity, z); });
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) values(i, c) += cfg.noise_sd * rng.normal();

  SubjectMatrix m;
  m.values = std::move(values);
  for (Eigen::Index i = 0; i < n; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "sub-%04lld", static_cast<long long>(i));
    m.subject_ids.emplace_back(id);
  }
  m.labels = std::move(labels);
  VolumeMask mask;
  mask.dims = {static_cast<int>(rows_g), static_cast<int>(cols_g)};
  for (Eigen::Index r = 0; r < rows_g; ++r)
    for (Eigen::Index c = 0; c < cols_g; ++c)
      mask.coords.push_back({static_cast<int>(r), static_cast<int>(c), 0});
  m.mask = std::move(mask);
  m.validate();

  SyntheticGroundTruth truth;
  truth.sources = std::move(sources);
  truth.loadings = std::move(loadings);
  truth.group_effect = std::move(effect);
  truth.noise_sd = cfg.noise_sd;
  truth.nonlinearity = cfg.nonlinearity;
  return {std::move(m), std::move(truth)};
}

}  // namespace hmvae

#endif  // HMVAE_DATA_HPP_
