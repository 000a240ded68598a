#include "fbkws/frontend.hpp"

#include "fbkws/csv.hpp"
#include "fbkws/dsp.hpp"
#include "fbkws/error.hpp"

namespace fbkws::frontend {

Arm arm_from_string(const std::string& s) {
  if (s == "logmel") return Arm::kLogmel;
  if (s == "learned") return Arm::kLearned;
  if (s == "learned_dropout") return Arm::kLearnedDropout;
  throw Error(Error::Kind::kConfig,
              "unknown arm '" + s + "', want logmel | learned | learned_dropout");
}

std::string arm_to_string(Arm arm) {
  switch (arm) {
    case Arm::kLogmel: return "logmel";
    case Arm::kLearned: return "learned";
    case Arm::kLearnedDropout: return "learned_dropout";
  }
  return "?";
}

void FrontendConfig::validate() const {
  require(bins >= 2, Error::Kind::kConfig, "frontend bins must be >= 2");
  require(k >= 1 && k <= bins, Error::Kind::kConfig,
          "filterbank channels must be in [1, bins]");
  require(dropout_rate >= 0.0f && dropout_rate < 1.0f, Error::Kind::kConfig,
          "dropout rate must be in [0,1)");
}

FilterbankFrontend::FilterbankFrontend(const FrontendConfig& cfg)
    : cfg_(cfg), gamma_({cfg.k}, 1.0f), beta_({cfg.k}, 0.0f), bn_(cfg.k) {
  cfg_.validate();
  w_ = dsp::mel_filterbank(cfg_.k, cfg_.bins).weights;
}

NodeId FilterbankFrontend::forward(Graph& g, const Tensor& batch, bool training,
                                   Rng* dropout_rng, ParamBinds* binds) {
  require(batch.ndim() == 3, Error::Kind::kShape, "frontend expects a [B, T, F] batch");
  require(batch.dim(2) == cfg_.bins, Error::Kind::kShape,
          "frontend bin count mismatch: batch " + batch.shape_str() + " vs F=" +
              std::to_string(cfg_.bins));
  const int b = batch.dim(0), t = batch.dim(1);

  const bool learn_w = cfg_.arm != Arm::kLogmel;
  NodeId w = learn_w ? g.param(w_) : g.leaf(w_);
  if (learn_w && binds) binds->emplace_back(&w_, w);

  NodeId x = g.reshape(g.leaf(batch), {b * t, cfg_.bins});
  NodeId y = g.matmul(x, g.relu(w));  // nonnegative: X >= 0 and g(W) >= 0
  y = g.reshape(y, {b, t, cfg_.k});

  const bool drop = training && cfg_.arm == Arm::kLearnedDropout && cfg_.dropout_rate > 0.0f;
  if (drop) {
    require(dropout_rng != nullptr, Error::Kind::kContract,
            "dropout arm needs an rng in training mode");
    y = g.dropout(y, cfg_.dropout_rate, cfg_.dropout_mode, *dropout_rng);
  }

  NodeId feat = g.log_floor(y);
  NodeId ga = g.param(gamma_);
  NodeId be = g.param(beta_);
  if (binds) {
    binds->emplace_back(&gamma_, ga);
    binds->emplace_back(&beta_, be);
  }
  return g.batch_norm(feat, ga, be, &bn_, 2, training);
}

void FilterbankFrontend::export_weights_csv(const std::string& path) const {
  std::string out = "bin_hz";
  for (int c = 0; c < cfg_.k; ++c) out += ",ch" + std::to_string(c);
  out += "\n";
  const double nyquist = dsp::kSampleRate / 2.0;
  for (int bin = 0; bin < cfg_.bins; ++bin) {
    std::vector<std::string> row;
    row.push_back(csv::fmt_float(nyquist * bin / (cfg_.bins - 1)));
    for (int c = 0; c < cfg_.k; ++c)
      row.push_back(csv::fmt_float(w_.at(bin, c)));
    out += csv::join_row(row);
  }
  csv::write_atomic(path, out);
}

void FilterbankFrontend::import_weights_csv(const std::string& path) {
  auto rows = csv::read(path);
  require(static_cast<int>(rows.size()) == cfg_.bins + 1, Error::Kind::kFormat,
          "filterbank csv must have one header plus F rows: " + path);
  require(rows[0].size() == static_cast<size_t>(cfg_.k) + 1 && rows[0][0] == "bin_hz",
          Error::Kind::kFormat, "bad filterbank csv header: " + path);
  for (int c = 0; c < cfg_.k; ++c)
    require(rows[0][static_cast<size_t>(c) + 1] == "ch" + std::to_string(c),
            Error::Kind::kFormat, "bad filterbank csv header: " + path);
  for (int bin = 0; bin < cfg_.bins; ++bin) {
    const auto& row = rows[static_cast<size_t>(bin) + 1];
    require(row.size() == static_cast<size_t>(cfg_.k) + 1, Error::Kind::kFormat,
            "short filterbank csv row in " + path);
    for (int c = 0; c < cfg_.k; ++c)
      w_.at(bin, c) = std::stof(row[static_cast<size_t>(c) + 1]);
  }
}

}  // namespace fbkws::frontend
