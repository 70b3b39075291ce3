#pragma once

// Model construction by name, and persistence.

#include <filesystem>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "bustime/bam.hpp"
#include "bustime/lstm.hpp"
#include "bustime/model_io.hpp"
#include "bustime/models.hpp"

namespace bustime {

/// Hyperparameters for every model kind; each model reads its own.
struct ModelParams {
  std::size_t k = 5;
  std::optional<double> bandwidth;  // KR; median heuristic when absent
  models::BamConfig bam;
  models::LstmConfig lstm;

  std::string describe(ModelKind kind) const {
    std::ostringstream s;
    switch (kind) {
      case ModelKind::kKnn: s << "k=" << k; break;
      case ModelKind::kKr: s << "bandwidth=" << (bandwidth ? std::to_string(*bandwidth) : "median"); break;
      case ModelKind::kBam: s << "knots=" << bam.interior_knots << " lambda=" << bam.lambda; break;
      case ModelKind::kLstm:
        s << "hidden=" << lstm.hidden << " epochs=" << lstm.epochs << " lr=" << lstm.learning_rate
          << " seed=" << lstm.seed;
        break;
      case ModelKind::kDelay: break;
    }
    return s.str();
  }
};

inline std::unique_ptr<Predictor> train_model(ModelKind kind, const TrainingSet& ts,
                                              const ModelParams& p) {
  switch (kind) {
    case ModelKind::kDelay:
      return std::make_unique<models::DelayModel>(models::DelayModel::train(ts));
    case ModelKind::kKnn:
      return std::make_unique<models::KnnModel>(models::KnnModel::train(ts, p.k));
    case ModelKind::kKr:
      return std::make_unique<models::KrModel>(models::KrModel::train(ts, p.bandwidth));
    case ModelKind::kBam:
      return std::make_unique<models::BamModel>(models::BamModel::train(ts, p.bam));
    case ModelKind::kLstm:
      return std::make_unique<models::LstmModel>(models::LstmModel::train(ts, p.lstm));
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind");
}

inline std::unique_ptr<Predictor> model_from_archive(const ParamArchive& a) {
  std::unique_ptr<Predictor> model;
  switch (static_cast<ModelKind>(a.kind)) {
    case ModelKind::kDelay:
      model = std::make_unique<models::DelayModel>(models::DelayModel::from_archive(a));
      break;
    case ModelKind::kKnn:
      model = std::make_unique<models::KnnModel>(models::KnnModel::from_archive(a));
      break;
    case ModelKind::kKr:
      model = std::make_unique<models::KrModel>(models::KrModel::from_archive(a));
      break;
    case ModelKind::kBam:
      model = std::make_unique<models::BamModel>(models::BamModel::from_archive(a));
      break;
    case ModelKind::kLstm:
      model = std::make_unique<models::LstmModel>(models::LstmModel::from_archive(a));
      break;
    default:
      throw Error(ErrorCode::kBadModelFile, "unknown model kind " + std::to_string(a.kind));
  }
  if (model->anchor_count() != a.anchor_count)
    throw Error(ErrorCode::kBadModelFile, "model anchor count disagrees with its header");
  return model;
}

inline void save_model(const std::filesystem::path& path, const Predictor& model) {
  save_archive(path, model.archive());
}

inline std::unique_ptr<Predictor> load_model(const std::filesystem::path& path) {
  return model_from_archive(load_archive(path));
}

/// Anchor distances stored alongside every model.
inline std::vector<double> model_anchor_distances(const std::filesystem::path& path) {
  return load_archive(path).vector("anchors");
}

}  // namespace bustime
