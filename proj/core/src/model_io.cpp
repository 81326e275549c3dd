#include "mtec/model_io.hpp"

#include <fstream>

#include "mtec/error.hpp"

namespace mtec {

Eigen::MatrixXd ModelBundle::predict_raw(const Eigen::MatrixXd& raw, const PredictOptions& options) const {
  return model.predict(preprocessor.transform(raw), options);
}

nlohmann::json ModelBundle::to_json() const {
  nlohmann::json j;
  j["format"] = "mtec-model";
  j["version"] = kFormatVersion;
  j["config"] = model.config().to_json();
  j["input_width"] = model.input_width();
  j["species"] = species_names;
  j["preprocessor"] = preprocessor.to_json();
  j["trained"] = model.trained();
  MtecModel copy = model;
  j["parameters"] = nn::tensors_to_json(copy.params().tensors());
  j["training"] = {{"seed", metadata.seed},
                   {"epochs_run", metadata.epochs_run},
                   {"best_epoch", metadata.best_epoch},
                   {"final_recon", metadata.final_train.recon},
                   {"final_kl", metadata.final_train.kl},
                   {"final_reg", metadata.final_train.reg},
                   {"final_valid_total", metadata.final_valid_total},
                   {"train_sites", metadata.train_sites},
                   {"valid_sites", metadata.valid_sites},
                   {"thresholds", metadata.thresholds}};
  return j;
}

ModelBundle ModelBundle::from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", "") != "mtec-model") throw ValidationError("not an mtec model file");
    if (j.value("version", 0) != kFormatVersion) throw ValidationError("unsupported model file version");
    ModelBundle b;
    b.species_names = j.at("species").get<std::vector<std::string>>();
    b.preprocessor = data::Preprocessor::from_json(j.at("preprocessor"));
    const auto config = MtecConfig::from_json(j.at("config"));
    b.model = MtecModel::zeros(config, j.at("input_width").get<int>(), static_cast<int>(b.species_names.size()));
    auto tensors = b.model.params().tensors();
    nn::tensors_from_json(j.at("parameters"), tensors);
    b.model.set_trained(j.value("trained", false));
    if (static_cast<std::size_t>(b.model.input_width()) != b.preprocessor.output_width()) {
      throw ShapeError("model input width does not match the preprocessor output");
    }
    const auto& t = j.at("training");
    b.metadata.seed = t.at("seed").get<std::uint64_t>();
    b.metadata.epochs_run = t.at("epochs_run").get<int>();
    b.metadata.best_epoch = t.at("best_epoch").get<int>();
    b.metadata.final_train = {t.at("final_recon").get<double>(), t.at("final_kl").get<double>(),
                              t.at("final_reg").get<double>()};
    b.metadata.final_valid_total = t.at("final_valid_total").get<double>();
    b.metadata.train_sites = t.at("train_sites").get<std::vector<std::string>>();
    b.metadata.valid_sites = t.at("valid_sites").get<std::vector<std::string>>();
    b.metadata.thresholds = t.at("thresholds").get<std::vector<double>>();
    return b;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

void ModelBundle::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << to_json().dump(1) << '\n';
}

ModelBundle ModelBundle::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("model " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace mtec
