#include <memory>
#include <string>

#include "mbct/calibrators.hpp"
#include "mbct/mbct.hpp"

namespace mbct {

std::unique_ptr<Calibrator> calibrator_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw Error("calibrator json: missing 'kind'");
  const auto kind = j.at("kind").get<std::string>();
  try {
    if (kind == "platt") return std::make_unique<PlattCalibrator>(PlattParams{j.at("a"), j.at("b")});
    if (kind == "beta") return std::make_unique<BetaCalibrator>(BetaParams{j.at("a"), j.at("b"), j.at("c")});
    if (kind == "histogram") {
      return std::make_unique<HistogramCalibrator>(
          BinTable{j.at("boundaries").get<std::vector<double>>(), j.at("outputs").get<std::vector<double>>()});
    }
    if (kind == "isotonic") {
      return std::make_unique<IsotonicCalibrator>(IsotonicFit{j.at("block_starts").get<std::vector<double>>(),
                                                              j.at("values").get<std::vector<double>>()});
    }
    if (kind == "scaling-binning") {
      ScalingBinningParams params;
      params.scaler = PlattParams{j.at("a"), j.at("b")};
      params.bins = BinTable{j.at("boundaries").get<std::vector<double>>(), j.at("outputs").get<std::vector<double>>()};
      return std::make_unique<ScalingBinningCalibrator>(std::move(params));
    }
    if (kind == "mbct") return std::make_unique<MbctCalibrator>(mbct_from_json(j));
  } catch (const nlohmann::json::exception& e) {
    throw Error("calibrator json (" + kind + "): " + e.what());
  }
  throw Error("calibrator json: unknown kind '" + kind + "'");
}

}  // namespace mbct
