#include "mbct/model_file.hpp"

#include <fstream>
#include <sstream>

#include "mbct/error.hpp"

namespace mbct {

std::string format_model(const Calibrator& calibrator, const Schema* schema) {
  nlohmann::json body = {{"calibrator", calibrator.to_json()}};
  if (schema) body["schema"] = schema->to_json();
  return std::string(kModelMagic) + "\n" + body.dump(1) + "\n";
}

ModelFile parse_model(std::string_view text) {
  const auto newline = text.find('\n');
  auto first = text.substr(0, newline);
  if (!first.empty() && first.back() == '\r') first.remove_suffix(1);
  if (first != kModelMagic) {
    if (first.rfind("MBCT-MODEL ", 0) == 0) throw Error("model file: unsupported version '" + std::string(first) + "'");
    throw Error("model file: missing 'MBCT-MODEL 1' header");
  }
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(newline == std::string_view::npos ? std::string_view{} : text.substr(newline + 1));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model file: ") + e.what());
  }
  if (!body.contains("calibrator")) throw Error("model file: missing calibrator");
  ModelFile out;
  out.calibrator = calibrator_from_json(body.at("calibrator"));
  if (body.contains("schema")) out.schema = Schema::from_json(body.at("schema"));
  return out;
}

void save_model(const std::string& path, const Calibrator& calibrator, const Schema* schema) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << format_model(calibrator, schema);
  if (!out) throw Error("write failed for '" + path + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_model(ss.str());
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace mbct
