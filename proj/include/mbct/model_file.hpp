#pragma once

// Versioned on-disk container: magic line "MBCT-MODEL 1" followed by one
// JSON document holding the calibrator and the frozen column schema.

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "mbct/calibrators.hpp"
#include "mbct/schema.hpp"

namespace mbct {

inline constexpr std::string_view kModelMagic = "MBCT-MODEL 1";

struct ModelFile {
  std::unique_ptr<Calibrator> calibrator;
  std::optional<Schema> schema;  // absent for models trained on in-memory data
};

std::string format_model(const Calibrator& calibrator, const Schema* schema = nullptr);
ModelFile parse_model(std::string_view text);

void save_model(const std::string& path, const Calibrator& calibrator, const Schema* schema = nullptr);
ModelFile load_model(const std::string& path);

}  // namespace mbct
