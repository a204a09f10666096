#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "t3vf/model.hpp"
#include "t3vf/pretrain.hpp"

namespace t3vf {

inline constexpr int kCheckpointSchemaVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Version, Malformed, DimensionMismatch, Io };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct Checkpoint {
  ModelParams params;
  PretrainHyper hyper;
  // Free-form provenance (setting, dataset size, effective config).
  nlohmann::json metadata = nlohmann::json::object();
};

/// JSON document; doubles are written with shortest round-trip digits so a
/// save/load/save cycle is byte-identical.
std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text,
                                  const std::optional<ModelDims>& expected = std::nullopt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<ModelDims>& expected = std::nullopt);

/// FNV-1a over the serialized parameter arrays, as 16 hex digits.
std::string params_fingerprint(const ModelParams& params);

nlohmann::json dims_to_json(const ModelDims& dims);
nlohmann::json hyper_to_json(const PretrainHyper& hyper);

}  // namespace t3vf
