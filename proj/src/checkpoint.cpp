#include "t3vf/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace t3vf {

using nlohmann::json;

namespace {

json field_to_json(const FieldView& f) {
  if (f.scalar) return f.data[0];
  if (f.cols == 1) return json(std::vector<double>(f.data, f.data + f.rows));
  json rows = json::array();
  for (Eigen::Index r = 0; r < f.rows; ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < f.cols; ++c) row.push_back(f.data[c * f.rows + r]);
    rows.push_back(std::move(row));
  }
  return rows;
}

[[noreturn]] void malformed(const std::string& what) {
  throw CheckpointError(CheckpointError::Kind::Malformed, "malformed checkpoint: " + what);
}

[[noreturn]] void mismatch(const std::string& what) {
  throw CheckpointError(CheckpointError::Kind::DimensionMismatch, "checkpoint dimension mismatch: " + what);
}

double number_at(const json& v, const std::string& where) {
  if (!v.is_number()) malformed(where + " is not a number");
  return v.get<double>();
}

void field_from_json(const json& v, FieldView& f) {
  const std::string name(f.name);
  if (f.scalar) {
    f.data[0] = number_at(v, name);
    return;
  }
  if (!v.is_array()) malformed(name + " is not an array");
  if (f.cols == 1) {
    if (static_cast<Eigen::Index>(v.size()) != f.rows) mismatch(name + " length");
    for (Eigen::Index r = 0; r < f.rows; ++r) f.data[r] = number_at(v[r], name);
    return;
  }
  if (static_cast<Eigen::Index>(v.size()) != f.rows) mismatch(name + " row count");
  for (Eigen::Index r = 0; r < f.rows; ++r) {
    const json& row = v[r];
    if (!row.is_array()) malformed(name + " row is not an array");
    if (static_cast<Eigen::Index>(row.size()) != f.cols) mismatch(name + " column count");
    for (Eigen::Index c = 0; c < f.cols; ++c) f.data[c * f.rows + r] = number_at(row[c], name);
  }
}

ModelDims dims_from_json(const json& j) {
  if (!j.is_object()) malformed("dims is not an object");
  ModelDims d;
  auto get = [&](const char* key, int& out) {
    if (!j.contains(key) || !j[key].is_number_integer()) malformed(std::string("dims.") + key);
    out = j[key].get<int>();
  };
  get("obs", d.obs);
  get("instr", d.instr);
  get("query", d.query);
  get("inst", d.inst);
  get("img", d.img);
  get("act", d.act);
  get("dep", d.dep);
  get("action", d.action);
  try {
    d.validate();
  } catch (const ConfigError& e) {
    malformed(e.what());
  }
  return d;
}

}  // namespace

json dims_to_json(const ModelDims& d) {
  return json{{"obs", d.obs},   {"instr", d.instr}, {"query", d.query}, {"inst", d.inst},
              {"img", d.img},   {"act", d.act},     {"dep", d.dep},     {"action", d.action}};
}

json hyper_to_json(const PretrainHyper& h) {
  return json{{"epochs", h.epochs},
              {"batch_size", h.batch_size},
              {"learning_rate", h.learning_rate},
              {"lambda", h.lambda},
              {"seed", h.seed}};
}

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  json params = json::object();
  for (const auto& f : ckpt.params.fields()) params[std::string(f.name)] = field_to_json(f);
  json doc = {{"schema_version", kCheckpointSchemaVersion},
              {"dims", dims_to_json(ckpt.params.dims)},
              {"params", std::move(params)},
              {"hyperparameters", hyper_to_json(ckpt.hyper)},
              {"seed", ckpt.hyper.seed},
              {"metadata", ckpt.metadata}};
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text, const std::optional<ModelDims>& expected) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    malformed(e.what());
  }
  if (!doc.is_object() || !doc.contains("schema_version")) malformed("missing schema_version");
  if (!doc["schema_version"].is_number_integer()) malformed("schema_version is not an integer");
  const int version = doc["schema_version"].get<int>();
  if (version != kCheckpointSchemaVersion) {
    throw CheckpointError(CheckpointError::Kind::Version,
                          "unsupported checkpoint schema_version " + std::to_string(version));
  }
  for (const char* key : {"dims", "params", "hyperparameters"}) {
    if (!doc.contains(key)) malformed(std::string("missing ") + key);
  }

  const ModelDims dims = dims_from_json(doc["dims"]);
  if (expected && !(*expected == dims)) mismatch("file dims differ from the configured model");

  Checkpoint ckpt{ModelParams::zeros(dims), {}, json::object()};
  const json& params = doc["params"];
  if (!params.is_object()) malformed("params is not an object");
  for (auto& f : ckpt.params.fields()) {
    const std::string name(f.name);
    if (!params.contains(name)) malformed("missing parameter " + name);
    field_from_json(params[name], f);
  }

  const json& h = doc["hyperparameters"];
  try {
    ckpt.hyper.epochs = h.at("epochs").get<int>();
    ckpt.hyper.batch_size = h.at("batch_size").get<int>();
    ckpt.hyper.learning_rate = h.at("learning_rate").get<double>();
    ckpt.hyper.lambda = h.at("lambda").get<double>();
    ckpt.hyper.seed = h.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    malformed(std::string("hyperparameters: ") + e.what());
  }
  if (doc.contains("metadata")) ckpt.metadata = doc["metadata"];
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path.string() + " for writing");
  out << checkpoint_to_string(ckpt);
  if (!out) throw CheckpointError(CheckpointError::Kind::Io, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::optional<ModelDims>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str(), expected);
}

std::string params_fingerprint(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : params.fields()) {
    const std::string text = field_to_json(f).dump();
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace t3vf
