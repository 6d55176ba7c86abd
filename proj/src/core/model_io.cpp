#include "core/model_io.hpp"

#include <json.hpp>

#include "core/tensor_io.hpp"

namespace modec::toymodel {
namespace {

using nlohmann::json;

constexpr const char* kFormat = "modec-toy-v1";

std::string blob_name(int layer, const char* field) {
  return "layer" + std::to_string(layer) + "_" + field + ".bin";
}

void save_blob(const std::filesystem::path& dir, json& entry, int layer,
               const char* field, const Matrix& m) {
  std::string name = blob_name(layer, field);
  write_matrix(dir / name, m);
  entry[field] = name;
}

Matrix load_blob(const std::filesystem::path& dir, const json& entry, const char* field) {
  if (!entry.contains(field)) fail(ErrorCode::IoError, std::string("manifest missing ") + field);
  return read_matrix(dir / entry.at(field).get<std::string>());
}

}  // namespace

void save_model(const std::filesystem::path& dir, const Model& m) {
  m.config.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::IoError, dir.string() + ": cannot create directory");

  json manifest;
  manifest["format"] = kFormat;
  manifest["config"] = {
      {"d_hidden", m.config.d_hidden},
      {"d_intermediate", m.config.d_intermediate},
      {"n_heads", m.config.n_heads},
      {"n_kv_heads", m.config.n_kv_heads},
      {"n_layers", m.config.n_layers},
      {"activation", activation_name(m.config.activation)},
      {"rope_base", m.config.rope_base},
      {"rmsnorm_eps", m.config.rmsnorm_eps},
  };

  json layers = json::array();
  for (int l = 0; l < static_cast<int>(m.layers.size()); ++l) {
    const LayerWeights& w = m.layers[static_cast<std::size_t>(l)];
    json entry;
    save_blob(dir, entry, l, "w_q", w.w_q);
    save_blob(dir, entry, l, "w_k", w.w_k);
    save_blob(dir, entry, l, "w_v", w.w_v);
    save_blob(dir, entry, l, "w_o", w.w_o);
    save_blob(dir, entry, l, "w_up", w.w_up);
    if (w.w_gate.size() > 0) save_blob(dir, entry, l, "w_gate", w.w_gate);
    save_blob(dir, entry, l, "w_down", w.w_down);

    std::string na = blob_name(l, "norm_attn");
    write_vector(dir / na, w.norm_attn);
    entry["norm_attn"] = na;
    std::string nm = blob_name(l, "norm_mlp");
    write_vector(dir / nm, w.norm_mlp);
    entry["norm_mlp"] = nm;

    if (w.rope_indices.empty()) {
      entry["rope_indices"] = nullptr;
    } else {
      entry["rope_indices"] = w.rope_indices;
    }
    layers.push_back(std::move(entry));
  }
  manifest["layers"] = std::move(layers);

  write_text_atomic(dir / "model.json", manifest.dump(2) + "\n");
}

Model load_model(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(read_text(dir / "model.json"));
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, dir.string() + ": bad manifest: " + e.what());
  }
  if (manifest.value("format", "") != kFormat)
    fail(ErrorCode::IoError, dir.string() + ": unsupported model format");

  Model m;
  try {
    const json& cfg = manifest.at("config");
    m.config.d_hidden = cfg.at("d_hidden").get<int>();
    m.config.d_intermediate = cfg.at("d_intermediate").get<int>();
    m.config.n_heads = cfg.at("n_heads").get<int>();
    m.config.n_kv_heads = cfg.at("n_kv_heads").get<int>();
    m.config.n_layers = cfg.at("n_layers").get<int>();
    m.config.activation = activation_from_name(cfg.at("activation").get<std::string>());
    m.config.rope_base = cfg.at("rope_base").get<double>();
    m.config.rmsnorm_eps = cfg.at("rmsnorm_eps").get<double>();

    for (const json& entry : manifest.at("layers")) {
      LayerWeights w;
      w.w_q = load_blob(dir, entry, "w_q");
      w.w_k = load_blob(dir, entry, "w_k");
      w.w_v = load_blob(dir, entry, "w_v");
      w.w_o = load_blob(dir, entry, "w_o");
      w.w_up = load_blob(dir, entry, "w_up");
      if (entry.contains("w_gate")) w.w_gate = load_blob(dir, entry, "w_gate");
      w.w_down = load_blob(dir, entry, "w_down");
      w.norm_attn = read_vector(dir / entry.at("norm_attn").get<std::string>());
      w.norm_mlp = read_vector(dir / entry.at("norm_mlp").get<std::string>());
      if (entry.contains("rope_indices") && !entry.at("rope_indices").is_null())
        w.rope_indices = entry.at("rope_indices").get<std::vector<std::vector<int>>>();
      m.layers.push_back(std::move(w));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::IoError, dir.string() + ": bad manifest: " + e.what());
  }

  m.config.validate();
  if (static_cast<int>(m.layers.size()) != m.config.n_layers)
    fail(ErrorCode::IoError, dir.string() + ": layer count does not match config");
  return m;
}

}  // namespace modec::toymodel
