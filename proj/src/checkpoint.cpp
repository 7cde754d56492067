#include "ebrns/checkpoint.hpp"

#include <fstream>

#include "ebrns/errors.hpp"
#include "json.hpp"

namespace ebrns {

namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (int i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ParseError(std::string("checkpoint: ") + what + " must be a non-empty 2-d array");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (static_cast<int>(j[i].size()) != cols)
      throw ParseError(std::string("checkpoint: ragged rows in ") + what);
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

const char* kNetNames[8] = {"fwd_mem_mean",   "fwd_mem_logvar", "fwd_trend_mean",
                            "fwd_trend_logvar", "bwd_mem_mean",   "bwd_mem_logvar",
                            "bwd_trend_mean", "bwd_trend_logvar"};

}  // namespace

std::string checkpoint_to_json(const Checkpoint& cp) {
  json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["model"] = cp.model_id;
  j["dims"] = {{"n_x", cp.bank.n_x}, {"n_z", cp.n_z}, {"d_c", cp.bank.d_c},
               {"hidden", cp.bank.hidden}};
  if (cp.bank.has_norm()) {
    json ns = json::array();
    for (int i = 0; i < cp.bank.norm_scale.rows(); ++i) ns.push_back(cp.bank.norm_scale(i, 0));
    j["norm_scale"] = std::move(ns);
  } else {
    j["norm_scale"] = nullptr;
  }
  json nets;
  for (int n = 0; n < 8; ++n) {
    const MlpParams& p = cp.bank.nets[n];
    nets[kNetNames[n]] = {{"w1", mat_to_json(p.w1)},
                          {"b1", mat_to_json(p.b1)},
                          {"w2", mat_to_json(p.w2)},
                          {"b2", mat_to_json(p.b2)}};
  }
  j["nets"] = std::move(nets);
  return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw ParseError("checkpoint: missing schema_version");
  const int ver = j["schema_version"].get<int>();
  if (ver != kCheckpointSchemaVersion)
    throw ParseError("checkpoint: unsupported schema_version " + std::to_string(ver) +
                     " (expected " + std::to_string(kCheckpointSchemaVersion) + ")");

  Checkpoint cp;
  cp.model_id = j.at("model").get<std::string>();
  const json& dims = j.at("dims");
  cp.bank.n_x = dims.at("n_x").get<int>();
  cp.n_z = dims.at("n_z").get<int>();
  cp.bank.d_c = dims.at("d_c").get<int>();
  cp.bank.hidden = dims.at("hidden").get<int>();

  if (j.contains("norm_scale") && !j["norm_scale"].is_null()) {
    const json& ns = j["norm_scale"];
    if (static_cast<int>(ns.size()) != cp.bank.n_x)
      throw ParseError("checkpoint: norm_scale length " + std::to_string(ns.size()) +
                       " does not match n_x " + std::to_string(cp.bank.n_x));
    cp.bank.norm_scale = Mat(cp.bank.n_x, 1);
    for (int i = 0; i < cp.bank.n_x; ++i) cp.bank.norm_scale(i, 0) = ns[i].get<double>();
  }

  const json& nets = j.at("nets");
  for (int n = 0; n < 8; ++n) {
    if (!nets.contains(kNetNames[n]))
      throw ParseError(std::string("checkpoint: missing net ") + kNetNames[n]);
    const json& jn = nets[kNetNames[n]];
    MlpParams& p = cp.bank.nets[n];
    p.w1 = mat_from_json(jn.at("w1"), kNetNames[n]);
    p.b1 = mat_from_json(jn.at("b1"), kNetNames[n]);
    p.w2 = mat_from_json(jn.at("w2"), kNetNames[n]);
    p.b2 = mat_from_json(jn.at("b2"), kNetNames[n]);
    // Dim sanity against the declared bank geometry.
    if (p.w1.rows() != cp.bank.hidden || p.w2.cols() != cp.bank.hidden ||
        p.b1.rows() != cp.bank.hidden || p.w2.rows() != p.b2.rows())
      throw ParseError(std::string("checkpoint: net ") + kNetNames[n] +
                       " has shapes inconsistent with dims");
  }
  return cp;
}

void save_checkpoint(const std::string& path, const Checkpoint& cp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_checkpoint: cannot open '" + path + "' for writing");
  out << checkpoint_to_json(cp) << '\n';
  if (!out) throw IoError("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_checkpoint: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_json(text);
}

}  // namespace ebrns
