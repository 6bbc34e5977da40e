#include "gamf/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

namespace gamf::nn {

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const nlohmann::json& extras) {
  nlohmann::json header = extras;
  header["format_version"] = kCheckpointFormatVersion;
  nlohmann::json manifest = nlohmann::json::array();
  for (const std::string& name : store.manifest()) {
    const Tensor& t = store.value(store.index_of(name));
    manifest.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
  }
  header["manifest"] = manifest;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os << header.dump() << "\n";
  store.write_values(os);
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path, nlohmann::json* header_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: bad header in " + path + ": " + e.what());
  }
  if (header.value("format_version", -1) != kCheckpointFormatVersion)
    throw std::runtime_error("load_checkpoint: unsupported format version in " + path);

  ParamStore store;
  for (const auto& entry : header.at("manifest")) {
    store.add(entry.at("name").get<std::string>(),
              Tensor(entry.at("rows").get<int>(), entry.at("cols").get<int>()));
  }
  store.read_values(is);
  if (header_out) *header_out = std::move(header);
  return store;
}

}  // namespace gamf::nn
