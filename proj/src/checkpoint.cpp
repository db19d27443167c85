#include "vstream/checkpoint.hpp"

#include <fstream>

#include <fmt/core.h>
#include <json.hpp>

#include "vstream/error.hpp"

namespace vstream {

using nlohmann::json;

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  json params = json::object();
  for (const auto& [name, m] : checkpoint.state.parameters()) {
    params[name] = {{"shape", {m->rows(), m->cols()}}, {"values", m->data()}};
  }
  const json doc = {
      {"format", kCheckpointFormat},
      {"fingerprint", checkpoint.fingerprint},
      {"step", checkpoint.step},
      {"model",
       {{"window", checkpoint.model.window},
        {"layer_dims", checkpoint.model.layer_dims},
        {"evolve", checkpoint.model.evolve},
        {"seed", checkpoint.model.seed}}},
      {"parameters", params},
  };
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write checkpoint '{}'", path));
  out << doc.dump(1) << '\n';
  if (!out) throw IoError(fmt::format("failed writing checkpoint '{}'", path));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open checkpoint '{}'", path));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path, e.what()));
  }

  try {
    if (doc.at("format").get<std::string>() != kCheckpointFormat) {
      throw DataError(fmt::format("{}: unsupported checkpoint format '{}'", path,
                                  doc.at("format").get<std::string>()));
    }
    Checkpoint cp;
    cp.fingerprint = doc.at("fingerprint").get<std::string>();
    cp.step = doc.at("step").get<std::size_t>();
    const auto& m = doc.at("model");
    cp.model.window = m.at("window").get<std::size_t>();
    cp.model.layer_dims = m.at("layer_dims").get<std::vector<std::size_t>>();
    cp.model.evolve = m.at("evolve").get<bool>();
    cp.model.seed = m.at("seed").get<std::uint64_t>();
    cp.model.validate();

    const auto& params = doc.at("parameters");
    auto read = [&](const std::string& name) {
      if (!params.contains(name)) {
        throw DataError(fmt::format("{}: checkpoint lacks parameter '{}'", path, name));
      }
      const auto& p = params.at(name);
      const auto shape = p.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw DataError(fmt::format("{}: '{}' shape must be 2-D", path, name));
      return Matrix(shape[0], shape[1], p.at("values").get<std::vector<double>>());
    };
    cp.state.base_weight = read("W1_base");
    for (std::size_t i = 0; i < cp.model.window; ++i) {
      cp.state.transforms.push_back(read(fmt::format("H_{}", i)));
      cp.state.attention.push_back(read(fmt::format("a_{}", i)));
    }
    for (std::size_t l = 2; l <= cp.model.layer_dims.size(); ++l) {
      cp.state.upper_weights.push_back(read(fmt::format("W{}", l)));
    }

    const std::size_t d1 = cp.model.first_dim();
    bool ok = cp.state.base_weight.cols() == d1;
    for (std::size_t i = 0; i < cp.model.window; ++i) {
      ok = ok && cp.state.transforms[i].rows() == d1 && cp.state.transforms[i].cols() == d1 &&
           cp.state.attention[i].size() == 2 * d1;
    }
    for (std::size_t l = 0; l < cp.state.upper_weights.size(); ++l) {
      ok = ok && cp.state.upper_weights[l].rows() == cp.model.layer_dims[l] &&
           cp.state.upper_weights[l].cols() == cp.model.layer_dims[l + 1];
    }
    if (!ok) throw DataError(fmt::format("{}: parameter shapes do not match the model config", path));
    return cp;
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path, e.what()));
  } catch (const DimensionError& e) {
    throw DataError(fmt::format("{}: {}", path, e.what()));
  }
}

}  // namespace vstream
