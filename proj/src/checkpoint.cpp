#include "fossil/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "fossil/trainer.hpp"

namespace fossil {

namespace {

constexpr std::array<char, 8> kMagic{'F', 'S', 'L', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FossilModel& model,
                     const TrainConfig& cfg) {
  nlohmann::json tensors = nlohmann::json::array();
  const auto params = model.named_parameters();
  for (const auto& p : params) {
    tensors.push_back({{"name", p.name}, {"shape", {p.tensor.rows(), p.tensor.cols()}}});
  }
  const nlohmann::json header = {{"config", cfg.to_json()},
                                 {"config_hash", cfg.hash()},
                                 {"seed", cfg.seed},
                                 {"dims",
                                  {{"input", model.dims().input},
                                   {"hidden", model.dims().hidden},
                                   {"output", model.dims().output}}},
                                 {"tensors", tensors}};
  const std::string text = header.dump();

  // Write to a sibling file first so an interrupted save never clobbers a good checkpoint.
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic.data(), kMagic.size());
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : params) {
      const Matrix& m = p.tensor.value();
      out.write(reinterpret_cast<const char*>(m.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError(path.string() + ": not a checkpoint");
  const std::uint64_t len = read_u64(in);
  if (!in || len > (1u << 30)) throw CheckpointError(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError(path.string() + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  TrainConfig cfg = TrainConfig::from_json(header.at("config"));
  if (header.at("config_hash").get<std::string>() != cfg.hash()) {
    throw CheckpointError(path.string() + ": config hash mismatch");
  }
  ModelDims dims{header.at("dims").at("input").get<int>(), header.at("dims").at("hidden").get<int>(),
                 header.at("dims").at("output").get<int>()};
  FossilModel model(dims, model_options(cfg), cfg.seed);

  const auto params = model.named_parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) {
    throw CheckpointError(path.string() + ": expected " + std::to_string(params.size()) +
                          " tensors, header lists " + std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = tensors[i];
    auto p = params[i].tensor;
    if (entry.at("name").get<std::string>() != params[i].name ||
        entry.at("shape")[0].get<Eigen::Index>() != p.rows() ||
        entry.at("shape")[1].get<Eigen::Index>() != p.cols()) {
      throw CheckpointError(path.string() + ": tensor " + std::to_string(i) + " ('" +
                            entry.at("name").get<std::string>() + "') does not match the model");
    }
    Matrix& m = p.mutable_value();
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw CheckpointError(path.string() + ": truncated data for '" + params[i].name + "'");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw CheckpointError(path.string() + ": trailing bytes after tensor data");
  }
  return {cfg, std::move(model)};
}

}  // namespace fossil
