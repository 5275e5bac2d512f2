/**
 * \file checkpoint.cpp
 * \brief Checkpoint serialisation.
 */
#include "hero/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "hero/error.hpp"

namespace hero {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw ParseError("checkpoint: truncated header");
  return v;
}

void write_f32(std::ostream& os, const Eigen::VectorXd& v) {
  std::vector<float> buf(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void read_f32(std::istream& is, Eigen::VectorXd& v) {
  std::vector<float> buf(static_cast<std::size_t>(v.size()));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!is) throw ParseError("checkpoint: truncated parameter data");
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = buf[static_cast<std::size_t>(i)];
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FeatureModel& model) {
  auto desc = nlohmann::json::parse(model.architecture().to_json());
  desc["num_params"] = model.num_params();
  desc["num_buffers"] = model.num_buffers();
  const std::string text = desc.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write("HERM", 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_f32(os, model.params());
  write_f32(os, model.buffers());
}

FeatureModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "HERM", 4) != 0) throw ParseError("checkpoint: bad magic");
  if (read_u32(is) != kCheckpointVersion) throw ParseError("checkpoint: unsupported version");
  const std::uint32_t len = read_u32(is);
  if (len > (1u << 20)) throw ParseError("checkpoint: descriptor too large");
  std::string text(len, '\0');
  is.read(text.data(), len);
  if (!is) throw ParseError("checkpoint: truncated descriptor");

  FeatureModel model(Architecture::from_json(text));
  std::size_t np = 0, nb = 0;
  try {
    const auto j = nlohmann::json::parse(text);
    np = j.at("num_params").get<std::size_t>();
    nb = j.at("num_buffers").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (np != model.num_params() || nb != model.num_buffers())
    throw ParseError("checkpoint: parameter count does not match the architecture");
  read_f32(is, model.params());
  read_f32(is, model.buffers());
  is.peek();
  if (!is.eof()) throw ParseError("checkpoint: trailing bytes");
  return model;
}

}  // namespace hero
