#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"
#include "advmod/io.hpp"

namespace advmod {

namespace {

constexpr std::string_view kCheckpointMagic = "ADVMODCK";
constexpr int kCheckpointVersion = 1;

}  // namespace

std::size_t Checkpoint::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.values.size();
  return n;
}

const NamedArray& Checkpoint::param(std::string_view name) const {
  for (const auto& p : params) {
    if (p.name == name) return p;
  }
  throw IncompatibleError("checkpoint has no array named " + std::string(name));
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json h;
  h["format"] = "advmod-checkpoint";
  h["version"] = kCheckpointVersion;
  h["arch"] = ckpt.arch.to_json();
  nlohmann::ordered_json arrays = nlohmann::ordered_json::array();
  for (const auto& p : ckpt.params) {
    if (ad::shape_size(p.shape) != p.values.size()) {
      throw IncompatibleError("array " + p.name + " does not match its shape");
    }
    arrays.push_back({{"name", p.name}, {"shape", p.shape}});
  }
  h["params"] = arrays;
  nlohmann::ordered_json curve = nlohmann::ordered_json::array();
  for (const auto& c : ckpt.meta.curve) {
    curve.push_back({{"epoch", c.epoch},
                     {"train_loss", c.train_loss},
                     {"val_loss", c.val_loss},
                     {"val_accuracy", c.val_accuracy}});
  }
  h["meta"] = {{"seed", ckpt.meta.seed},
               {"epochs", ckpt.meta.epochs},
               {"best_epoch", ckpt.meta.best_epoch},
               {"best_val_accuracy", ckpt.meta.best_val_accuracy},
               {"curve", curve}};
  const std::string header = h.dump();

  io::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.raw(header);
  for (const auto& p : ckpt.params) {
    for (float v : p.values) w.f32(v);
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  io::ByteReader rd(bytes);
  if (rd.raw(kCheckpointMagic.size()) != kCheckpointMagic) throw IoError("not a checkpoint file (bad magic)");
  const std::uint32_t len = rd.u32();
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(rd.raw(len));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  try {
    if (h.at("version").get<int>() != kCheckpointVersion) throw IncompatibleError("unsupported checkpoint version");
    ckpt.arch = ModelArch::from_json(h.at("arch"));
    for (const auto& a : h.at("params")) {
      NamedArray p;
      p.name = a.at("name").get<std::string>();
      p.shape = a.at("shape").get<ad::Shape>();
      ckpt.params.push_back(std::move(p));
    }
    const auto& m = h.at("meta");
    ckpt.meta.seed = m.at("seed").get<std::uint64_t>();
    ckpt.meta.epochs = m.at("epochs").get<int>();
    ckpt.meta.best_epoch = m.at("best_epoch").get<int>();
    ckpt.meta.best_val_accuracy = m.at("best_val_accuracy").get<double>();
    for (const auto& c : m.at("curve")) {
      ckpt.meta.curve.push_back({c.at("epoch").get<int>(), c.at("train_loss").get<double>(),
                                 c.at("val_loss").get<double>(), c.at("val_accuracy").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }
  for (auto& p : ckpt.params) {
    p.values.resize(ad::shape_size(p.shape));
    for (auto& v : p.values) v = rd.f32();
  }
  if (!rd.at_end()) throw IoError("trailing bytes after checkpoint parameters");

  ckpt.arch.validate();
  for (const auto& [name, shape] : parameter_layout(ckpt.arch)) {
    if (ckpt.param(name).shape != shape) throw IncompatibleError("parameter " + name + " does not match the architecture");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace advmod
