#include "advmod/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "advmod/error.hpp"
#include "advmod/io.hpp"
#include "advmod/parallel.hpp"
#include "advmod/rng.hpp"

namespace advmod {

namespace {

constexpr std::string_view kMagic = "CRML";

std::int16_t encode_snr(const std::optional<double>& snr) {
  if (!snr) return kNoSnr;
  const double tenths = std::round(*snr * 10.0);
  if (!(tenths > kNoSnr && tenths <= INT16_MAX)) throw ConfigError("SNR out of storable range");
  return static_cast<std::int16_t>(tenths);
}

std::optional<double> decode_snr(std::int16_t v) {
  if (v == kNoSnr) return std::nullopt;
  return static_cast<double>(v) / 10.0;
}

std::optional<ModScheme> try_scheme(const std::string& name) {
  for (const auto& s : supported_schemes()) {
    if (s.name() == name) return s;
  }
  return std::nullopt;
}

}  // namespace

IQSignal Dataset::signal(std::size_t i) const {
  const Record& r = records.at(i);
  IQSignal s;
  s.samples.assign(r.samples.begin(), r.samples.end());
  s.label = r.label;
  s.snr_db = r.snr_db;
  if (r.label < header.class_names.size()) s.scheme = try_scheme(header.class_names[r.label]);
  if (!r.symbols.empty()) s.n_symbols = static_cast<int>(r.symbols.size());
  return s;
}

std::vector<IQSignal> Dataset::signals(const std::vector<std::size_t>& indices) const {
  std::vector<IQSignal> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(signal(i));
  return out;
}

std::vector<IQSignal> Dataset::signals() const {
  std::vector<IQSignal> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out.push_back(signal(i));
  return out;
}

void Dataset::validate() const {
  const std::size_t n2 = 2 * static_cast<std::size_t>(header.n_samples);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.label >= header.class_names.size()) {
      throw IncompatibleError("record " + std::to_string(i) + " has label outside the class table");
    }
    if (r.samples.size() != n2) {
      throw IncompatibleError("record " + std::to_string(i) + " has the wrong sample count");
    }
  }
}

Record make_record(const IQSignal& signal, std::uint16_t label, std::vector<std::uint16_t> symbols) {
  Record r;
  r.label = label;
  r.snr_db = signal.snr_db;
  r.samples.assign(signal.samples.begin(), signal.samples.end());
  r.symbols = std::move(symbols);
  return r;
}

std::string encode_dataset(const Dataset& ds) {
  ds.validate();
  io::ByteWriter w;
  w.raw(kMagic);
  w.u16(ds.header.version);
  w.u16(static_cast<std::uint16_t>(ds.header.class_names.size()));
  for (const auto& name : ds.header.class_names) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
  }
  w.u32(ds.header.n_samples);
  w.u16(static_cast<std::uint16_t>(ds.header.pulse.sps));
  w.u8(ds.header.pulse.kind == PulseShape::Kind::Rect ? 0 : 1);
  w.f64(ds.header.pulse.rolloff);
  w.u16(static_cast<std::uint16_t>(ds.header.pulse.span));
  w.u32(static_cast<std::uint32_t>(ds.records.size()));
  for (const auto& r : ds.records) {
    w.u16(r.label);
    w.i16(encode_snr(r.snr_db));
    w.u32(static_cast<std::uint32_t>(r.symbols.size()));
    for (float v : r.samples) w.f32(v);
    for (auto s : r.symbols) w.u16(s);
  }
  return w.bytes();
}

Dataset decode_dataset(std::string_view bytes) {
  io::ByteReader rd(bytes);
  if (rd.raw(4) != kMagic) throw IoError("not a CRML dataset (bad magic)");
  Dataset ds;
  ds.header.version = rd.u16();
  if (ds.header.version != kDatasetVersion) {
    throw IncompatibleError("unsupported dataset version " + std::to_string(ds.header.version));
  }
  const std::uint16_t n_classes = rd.u16();
  for (std::uint16_t c = 0; c < n_classes; ++c) {
    const std::uint16_t len = rd.u16();
    ds.header.class_names.emplace_back(rd.raw(len));
  }
  ds.header.n_samples = rd.u32();
  ds.header.pulse.sps = rd.u16();
  ds.header.pulse.kind = rd.u8() == 0 ? PulseShape::Kind::Rect : PulseShape::Kind::RRC;
  ds.header.pulse.rolloff = rd.f64();
  ds.header.pulse.span = rd.u16();
  const std::uint32_t count = rd.u32();
  const std::size_t n2 = 2 * static_cast<std::size_t>(ds.header.n_samples);
  ds.records.resize(count);
  for (auto& r : ds.records) {
    r.label = rd.u16();
    r.snr_db = decode_snr(rd.i16());
    const std::uint32_t n_sym = rd.u32();
    r.samples.resize(n2);
    for (auto& v : r.samples) v = rd.f32();
    r.symbols.resize(n_sym);
    for (auto& s : r.symbols) s = rd.u16();
  }
  if (!rd.at_end()) throw IoError("trailing bytes after the last dataset record");
  ds.validate();
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  io::write_file_atomic(path, encode_dataset(ds));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

void SynthesisConfig::validate() const {
  if (classes.empty()) throw ConfigError("class list is empty");
  if (per_class < 1) throw ConfigError("signals per class must be at least 1");
  if (snr_db.empty()) throw ConfigError("SNR list is empty");
  for (const auto& s : snr_db) {
    if (s && !std::isfinite(*s)) throw ConfigError("SNR values must be finite (use null for noiseless)");
  }
  pulse.validate();
  if (n_samples == 0 || n_samples % static_cast<std::uint32_t>(pulse.sps) != 0) {
    throw ConfigError("signal length must be a positive multiple of samples-per-symbol");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("validation fraction must lie in [0, 1)");
  for (const auto& c : classes) constellation_points(c);
}

Split make_split(const Dataset& ds, double test_fraction, double val_fraction, std::uint64_t seed) {
  std::map<std::pair<int, std::int16_t>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    groups[{ds.records[i].label, encode_snr(ds.records[i].snr_db)}].push_back(i);
  }
  Split split;
  std::uint64_t g = 0;
  for (auto& [key, idx] : groups) {
    std::mt19937_64 gen(derive_seed(seed ^ 0x5b1175eedULL, g++));
    std::shuffle(idx.begin(), idx.end(), gen);
    const auto n = idx.size();
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    const auto n_train = n - n_test;
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n_train) * val_fraction));
    for (std::size_t k = 0; k < n; ++k) {
      if (k < n_val) split.validation.push_back(idx[k]);
      else if (k < n_train) split.train.push_back(idx[k]);
      else split.test.push_back(idx[k]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

GeneratedDataset gen_dataset(const SynthesisConfig& cfg) {
  cfg.validate();
  const std::size_t n_sym = cfg.n_samples / static_cast<std::uint32_t>(cfg.pulse.sps);

  GeneratedDataset out;
  Dataset& ds = out.dataset;
  for (const auto& c : cfg.classes) ds.header.class_names.push_back(c.name());
  ds.header.n_samples = cfg.n_samples;
  ds.header.pulse = cfg.pulse;

  const std::size_t total = cfg.classes.size() * cfg.snr_db.size() * cfg.per_class;
  ds.records.resize(total);
  parallel_for(total, cfg.threads, [&](std::size_t r) {
    const std::size_t per_group = cfg.per_class;
    const std::size_t group = r / per_group;
    const std::size_t cls = group / cfg.snr_db.size();
    const auto& snr = cfg.snr_db[group % cfg.snr_db.size()];
    const ModScheme& scheme = cfg.classes[cls];

    const std::uint64_t seed = derive_seed(cfg.seed, r);
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> pick(0, scheme.order - 1);
    std::vector<int> idx(n_sym);
    for (auto& v : idx) v = pick(gen);

    IQSignal sig = modulate(idx, scheme, cfg.pulse);
    if (snr) sig = awgn(sig, *snr, derive_seed(seed, 1));

    std::vector<std::uint16_t> symbols(idx.begin(), idx.end());
    ds.records[r] = make_record(sig, static_cast<std::uint16_t>(cls), std::move(symbols));
  });

  Manifest& m = out.manifest;
  m.class_names = ds.header.class_names;
  m.split = make_split(ds, cfg.test_fraction, cfg.val_fraction, cfg.seed);
  m.master_seed = cfg.seed;
  m.pulse = cfg.pulse;
  m.n_samples = cfg.n_samples;
  m.per_class = cfg.per_class;
  m.snr_db = cfg.snr_db;
  m.test_fraction = cfg.test_fraction;
  m.val_fraction = cfg.val_fraction;
  return out;
}

nlohmann::ordered_json manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["class_names"] = m.class_names;
  j["master_seed"] = m.master_seed;
  j["n_samples"] = m.n_samples;
  j["per_class"] = m.per_class;
  nlohmann::ordered_json snrs = nlohmann::ordered_json::array();
  for (const auto& s : m.snr_db) {
    if (s) snrs.push_back(*s);
    else snrs.push_back(nullptr);
  }
  j["snr_db"] = snrs;
  j["pulse"] = {{"kind", m.pulse.name()},
                {"sps", m.pulse.sps},
                {"rolloff", m.pulse.rolloff},
                {"span", m.pulse.span}};
  j["test_fraction"] = m.test_fraction;
  j["val_fraction"] = m.val_fraction;
  j["split"] = {{"train", m.split.train}, {"validation", m.split.validation}, {"test", m.split.test}};
  return j;
}

Manifest manifest_from_json(const nlohmann::json& j) {
  try {
    Manifest m;
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.n_samples = j.at("n_samples").get<std::uint32_t>();
    m.per_class = j.at("per_class").get<std::uint32_t>();
    for (const auto& s : j.at("snr_db")) {
      m.snr_db.push_back(s.is_null() ? std::nullopt : std::optional<double>(s.get<double>()));
    }
    const auto& p = j.at("pulse");
    m.pulse.kind = p.at("kind").get<std::string>() == "rect" ? PulseShape::Kind::Rect : PulseShape::Kind::RRC;
    m.pulse.sps = p.at("sps").get<int>();
    m.pulse.rolloff = p.at("rolloff").get<double>();
    m.pulse.span = p.at("span").get<int>();
    m.test_fraction = j.at("test_fraction").get<double>();
    m.val_fraction = j.at("val_fraction").get<double>();
    const auto& sp = j.at("split");
    m.split.train = sp.at("train").get<std::vector<std::size_t>>();
    m.split.validation = sp.at("validation").get<std::vector<std::size_t>>();
    m.split.test = sp.at("test").get<std::vector<std::size_t>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  io::write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& path) {
  try {
    return manifest_from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("cannot parse manifest " + path.string() + ": " + e.what());
  }
}

std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path) {
  auto p = dataset_path;
  p += ".json";
  return p;
}

}  // namespace advmod
