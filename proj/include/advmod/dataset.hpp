#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advmod/sigsynth.hpp"

namespace advmod {

/// On-disk layout, little-endian throughout:
///
///   "CRML" | u16 version | u16 n_classes | n_classes x (u16 len, bytes)
///   u32 N | u16 sps | u8 pulse (0 rect, 1 rrc) | f64 rolloff | u16 span
///   u32 record_count
///   record_count x (u16 label | i16 snr_db*10 | u32 n_symbols
///                   | f32[N] I | f32[N] Q | u16[n_symbols])
///
/// An SNR of INT16_MIN marks a noiseless record.
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::int16_t kNoSnr = INT16_MIN;

struct DatasetHeader {
  std::uint16_t version = kDatasetVersion;
  std::vector<std::string> class_names;
  std::uint32_t n_samples = 0;
  PulseShape pulse;
};

struct Record {
  std::uint16_t label = 0;
  std::optional<double> snr_db;
  std::vector<float> samples;  // 2N, I row then Q row
  std::vector<std::uint16_t> symbols;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Record> records;

  std::size_t size() const { return records.size(); }
  std::size_t num_classes() const { return header.class_names.size(); }

  /// Record i as a signal, with label/SNR/scheme metadata attached.
  IQSignal signal(std::size_t i) const;
  std::vector<IQSignal> signals(const std::vector<std::size_t>& indices) const;
  std::vector<IQSignal> signals() const;

  /// Throws IncompatibleError when counts or labels are inconsistent.
  void validate() const;
};

Record make_record(const IQSignal& signal, std::uint16_t label,
                   std::vector<std::uint16_t> symbols = {});

std::string encode_dataset(const Dataset& dataset);
Dataset decode_dataset(std::string_view bytes);
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SynthesisConfig {
  std::vector<ModScheme> classes = benchmark_schemes();
  std::uint32_t per_class = 100;  // per (class, SNR) pair
  std::uint32_t n_samples = 1024;
  PulseShape pulse = PulseShape::rrc();
  std::vector<std::optional<double>> snr_db = {20.0};  // nullopt = noiseless
  double test_fraction = 0.30;
  double val_fraction = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const;
};

/// Sidecar describing how a dataset file was produced and split.
struct Manifest {
  std::vector<std::string> class_names;
  Split split;
  std::uint64_t master_seed = 0;
  PulseShape pulse;
  std::uint32_t n_samples = 0;
  std::uint32_t per_class = 0;
  std::vector<std::optional<double>> snr_db;
  double test_fraction = 0.0;
  double val_fraction = 0.0;
};

nlohmann::ordered_json manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Conventional manifest location: "<dataset>.json".
std::filesystem::path manifest_path_for(const std::filesystem::path& dataset_path);

struct GeneratedDataset {
  Dataset dataset;
  Manifest manifest;
};

/// Records are laid out class-major, then SNR, then signal. Record r uses the
/// seed derive_seed(config.seed, r) for both its symbols and its noise.
GeneratedDataset gen_dataset(const SynthesisConfig& config);

/// Stratified split per (label, SNR) group.
Split make_split(const Dataset& dataset, double test_fraction, double val_fraction,
                 std::uint64_t seed);

}  // namespace advmod
