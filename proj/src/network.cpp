#include <cmath>
#include <random>

#include "advmod/classifiers.hpp"
#include "advmod/error.hpp"
#include "advmod/rng.hpp"

namespace advmod {

namespace {

constexpr std::size_t kCnnWidth = 64;
constexpr std::size_t kResWidth = 32;
constexpr std::size_t kHidden = 128;
constexpr std::size_t kPool = 4;
constexpr std::size_t kPoolStages = 3;

std::size_t reduced_length(std::size_t n) {
  std::size_t len = n;
  for (std::size_t i = 0; i < kPoolStages; ++i) len /= kPool;
  return len;
}

// Layers whose output feeds a ReLU get He scaling; the rest LeCun.
bool feeds_relu(const std::string& name) {
  return !(name.starts_with("fc2") || name.starts_with("fc.") || name.ends_with("b.w"));
}

}  // namespace

std::string preset_name(Preset preset) {
  switch (preset) {
    case Preset::HocLogReg: return "hoc_logreg";
    case Preset::CnnSmall: return "cnn_small";
    case Preset::ResnetLite: return "resnet_lite";
    case Preset::MaxLikelihood: return "max_likelihood";
  }
  return "?";
}

Preset parse_preset(std::string_view name) {
  for (Preset p : {Preset::HocLogReg, Preset::CnnSmall, Preset::ResnetLite, Preset::MaxLikelihood}) {
    if (preset_name(p) == name) return p;
  }
  throw ConfigError("unsupported model preset '" + std::string(name) + "'");
}

void ModelArch::validate() const {
  if (num_classes < 2) throw ConfigError("a classifier needs at least two classes");
  if (!class_names.empty() && class_names.size() != num_classes) {
    throw ConfigError("class name table does not match the class count");
  }
  switch (preset) {
    case Preset::CnnSmall:
    case Preset::ResnetLite: {
      std::size_t len = input_length;
      for (std::size_t i = 0; i < kPoolStages; ++i) {
        if (len % kPool != 0 || len == 0) {
          throw ConfigError(preset_name(preset) + " requires the input length to be a multiple of 64");
        }
        len /= kPool;
      }
      break;
    }
    case Preset::HocLogReg:
      if (!pulse) throw ConfigError("hoc_logreg requires the pulse shape used for matched filtering");
      break;
    case Preset::MaxLikelihood:
      if (!pulse) throw ConfigError("max_likelihood requires scheme context: pulse shape missing");
      if (class_names.size() != num_classes) {
        throw ConfigError("max_likelihood requires scheme context: class names missing");
      }
      for (const auto& n : class_names) ModScheme::parse(n);
      break;
  }
}

nlohmann::ordered_json ModelArch::to_json() const {
  nlohmann::ordered_json j;
  j["preset"] = preset_name(preset);
  j["num_classes"] = num_classes;
  j["input_length"] = input_length;
  j["class_names"] = class_names;
  if (pulse) {
    j["pulse"] = {{"kind", pulse->name()}, {"sps", pulse->sps}, {"rolloff", pulse->rolloff}, {"span", pulse->span}};
  } else {
    j["pulse"] = nullptr;
  }
  if (snr_db) j["snr_db"] = *snr_db;
  else j["snr_db"] = nullptr;
  return j;
}

ModelArch ModelArch::from_json(const nlohmann::json& j) {
  ModelArch a;
  a.preset = parse_preset(j.at("preset").get<std::string>());
  a.num_classes = j.at("num_classes").get<std::size_t>();
  a.input_length = j.at("input_length").get<std::size_t>();
  a.class_names = j.at("class_names").get<std::vector<std::string>>();
  if (j.contains("pulse") && !j["pulse"].is_null()) {
    const auto& p = j["pulse"];
    PulseShape ps;
    ps.kind = p.at("kind").get<std::string>() == "rect" ? PulseShape::Kind::Rect : PulseShape::Kind::RRC;
    ps.sps = p.at("sps").get<int>();
    ps.rolloff = p.at("rolloff").get<double>();
    ps.span = p.at("span").get<int>();
    a.pulse = ps;
  }
  if (j.contains("snr_db") && !j["snr_db"].is_null()) a.snr_db = j["snr_db"].get<double>();
  return a;
}

ModelArch make_arch(Preset preset, std::size_t input_length, std::vector<std::string> class_names,
                    std::optional<PulseShape> pulse, std::optional<double> snr_db) {
  ModelArch a;
  a.preset = preset;
  a.num_classes = class_names.size();
  a.input_length = input_length;
  a.class_names = std::move(class_names);
  a.pulse = pulse;
  a.snr_db = snr_db;
  a.validate();
  return a;
}

std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const ModelArch& arch) {
  arch.validate();
  const std::size_t C = arch.num_classes;
  std::vector<std::pair<std::string, ad::Shape>> out;
  switch (arch.preset) {
    case Preset::CnnSmall:
      out = {{"conv1.w", {kCnnWidth, 2, 7}},       {"conv1.b", {kCnnWidth}},
             {"conv2.w", {kCnnWidth, kCnnWidth, 5}}, {"conv2.b", {kCnnWidth}},
             {"conv3.w", {kCnnWidth, kCnnWidth, 3}}, {"conv3.b", {kCnnWidth}},
             {"fc1.w", {kHidden, kCnnWidth * reduced_length(arch.input_length)}},
             {"fc1.b", {kHidden}},
             {"fc2.w", {C, kHidden}},                {"fc2.b", {C}}};
      break;
    case Preset::ResnetLite:
      out = {{"stem.w", {kResWidth, 2, 3}}, {"stem.b", {kResWidth}}};
      for (int s = 1; s <= 3; ++s) {
        const std::string r = "res" + std::to_string(s);
        out.push_back({r + "a.w", {kResWidth, kResWidth, 3}});
        out.push_back({r + "a.b", {kResWidth}});
        out.push_back({r + "b.w", {kResWidth, kResWidth, 3}});
        out.push_back({r + "b.b", {kResWidth}});
      }
      out.push_back({"fc1.w", {kHidden, kResWidth}});
      out.push_back({"fc1.b", {kHidden}});
      out.push_back({"fc2.w", {C, kHidden}});
      out.push_back({"fc2.b", {C}});
      break;
    case Preset::HocLogReg:
      out = {{"fc.w", {C, kNumHocFeatures}}, {"fc.b", {C}}};
      break;
    case Preset::MaxLikelihood:
      break;
  }
  return out;
}

template <class T>
Network<T>::Network(ModelArch arch, std::uint64_t seed) : arch_(std::move(arch)) {
  if (arch_.preset == Preset::MaxLikelihood) throw ConfigError("max_likelihood has no trainable network");
  const auto layout = parameter_layout(arch_);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    ad::Parameter<T> p{name, ad::Tensor<T>(shape), ad::Tensor<T>(shape)};
    if (name.ends_with(".w")) {
      std::size_t fan_in = 1;
      for (std::size_t d = 1; d < shape.size(); ++d) fan_in *= shape[d];
      const double limit = std::sqrt((feeds_relu(name) ? 6.0 : 3.0) / static_cast<double>(fan_in));
      std::mt19937_64 gen(derive_seed(seed, i));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& v : p.value.values()) v = static_cast<T>(u(gen));
    }
    params_.push_back(std::move(p));
  }
}

template <class T>
Network<T>::Network(ModelArch arch, const std::vector<NamedArray>& arrays) : arch_(std::move(arch)) {
  if (arch_.preset == Preset::MaxLikelihood) throw ConfigError("max_likelihood has no trainable network");
  for (const auto& [name, shape] : parameter_layout(arch_)) {
    const NamedArray* found = nullptr;
    for (const auto& a : arrays) {
      if (a.name == name) found = &a;
    }
    if (found == nullptr) throw IncompatibleError("checkpoint is missing parameter " + name);
    if (found->shape != shape) {
      throw IncompatibleError("parameter " + name + " has shape " + ad::shape_str(found->shape) +
                              ", architecture expects " + ad::shape_str(shape));
    }
    std::vector<T> values(found->values.begin(), found->values.end());
    params_.push_back({name, ad::Tensor<T>(shape, std::move(values)), ad::Tensor<T>(shape)});
  }
}

template <class T>
template <class ParamVar>
ad::Var Network<T>::forward_impl(ad::Tape<T>& tape, ad::Var x, ParamVar&& pv) const {
  const auto& xs = tape.value(x).shape();
  const auto P = [&](std::string_view name) { return pv(index_of(name)); };

  switch (arch_.preset) {
    case Preset::CnnSmall: {
      if (xs.size() != 3 || xs[1] != 2 || xs[2] != arch_.input_length) {
        throw IncompatibleError("cnn_small expects input [B,2," + std::to_string(arch_.input_length) + "], got " +
                                ad::shape_str(xs));
      }
      ad::Var h = x;
      for (const char* layer : {"conv1", "conv2", "conv3"}) {
        const std::string l(layer);
        h = ad::conv1d(tape, h, P(l + ".w"), P(l + ".b"));
        h = ad::relu(tape, h);
        h = ad::avg_pool1d(tape, h, kPool);
      }
      h = ad::flatten(tape, h);
      h = ad::relu(tape, ad::dense(tape, h, P("fc1.w"), P("fc1.b")));
      return ad::dense(tape, h, P("fc2.w"), P("fc2.b"));
    }
    case Preset::ResnetLite: {
      if (xs.size() != 3 || xs[1] != 2 || xs[2] != arch_.input_length) {
        throw IncompatibleError("resnet_lite expects input [B,2," + std::to_string(arch_.input_length) + "], got " +
                                ad::shape_str(xs));
      }
      ad::Var h = ad::relu(tape, ad::conv1d(tape, x, P("stem.w"), P("stem.b")));
      for (int s = 1; s <= 3; ++s) {
        const std::string r = "res" + std::to_string(s);
        ad::Var branch = ad::relu(tape, ad::conv1d(tape, h, P(r + "a.w"), P(r + "a.b")));
        branch = ad::conv1d(tape, branch, P(r + "b.w"), P(r + "b.b"));
        h = ad::relu(tape, ad::add(tape, h, branch));
        h = ad::avg_pool1d(tape, h, kPool);
      }
      h = ad::avg_pool1d(tape, h, tape.value(h).dim(2));
      h = ad::flatten(tape, h);
      h = ad::relu(tape, ad::dense(tape, h, P("fc1.w"), P("fc1.b")));
      return ad::dense(tape, h, P("fc2.w"), P("fc2.b"));
    }
    case Preset::HocLogReg:
      if (xs.size() != 2 || xs[1] != kNumHocFeatures) {
        throw IncompatibleError("hoc_logreg head expects [B,5] features, got " + ad::shape_str(xs));
      }
      return ad::dense(tape, x, P("fc.w"), P("fc.b"));
    case Preset::MaxLikelihood:
      break;
  }
  throw ConfigError("preset has no network forward pass");
}

template <class T>
ad::Var Network<T>::forward(ad::Tape<T>& tape, ad::Var x) {
  return forward_impl(tape, x, [&](std::size_t i) { return tape.parameter(params_[i]); });
}

template <class T>
ad::Var Network<T>::forward_frozen(ad::Tape<T>& tape, ad::Var x) const {
  return forward_impl(tape, x, [&](std::size_t i) { return tape.constant(params_[i].value); });
}

template <class T>
std::vector<ad::Parameter<T>*> Network<T>::param_ptrs() {
  std::vector<ad::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <class T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <class T>
std::size_t Network<T>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw IncompatibleError("network has no parameter " + std::string(name));
}

template <class T>
ad::Parameter<T>& Network<T>::param(std::string_view name) {
  return params_[index_of(name)];
}

template <class T>
std::vector<NamedArray> Network<T>::export_params() const {
  std::vector<NamedArray> out;
  for (const auto& p : params_) {
    out.push_back({p.name, p.value.shape(), std::vector<float>(p.value.values().begin(), p.value.values().end())});
  }
  return out;
}

template class Network<float>;
template class Network<double>;

}  // namespace advmod
