#pragma once

#include <memory>
#include <string>
#include <vector>

#include "advmod/classifiers.hpp"
#include "advmod/dataset.hpp"

namespace advmod::testing {

inline const std::vector<std::string> kFour = {"BPSK", "QPSK", "16QAM", "64QAM"};

struct TrainedFixture {
  std::unique_ptr<Classifier> model;
  std::vector<IQSignal> batch;  // 200 test signals, 50 per class
  std::vector<int> labels;
};

// A briefly trained cnn_small and a stratified test batch, built once per
// process for the statistical cases.
inline const TrainedFixture& trained_cnn() {
  static const TrainedFixture f = [] {
    SynthesisConfig cfg;
    cfg.per_class = 250;
    cfg.seed = 77;
    const auto g = gen_dataset(cfg);
    std::vector<IQSignal> tr;
    for (auto i : g.manifest.split.train) tr.push_back(g.dataset.signal(i));
    TrainHyper hyper;
    hyper.epochs = 3;
    hyper.seed = 2;
    TrainedFixture out;
    out.model = make_classifier(train(make_arch(Preset::CnnSmall, 1024, kFour), tr, {}, hyper));
    const auto& test = g.manifest.split.test;
    for (std::size_t j = 0; j < 200; ++j) {
      out.batch.push_back(g.dataset.signal(test[j * test.size() / 200]));
      out.labels.push_back(*out.batch.back().label);
    }
    return out;
  }();
  return f;
}

}  // namespace advmod::testing
