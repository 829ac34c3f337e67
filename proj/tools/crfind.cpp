/* Copyright 2026 The crfind Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crfind/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"crfind: linear-chain CRFs with likelihood-gain feature induction"};
  app.require_subcommand(1);

  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::size_t> threads;
  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("config", config, "key = value run configuration")->required();
    cmd->add_option("-s,--set", overrides, "override a configuration key (key=value)");
    cmd->add_option("--threads", threads, "worker threads");
  };

  auto* induce = app.add_subcommand("induce", "induce features and train (writes model and round reports)");
  add_run_options(induce);

  auto* train = app.add_subcommand("train", "train weights of a fixed feature set");
  add_run_options(train);
  std::string model_in;
  train->add_option("--model-in", model_in, "start from this model's features and weights");

  auto* tag = app.add_subcommand("tag", "append a predicted-label column to a column file");
  std::string tag_model, tag_input = "-", tag_output = "-";
  tag->add_option("model", tag_model, "model file")->required();
  tag->add_option("input", tag_input, "column file ('-' for stdin)");
  tag->add_option("-o,--output", tag_output, "output file ('-' for stdout)");

  auto* eval = app.add_subcommand("eval", "score predicted labels against gold labels");
  std::string gold, predicted, scheme = "iob2", background = "O,OTHER";
  crfind::EvalOptions eval_opts;
  eval->add_option("gold", gold, "gold column file")->required();
  eval->add_option("predicted", predicted, "predicted column file")->required();
  eval->add_option("--scheme", scheme, "iob2 or runs")->check(CLI::IsMember({"iob2", "runs"}));
  eval->add_option("--gold-column", eval_opts.gold_column, "label column in the gold file (negative: from the end)");
  eval->add_option("--predicted-column", eval_opts.predicted_column,
                   "label column in the predicted file (negative: from the end)");
  eval->add_option("--background", background, "comma-separated background labels for runs mode");

  auto* inspect = app.add_subcommand("inspect", "list model features");
  std::string inspect_model, order = "weight";
  std::size_t top = 20;
  inspect->add_option("model", inspect_model, "model file")->required();
  inspect->add_option("--top", top, "number of features to list");
  inspect->add_option("--sort", order, "weight or index")->check(CLI::IsMember({"weight", "index"}));

  CLI11_PARSE(app, argc, argv);

  if (threads) overrides.push_back("threads=" + std::to_string(*threads));

  if (*induce) return crfind::cmd_induce(config, overrides, std::cout, std::cerr);
  if (*train) {
    std::optional<std::string> in;
    if (!model_in.empty()) in = model_in;
    return crfind::cmd_train(config, overrides, in, std::cout, std::cerr);
  }
  if (*tag) {
    std::ifstream file;
    std::istream* in = &std::cin;
    if (tag_input != "-") {
      file.open(tag_input);
      if (!file) {
        std::cerr << "data error: cannot open '" << tag_input << "'\n";
        return 2;
      }
      in = &file;
    }
    if (tag_output == "-") return crfind::cmd_tag(tag_model, *in, std::cout, std::cerr);
    std::ofstream out(tag_output, std::ios::binary);
    if (!out) {
      std::cerr << "config error: cannot write '" << tag_output << "'\n";
      return 1;
    }
    return crfind::cmd_tag(tag_model, *in, out, std::cerr);
  }
  if (*eval) {
    eval_opts.scheme.mode =
        scheme == "runs" ? crfind::SegmentationMode::kLabelRuns : crfind::SegmentationMode::kIob2;
    eval_opts.scheme.background.clear();
    std::stringstream ss(background);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) eval_opts.scheme.background.insert(item);
    return crfind::cmd_eval(gold, predicted, eval_opts, std::cout, std::cerr);
  }
  if (*inspect) {
    return crfind::cmd_inspect(inspect_model, top,
                               order == "index" ? crfind::InspectOrder::kIndex : crfind::InspectOrder::kWeight,
                               std::cout, std::cerr);
  }
  return 0;
}
