#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "ssnt/error.hpp"
#include "ssnt/toy_task.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Writes a synthetic copy-with-suffix-rewrite corpus", "make_toy_data"};
  std::string dir;
  std::uint64_t task_seed = 1, seed = 42;
  std::size_t train = 2000, dev = 200, test = 200, unpaired = 10000;
  app.add_option("--out-dir", dir, "Directory to write into")->required();
  app.add_option("--task-seed", task_seed, "Seed of the task definition")->capture_default_str();
  app.add_option("--seed", seed, "Seed of the samples")->capture_default_str();
  app.add_option("--train", train, "Training pairs")->capture_default_str();
  app.add_option("--dev", dev, "Dev pairs")->capture_default_str();
  app.add_option("--test", test, "Test pairs")->capture_default_str();
  app.add_option("--unpaired", unpaired, "Unpaired outputs for the LM")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::printf("%s", app.help().c_str());
    return 0;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n\n%s", e.what(), app.help().c_str());
    return 1;
  }
  try {
    std::filesystem::create_directories(dir);
    ssnt::ToyTaskOptions opts;
    opts.task_seed = task_seed;
    const ssnt::ToyTask task(opts);
    ssnt::Rng rng(seed);
    auto write_pairs = [&](const std::string& name, std::size_t n) {
      const auto pairs = task.sample_pairs(n, rng);
      ssnt::write_lines(dir + "/" + name + ".src", pairs.source);
      ssnt::write_lines(dir + "/" + name + ".tgt", pairs.target);
    };
    write_pairs("train", train);
    write_pairs("dev", dev);
    write_pairs("test", test);
    ssnt::write_lines(dir + "/unpaired.tgt", task.sample_outputs(unpaired, rng));
  } catch (const ssnt::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
