#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "deconvparse/config.hpp"
#include "deconvparse/errors.hpp"

using namespace deconvparse;

TEST_CASE("grid keys map directly onto the patch grid") {
  const RunConfig cfg = RunConfig::parse("patches_m=4\npatches_n=4\n");
  const NetworkConfig nc = cfg.network_config();
  CHECK(nc.grid_m == 4);
  CHECK(nc.grid_n == 4);
}

TEST_CASE("dropout_fc is the fully-connected drop probability") {
  const RunConfig cfg = RunConfig::parse("dropout_fc=0.6975\n");
  CHECK(cfg.get_double("dropout_fc") == doctest::Approx(0.6975));
  CHECK(cfg.network_config().dropout.fc == doctest::Approx(0.6975));
}

TEST_CASE("unknown keys are rejected by name and line") {
  try {
    RunConfig::parse("classes=5\nbogus_key=1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus_key") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
}

TEST_CASE("malformed values name the key") {
  const RunConfig cfg = RunConfig::parse("classes=banana\n");
  CHECK_THROWS_WITH_AS(cfg.get_int("classes"),
                       doctest::Contains("classes"), ConfigError);
  const RunConfig cfg2 = RunConfig::parse("lr_conv=fast\n");
  CHECK_THROWS_AS(cfg2.network_config(), ConfigError);
}

TEST_CASE("missing required keys are reported") {
  const RunConfig cfg = RunConfig::parse("");
  CHECK_THROWS_WITH_AS(cfg.require("data_dir"),
                       doctest::Contains("data_dir"), ConfigError);
  CHECK_THROWS_AS(cfg.get_string("model_file"), ConfigError);
  // keys with defaults do not need to be present
  cfg.require("classes");
  CHECK(cfg.get_int("classes") == 5);
}

TEST_CASE("comments and blank lines are ignored") {
  const RunConfig cfg = RunConfig::parse(
      "# a comment\n"
      "\n"
      "classes = 7   # trailing comment\n"
      "  seed=9  \n");
  CHECK(cfg.get_int("classes") == 7);
  CHECK(cfg.get_int("seed") == 9);
}

TEST_CASE("defaults assemble the reference architecture") {
  const RunConfig cfg = RunConfig::parse("");
  const NetworkConfig nc = cfg.network_config();
  CHECK(nc.conv_stages.size() == 2);
  CHECK(nc.deconv_layers.size() == 3);
  CHECK(nc.classes == 5);
  CHECK(nc.image_h == 64);
  CHECK(nc.deconv_layers[2].pool.depth == 2);
  CHECK(nc.deconv_layers[2].pool.h == 2);
  CHECK(nc.dropout.input == doctest::Approx(0.2));
  CHECK(nc.dropout.hidden == doctest::Approx(0.5));
  CHECK(nc.epochs_conv == 5);
  CHECK(nc.ista_train_iters == 20);
  CHECK(nc.ista_eval_iters == 40);
  CHECK(nc.balance_classes);
  CHECK(nc.trunk_shared);
  CHECK(nc.deconv_target == DeconvTarget::conv_features);
}

TEST_CASE("list keys parse and must agree in length") {
  const RunConfig cfg = RunConfig::parse(
      "conv_maps=8,16\nconv_kernels=5,3\nconv_pools=2,2\n");
  const NetworkConfig nc = cfg.network_config();
  CHECK(nc.conv_stages[0].maps == 8);
  CHECK(nc.conv_stages[1].kernel == 3);

  const RunConfig bad = RunConfig::parse("conv_maps=8\nconv_kernels=5,3\n");
  CHECK_THROWS_AS(bad.network_config(), ConfigError);
}

TEST_CASE("enumerated values are validated") {
  CHECK_THROWS_AS(RunConfig::parse("head_mode=linear\n").network_config(),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("deconv_target=maybe\n").network_config(),
                  ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("balance_classes=yes\n").get_bool(
                      "balance_classes"),
                  ConfigError);
  CHECK(RunConfig::parse("deconv_target=image\n").network_config()
            .deconv_target == DeconvTarget::raw_image);
}

TEST_CASE("line without equals sign is an error") {
  CHECK_THROWS_AS(RunConfig::parse("classes\n"), ConfigError);
}
