#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "sppnet/errors.hpp"
#include "sppnet/model_io.hpp"

using namespace sppnet;
using namespace sppnet::cascade;

namespace {

ModelFile sample_model() {
  omega::WindowLimits lim;
  lim.target_delta_tau = 16;
  lim.min_sigma = 0.1;
  lim.component = 3;
  ModelFile m;
  m.net = CascadeNet::create(5, 0.5, lim);
  m.region = omega::AcceptanceRegion(0.3, 0.01);
  data::NormalizationState norm;
  norm.columns = {{{400, 700}, {36, 128}, {250.5, 690.25}, {3.1, 5.7}}};
  m.normalization = norm;
  m.provenance = {{"seed", "5"}, {"mode", "parallel"}};
  return m;
}

}  // namespace

TEST(ModelIo, RoundTripIsExact) {
  const auto m = sample_model();
  std::stringstream io;
  write_model(io, m);
  EXPECT_EQ(io.str().rfind(std::string(kModelMagic) + "\n", 0), 0u);
  EXPECT_NE(io.str().find("manifest II IIIa IVa IIIb IVb VI"), std::string::npos);

  const auto back = read_model(io);
  EXPECT_EQ(back.net, m.net);
  EXPECT_EQ(back.net.flatten(), m.net.flatten());
  EXPECT_EQ(back.net.limits().target_delta_tau, 16u);
  EXPECT_EQ(back.net.limits().min_sigma, 0.1);
  EXPECT_EQ(back.net.limits().component, 3u);
  EXPECT_TRUE(back.region.calibrated());
  EXPECT_EQ(back.region.theta_M(), 0.3);
  EXPECT_EQ(back.region.theta_m(), 0.01);
  EXPECT_EQ(back.normalization, m.normalization);
  EXPECT_EQ(back.provenance, m.provenance);
}

TEST(ModelIo, UncalibratedAndUnnormalized) {
  ModelFile m;
  m.net = CascadeNet::create(2);
  std::stringstream io;
  write_model(io, m);
  const auto back = read_model(io);
  EXPECT_FALSE(back.region.calibrated());
  EXPECT_FALSE(back.normalization.has_value());
  EXPECT_EQ(back.net, m.net);
}

TEST(ModelIo, MalformedFiles) {
  std::stringstream good;
  write_model(good, sample_model());
  const std::string text = good.str();

  auto reject = [](const std::string& s) {
    std::istringstream in(s);
    EXPECT_THROW(read_model(in), DataError) << s.substr(0, 60);
  };
  reject("");
  reject("spp-cascadenet-model v2\n");
  reject(text.substr(0, text.size() / 2));
  std::string swapped = text;
  swapped.replace(swapped.find("IIIb IVb"), 8, "IVb IIIb");
  reject(swapped);
  std::string no_end = text.substr(0, text.rfind("end"));
  reject(no_end);
  std::string bad_region = text;
  bad_region.replace(bad_region.find("region 1"), 8, "region 7");
  reject(bad_region);
  std::string bad_component = text;
  bad_component.replace(bad_component.find(" 0.1 3\n"), 7, " 0.1 7\n");
  reject(bad_component);
}

TEST(ModelIo, FiveFieldWindowLineDefaultsToFirstComponent) {
  std::stringstream good;
  write_model(good, sample_model());
  std::string text = good.str();
  text.replace(text.find(" 0.1 3\n"), 7, " 0.1\n");
  std::istringstream in(text);
  EXPECT_EQ(read_model(in).net.limits().component, 0u);
}

TEST(ModelIo, Files) {
  const auto p = std::filesystem::temp_directory_path() / "sppnet_model_io_test.txt";
  save_model(sample_model(), p);
  EXPECT_EQ(load_model(p).net, sample_model().net);
  std::filesystem::remove(p);
  EXPECT_THROW(load_model("/nonexistent/model.txt"), IoError);
  EXPECT_THROW(save_model(sample_model(), "/nonexistent/dir/model.txt"), IoError);
}
