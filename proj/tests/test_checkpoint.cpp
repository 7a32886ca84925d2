#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "hfn/checkpoint.hpp"

using hfn::ModelParams;

namespace {

std::string serialized(const ModelParams<float>& p) {
  std::ostringstream os(std::ios::binary);
  hfn::write_checkpoint(os, p);
  return os.str();
}

ModelParams<float> parse(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return hfn::read_checkpoint(in);
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto dir = testing_support::scratch_dir("ckpt");
  const auto p = hfn::init_params<float>(17);
  hfn::save_checkpoint(p, dir / "m.hfn");
  EXPECT_TRUE(hfn::load_checkpoint(dir / "m.hfn") == p);
}

TEST(Checkpoint, ManifestIsReadableText) {
  const std::string s = serialized(ModelParams<float>::zeros());
  EXPECT_EQ(s.rfind("HFN1\ntensors 20\nencoder.C1.weight f32 16,1,3,3\nencoder.C1.bias f32 16\n", 0), 0u);
}

TEST(Checkpoint, TruncatedFileIsFormatError) {
  const std::string s = serialized(hfn::init_params<float>(1));
  EXPECT_THROW(parse(s.substr(0, s.size() - 3)), hfn::FormatError);
  EXPECT_THROW(parse(s.substr(0, 30)), hfn::FormatError);
  EXPECT_THROW(parse(s + "x"), hfn::FormatError);
  EXPECT_THROW(parse("HFN2" + s.substr(4)), hfn::FormatError);
}

TEST(Checkpoint, WrongChannelCountIsSchemaErrorCitingTable) {
  std::string s = serialized(ModelParams<float>::zeros());
  const std::string from = "encoder.C1.weight f32 16,1,3,3";
  s.replace(s.find(from), from.size(), "encoder.C1.weight f32 8,1,3,3");
  try {
    parse(s);
    FAIL() << "expected schema error";
  } catch (const hfn::SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("1->16"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, UnknownOrMissingTensorIsSchemaError) {
  std::string s = serialized(ModelParams<float>::zeros());
  const std::string from = "decoder.C6.bias";
  s.replace(s.find(from), from.size(), "decoder.C7.bias");
  EXPECT_THROW(parse(s), hfn::SchemaError);
  std::string t = serialized(ModelParams<float>::zeros());
  t.replace(t.find("tensors 20"), 10, "tensors 19");
  EXPECT_THROW(parse(t), hfn::SchemaError);
}
