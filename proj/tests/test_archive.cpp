#include <gtest/gtest.h>

#include <torch/torch.h>

#include "cvhct/archive.hpp"
#include "cvhct/errors.hpp"
#include "cvhct/generator.hpp"
#include "oracles.hpp"

using namespace cvhct;

TEST(Archive, RoundTripKeepsTensorsBytesAndMeta) {
  torch::manual_seed(1);
  TensorArchive ar;
  ar.meta()["kind"] = "test";
  const auto t = torch::randn({3, 4, 5});
  ar.put("w", t);
  ar.put("scalar", torch::tensor(2.5f));
  ar.put_bytes("blob", {1, 2, 3});
  const auto back = TensorArchive::decode(ar.encode());
  EXPECT_TRUE(torch::equal(back.tensor("w"), t));
  EXPECT_EQ(back.tensor("scalar").item<float>(), 2.5f);
  EXPECT_EQ(back.bytes("blob"), (std::vector<std::uint8_t>{1, 2, 3}));
  EXPECT_EQ(back.meta()["kind"], "test");
  EXPECT_EQ(back.names(), (std::vector<std::string>{"w", "scalar", "blob"}));
  EXPECT_THROW(back.tensor("blob"), FormatError);
  EXPECT_THROW(back.tensor("missing"), FormatError);
}

TEST(Archive, CorruptionIsDetected) {
  TensorArchive ar;
  ar.put("w", torch::ones({8}));
  auto bytes = ar.encode();
  auto bad_magic = bytes;
  bad_magic[0] = 'Z';
  EXPECT_THROW(TensorArchive::decode(bad_magic), FormatError);
  auto truncated = bytes;
  truncated.resize(truncated.size() - 4);
  EXPECT_ANY_THROW(TensorArchive::decode(truncated));
  EXPECT_ANY_THROW(TensorArchive::decode({'C', 'V'}));
}

TEST(Archive, FileRoundTrip) {
  oracle::TempDir dir("archive");
  TensorArchive ar;
  ar.put("x", torch::arange(6, torch::kFloat).reshape({2, 3}));
  ar.save(dir.path() / "a.cvhc");
  EXPECT_TRUE(torch::equal(TensorArchive::load(dir.path() / "a.cvhc").tensor("x"), ar.tensor("x")));
  EXPECT_THROW(TensorArchive::load(dir.path() / "none.cvhc"), IoError);
}

TEST(Archive, ModuleRoundTripAndShapeCheck) {
  torch::manual_seed(2);
  GeneratorConfig cfg;
  cfg.filters = 8;
  Generator a(cfg), b(cfg);
  TensorArchive ar;
  save_module(ar, "g", *a);
  load_module(ar, "g", *b);
  auto pb = b->named_parameters();
  for (const auto& p : a->named_parameters()) EXPECT_TRUE(torch::equal(p.value(), pb[p.key()])) << p.key();

  cfg.filters = 16;
  Generator wider(cfg);
  EXPECT_THROW(load_module(ar, "g", *wider), FormatError);
  EXPECT_THROW(load_module(ar, "other", *b), FormatError);
}
