//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "canondiff/checkpoint.h"
#include "canondiff/cli.h"
#include "canondiff/errors.h"

namespace canondiff {
namespace {

RunConfig small_config(Variant v) {
  RunConfig c = default_run_config();
  c.variant = v;
  c.seed = 4;
  c.diffusion.seed = 4;
  c.diffusion.T = 32;
  c.diffusion.batch_size = 8;
  c.data_count = 40;
  c.denoiser.layers = 2;
  c.denoiser.hidden = 16;
  c.canonicalizer.layers = 2;
  c.canonicalizer.hidden = 8;
  c.edm_layers = 2;
  return c;
}

std::vector<const ad::Tensor *> all_tensors(const Model &m) {
  std::vector<const ad::Tensor *> out = m.denoiser->params().const_pointers();
  if (m.canonicalizer.has_net())
    for (const ad::Tensor *t: m.canonicalizer.net().params().const_pointers())
      out.push_back(t);
  return out;
}

bool same_params(const Model &a, const Model &b) {
  const auto pa = all_tensors(a), pb = all_tensors(b);
  if (pa.size() != pb.size())
    return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(*pa[i] == *pb[i]))
      return false;
  return true;
}

TEST(Checkpoint, ByteExactRoundTrip) {
  const RunConfig c = small_config(Variant::kCanonGdm);
  Model m = make_model(c);
  const std::vector<PointCloud> data = training_set(c);
  Trainer trainer(c.diffusion, m.canonicalizer, *m.denoiser, data);
  TrainProgress p;
  for (int i = 0; i < 3; ++i)
    p.losses.push_back(trainer.step());
  const std::string bytes = serialize(make_checkpoint(c, m, &trainer, &p));
  const Checkpoint back = deserialize(bytes);
  EXPECT_EQ(serialize(back), bytes);
  EXPECT_EQ(back.at("adam/step").i64[0], 3);
  EXPECT_EQ(back.at("rng/step").i64[0], 3);
  EXPECT_EQ(back.at("train/losses").f64, p.losses);
  EXPECT_NE(back.find("canonicalizer/canon.embed.weight"), nullptr);
  EXPECT_NE(back.find("ema/canonicalizer/canon.embed.weight"), nullptr);
  EXPECT_EQ(back.find("nothing"), nullptr);
  EXPECT_THROW(back.at("nothing"), ContractViolation);
}

// Forward passes of the restored model equal the saved one bit for bit.
TEST(Checkpoint, ReloadReproducesForwardPasses) {
  for (Variant v: { Variant::kGdm, Variant::kEdmLite, Variant::kCanonGdm,
                    Variant::kCanonFrGdm }) {
    const RunConfig c = small_config(v);
    Model m = make_model(c);
    const std::vector<PointCloud> data = training_set(c);
    Trainer trainer(c.diffusion, m.canonicalizer, *m.denoiser, data);
    trainer.step();
    const Model back = restore_model(deserialize(serialize(make_checkpoint(c, m))));
    EXPECT_TRUE(same_params(m, back));
    const PointCloud &x = data[0];
    EXPECT_EQ(denoiser_forward(*m.denoiser, x, 7),
              denoiser_forward(*back.denoiser, x, 7));
    if (m.canonicalizer.has_net()) {
      const auto a = canonicalizer_forward(m.canonicalizer.net(), x);
      const auto b = canonicalizer_forward(back.canonicalizer.net(), x);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t k = 0; k < a.size(); ++k)
        EXPECT_EQ(a[k], b[k]);
    }
  }
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const RunConfig c = small_config(Variant::kCanonGdm);
  const std::vector<PointCloud> data = training_set(c);

  Model full = make_model(c);
  Trainer t_full(c.diffusion, full.canonicalizer, *full.denoiser, data);
  for (int i = 0; i < 12; ++i)
    t_full.step();

  Model first = make_model(c);
  Trainer t_first(c.diffusion, first.canonicalizer, *first.denoiser, data);
  TrainProgress p;
  for (int i = 0; i < 6; ++i)
    p.losses.push_back(t_first.step());
  const Checkpoint ck =
      deserialize(serialize(make_checkpoint(c, first, &t_first, &p)));

  Model resumed = restore_model(ck);
  Trainer t_resumed(c.diffusion, resumed.canonicalizer, *resumed.denoiser, data);
  const TrainProgress got = restore_trainer(ck, t_resumed);
  EXPECT_EQ(got.step, 6);
  EXPECT_EQ(got.losses, p.losses);
  for (int i = 0; i < 6; ++i)
    t_resumed.step();
  EXPECT_TRUE(same_params(full, resumed));
  EXPECT_EQ(t_full.ema().shadow, t_resumed.ema().shadow);

  // EMA weights replace exactly the trainable parameters.
  Model ema = restore_model(ck);
  apply_ema(ck, ema);
  EXPECT_EQ(ema.denoiser->params()[0], t_first.ema().shadow[0]);
}

TEST(Checkpoint, RejectsUnknownVersionAndCorruption) {
  const RunConfig c = small_config(Variant::kGdm);
  const std::string bytes = serialize(make_checkpoint(c, make_model(c)));
  std::string v2 = bytes;
  v2[8] = 2;
  EXPECT_THROW(deserialize(v2), ContractViolation);
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(deserialize(magic), ParseError);
  EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 1)), ParseError);
  EXPECT_THROW(deserialize(bytes + "x"), ParseError);
  EXPECT_THROW(deserialize(""), ParseError);

  // Little-endian header: version 1 right after the magic.
  EXPECT_EQ(bytes.substr(0, 6), "CDCKPT");
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[9], 0);

  // A checkpoint of a different architecture does not load.
  Checkpoint other = deserialize(bytes);
  RunConfig wide = c;
  wide.denoiser.hidden = 24;
  other.config_json = to_json(wide);
  EXPECT_THROW(restore_model(other), ContractViolation);
}

TEST(Checkpoint, IntegerAndEmptyBlocks) {
  Checkpoint c;
  c.config_json = "{}";
  Block a;
  a.name = "a";
  a.type = BlockType::kI64;
  a.dims = { 2 };
  a.i64 = { -1, 1ll << 40 };
  Block e;
  e.name = "empty";
  e.dims = { 0 };
  c.blocks = { a, e };
  const Checkpoint back = deserialize(serialize(c));
  EXPECT_EQ(back.at("a").i64, a.i64);
  EXPECT_TRUE(back.at("empty").f64.empty());
  Block bad = a;
  bad.i64.pop_back();
  c.blocks = { bad };
  EXPECT_THROW(serialize(c), ContractViolation);
}

}  // namespace
}  // namespace canondiff
