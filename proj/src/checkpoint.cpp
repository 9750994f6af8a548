//
// Project canondiff - Copyright 2026 The canondiff Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "canondiff/checkpoint.h"

#include <bit>
#include <type_traits>

#include "canondiff/errors.h"

namespace canondiff {

namespace {

constexpr char kMagic[8] = { 'C', 'D', 'C', 'K', 'P', 'T', 0, 0 };

template<class T>
void put(std::string &out, T v) {
  using U = std::make_unsigned_t<T>;
  U u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>(u & 0xff));
    u = static_cast<U>(u >> 8);
  }
}

class Cursor {
public:
  explicit Cursor(std::string_view bytes): bytes_(bytes) { }

  template<class T>
  T get() {
    need(sizeof(T));
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      u |= static_cast<std::make_unsigned_t<T>>(
               static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string_view take(std::size_t n) {
    need(n);
    std::string_view s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  [[noreturn]] void fail(const std::string &what) const {
    throw ParseError("checkpoint: " + what, pos_);
  }

private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_)
      fail("truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

Block tensor_block(std::string name, const ad::Tensor &t) {
  Block b;
  b.name = std::move(name);
  b.dims = { t.rows(), t.cols() };
  b.f64.assign(t.data(), t.data() + t.size());
  return b;
}

Block int_block(std::string name, std::int64_t v) {
  Block b;
  b.name = std::move(name);
  b.type = BlockType::kI64;
  b.dims = { 1 };
  b.i64 = { v };
  return b;
}

ad::Tensor block_tensor(const Block &b, const ad::Tensor &like) {
  if (b.type != BlockType::kF64 || b.dims.size() != 2 || b.dims[0] != like.rows()
      || b.dims[1] != like.cols())
    throw ContractViolation("checkpoint block '" + b.name
                            + "' does not match the model's shape");
  return ad::Tensor(like.rows(), like.cols(), b.f64);
}

std::int64_t block_int(const Block &b) {
  if (b.type != BlockType::kI64 || b.i64.size() != 1)
    throw ContractViolation("checkpoint block '" + b.name
                            + "' is not an integer");
  return b.i64[0];
}

struct Named {
  std::string name;
  ad::Tensor *tensor;
};

// Every parameter of the model, denoiser first.
std::vector<Named> all_params(Model &m) {
  std::vector<Named> out;
  ParameterSet &d = m.denoiser->params();
  for (std::size_t i = 0; i < d.size(); ++i)
    out.push_back({ "denoiser/" + d.name(i), &d[i] });
  if (m.canonicalizer.has_net()) {
    ParameterSet &h = m.canonicalizer.net().params();
    for (std::size_t i = 0; i < h.size(); ++i)
      out.push_back({ "canonicalizer/" + h.name(i), &h[i] });
  }
  return out;
}

// Names in Trainer::trainable() order.
std::vector<Named> trainable_params(Model &m) {
  std::vector<Named> all = all_params(m);
  if (!m.canonicalizer.trainable())
    all.resize(m.denoiser->params().size());
  return all;
}

}  // namespace

std::size_t Block::count() const {
  std::size_t n = 1;
  for (std::uint64_t d: dims)
    n *= d;
  return n;
}

const Block *Checkpoint::find(std::string_view name) const {
  for (const Block &b: blocks)
    if (b.name == name)
      return &b;
  return nullptr;
}

const Block &Checkpoint::at(std::string_view name) const {
  if (const Block *b = find(name))
    return *b;
  throw ContractViolation("checkpoint has no block '" + std::string(name) + "'");
}

std::string serialize(const Checkpoint &c) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, c.version);
  put<std::uint64_t>(out, c.config_json.size());
  out += c.config_json;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.blocks.size()));
  std::uint64_t offset = 0;
  for (const Block &b: c.blocks) {
    const std::size_t have =
        b.type == BlockType::kF64 ? b.f64.size() : b.i64.size();
    if (have != b.count() || b.name.size() > 0xffff || b.dims.size() > 0xff)
      throw ContractViolation("checkpoint block '" + b.name + "' is malformed");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(b.name.size()));
    out += b.name;
    out.push_back(static_cast<char>(b.type));
    out.push_back(static_cast<char>(b.dims.size()));
    for (std::uint64_t d: b.dims)
      put<std::uint64_t>(out, d);
    put<std::uint64_t>(out, offset);
    offset += 8 * b.count();
  }
  for (const Block &b: c.blocks) {
    if (b.type == BlockType::kF64)
      for (double v: b.f64)
        put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    else
      for (std::int64_t v: b.i64)
        put<std::int64_t>(out, v);
  }
  return out;
}

Checkpoint deserialize(std::string_view bytes) {
  Cursor in(bytes);
  if (in.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic)))
    in.fail("bad magic");
  Checkpoint c;
  c.version = in.get<std::uint32_t>();
  if (c.version != kCheckpointVersion)
    throw ContractViolation("unsupported checkpoint version "
                            + std::to_string(c.version));
  const std::uint64_t config_len = in.get<std::uint64_t>();
  if (config_len > in.remaining())
    in.fail("truncated");
  c.config_json = std::string(in.take(config_len));
  const std::uint32_t n = in.get<std::uint32_t>();
  std::vector<std::uint64_t> offsets;
  for (std::uint32_t i = 0; i < n; ++i) {
    Block b;
    b.name = std::string(in.take(in.get<std::uint16_t>()));
    const std::uint8_t type = in.get<std::uint8_t>();
    if (type > 1)
      in.fail("unknown block type");
    b.type = static_cast<BlockType>(type);
    const std::uint8_t rank = in.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) {
      b.dims.push_back(in.get<std::uint64_t>());
      if (b.dims.back() > in.remaining())
        in.fail("block dimension exceeds file size");
    }
    offsets.push_back(in.get<std::uint64_t>());
    c.blocks.push_back(std::move(b));
  }
  std::uint64_t expect = 0;
  for (std::size_t i = 0; i < c.blocks.size(); ++i) {
    Block &b = c.blocks[i];
    if (offsets[i] != expect)
      in.fail("block '" + b.name + "' has a bad offset");
    const std::size_t count = b.count();
    if (count > in.remaining() / 8)
      in.fail("truncated");
    for (std::size_t k = 0; k < count; ++k) {
      if (b.type == BlockType::kF64)
        b.f64.push_back(std::bit_cast<double>(in.get<std::uint64_t>()));
      else
        b.i64.push_back(in.get<std::int64_t>());
    }
    expect += 8 * count;
  }
  if (in.remaining())
    in.fail("trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &c) {
  write_file(path, serialize(c));
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  return deserialize(read_file(path));
}

Checkpoint make_checkpoint(const RunConfig &config, const Model &model,
                           const Trainer *trainer,
                           const TrainProgress *progress) {
  Checkpoint c;
  c.config_json = to_json(config);
  Model &m = const_cast<Model &>(model);
  for (const Named &p: all_params(m))
    c.blocks.push_back(tensor_block(p.name, *p.tensor));
  if (trainer) {
    const std::vector<Named> names = trainable_params(m);
    const AdamState &adam = trainer->adam();
    const EmaState &ema = trainer->ema();
    if (adam.m.size() != names.size() || ema.shadow.size() != names.size())
      throw ContractViolation("trainer does not wrap this model");
    for (std::size_t i = 0; i < names.size(); ++i)
      c.blocks.push_back(tensor_block("ema/" + names[i].name, ema.shadow[i]));
    for (std::size_t i = 0; i < names.size(); ++i)
      c.blocks.push_back(tensor_block("adam/m/" + names[i].name, adam.m[i]));
    for (std::size_t i = 0; i < names.size(); ++i)
      c.blocks.push_back(tensor_block("adam/v/" + names[i].name, adam.v[i]));
    c.blocks.push_back(int_block("adam/step", adam.step));
    // Batch draws are keyed by step, so the step is the whole RNG state.
    c.blocks.push_back(int_block("rng/step", trainer->steps_done()));
    c.blocks.push_back(int_block("train/skipped",
                                 static_cast<std::int64_t>(trainer->skipped())));
    Block losses;
    losses.name = "train/losses";
    if (progress)
      losses.f64 = progress->losses;
    losses.dims = { losses.f64.size() };
    c.blocks.push_back(std::move(losses));
  }
  return c;
}

Model restore_model(const Checkpoint &c) {
  const RunConfig config = run_config_from_json(c.config_json);
  Model m = make_model(config);
  for (const Named &p: all_params(m))
    *p.tensor = block_tensor(c.at(p.name), *p.tensor);
  return m;
}

TrainProgress restore_trainer(const Checkpoint &c, Trainer &trainer) {
  const RunConfig config = run_config_from_json(c.config_json);
  Model probe = make_model(config);
  const std::vector<Named> names = trainable_params(probe);
  const std::vector<ad::Tensor *> live = trainer.trainable();
  if (live.size() != names.size())
    throw ContractViolation("trainer does not match the checkpoint's model");
  AdamState adam = trainer.adam();
  EmaState ema = trainer.ema();
  for (std::size_t i = 0; i < names.size(); ++i) {
    ema.shadow[i] = block_tensor(c.at("ema/" + names[i].name), *live[i]);
    adam.m[i] = block_tensor(c.at("adam/m/" + names[i].name), *live[i]);
    adam.v[i] = block_tensor(c.at("adam/v/" + names[i].name), *live[i]);
  }
  adam.step = block_int(c.at("adam/step"));
  TrainProgress p;
  p.step = block_int(c.at("rng/step"));
  const std::int64_t skipped = block_int(c.at("train/skipped"));
  if (skipped < 0)
    throw ContractViolation("checkpoint has a negative skip count");
  p.skipped = static_cast<std::size_t>(skipped);
  p.losses = c.at("train/losses").f64;
  trainer.restore(p.step, p.skipped, std::move(adam), std::move(ema));
  return p;
}

void apply_ema(const Checkpoint &c, Model &model) {
  for (const Named &p: trainable_params(model))
    if (const Block *b = c.find("ema/" + p.name))
      *p.tensor = block_tensor(*b, *p.tensor);
}

}  // namespace canondiff
