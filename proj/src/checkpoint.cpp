#include "mmf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "mmf/error.hpp"

namespace mmf {
namespace {

constexpr char kMagic[4] = {'T', 'M', 'L', 'M'};

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}

  template <class U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }

 private:
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  template <class U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::span<const std::uint8_t> take(std::uint64_t n) {
    need(n);
    auto s = in_.subspan(pos_, static_cast<std::size_t>(n));
    pos_ += static_cast<std::size_t>(n);
    return s;
  }
  [[nodiscard]] bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw Error("checkpoint: truncated file");
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

std::size_t kind_width(TensorKind kind) {
  switch (kind) {
    case TensorKind::Real32:
    case TensorKind::Int32:
      return 4;
    case TensorKind::Int16:
      return 2;
    case TensorKind::Int8:
      return 1;
    case TensorKind::Ternary:
      return 0;
  }
  throw Error("checkpoint: unknown tensor kind");
}

std::uint32_t float_bits(float f) { return std::bit_cast<std::uint32_t>(f); }
float bits_float(std::uint32_t u) { return std::bit_cast<float>(u); }

std::vector<std::uint64_t> dims2(std::size_t r, std::size_t c) { return {r, c}; }

void put_linear(Checkpoint& ck, const std::string& name, const BitLinearLayer& layer) {
  if (layer.has_master()) {
    const Matrix& w = layer.master();
    ck.add(TensorRecord::real32(name + ".weight", dims2(w.rows, w.cols), w.data));
  } else {
    ck.add(TensorRecord::ternary(name + ".weight", layer.ternary()));
  }
  ck.add(TensorRecord::real32(name + ".bias", {layer.bias().size()}, layer.bias()));
}

std::vector<float> get_vector(const Checkpoint& ck, const std::string& name, std::size_t n) {
  const TensorRecord& r = ck.find(name);
  if (r.kind != TensorKind::Real32 || r.shape.size() != 1 || r.shape[0] != n) {
    throw Error("checkpoint: tensor " + name + " has the wrong kind or shape");
  }
  return r.as_real32();
}

Matrix get_matrix(const Checkpoint& ck, const std::string& name, std::size_t rows, std::size_t cols) {
  const TensorRecord& r = ck.find(name);
  if (r.kind != TensorKind::Real32 || r.shape != dims2(rows, cols)) {
    throw Error("checkpoint: tensor " + name + " has the wrong kind or shape");
  }
  Matrix m(rows, cols);
  m.data = r.as_real32();
  return m;
}

BitLinearLayer get_linear(const Checkpoint& ck, const std::string& name, std::size_t in, std::size_t out) {
  std::vector<float> bias = get_vector(ck, name + ".bias", out);
  const TensorRecord& w = ck.find(name + ".weight");
  if (w.shape != dims2(in, out)) throw Error("checkpoint: tensor " + name + ".weight has the wrong shape");
  if (w.kind == TensorKind::Ternary) return BitLinearLayer::from_ternary(w.as_ternary(), std::move(bias));
  return BitLinearLayer(get_matrix(ck, name + ".weight", in, out), std::move(bias));
}

}  // namespace

TensorRecord TensorRecord::real32(std::string name, std::vector<std::uint64_t> shape, std::span<const float> values) {
  TensorRecord r{std::move(name), TensorKind::Real32, std::move(shape), {}};
  if (r.element_count() != values.size()) throw Error("checkpoint: value count does not match shape of " + r.name);
  Writer w(r.payload);
  for (float v : values) w.uint(float_bits(v));
  return r;
}

TensorRecord TensorRecord::ternary(std::string name, const TernaryMatrix& m) {
  TensorRecord r{std::move(name), TensorKind::Ternary, dims2(m.rows(), m.cols()), {}};
  Writer w(r.payload);
  w.bytes(m.packed().data(), m.packed().size());
  w.uint(float_bits(m.scale()));
  return r;
}

TensorRecord TensorRecord::integers(std::string name, TensorKind kind, std::vector<std::uint64_t> shape,
                                    std::span<const std::int32_t> values) {
  if (kind == TensorKind::Real32 || kind == TensorKind::Ternary) throw Error("checkpoint: not an integer kind");
  TensorRecord r{std::move(name), kind, std::move(shape), {}};
  if (r.element_count() != values.size()) throw Error("checkpoint: value count does not match shape of " + r.name);
  const std::size_t width = kind_width(kind);
  const std::int64_t hi = (std::int64_t{1} << (8 * width - 1)) - 1;
  Writer w(r.payload);
  for (std::int32_t v : values) {
    if (v > hi || v < -hi - 1) throw Error("checkpoint: value out of range for " + r.name);
    const auto u = static_cast<std::uint32_t>(v);
    for (std::size_t i = 0; i < width; ++i) r.payload.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  return r;
}

std::uint64_t TensorRecord::element_count() const {
  std::uint64_t n = 1;
  for (std::uint64_t d : shape) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / d) throw Error("checkpoint: shape overflow");
    n *= d;
  }
  return n;
}

void TensorRecord::validate() const {
  std::uint64_t expected;
  if (kind == TensorKind::Ternary) {
    if (shape.size() != 2) throw Error("checkpoint: ternary tensor " + name + " must be rank 2");
    expected = shape[0] * TernaryMatrix::row_stride(static_cast<std::size_t>(shape[1])) + 4;
  } else {
    expected = element_count() * kind_width(kind);
  }
  if (payload.size() != expected) throw Error("checkpoint: payload size mismatch for " + name);
}

std::vector<float> TensorRecord::as_real32() const {
  if (kind != TensorKind::Real32) throw Error("checkpoint: " + name + " is not real32");
  Reader r(payload);
  std::vector<float> out(static_cast<std::size_t>(element_count()));
  for (float& v : out) v = bits_float(r.uint<std::uint32_t>());
  return out;
}

TernaryMatrix TensorRecord::as_ternary() const {
  if (kind != TensorKind::Ternary) throw Error("checkpoint: " + name + " is not ternary");
  validate();
  const std::size_t codes = payload.size() - 4;
  std::vector<std::uint8_t> packed(payload.begin(), payload.begin() + static_cast<std::ptrdiff_t>(codes));
  Reader r(std::span<const std::uint8_t>(payload).subspan(codes));
  const float scale = bits_float(r.uint<std::uint32_t>());
  return TernaryMatrix::from_packed(static_cast<std::size_t>(shape[0]), static_cast<std::size_t>(shape[1]),
                                    std::move(packed), scale);
}

std::vector<std::int32_t> TensorRecord::as_integers() const {
  if (kind == TensorKind::Real32 || kind == TensorKind::Ternary) throw Error("checkpoint: " + name + " is not integer");
  const std::size_t width = kind_width(kind);
  std::vector<std::int32_t> out(static_cast<std::size_t>(element_count()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (std::size_t b = 0; b < width; ++b) u |= static_cast<std::uint32_t>(payload[i * width + b]) << (8 * b);
    if (width < 4 && (u >> (8 * width - 1)) != 0) u |= ~std::uint32_t{0} << (8 * width);  // sign extend
    out[i] = static_cast<std::int32_t>(u);
  }
  return out;
}

void Checkpoint::add(TensorRecord record) {
  record.validate();
  if (try_find(record.name)) throw Error("checkpoint: duplicate tensor " + record.name);
  records.push_back(std::move(record));
}

const TensorRecord* Checkpoint::try_find(const std::string& name) const {
  for (const TensorRecord& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

const TensorRecord& Checkpoint::find(const std::string& name) const {
  const TensorRecord* r = try_find(name);
  if (!r) throw Error("checkpoint: missing tensor " + name);
  return *r;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ck) {
  std::vector<std::uint8_t> out;
  Writer w(out);
  w.bytes(kMagic, 4);
  w.uint(kCheckpointVersion);
  w.uint(ck.config.layers);
  w.uint(ck.config.width);
  w.uint(ck.config.glu_width);
  w.uint(ck.config.vocab);
  w.uint(ck.config.seed);
  w.uint(ck.flags);
  w.uint(static_cast<std::uint32_t>(ck.records.size()));
  for (const TensorRecord& r : ck.records) {
    r.validate();
    if (r.name.size() > std::numeric_limits<std::uint16_t>::max()) throw Error("checkpoint: tensor name too long");
    if (r.shape.size() > 255) throw Error("checkpoint: tensor rank too large");
    w.uint(static_cast<std::uint16_t>(r.name.size()));
    w.bytes(r.name.data(), r.name.size());
    w.uint(static_cast<std::uint8_t>(r.kind));
    w.uint(static_cast<std::uint8_t>(r.shape.size()));
    for (std::uint64_t d : r.shape) w.uint(d);
    w.uint(static_cast<std::uint64_t>(r.payload.size()));
    w.bytes(r.payload.data(), r.payload.size());
  }
  return out;
}

Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) throw Error("checkpoint: bad magic");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.config.layers = r.uint<std::uint32_t>();
  ck.config.width = r.uint<std::uint32_t>();
  ck.config.glu_width = r.uint<std::uint32_t>();
  ck.config.vocab = r.uint<std::uint32_t>();
  ck.config.seed = r.uint<std::uint64_t>();
  ck.flags = r.uint<std::uint32_t>();
  ck.config.forget_floor = (ck.flags & checkpoint_flags::kForgetFloor) != 0;
  const auto count = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord rec;
    const auto name_len = r.uint<std::uint16_t>();
    const auto name = r.take(name_len);
    rec.name.assign(name.begin(), name.end());
    const auto kind = r.uint<std::uint8_t>();
    if (kind > static_cast<std::uint8_t>(TensorKind::Int32)) throw Error("checkpoint: unknown tensor kind");
    rec.kind = static_cast<TensorKind>(kind);
    const auto rank = r.uint<std::uint8_t>();
    rec.shape.resize(rank);
    for (auto& d : rec.shape) d = r.uint<std::uint64_t>();
    const auto len = r.uint<std::uint64_t>();
    const auto payload = r.take(len);
    rec.payload.assign(payload.begin(), payload.end());
    ck.add(std::move(rec));
  }
  if (!r.done()) throw Error("checkpoint: trailing bytes");
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = serialize(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Checkpoint to_checkpoint(const Model& model) {
  Checkpoint ck;
  ck.config = model.config;
  ck.flags = model.config.forget_floor ? checkpoint_flags::kForgetFloor : 0;
  auto& m = const_cast<Model&>(model);
  ck.add(TensorRecord::real32("embed", dims2(m.embed.rows, m.embed.cols), m.embed.data));
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const Block& b = m.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    ck.add(TensorRecord::real32(p + "norm1", {b.norm1.size()}, b.norm1));
    ck.add(TensorRecord::real32(p + "norm2", {b.norm2.size()}, b.norm2));
  }
  for (const NamedLinear& nl : linear_layers(m)) put_linear(ck, nl.name, *nl.layer);
  ck.add(TensorRecord::real32("final_norm", {m.final_norm.size()}, m.final_norm));
  ck.add(TensorRecord::real32("unembed", dims2(m.unembed.rows, m.unembed.cols), m.unembed.data));
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  if (ck.flags & checkpoint_flags::kActBitsMask) throw Error("checkpoint: fixed-point checkpoint given where a float model was expected");
  ck.config.validate();
  const std::size_t d = ck.config.width, l = ck.config.glu_width, v = ck.config.vocab;
  Model m;
  m.config = ck.config;
  m.embed = get_matrix(ck, "embed", v, d);
  m.blocks.resize(ck.config.layers);
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    Block& b = m.blocks[i];
    const std::string p = "blocks." + std::to_string(i) + ".";
    b.norm1 = get_vector(ck, p + "norm1", d);
    b.norm2 = get_vector(ck, p + "norm2", d);
    b.mixer.proj_f = get_linear(ck, p + "mixer.f", d, d);
    b.mixer.proj_c = get_linear(ck, p + "mixer.c", d, d);
    b.mixer.proj_g = get_linear(ck, p + "mixer.g", d, d);
    b.mixer.proj_o = get_linear(ck, p + "mixer.o", d, d);
    b.mixer.forget_floor =
        ck.config.forget_floor ? static_cast<float>(i) / static_cast<float>(ck.config.layers) : 0.0f;
    b.channel.proj_g = get_linear(ck, p + "glu.g", d, l);
    b.channel.proj_u = get_linear(ck, p + "glu.u", d, l);
    b.channel.proj_d = get_linear(ck, p + "glu.d", l, d);
  }
  m.final_norm = get_vector(ck, "final_norm", d);
  m.unembed = get_matrix(ck, "unembed", d, v);
  return m;
}

void save_model(const std::filesystem::path& path, const Model& model) { write_checkpoint(path, to_checkpoint(model)); }

Model load_model(const std::filesystem::path& path) { return model_from_checkpoint(read_checkpoint(path)); }

}  // namespace mmf
