#include "s4drc/weights_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

namespace s4drc::weights_io {

namespace {

using nlohmann::json;

constexpr std::uint8_t kMagic[4] = {'S', '4', 'D', 'C'};
constexpr std::size_t kHeaderSize = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
  return v;
}

const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "c64"; }

[[noreturn]] void corrupt(const std::string& what) {
  throw Error(ErrorCode::CorruptManifest, what);
}

std::string block_prefix(std::size_t i) { return "blocks." + std::to_string(i) + "."; }

Tensor make_tensor(std::string name, std::vector<std::int64_t> shape, const Matrix<float>& m) {
  Tensor t{std::move(name), std::move(shape), DType::F32, {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) t.data.push_back(m(i, j));
  return t;
}

Tensor make_vector(std::string name, const Vector<float>& v) {
  Tensor t{std::move(name), {static_cast<std::int64_t>(v.size())}, DType::F32, {}};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

Tensor make_complex(std::string name, const ModeMatrix<float>& m) {
  Tensor t{std::move(name), {m.rows(), m.cols()}, DType::C64, {}};
  t.data.reserve(static_cast<std::size_t>(2 * m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      t.data.push_back(m(i, j).real());
      t.data.push_back(m(i, j).imag());
    }
  }
  return t;
}

class TensorTable {
 public:
  explicit TensorTable(const std::vector<Tensor>& tensors) {
    for (const auto& t : tensors) {
      if (!by_name_.emplace(t.name, &t).second) corrupt("duplicate tensor '" + t.name + "'");
    }
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  const Tensor& get(const std::string& name, const std::vector<std::int64_t>& shape, DType dtype) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw Error(ErrorCode::MissingTensor, "missing tensor '" + name + "'");
    const Tensor& t = *it->second;
    if (t.shape != shape || t.dtype != dtype) {
      throw Error(ErrorCode::ShapeMismatch, "tensor '" + name + "' has unexpected shape or dtype");
    }
    used_.insert(name);
    return t;
  }

  Matrix<float> matrix(const std::string& name, Index rows, Index cols) {
    const Tensor& t = get(name, {rows, cols}, DType::F32);
    Matrix<float> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = t.data[static_cast<std::size_t>(i * cols + j)];
    return m;
  }

  Vector<float> vector(const std::string& name, Index n) {
    const Tensor& t = get(name, {n}, DType::F32);
    return Eigen::Map<const Vector<float>>(t.data.data(), n);
  }

  ModeMatrix<float> complex(const std::string& name, Index rows, Index cols) {
    const Tensor& t = get(name, {rows, cols}, DType::C64);
    ModeMatrix<float> m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        const auto k = static_cast<std::size_t>(2 * (i * cols + j));
        m(i, j) = {t.data[k], t.data[k + 1]};
      }
    }
    return m;
  }

  void require_all_used() const {
    for (const auto& [name, _] : by_name_) {
      if (!used_.count(name)) corrupt("unexpected tensor '" + name + "'");
    }
  }

 private:
  std::map<std::string, const Tensor*> by_name_;
  std::set<std::string> used_;
};

bool close(float a, float b) {
  return std::abs(static_cast<double>(a) - static_cast<double>(b)) <=
         1e-5 * std::max(1.0, std::abs(static_cast<double>(a)));
}

}  // namespace

std::int64_t Tensor::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<std::uint8_t> write_container(const Container& container) {
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& t : container.tensors) {
    const std::uint64_t length = t.data.size() * sizeof(float);
    index.push_back({{"name", t.name},
                     {"shape", t.shape},
                     {"dtype", dtype_name(t.dtype)},
                     {"offset", offset},
                     {"length", length}});
    offset += length;
  }
  const json manifest = {{"config", container.config}, {"tensors", index}};
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + text.size() + offset);
  for (std::uint8_t b : kMagic) out.push_back(b);
  put_u32(out, kVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : container.tensors) {
    for (float f : t.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Container read_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, "not an S4DC weight container");
  }
  if (bytes.size() < kHeaderSize) corrupt("header truncated");
  const auto version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (version != kVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "container version " + std::to_string(version));
  }
  const std::uint64_t manifest_len = get_le(bytes, 8, 8);
  if (manifest_len > bytes.size() - kHeaderSize) corrupt("manifest runs past end of file");

  json manifest;
  try {
    const auto* begin = reinterpret_cast<const char*>(bytes.data() + kHeaderSize);
    manifest = json::parse(begin, begin + manifest_len);
  } catch (const json::exception& e) {
    corrupt(std::string("manifest is not valid JSON: ") + e.what());
  }

  const auto payload = bytes.subspan(kHeaderSize + manifest_len);
  Container out;
  try {
    if (!manifest.is_object() || !manifest.contains("config") || !manifest.contains("tensors") ||
        !manifest["tensors"].is_array()) {
      corrupt("manifest needs 'config' and 'tensors'");
    }
    out.config = manifest["config"];
    for (const auto& entry : manifest["tensors"]) {
      Tensor t;
      t.name = entry.at("name").get<std::string>();
      t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
      const auto dtype = entry.at("dtype").get<std::string>();
      if (dtype == "f32") {
        t.dtype = DType::F32;
      } else if (dtype == "c64") {
        t.dtype = DType::C64;
      } else {
        corrupt("tensor '" + t.name + "' has unknown dtype '" + dtype + "'");
      }
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto length = entry.at("length").get<std::uint64_t>();
      // Bound the running product by the payload size so corrupt shapes cannot overflow.
      std::uint64_t floats = t.dtype == DType::C64 ? 2 : 1;
      for (auto d : t.shape) {
        if (d < 0) corrupt("tensor '" + t.name + "' has a negative dimension");
        if (d != 0 && floats > payload.size() / static_cast<std::uint64_t>(d)) {
          corrupt("tensor '" + t.name + "' is larger than the payload");
        }
        floats *= static_cast<std::uint64_t>(d);
      }
      if (length != floats * sizeof(float)) {
        corrupt("tensor '" + t.name + "' byte length disagrees with its shape");
      }
      if (offset > payload.size() || length > payload.size() - offset) {
        corrupt("tensor '" + t.name + "' lies outside the payload");
      }
      t.data.resize(floats);
      for (std::uint64_t i = 0; i < floats; ++i) {
        t.data[i] = std::bit_cast<float>(
            static_cast<std::uint32_t>(get_le(payload, offset + 4 * i, 4)));
      }
      out.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    corrupt(std::string("malformed tensor index: ") + e.what());
  }
  return out;
}

nlohmann::json config_to_json(const ModelConfig& config) {
  return {{"num_blocks", config.num_blocks},
          {"channels", config.channels},
          {"ssm_order", config.ssm_order},
          {"control_dim", config.control_dim},
          {"control_embedding_dim", config.control_embedding_dim},
          {"control_hidden", config.control_hidden},
          {"sample_rate", config.sample_rate}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.num_blocks = j.at("num_blocks").get<Index>();
    c.channels = j.at("channels").get<Index>();
    c.ssm_order = j.at("ssm_order").get<Index>();
    c.control_dim = j.at("control_dim").get<Index>();
    c.control_embedding_dim = j.at("control_embedding_dim").get<Index>();
    c.control_hidden = j.at("control_hidden").get<std::vector<Index>>();
    c.sample_rate = j.at("sample_rate").get<double>();
  } catch (const json::exception& e) {
    corrupt(std::string("bad config: ") + e.what());
  }
  try {
    c.validate();
  } catch (const Error& e) {
    corrupt(std::string("bad config: ") + e.what());
  }
  return c;
}

Container to_container(const ModelWeights<float>& w) {
  validate(w);
  const Index c = w.config.channels;
  Container out;
  out.config = config_to_json(w.config);
  auto& ts = out.tensors;
  ts.push_back(make_tensor("expand.weight", {c, 1}, w.expand_weight));
  ts.push_back(make_vector("expand.bias", w.expand_bias));
  for (std::size_t i = 0; i < w.blocks.size(); ++i) {
    const auto& b = w.blocks[i];
    const std::string p = block_prefix(i);
    ts.push_back(make_tensor(p + "mix.weight", {c, c}, b.mix_weight));
    ts.push_back(make_vector(p + "mix.bias", b.mix_bias));
    ts.push_back(make_vector(p + "prelu1.weight", b.prelu1));
    ts.push_back(make_complex(p + "ssm.lambda", b.ssm.lambda));
    ts.push_back(make_complex(p + "ssm.b", b.ssm.b));
    ts.push_back(make_complex(p + "ssm.c", b.ssm.c));
    ts.push_back(make_vector(p + "ssm.d", b.ssm.d));
    ts.push_back(make_vector(p + "ssm.dt", b.ssm.dt));
    ts.push_back(make_vector(p + "norm.scale", b.norm_scale));
    ts.push_back(make_vector(p + "norm.shift", b.norm_shift));
    ts.push_back(make_tensor(p + "film.weight", {b.film_weight.rows(), b.film_weight.cols()},
                             b.film_weight));
    ts.push_back(make_vector(p + "film.bias", b.film_bias));
    ts.push_back(make_vector(p + "prelu2.weight", b.prelu2));
  }
  for (std::size_t k = 0; k < w.control_mlp.size(); ++k) {
    const auto& l = w.control_mlp[k];
    const std::string p = "control_mlp." + std::to_string(k) + ".";
    ts.push_back(make_tensor(p + "weight", {l.weight.rows(), l.weight.cols()}, l.weight));
    ts.push_back(make_vector(p + "bias", l.bias));
    if (l.prelu.size() > 0) ts.push_back(make_vector(p + "prelu", l.prelu));
  }
  ts.push_back(make_tensor("contract.weight", {1, c}, w.contract_weight));
  ts.push_back(make_vector("contract.bias", w.contract_bias));
  return out;
}

ModelWeights<float> from_container(const Container& container) {
  ModelWeights<float> w;
  w.config = config_from_json(container.config);
  double eps = kDefaultBatchNormEpsilon;
  if (container.config.contains("bn_eps")) {
    try {
      eps = container.config.at("bn_eps").get<double>();
    } catch (const nlohmann::json::exception&) {
      corrupt("bn_eps must be a number");
    }
    if (!(eps >= 0.0)) corrupt("bn_eps must be non-negative");
  }

  const Index c = w.config.channels;
  const Index n = w.config.ssm_order;
  const Index e = w.config.control_embedding_dim;
  TensorTable table(container.tensors);

  w.expand_weight = table.matrix("expand.weight", c, 1);
  w.expand_bias = table.vector("expand.bias", c);
  for (Index i = 0; i < w.config.num_blocks; ++i) {
    const std::string p = block_prefix(static_cast<std::size_t>(i));
    BlockWeights<float> b;
    b.mix_weight = table.matrix(p + "mix.weight", c, c);
    b.mix_bias = table.vector(p + "mix.bias", c);
    b.prelu1 = table.vector(p + "prelu1.weight", c);
    b.ssm.lambda = table.complex(p + "ssm.lambda", c, n);
    b.ssm.b = table.complex(p + "ssm.b", c, n);
    b.ssm.c = table.complex(p + "ssm.c", c, n);
    b.ssm.d = table.vector(p + "ssm.d", c);
    b.ssm.dt = table.vector(p + "ssm.dt", c);

    const bool has_raw = table.has(p + "norm.running_mean") || table.has(p + "norm.running_var") ||
                         table.has(p + "norm.weight") || table.has(p + "norm.bias");
    const bool has_folded = table.has(p + "norm.scale") || table.has(p + "norm.shift");
    if (has_raw) {
      const Vector<float> mean = table.vector(p + "norm.running_mean", c);
      const Vector<float> var = table.vector(p + "norm.running_var", c);
      const Vector<float> gain = table.vector(p + "norm.weight", c);
      const Vector<float> bias = table.vector(p + "norm.bias", c);
      b.norm_scale.resize(c);
      b.norm_shift.resize(c);
      for (Index h = 0; h < c; ++h) {
        const double scale = static_cast<double>(gain(h)) / std::sqrt(static_cast<double>(var(h)) + eps);
        b.norm_scale(h) = static_cast<float>(scale);
        b.norm_shift(h) = static_cast<float>(static_cast<double>(bias(h)) -
                                             static_cast<double>(mean(h)) * scale);
      }
      if (has_folded) {
        const Vector<float> scale = table.vector(p + "norm.scale", c);
        const Vector<float> shift = table.vector(p + "norm.shift", c);
        for (Index h = 0; h < c; ++h) {
          if (!close(scale(h), b.norm_scale(h)) || !close(shift(h), b.norm_shift(h))) {
            corrupt(p + "norm: folded tensors disagree with raw statistics");
          }
        }
      }
    } else {
      b.norm_scale = table.vector(p + "norm.scale", c);
      b.norm_shift = table.vector(p + "norm.shift", c);
    }

    b.film_weight = table.matrix(p + "film.weight", 2 * c, e);
    b.film_bias = table.vector(p + "film.bias", 2 * c);
    b.prelu2 = table.vector(p + "prelu2.weight", c);
    w.blocks.push_back(std::move(b));
  }

  Index in = w.config.control_dim;
  for (std::size_t k = 0; k <= w.config.control_hidden.size(); ++k) {
    const bool last = k == w.config.control_hidden.size();
    const Index out = last ? e : w.config.control_hidden[k];
    const std::string p = "control_mlp." + std::to_string(k) + ".";
    DenseLayer<float> l;
    l.weight = table.matrix(p + "weight", out, in);
    l.bias = table.vector(p + "bias", out);
    if (!last) l.prelu = table.vector(p + "prelu", out);
    w.control_mlp.push_back(std::move(l));
    in = out;
  }
  w.contract_weight = table.matrix("contract.weight", 1, c);
  w.contract_bias = table.vector("contract.bias", 1);
  table.require_all_used();

  validate(w);
  return w;
}

std::vector<std::uint8_t> save(const ModelWeights<float>& weights) {
  return write_container(to_container(weights));
}

ModelWeights<float> load(std::span<const std::uint8_t> bytes) {
  return from_container(read_container(bytes));
}

void save_file(const ModelWeights<float>& weights, const std::filesystem::path& path) {
  const auto bytes = save(weights);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::Io, "write to '" + path.string() + "' failed");
}

ModelWeights<float> load_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return load(bytes);
}

std::int64_t count_params(const ModelConfig& config) {
  const std::int64_t c = config.channels;
  const std::int64_t n = config.ssm_order;
  const std::int64_t e = config.control_embedding_dim;

  const std::int64_t expand = c + c;
  const std::int64_t ssm = 3 * 2 * c * n + c + c;  // lambda, b, c complex; d; dt
  const std::int64_t block = (c * c + c) + 2 * c + ssm + 2 * c + (2 * c * e + 2 * c);

  std::int64_t mlp = 0;
  std::int64_t in = config.control_dim;
  for (Index h : config.control_hidden) {
    mlp += h * in + h + h;  // weight, bias, per-unit prelu
    in = h;
  }
  mlp += e * in + e;

  const std::int64_t contract = c + 1;
  return expand + config.num_blocks * block + mlp + contract;
}

}  // namespace s4drc::weights_io
