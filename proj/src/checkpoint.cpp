#include "mccws/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "mccws/errors.hpp"

namespace mccws {
namespace {

constexpr char kMagic[8] = {'M', 'C', 'C', 'W', 'S', 'C', 'K', 'P'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(buf, 4);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, const std::string& s, bool wide) {
  if (wide) {
    put_u64(out, s.size());
  } else {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
  }
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_values(std::ostream& out, const Tensor& t) {
  for (Real v : t.data()) put_f64(out, static_cast<double>(v));
}

void read_exact(std::istream& in, char* buf, std::size_t n) {
  in.read(buf, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw DataError("checkpoint: truncated file");
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char buf[8];
  read_exact(in, reinterpret_cast<char*>(buf), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char buf[4];
  read_exact(in, reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | buf[i];
  return v;
}

std::string get_string(std::istream& in, std::uint64_t size) {
  if (size > (1ULL << 30)) throw DataError("checkpoint: implausible string length");
  std::string s(size, '\0');
  read_exact(in, s.data(), size);
  return s;
}

void get_values(std::istream& in, Tensor& t) {
  for (Real& v : t.data()) v = static_cast<Real>(std::bit_cast<double>(get_u64(in)));
}

}  // namespace

std::string config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["vocab_size"] = c.vocab_size;
  j["bigram_vocab_size"] = c.bigram_vocab_size;
  j["num_criteria"] = c.num_criteria;
  j["d_h"] = c.d_h;
  j["d_e"] = c.d_e;
  j["encoder_layers"] = c.encoder_layers;
  j["heads"] = c.heads;
  j["d_ff"] = c.d_ff;
  j["max_len"] = c.max_len;
  j["dropout"] = c.dropout;
  j["init_std"] = c.init_std;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["use_bigram"] = c.use_bigram;
  j["use_criterion_classifier"] = c.use_criterion_classifier;
  j["use_positions"] = c.use_positions;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.bigram_vocab_size = j.at("bigram_vocab_size").get<std::size_t>();
    c.num_criteria = j.at("num_criteria").get<std::size_t>();
    c.d_h = j.at("d_h").get<std::size_t>();
    c.d_e = j.at("d_e").get<std::size_t>();
    c.encoder_layers = j.at("encoder_layers").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.max_len = j.at("max_len").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.init_std = j.at("init_std").get<double>();
    c.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    c.use_bigram = j.at("use_bigram").get<bool>();
    c.use_criterion_classifier = j.at("use_criterion_classifier").get<bool>();
    c.use_positions = j.at("use_positions").get<bool>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad model config: ") + e.what());
  }
}

void write_checkpoint(std::ostream& out, const Model& model, std::uint64_t vocab_hash,
                      const AdamWState* optimizer) {
  const auto params = model.parameters();
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_string(out, config_to_json(model.config()), true);
  put_u64(out, vocab_hash);
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    put_string(out, p->name, false);
    put_u32(out, 2);
    put_u64(out, p->value.rows());
    put_u64(out, p->value.cols());
    put_values(out, p->value);
  }
  out.put(optimizer != nullptr ? 1 : 0);
  if (optimizer != nullptr) {
    if (optimizer->m.size() != params.size() || optimizer->v.size() != params.size()) {
      throw ShapeError("optimizer state does not match the model's parameters");
    }
    put_u64(out, optimizer->step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      put_values(out, optimizer->m[i]);
      put_values(out, optimizer->v[i]);
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     std::uint64_t vocab_hash, const AdamWState* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  write_checkpoint(out, model, vocab_hash, optimizer);
  if (!out) throw DataError("error writing checkpoint " + path.string());
}

LoadedCheckpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  read_exact(in, magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw DataError("not a checkpoint file");
  if (const auto version = get_u32(in); version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const ModelConfig config = config_from_json(get_string(in, get_u64(in)));
  LoadedCheckpoint loaded{Model(config, 0), get_u64(in), std::nullopt};

  std::unordered_map<std::string, Parameter*> expected;
  const auto params = loaded.model.parameters();
  for (Parameter* p : params) expected.emplace(p->name, p);
  const std::uint32_t count = get_u32(in);
  if (count != params.size()) {
    throw DataError("checkpoint: " + std::to_string(count) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_string(in, get_u32(in));
    const auto it = expected.find(name);
    if (it == expected.end()) throw DataError("checkpoint: unexpected tensor '" + name + "'");
    if (params[i]->name != name) {
      throw DataError("checkpoint: tensor '" + name + "' out of order");
    }
    if (get_u32(in) != 2) throw DataError("checkpoint: tensor '" + name + "' is not 2-D");
    const std::uint64_t rows = get_u64(in), cols = get_u64(in);
    Tensor& value = it->second->value;
    if (rows != value.rows() || cols != value.cols()) {
      throw DataError("checkpoint: tensor '" + name + "' has shape " + std::to_string(rows) +
                      "x" + std::to_string(cols) + ", expected " + shape_string(value));
    }
    get_values(in, value);
  }
  const int has_optimizer = in.get();
  if (has_optimizer == std::char_traits<char>::eof()) throw DataError("checkpoint: truncated file");
  if (has_optimizer == 1) {
    AdamWState state;
    state.step = get_u64(in);
    for (const Parameter* p : params) {
      Tensor m(p->value.rows(), p->value.cols()), v(p->value.rows(), p->value.cols());
      get_values(in, m);
      get_values(in, v);
      state.m.push_back(std::move(m));
      state.v.push_back(std::move(v));
    }
    loaded.optimizer = std::move(state);
  }
  return loaded;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace mccws
