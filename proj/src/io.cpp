#include "uniconv/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace uniconv {

using json = nlohmann::json;

namespace {

void reject_unknown_keys(const json &obj, const char *where,
                         std::initializer_list<const char *> allowed) {
  for (const auto &item : obj.items()) {
    bool ok = false;
    for (const char *key : allowed)
      if (item.key() == key)
        ok = true;
    if (!ok)
      throw ConfigError(std::string("unknown key \"") + item.key() + "\" in " + where);
  }
}

const json &require(const json &obj, const char *where, const char *key) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw ConfigError(std::string("missing key \"") + key + "\" in " + where);
  return *it;
}

} // namespace

ParsedConfig parse_config(const std::string &text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error &e) {
    std::ostringstream os;
    os << "config parse error at byte " << e.byte << ": " << e.what();
    throw ConfigError(os.str());
  }
  if (!root.is_object())
    throw ConfigError("config root must be a JSON object");
  reject_unknown_keys(root, "config root", {"model", "rfa", "seed"});

  ParsedConfig cfg;
  const json &model = require(root, "config root", "model");
  reject_unknown_keys(model, "\"model\"",
                      {"stage_channels", "stage_depths", "ffn_ratio", "num_classes",
                       "layer_scale_init"});
  try {
    const auto channels = require(model, "\"model\"", "stage_channels").get<std::vector<int>>();
    const auto depths = require(model, "\"model\"", "stage_depths").get<std::vector<int>>();
    if (channels.size() != 4 || depths.size() != 4)
      throw ConfigError("model.stage_channels and model.stage_depths must have 4 entries");
    std::copy(channels.begin(), channels.end(), cfg.model.stage_channels.begin());
    std::copy(depths.begin(), depths.end(), cfg.model.stage_depths.begin());
    cfg.model.num_classes = require(model, "\"model\"", "num_classes").get<int>();
    if (model.contains("ffn_ratio"))
      cfg.model.ffn_ratio = model["ffn_ratio"].get<double>();
    if (model.contains("layer_scale_init"))
      cfg.model.layer_scale_init = model["layer_scale_init"].get<double>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("invalid \"model\" field: ") + e.what());
  }

  const json &rfa = require(root, "config root", "rfa");
  reject_unknown_keys(rfa, "\"rfa\"",
                      {"layer_count", "schedule", "small_kernel", "dis_topology"});
  try {
    cfg.model.rfa.layer_count = require(rfa, "\"rfa\"", "layer_count").get<int>();
    const json &schedule = require(rfa, "\"rfa\"", "schedule");
    if (schedule.is_string()) {
      if (schedule.get<std::string>() != "formula")
        throw ConfigError("rfa.schedule must be \"formula\" or a kernel list");
      if (cfg.model.rfa.layer_count < 1)
        throw ConfigError("rfa.layer_count must be >= 1");
      cfg.model.rfa.large_kernels = RfaConfig::formula_kernels(cfg.model.rfa.layer_count);
      cfg.schedule_is_formula = true;
    } else {
      cfg.model.rfa.large_kernels = schedule.get<std::vector<int>>();
    }
    if (rfa.contains("small_kernel"))
      cfg.model.rfa.small_kernel = rfa["small_kernel"].get<int>();
    if (rfa.contains("dis_topology")) {
      const std::string topo = rfa["dis_topology"].get<std::string>();
      if (topo == "sum")
        cfg.model.rfa.dis_topology = DisTopology::kSum;
      else if (topo == "sequential")
        cfg.model.rfa.dis_topology = DisTopology::kSequential;
      else
        throw ConfigError("rfa.dis_topology must be \"sum\" or \"sequential\"");
    }
  } catch (const json::exception &e) {
    throw ConfigError(std::string("invalid \"rfa\" field: ") + e.what());
  }

  if (root.contains("seed")) {
    try {
      cfg.seed = root["seed"].get<std::uint64_t>();
    } catch (const json::exception &e) {
      throw ConfigError(std::string("invalid \"seed\": ") + e.what());
    }
  }

  cfg.model.validate();
  return cfg;
}

std::string emit_config(const ParsedConfig &cfg) {
  json root;
  root["model"]["stage_channels"] = cfg.model.stage_channels;
  root["model"]["stage_depths"] = cfg.model.stage_depths;
  root["model"]["ffn_ratio"] = cfg.model.ffn_ratio;
  root["model"]["num_classes"] = cfg.model.num_classes;
  root["model"]["layer_scale_init"] = cfg.model.layer_scale_init;
  if (cfg.schedule_is_formula)
    root["rfa"]["schedule"] = "formula";
  else
    root["rfa"]["schedule"] = cfg.model.rfa.large_kernels;
  root["rfa"]["layer_count"] = cfg.model.rfa.layer_count;
  root["rfa"]["small_kernel"] = cfg.model.rfa.small_kernel;
  root["rfa"]["dis_topology"] =
      cfg.model.rfa.dis_topology == DisTopology::kSum ? "sum" : "sequential";
  root["seed"] = cfg.seed;
  return root.dump(2) + "\n";
}

ParsedConfig load_config_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// PPM / PGM
// ---------------------------------------------------------------------------

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_header_token(std::istream &in, const std::string &path) {
  std::string token;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n')
        ;
      continue;
    }
    if (std::isspace(ch)) {
      if (!token.empty())
        return token;
      continue;
    }
    token.push_back(static_cast<char>(ch));
  }
  if (token.empty())
    throw IoError("truncated header in " + path);
  return token;
}

int header_int(std::istream &in, const std::string &path, const char *what) {
  const std::string token = next_header_token(in, path);
  try {
    std::size_t pos = 0;
    const int v = std::stoi(token, &pos);
    if (pos != token.size() || v <= 0)
      throw std::invalid_argument(token);
    return v;
  } catch (const std::exception &) {
    throw IoError(std::string("malformed ") + what + " in " + path + ": \"" + token + "\"");
  }
}

} // namespace

template <typename T> Tensor4<T> read_ppm(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path);

  const std::string magic = next_header_token(in, path);
  if (magic != "P6")
    throw IoError("unsupported format \"" + magic + "\" in " + path + " (binary P6 required)");
  const int w = header_int(in, path, "width");
  const int h = header_int(in, path, "height");
  const int maxval = header_int(in, path, "maxval");
  if (maxval != 255)
    throw IoError("unsupported maxval " + std::to_string(maxval) + " in " + path +
                  " (255 required)");
  // The header ends with exactly one whitespace byte before the payload;
  // next_header_token already consumed it.

  std::vector<char> payload(static_cast<std::size_t>(w) * h * 3);
  in.read(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (in.gcount() != static_cast<std::streamsize>(payload.size()))
    throw IoError("truncated pixel payload in " + path);

  Tensor4<T> t(Shape4{1, 3, h, w});
  std::size_t p = 0;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < 3; ++ch)
        t.at(0, ch, r, c) = static_cast<T>(static_cast<unsigned char>(payload[p++])) / T(255);
  return t;
}

void write_pgm(const Image8 &img, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open " + path + " for writing");
  out << "P5\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char *>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out)
    throw IoError("write failed: " + path);
}

Image8 read_pgm(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path);
  const std::string magic = next_header_token(in, path);
  if (magic != "P5")
    throw IoError("unsupported format \"" + magic + "\" in " + path + " (binary P5 required)");
  Image8 img;
  img.w = header_int(in, path, "width");
  img.h = header_int(in, path, "height");
  const int maxval = header_int(in, path, "maxval");
  if (maxval != 255)
    throw IoError("unsupported maxval in " + path);
  img.pixels.resize(static_cast<std::size_t>(img.w) * img.h);
  in.read(reinterpret_cast<char *>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw IoError("truncated pixel payload in " + path);
  return img;
}

// ---------------------------------------------------------------------------
// Weights container
// ---------------------------------------------------------------------------

namespace {

void put_u32(std::ostream &out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

void put_u64(std::ostream &out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

std::uint32_t get_u32(std::istream &in, const std::string &path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char *>(b), 4);
  if (in.gcount() != 4)
    throw IoError("truncated weights file: " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream &in, const std::string &path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char *>(b), 8);
  if (in.gcount() != 8)
    throw IoError("truncated weights file: " + path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_f32_le(std::ostream &out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32_le(std::istream &in, const std::string &path) {
  const std::uint32_t bits = get_u32(in, path);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

} // namespace

template <typename T> void save_weights(const Model<T> &m, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot open " + path + " for writing");

  out.write(kWeightsMagic, 8);
  put_u32(out, kWeightsVersion);
  put_u32(out, static_cast<std::uint32_t>(m.params.size()));

  std::uint64_t offset = 0; // float index into the data section
  for (const auto &entry : m.params.items()) {
    const std::string &name = entry.name;
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Shape4 s = entry.value.shape();
    put_u32(out, static_cast<std::uint32_t>(s.b));
    put_u32(out, static_cast<std::uint32_t>(s.c));
    put_u32(out, static_cast<std::uint32_t>(s.h));
    put_u32(out, static_cast<std::uint32_t>(s.w));
    put_u64(out, offset);
    offset += entry.value.numel();
  }
  put_u64(out, offset); // total float count

  for (const auto &entry : m.params.items())
    for (std::size_t i = 0; i < entry.value.numel(); ++i)
      put_f32_le(out, static_cast<float>(entry.value.data()[i]));
  if (!out)
    throw IoError("write failed: " + path);
}

template <typename T> void load_weights(Model<T> &m, const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + path);

  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, kWeightsMagic, 8) != 0)
    throw IoError("bad magic in " + path + " (not a UCNW0001 weights file)");
  const std::uint32_t version = get_u32(in, path);
  if (version != kWeightsVersion)
    throw IoError("unsupported weights version " + std::to_string(version) + " in " + path);

  const std::uint32_t count = get_u32(in, path);
  if (count != m.params.size())
    throw IoError("weights file has " + std::to_string(count) + " tensors but the model expects " +
                  std::to_string(m.params.size()));

  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len))
      throw IoError("truncated manifest in " + path);
    Shape4 s;
    s.b = static_cast<int>(get_u32(in, path));
    s.c = static_cast<int>(get_u32(in, path));
    s.h = static_cast<int>(get_u32(in, path));
    s.w = static_cast<int>(get_u32(in, path));
    const std::uint64_t offset = get_u64(in, path);

    const auto &param = m.params.items()[i];
    if (name != param.name)
      throw IoError("manifest entry \"" + name + "\" does not match model parameter \"" +
                    param.name + "\"");
    if (!(s == param.value.shape()))
      throw IoError("shape mismatch for parameter \"" + name + "\": file has " + s.to_string() +
                    ", model expects " + param.value.shape().to_string());
    if (offset != expected_offset)
      throw IoError("overlapping or out-of-order data offsets at parameter \"" + name + "\"");
    expected_offset += s.numel();
  }
  const std::uint64_t total = get_u64(in, path);
  if (total != expected_offset)
    throw IoError("manifest total does not match the summed tensor sizes in " + path);

  for (auto &param : m.params.items())
    for (std::size_t i = 0; i < param.value.numel(); ++i)
      param.value.data()[i] = static_cast<T>(get_f32_le(in, path));

  // Exactly at end of payload?
  char extra;
  if (in.read(&extra, 1) && in.gcount() == 1)
    throw IoError("trailing bytes after weight payload in " + path);
}

template Tensor4<float> read_ppm<float>(const std::string &);
template Tensor4<double> read_ppm<double>(const std::string &);
template void save_weights<float>(const Model<float> &, const std::string &);
template void save_weights<double>(const Model<double> &, const std::string &);
template void load_weights<float>(Model<float> &, const std::string &);
template void load_weights<double>(Model<double> &, const std::string &);

} // namespace uniconv
