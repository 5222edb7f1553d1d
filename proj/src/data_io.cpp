#include "mvse/data_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mvse {

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void str(const std::string& s) {
    u32(checked32(s.size()));
    raw(s.data(), s.size());
  }
  void append(const ByteWriter& other) {
    bytes_.insert(bytes_.end(), other.bytes_.begin(), other.bytes_.end());
  }
  void section(const std::string& name, const ByteWriter& payload) {
    u8(static_cast<std::uint8_t>(name.size()));
    raw(name.data(), name.size());
    u64(payload.size());
    append(payload);
  }
  std::size_t size() const { return bytes_.size(); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

  static std::uint32_t checked32(std::size_t n) {
    if (n > 0xffffffffULL) throw std::length_error("value does not fit in u32");
    return static_cast<std::uint32_t>(n);
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(get(1, what)); }
  std::uint16_t u16(const char* what) { return static_cast<std::uint16_t>(get(2, what)); }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what)); }
  std::uint64_t u64(const char* what) { return get(8, what); }
  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const auto n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  /// Reads a section header, checks its name and returns a reader over its payload.
  ByteReader section(const std::string& expected) {
    const auto n = u8("section name length");
    need(n, "section name");
    std::string name(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    if (name != expected) {
      throw FormatError("unexpected section '" + name + "', expected '" + expected + "'");
    }
    const auto length = u64("section length");
    need(length, expected.c_str());
    ByteReader payload(bytes_.subspan(pos_, length));
    pos_ += length;
    return payload;
  }
  void expect_consumed(const std::string& what) const {
    if (pos_ != bytes_.size()) {
      throw FormatError("section '" + what + "' length disagrees with its content (" +
                        std::to_string(bytes_.size() - pos_) + " bytes unaccounted)");
    }
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  void need(std::uint64_t n, const char* what) const {
    if (n > bytes_.size() - pos_) throw Truncated(what);
  }
  std::uint64_t get(int n, const char* what) {
    need(static_cast<std::uint64_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_preamble(ByteWriter& w, ContainerKind kind) {
  w.raw(kContainerMagic, 4);
  w.u16(kContainerVersion);
  w.u16(static_cast<std::uint16_t>(kind));
}

void read_preamble(ByteReader& r, ContainerKind kind) {
  if (r.size() < 4) {
    // A prefix of the magic is a cut-off container, anything else is not ours.
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (static_cast<char>(r.u8("magic")) != kContainerMagic[i]) throw BadMagic();
    }
    throw Truncated("magic");
  }
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.u8("magic"));
  if (std::memcmp(magic, kContainerMagic, 4) != 0) throw BadMagic();
  const auto version = r.u16("version");
  if (version != kContainerVersion) throw VersionMismatch(version);
  const auto found = r.u16("container kind");
  if (found != static_cast<std::uint16_t>(kind)) {
    throw FormatError("container kind " + std::to_string(found) + ", expected " +
                      std::to_string(static_cast<int>(kind)));
  }
}

void check_fixed_section(const ByteReader& payload, std::uint64_t expected, const std::string& name) {
  if (payload.size() != expected) {
    throw FormatError("section '" + name + "' is " + std::to_string(payload.size()) +
                      " bytes, header implies " + std::to_string(expected));
  }
}

void write_f32s(ByteWriter& w, const Tensor& t) {
  for (double v : t.data()) w.f32(v);
}

Tensor read_f32s(ByteReader& r, Shape shape, const char* what) {
  Tensor t(std::move(shape));
  for (auto& v : t.storage()) v = r.f32(what);
  return t;
}

}  // namespace

// ---- dataset ----

void Dataset::validate() const {
  auto fail = [](const std::string& msg) { throw FormatError("dataset: " + msg); };
  for (const auto& v : videos) {
    if (v.global_frames.shape() != Shape{frames, global_channels}) {
      fail("video " + v.id + " global frames " + to_string(v.global_frames.shape()));
    }
    const Shape grid_shape = grid_channels ? Shape{frames, grid, grid, grid_channels} : Shape{};
    if (grid_channels ? v.grid_frames.shape() != grid_shape : !v.grid_frames.empty()) {
      fail("video " + v.id + " grid frames " + to_string(v.grid_frames.shape()));
    }
    if (action_dim ? v.action.shape() != Shape{action_dim} : !v.action.empty()) {
      fail("video " + v.id + " action vector " + to_string(v.action.shape()));
    }
  }
  if (!videos.empty() && frames == 0) fail("videos need at least one frame");
  for (const auto& s : sentences) {
    for (auto idx : s) {
      if (idx >= table.size()) fail("sentence token " + std::to_string(idx) + " outside vocabulary");
    }
  }
}

std::size_t Dataset::video_index(const std::string& id) const {
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].id == id) return i;
  }
  throw std::out_of_range("unknown video id: " + id);
}

bool Dataset::supports(Space space) const {
  switch (space) {
    case Space::global: return global_channels > 0;
    case Space::sequential: return grid_channels > 0 && grid > 0;
    case Space::action: return action_dim > 0;
  }
  return false;
}

std::vector<std::uint8_t> write_container(const Dataset& dataset) {
  dataset.validate();
  ByteWriter w;
  write_preamble(w, ContainerKind::dataset);
  const auto c32 = ByteWriter::checked32;
  for (std::size_t v : {dataset.videos.size(), dataset.frames, dataset.grid, dataset.global_channels,
                        dataset.grid_channels, dataset.action_dim, dataset.table.size(),
                        dataset.token_dim(), dataset.sentences.size()}) {
    w.u32(c32(v));
  }
  w.u8(static_cast<std::uint8_t>(dataset.table.policy()));
  w.u8(0);
  w.u8(0);
  w.u8(0);

  ByteWriter ids, global, grid, action, table, sentences;
  for (const auto& v : dataset.videos) {
    ids.str(v.id);
    write_f32s(global, v.global_frames);
    write_f32s(grid, v.grid_frames);
    write_f32s(action, v.action);
  }
  for (const auto& token : dataset.table.tokens()) table.str(token);
  write_f32s(table, dataset.table.vectors());
  for (const auto& s : dataset.sentences) {
    sentences.u32(c32(s.size()));
    for (auto idx : s) sentences.u32(idx);
  }
  w.section("video_ids", ids);
  w.section("global_frames", global);
  w.section("grid_frames", grid);
  w.section("action_vecs", action);
  w.section("embedding_table", table);
  w.section("sentences", sentences);
  return w.take();
}

Dataset read_container(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  read_preamble(r, ContainerKind::dataset);
  Dataset d;
  const std::size_t videos = r.u32("header videos");
  d.frames = r.u32("header frames");
  d.grid = r.u32("header grid");
  d.global_channels = r.u32("header global_channels");
  d.grid_channels = r.u32("header grid_channels");
  d.action_dim = r.u32("header action_dim");
  const std::size_t vocab = r.u32("header vocab");
  const std::size_t token_dim = r.u32("header token_dim");
  const std::size_t sentence_count = r.u32("header sentences");
  const auto policy = r.u8("header oov policy");
  if (policy > 1) throw FormatError("unknown OOV policy code " + std::to_string(policy));
  for (int i = 0; i < 3; ++i) {
    if (r.u8("header padding") != 0) throw FormatError("nonzero header padding");
  }

  auto ids = r.section("video_ids");
  std::vector<std::string> id_list;
  for (std::size_t i = 0; i < videos; ++i) id_list.push_back(ids.str("video id"));
  ids.expect_consumed("video_ids");

  const std::uint64_t global_size = static_cast<std::uint64_t>(videos) * d.frames * d.global_channels;
  const std::uint64_t grid_size =
      static_cast<std::uint64_t>(videos) * d.frames * d.grid * d.grid * d.grid_channels;
  const std::uint64_t action_size = static_cast<std::uint64_t>(videos) * d.action_dim;

  auto global = r.section("global_frames");
  check_fixed_section(global, 4 * global_size, "global_frames");
  auto grid = r.section("grid_frames");
  check_fixed_section(grid, 4 * grid_size, "grid_frames");
  auto action = r.section("action_vecs");
  check_fixed_section(action, 4 * action_size, "action_vecs");

  for (std::size_t i = 0; i < videos; ++i) {
    VideoFeature v;
    v.id = std::move(id_list[i]);
    v.global_frames = read_f32s(global, {d.frames, d.global_channels}, "global_frames");
    if (d.grid_channels) {
      v.grid_frames = read_f32s(grid, {d.frames, d.grid, d.grid, d.grid_channels}, "grid_frames");
    }
    if (d.action_dim) v.action = read_f32s(action, {d.action_dim}, "action_vecs");
    d.videos.push_back(std::move(v));
  }

  auto table = r.section("embedding_table");
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < vocab; ++i) tokens.push_back(table.str("vocabulary token"));
  if (table.remaining() != 4ULL * vocab * token_dim) {
    throw FormatError("section 'embedding_table' vector block is " +
                      std::to_string(table.remaining()) + " bytes, header implies " +
                      std::to_string(4ULL * vocab * token_dim));
  }
  Tensor vectors = read_f32s(table, {vocab, token_dim}, "embedding_table");
  d.table = EmbeddingTable(std::move(tokens), std::move(vectors), static_cast<OovPolicy>(policy));

  auto sentences = r.section("sentences");
  for (std::size_t i = 0; i < sentence_count; ++i) {
    const auto n = sentences.u32("sentence length");
    std::vector<std::uint32_t> s;
    s.reserve(n);
    for (std::uint32_t k = 0; k < n; ++k) s.push_back(sentences.u32("sentence token"));
    d.sentences.push_back(std::move(s));
  }
  sentences.expect_consumed("sentences");

  if (r.remaining() != 0) throw TrailingBytes(r.remaining());
  d.validate();
  return d;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void save_container(const std::filesystem::path& path, const Dataset& dataset) {
  write_file(path, write_container(dataset));
}

Dataset load_container(const std::filesystem::path& path) { return read_container(read_file(path)); }

// ---- checkpoint ----

namespace {

std::map<std::string, std::string> model_config_entries(const ModelConfig& c) {
  const auto& d = c.dims;
  auto n = [](std::size_t v) { return std::to_string(v); };
  return {
      {"model.spaces", std::string(to_string(c.spaces))},
      {"model.fuse_mode", std::string(to_string(c.fuse))},
      {"model.attention", c.attention ? "1" : "0"},
      {"dims.n_chunks", n(d.n_chunks)},
      {"dims.grid", n(d.grid)},
      {"dims.global_channels", n(d.global_channels)},
      {"dims.grid_channels", n(d.grid_channels)},
      {"dims.action_dim", n(d.action_dim)},
      {"dims.hidden", n(d.hidden)},
      {"dims.embed", n(d.embed)},
      {"dims.token_dim", n(d.token_dim)},
      {"dims.attention_dim", n(d.attention_dim)},
  };
}

ModelConfig model_config_from(std::map<std::string, std::string>& entries) {
  auto take = [&](const std::string& key) {
    auto it = entries.find(key);
    if (it == entries.end()) throw FormatError("checkpoint config lacks '" + key + "'");
    std::string value = it->second;
    entries.erase(it);
    return value;
  };
  auto num = [&](const std::string& key) -> std::size_t {
    const auto text = take(key);
    try {
      return static_cast<std::size_t>(std::stoull(text));
    } catch (const std::exception&) {
      throw FormatError("checkpoint config '" + key + "' is not a number: " + text);
    }
  };
  ModelConfig c;
  c.spaces = parse_space_set(take("model.spaces"));
  c.fuse = parse_fuse_mode(take("model.fuse_mode"));
  c.attention = take("model.attention") == "1";
  c.dims.n_chunks = num("dims.n_chunks");
  c.dims.grid = num("dims.grid");
  c.dims.global_channels = num("dims.global_channels");
  c.dims.grid_channels = num("dims.grid_channels");
  c.dims.action_dim = num("dims.action_dim");
  c.dims.hidden = num("dims.hidden");
  c.dims.embed = num("dims.embed");
  c.dims.token_dim = num("dims.token_dim");
  c.dims.attention_dim = num("dims.attention_dim");
  return c;
}

}  // namespace

std::vector<std::uint8_t> write_checkpoint(const Checkpoint& checkpoint) {
  auto entries = model_config_entries(checkpoint.model);
  for (const auto& [key, value] : checkpoint.echo) {
    if (entries.count(key)) throw std::invalid_argument("checkpoint echo key collides: " + key);
    entries.emplace(key, value);
  }
  ByteWriter w;
  write_preamble(w, ContainerKind::checkpoint);
  w.u32(ByteWriter::checked32(entries.size()));
  w.u32(ByteWriter::checked32(checkpoint.params.size()));

  ByteWriter config;
  for (const auto& [key, value] : entries) {
    config.str(key);
    config.str(value);
  }
  ByteWriter tensors;
  for (const auto& [name, t] : checkpoint.params) {
    tensors.str(name);
    tensors.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto extent : t.shape()) tensors.u32(ByteWriter::checked32(extent));
    for (double v : t.data()) tensors.f64(v);
  }
  w.section("config", config);
  w.section("tensors", tensors);
  return w.take();
}

Checkpoint read_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  read_preamble(r, ContainerKind::checkpoint);
  const auto entry_count = r.u32("config count");
  const auto tensor_count = r.u32("tensor count");

  auto config = r.section("config");
  std::map<std::string, std::string> entries;
  for (std::uint32_t i = 0; i < entry_count; ++i) {
    auto key = config.str("config key");
    entries[key] = config.str("config value");
  }
  config.expect_consumed("config");

  Checkpoint out;
  auto tensors = r.section("tensors");
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    auto name = tensors.str("tensor name");
    const auto rank = tensors.u8("tensor rank");
    Shape shape;
    for (std::uint8_t k = 0; k < rank; ++k) shape.push_back(tensors.u32("tensor extent"));
    Tensor t(shape);
    for (auto& v : t.storage()) v = tensors.f64("tensor values");
    out.params.insert(name, std::move(t));
  }
  tensors.expect_consumed("tensors");
  if (r.remaining() != 0) throw TrailingBytes(r.remaining());

  out.model = model_config_from(entries);
  out.echo = std::move(entries);
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, write_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return read_checkpoint(read_file(path));
}

// ---- manifest ----

void Manifest::validate(const Dataset& dataset) const {
  for (const auto& entry : videos) {
    bool found = false;
    for (const auto& v : dataset.videos) found = found || v.id == entry.video_id;
    if (!found) throw std::invalid_argument("manifest video '" + entry.video_id + "' not in container");
    for (auto s : entry.sentences) {
      if (s >= dataset.sentences.size()) {
        throw std::invalid_argument("manifest sentence " + std::to_string(s) + " not in container");
      }
    }
  }
  for (const auto& [name, ids] : groups) {
    for (auto s : ids) {
      if (s >= dataset.sentences.size()) {
        throw std::invalid_argument("manifest group '" + name + "' sentence " + std::to_string(s) +
                                    " not in container");
      }
    }
  }
}

std::size_t Manifest::sentence_count() const {
  std::size_t n = 0;
  for (const auto& e : videos) n += e.sentences.size();
  return n;
}

std::string write_manifest(const Manifest& manifest) {
  std::ostringstream out;
  out << "mvse-manifest: 1\n";
  out << "split: " << manifest.split << '\n';
  if (!manifest.container.empty()) out << "container: " << manifest.container << '\n';
  for (const auto& e : manifest.videos) {
    out << "video " << e.video_id << ':';
    for (auto s : e.sentences) out << ' ' << s;
    out << '\n';
  }
  for (const auto& [name, ids] : manifest.groups) {
    out << "group " << name << ':';
    for (auto s : ids) out << ' ' << s;
    out << '\n';
  }
  return out.str();
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  auto fail = [&](const std::string& msg) {
    throw std::invalid_argument("manifest line " + std::to_string(line_no) + ": " + msg);
  };
  auto id_list = [&](std::string_view rest) {
    std::istringstream ids{std::string(rest)};
    std::vector<std::uint32_t> out;
    std::string tok;
    while (ids >> tok) {
      try {
        std::size_t used = 0;
        const auto v = std::stoul(tok, &used);
        if (used != tok.size() || v > 0xffffffffUL) fail("bad sentence id '" + tok + "'");
        out.push_back(static_cast<std::uint32_t>(v));
      } catch (const std::logic_error&) {
        fail("bad sentence id '" + tok + "'");
      }
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) fail("expected 'key: value'");
    const std::string key = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    if (!value.empty() && value[0] == ' ') value.erase(0, 1);
    if (!header) {
      if (key != "mvse-manifest" || value != "1") fail("expected header 'mvse-manifest: 1'");
      header = true;
    } else if (key == "split") {
      m.split = value;
    } else if (key == "container") {
      m.container = value;
    } else if (key.rfind("video ", 0) == 0) {
      m.videos.push_back({key.substr(6), id_list(value)});
    } else if (key.rfind("group ", 0) == 0) {
      m.groups[key.substr(6)] = id_list(value);
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  if (!header) throw std::invalid_argument("manifest: missing header");
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  const auto text = write_manifest(manifest);
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Manifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace mvse
