#include "detal/io.hpp"

#include <json.hpp>

#include <array>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

namespace detal {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[] = "DETAL1";
constexpr char kCheckpointMagic[] = "DETALCK1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

float get_f32(const std::string& in, std::size_t pos) {
  const std::uint32_t bits = get_u32(in, pos);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path);
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
}

std::vector<json> parse_lines(const std::string& path) {
  std::istringstream in(read_file(path));
  std::vector<json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_json(line, path + ":" + std::to_string(n)));
  }
  return out;
}

std::string join_lines(const std::vector<json>& records) {
  std::string s;
  for (const auto& r : records) s += r.dump() + "\n";
  return s;
}

// Reads a typed field, turning any json error into DataError.
template <typename T>
T field(const json& j, const char* key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw DataError(where + ": field '" + key + "': " + e.what());
  }
}

Segment make_segment(int s, int e, const std::string& where) {
  if (s < 0 || e < s)
    throw DataError(where + ": invalid segment [" + std::to_string(s) + "," +
                    std::to_string(e) + "]");
  return Segment(s, e);
}

json segment_json(const Segment& s) { return json::array({s.start, s.end}); }

Segment segment_of(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
    throw DataError(where + ": segment must be [start, end]");
  return make_segment(j[0].get<int>(), j[1].get<int>(), where);
}

// shortest text that reads back to the same double
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

// Strict reader for config objects.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw std::invalid_argument(where_ + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    bool ok;
    if constexpr (std::is_same_v<T, bool>)
      ok = v.is_boolean();
    else if constexpr (std::is_integral_v<T>)
      ok = v.is_number_integer() && (std::is_signed_v<T> || v.is_number_unsigned() ||
                                     v.get<long long>() >= 0);
    else if constexpr (std::is_floating_point_v<T>)
      ok = v.is_number();
    else
      ok = v.is_string();
    if (!ok) throw std::invalid_argument(where_ + "." + key + ": wrong type");
    out = v.get<T>();
  }

  void range(const char* key, std::pair<int, int>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number_integer() ||
        !v[1].is_number_integer())
      throw std::invalid_argument(where_ + "." + key + ": expected [lo, hi]");
    out = {v[0].get<int>(), v[1].get<int>()};
  }

  const json* object(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw std::invalid_argument(where_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json config_json(const Config& c) {
  return {{"eta", c.eta},
          {"mu", c.mu},
          {"U", c.U},
          {"T_crop", c.T_crop},
          {"epsilon_mode", c.epsilon_mode == EpsilonMode::Mean ? "mean" : "zero"},
          {"top_k_divisor", c.top_k_divisor},
          {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"N_c", c.N_c},
          {"D", c.D},
          {"seed", c.seed},
          {"N_p", c.N_p}};
}

Config config_of(const json& j, const std::string& where) {
  Config c;
  Fields f(j, where);
  f.get("eta", c.eta);
  f.get("mu", c.mu);
  f.get("U", c.U);
  f.get("T_crop", c.T_crop);
  std::string eps = c.epsilon_mode == EpsilonMode::Mean ? "mean" : "zero";
  f.get("epsilon_mode", eps);
  if (eps == "mean")
    c.epsilon_mode = EpsilonMode::Mean;
  else if (eps == "zero")
    c.epsilon_mode = EpsilonMode::Zero;
  else
    throw std::invalid_argument(where + ".epsilon_mode: expected \"mean\" or \"zero\"");
  f.get("top_k_divisor", c.top_k_divisor);
  f.get("learning_rate", c.learning_rate);
  f.get("weight_decay", c.weight_decay);
  f.get("N_c", c.N_c);
  f.get("D", c.D);
  f.get("seed", c.seed);
  f.get("N_p", c.N_p);
  f.finish();
  return c;
}

json synth_json(const SynthConfig& s) {
  return {{"num_videos", s.num_videos},
          {"num_test_videos", s.num_test_videos},
          {"N_c", s.N_c},
          {"T_range", {s.T_range.first, s.T_range.second}},
          {"D", s.D},
          {"instances_per_video_range",
           {s.instances_per_video_range.first, s.instances_per_video_range.second}},
          {"duration_range", {s.duration_range.first, s.duration_range.second}},
          {"intra_action_variety", s.intra_action_variety},
          {"hard_bg_rate", s.hard_bg_rate},
          {"noise_sigma", s.noise_sigma},
          {"annotation_mode", s.annotation_mode == SampleMode::Uniform ? "uniform" : "center"},
          {"seed", s.seed}};
}

SynthConfig synth_of(const json& j) {
  SynthConfig s;
  Fields f(j, "synth");
  f.get("num_videos", s.num_videos);
  f.get("num_test_videos", s.num_test_videos);
  f.get("N_c", s.N_c);
  f.range("T_range", s.T_range);
  f.get("D", s.D);
  f.range("instances_per_video_range", s.instances_per_video_range);
  f.range("duration_range", s.duration_range);
  f.get("intra_action_variety", s.intra_action_variety);
  f.get("hard_bg_rate", s.hard_bg_rate);
  f.get("noise_sigma", s.noise_sigma);
  std::string mode = s.annotation_mode == SampleMode::Uniform ? "uniform" : "center";
  f.get("annotation_mode", mode);
  if (mode == "uniform")
    s.annotation_mode = SampleMode::Uniform;
  else if (mode == "center")
    s.annotation_mode = SampleMode::CenterBiased;
  else
    throw std::invalid_argument("synth.annotation_mode: expected \"uniform\" or \"center\"");
  f.get("seed", s.seed);
  f.finish();
  return s;
}

json ablation_json(const Ablation& a) {
  return {{"no_de", a.no_de},         {"no_dilation", a.no_dilation},
          {"no_erosion", a.no_erosion}, {"no_hcs", a.no_hcs},
          {"no_bg", a.no_bg},         {"no_eb", a.no_eb},
          {"no_hb", a.no_hb}};
}

Ablation ablation_of(const json& j) {
  Ablation a;
  Fields f(j, "ablation");
  f.get("no_de", a.no_de);
  f.get("no_dilation", a.no_dilation);
  f.get("no_erosion", a.no_erosion);
  f.get("no_hcs", a.no_hcs);
  f.get("no_bg", a.no_bg);
  f.get("no_eb", a.no_eb);
  f.get("no_hb", a.no_hb);
  f.finish();
  return a;
}

json mining_json(const MiningResult& m) {
  json refined = json::array();
  for (const auto& r : m.refined)
    refined.push_back({{"segment", segment_json(r.segment)}, {"class_id", r.class_id}});
  json hard = json::array();
  for (const auto& s : m.hard_bg) hard.push_back(segment_json(s));
  json trace = json::array();
  for (const auto& t : m.trace)
    trace.push_back({{"t", t.annotation.t},
                     {"class_id", t.annotation.class_id},
                     {"coarse", segment_json(t.coarse)},
                     {"inflated", segment_json(t.inflated)},
                     {"high_confidence", segment_json(t.high_confidence)},
                     {"refined", segment_json(t.refined)},
                     {"flagged", t.flagged}});
  return {{"refined", refined}, {"hard_bg", hard}, {"evident_bg", m.evident_bg},
          {"trace", trace}};
}

MiningResult mining_of(const json& j, const std::string& video_id, const std::string& where) {
  MiningResult m;
  for (const auto& r : field<json>(j, "refined", where))
    m.refined.push_back({segment_of(field<json>(r, "segment", where), where),
                         field<int>(r, "class_id", where)});
  for (const auto& s : field<json>(j, "hard_bg", where)) m.hard_bg.push_back(segment_of(s, where));
  m.evident_bg = field<std::vector<int>>(j, "evident_bg", where);
  for (const auto& t : field<json>(j, "trace", where)) {
    MiningTrace tr;
    tr.annotation = {video_id, field<int>(t, "t", where), field<int>(t, "class_id", where)};
    tr.coarse = segment_of(field<json>(t, "coarse", where), where);
    tr.inflated = segment_of(field<json>(t, "inflated", where), where);
    tr.high_confidence = segment_of(field<json>(t, "high_confidence", where), where);
    tr.refined = segment_of(field<json>(t, "refined", where), where);
    tr.flagged = field<bool>(t, "flagged", where);
    m.trace.push_back(tr);
  }
  return m;
}

json loss_json(const PartLoss& l) {
  return {{"cls_video", l.video},
          {"cls_snippet", l.snippet},
          {"action", l.action},
          {"emb", l.embed},
          {"total", l.total()}};
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_features(const std::string& path, const FeatureSequence& x) {
  std::string out(kFeatureMagic, 6);
  put_u32(out, static_cast<std::uint32_t>(x.rows()));
  put_u32(out, static_cast<std::uint32_t>(x.cols()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(x.size()));
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    for (Eigen::Index d = 0; d < x.cols(); ++d) put_f32(out, x(t, d));
  write_file(path, out);
}

FeatureSequence read_features(const std::string& path) {
  const std::string in = read_file(path);
  if (in.size() < 14 || in.compare(0, 6, kFeatureMagic) != 0)
    throw DataError(path + ": not a feature file");
  const std::uint32_t T = get_u32(in, 6);
  const std::uint32_t D = get_u32(in, 10);
  const std::uint64_t want = 14 + 4ull * T * D;
  if (in.size() != want)
    throw DataError(path + ": expected " + std::to_string(want) + " bytes, found " +
                    std::to_string(in.size()));
  FeatureSequence x(T, D);
  std::size_t pos = 14;
  for (std::uint32_t t = 0; t < T; ++t)
    for (std::uint32_t d = 0; d < D; ++d, pos += 4) x(t, d) = get_f32(in, pos);
  return x;
}

void write_annotations(const std::string& path, const std::vector<SingleFrameAnnotation>& a) {
  std::vector<json> lines;
  for (const auto& x : a)
    lines.push_back({{"video_id", x.video_id}, {"t", x.t}, {"class_id", x.class_id}});
  write_file(path, join_lines(lines));
}

std::vector<SingleFrameAnnotation> read_annotations(const std::string& path) {
  std::vector<SingleFrameAnnotation> out;
  for (const auto& j : parse_lines(path))
    out.push_back({field<std::string>(j, "video_id", path), field<int>(j, "t", path),
                   field<int>(j, "class_id", path)});
  return out;
}

void save_dataset(const Dataset& d, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "features");
  json videos = json::array();
  for (const auto& v : d.videos) {
    if (v.id.empty() || v.id.find_first_of("/\\") != std::string::npos)
      throw DataError("video id not usable as a file name: '" + v.id + "'");
    const std::string rgb = "features/" + v.id + ".rgb.bin";
    const std::string flow = "features/" + v.id + ".flow.bin";
    write_features((fs::path(dir) / rgb).string(), v.rgb);
    write_features((fs::path(dir) / flow).string(), v.flow);
    json gt = json::array();
    for (const auto& g : v.gt)
      gt.push_back({{"segment", segment_json(g.segment)}, {"class_id", g.class_id}});
    videos.push_back({{"id", v.id},
                      {"split", v.split},
                      {"T", v.length()},
                      {"D", d.feature_dim},
                      {"rgb", rgb},
                      {"flow", flow},
                      {"gt", gt}});
  }
  const json manifest = {{"format", "detal-manifest"},
                         {"version", 1},
                         {"N_c", d.num_classes},
                         {"D", d.feature_dim},
                         {"U", d.U},
                         {"annotations", "annotations.jsonl"},
                         {"videos", videos}};
  write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  write_annotations((fs::path(dir) / "annotations.jsonl").string(), d.annotations);
}

Dataset load_dataset(const std::string& manifest_path, std::vector<std::string>* missing) {
  const json m = parse_json(read_file(manifest_path), manifest_path);
  const std::string& where = manifest_path;
  const fs::path base = fs::path(manifest_path).parent_path();
  if (field<std::string>(m, "format", where) != "detal-manifest")
    throw DataError(where + ": not a dataset manifest");
  if (field<int>(m, "version", where) != 1) throw DataError(where + ": unsupported version");

  Dataset d;
  d.num_classes = field<int>(m, "N_c", where);
  d.feature_dim = field<int>(m, "D", where);
  d.U = field<int>(m, "U", where);
  if (d.num_classes < 1 || d.feature_dim < 2 || d.feature_dim % 2 != 0 || d.U < 0)
    throw DataError(where + ": N_c must be >= 1, D even and >= 2, U >= 0");

  std::set<std::string> ids;
  for (const auto& jv : field<json>(m, "videos", where)) {
    Video v;
    v.id = field<std::string>(jv, "id", where);
    const std::string vw = where + ": video " + v.id;
    if (!ids.insert(v.id).second) throw DataError(vw + ": duplicate id");
    v.split = field<std::string>(jv, "split", vw);
    const int T = field<int>(jv, "T", vw);
    if (T < 1) throw DataError(vw + ": T must be >= 1");
    if (field<int>(jv, "D", vw) != d.feature_dim) throw DataError(vw + ": D differs from the manifest header");
    try {
      v.rgb = read_features((base / field<std::string>(jv, "rgb", vw)).string());
      v.flow = read_features((base / field<std::string>(jv, "flow", vw)).string());
      if (v.rgb.rows() != T || v.flow.rows() != T || v.rgb.cols() != d.feature_dim ||
          v.flow.cols() != d.feature_dim)
        throw DataError(vw + ": feature shape differs from the manifest");
    } catch (const DataError& e) {
      if (!missing) throw;
      missing->push_back(e.what());
      v.rgb.resize(0, d.feature_dim);
      v.flow.resize(0, d.feature_dim);
    }
    for (const auto& g : field<json>(jv, "gt", vw)) {
      LabeledSegment ls{segment_of(field<json>(g, "segment", vw), vw), field<int>(g, "class_id", vw)};
      if (ls.segment.end >= T || ls.class_id < 0 || ls.class_id >= d.num_classes)
        throw DataError(vw + ": ground truth out of range");
      v.gt.push_back(ls);
    }
    d.videos.push_back(std::move(v));
  }

  const std::string ann = (base / field<std::string>(m, "annotations", where)).string();
  d.annotations = read_annotations(ann);
  std::map<std::string, int> length;
  for (const auto& jv : m.at("videos")) length[jv.at("id").get<std::string>()] = jv.at("T").get<int>();
  for (const auto& a : d.annotations) {
    auto it = length.find(a.video_id);
    if (it == length.end()) throw DataError(ann + ": unknown video '" + a.video_id + "'");
    if (a.t < 0 || a.t >= it->second || a.class_id < 0 || a.class_id >= d.num_classes)
      throw DataError(ann + ": annotation out of range in video '" + a.video_id + "'");
  }
  return d;
}

std::uint64_t config_hash(const Config& c) {
  const std::string s = config_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const std::string& path, const ModelParams<double>& params, long step,
                     const Config& config) {
  json tensors = json::array();
  std::string blob;
  visit_tensors(
      [&](const std::string& name, const auto& t) {
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}});
        for (Eigen::Index i = 0; i < t.size(); ++i) put_f32(blob, static_cast<float>(t.data()[i]));
      },
      params);
  const json header = {{"format", "detal-checkpoint"},
                       {"version", 1},
                       {"num_classes", params.num_classes},
                       {"feature_dim", params.feature_dim},
                       {"step", step},
                       {"config_hash", hex64(config_hash(config))},
                       {"config", config_json(config)},
                       {"order", "column-major"},
                       {"tensors", tensors}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 8);
  put_u32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out += blob;
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string in = read_file(path);
  if (in.size() < 12 || in.compare(0, 8, kCheckpointMagic) != 0)
    throw DataError(path + ": not a checkpoint");
  const std::uint32_t hlen = get_u32(in, 8);
  if (in.size() < 12ull + hlen) throw DataError(path + ": truncated header");
  const json h = parse_json(in.substr(12, hlen), path);
  if (field<std::string>(h, "format", path) != "detal-checkpoint" ||
      field<int>(h, "version", path) != 1)
    throw DataError(path + ": unsupported checkpoint format");

  Checkpoint ck;
  const int n_c = field<int>(h, "num_classes", path);
  const int D = field<int>(h, "feature_dim", path);
  if (n_c < 1 || D < 2 || D % 2 != 0) throw DataError(path + ": invalid model shape");
  ck.step = field<long>(h, "step", path);
  try {
    ck.config = config_of(field<json>(h, "config", path), "config");
  } catch (const std::invalid_argument& e) {
    throw DataError(path + ": " + e.what());
  }
  ck.config_hash = std::stoull(field<std::string>(h, "config_hash", path), nullptr, 16);
  if (ck.config_hash != config_hash(ck.config)) throw DataError(path + ": config hash mismatch");

  ck.params = init_params<double>(D, n_c, 0);
  const json& tensors = field<json>(h, "tensors", path);
  std::size_t k = 0;
  std::size_t pos = 12 + hlen;
  visit_tensors(
      [&](const std::string& name, auto& t) {
        if (k >= tensors.size()) throw DataError(path + ": missing tensor " + name);
        const json& d = tensors[k++];
        if (field<std::string>(d, "name", path) != name ||
            field<long>(d, "rows", path) != t.rows() || field<long>(d, "cols", path) != t.cols())
          throw DataError(path + ": tensor " + name + " has an unexpected name or shape");
        if (in.size() < pos + 4 * static_cast<std::size_t>(t.size()))
          throw DataError(path + ": truncated parameter blob");
        for (Eigen::Index i = 0; i < t.size(); ++i, pos += 4)
          t.data()[i] = static_cast<double>(get_f32(in, pos));
      },
      ck.params);
  if (k != tensors.size() || pos != in.size())
    throw DataError(path + ": trailing tensors or bytes");
  return ck;
}

void write_pool(const std::string& path, const std::vector<VideoMining>& mining) {
  std::vector<json> lines;
  for (const auto& m : mining)
    lines.push_back({{"schema", kPoolSchema},
                     {"video_id", m.video_id},
                     {"rgb", mining_json(m.rgb)},
                     {"flow", mining_json(m.flow)}});
  write_file(path, join_lines(lines));
}

std::vector<VideoMining> read_pool(const std::string& path) {
  std::vector<VideoMining> out;
  for (const auto& j : parse_lines(path)) {
    if (field<int>(j, "schema", path) != kPoolSchema)
      throw DataError(path + ": unsupported pool schema");
    VideoMining m;
    m.video_id = field<std::string>(j, "video_id", path);
    const std::string where = path + ": " + m.video_id;
    m.rgb = mining_of(field<json>(j, "rgb", where), m.video_id, where);
    m.flow = mining_of(field<json>(j, "flow", where), m.video_id, where);
    out.push_back(std::move(m));
  }
  return out;
}

void write_detections(const std::string& path, const std::vector<VideoDetection>& d) {
  std::vector<json> lines;
  for (const auto& x : d)
    lines.push_back({{"video_id", x.video_id},
                     {"start", x.detection.segment.start},
                     {"end", x.detection.segment.end},
                     {"class_id", x.detection.class_id},
                     {"confidence", x.detection.confidence}});
  write_file(path, join_lines(lines));
}

std::vector<VideoDetection> read_detections(const std::string& path) {
  std::vector<VideoDetection> out;
  for (const auto& j : parse_lines(path)) {
    VideoDetection v;
    v.video_id = field<std::string>(j, "video_id", path);
    v.detection.segment =
        make_segment(field<int>(j, "start", path), field<int>(j, "end", path), path);
    v.detection.class_id = field<int>(j, "class_id", path);
    v.detection.confidence = field<double>(j, "confidence", path);
    out.push_back(v);
  }
  return out;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("run config: ") + e.what());
  }
  RunConfig rc;
  Fields f(j, "run config");
  if (const json* c = f.object("config")) rc.run.config = config_of(*c, "config");
  if (const json* s = f.object("synth")) rc.synth = synth_of(*s);
  if (const json* a = f.object("ablation")) rc.run.ablation = ablation_of(*a);
  f.get("epochs_stage1", rc.run.epochs_stage1);
  f.get("epochs_stage2", rc.run.epochs_stage2);
  f.get("mining_rounds", rc.run.mining_rounds);
  f.finish();
  rc.run.config.validate();
  rc.synth.validate();
  if (rc.run.epochs_stage1 < 0 || rc.run.epochs_stage2 < 0 || rc.run.mining_rounds < 1)
    throw std::invalid_argument("epoch counts must be >= 0 and mining_rounds >= 1");
  return rc;
}

RunConfig read_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw std::invalid_argument(e.what());
  }
  return parse_run_config(text);
}

std::string run_config_json(const RunConfig& rc) {
  const json j = {{"config", config_json(rc.run.config)},
                  {"synth", synth_json(rc.synth)},
                  {"ablation", ablation_json(rc.run.ablation)},
                  {"epochs_stage1", rc.run.epochs_stage1},
                  {"epochs_stage2", rc.run.epochs_stage2},
                  {"mining_rounds", rc.run.mining_rounds}};
  return j.dump(2) + "\n";
}

void write_epoch_csv(const std::string& path, const std::vector<EpochRecord>& records) {
  std::string s =
      "stage,epoch,cls_video,cls_snippet,action,emb,total,action_snippets,"
      "background_snippets,pairs\n";
  for (const auto& r : records)
    s += r.stage + "," + std::to_string(r.epoch) + "," + fmt(r.loss.video) + "," +
         fmt(r.loss.snippet) + "," + fmt(r.loss.action) + "," + fmt(r.loss.embed) + "," +
         fmt(r.total) + "," + std::to_string(r.action_snippets) + "," +
         std::to_string(r.background_snippets) + "," + std::to_string(r.pairs) + "\n";
  write_file(path, s);
}

void write_train_summary(const std::string& path, const RunConfig& rc,
                         const std::vector<EpochRecord>& records, long steps,
                         const std::vector<VideoMining>& mining) {
  json last = json::object();
  for (const auto& r : records) last[r.stage] = {{"epoch", r.epoch}, {"loss", loss_json(r.loss)}};

  long refined = 0, refined_snippets = 0, hard = 0, evident = 0, flagged = 0;
  for (const auto& m : mining)
    for (const MiningResult* r : {&m.rgb, &m.flow}) {
      refined += static_cast<long>(r->refined.size());
      for (const auto& s : r->refined) refined_snippets += s.segment.length();
      hard += static_cast<long>(r->hard_bg.size());
      evident += static_cast<long>(r->evident_bg.size());
      for (const auto& t : r->trace) flagged += t.flagged ? 1 : 0;
    }
  const json j = {{"variant", rc.run.ablation.name()},
                  {"config_hash", hex64(config_hash(rc.run.config))},
                  {"run_config", json::parse(run_config_json(rc))},
                  {"steps", steps},
                  {"final_epoch", last},
                  {"mining",
                   {{"videos", mining.size()},
                    {"refined_segments", refined},
                    {"refined_snippets", refined_snippets},
                    {"hard_bg_segments", hard},
                    {"evident_bg_snippets", evident},
                    {"flagged_annotations", flagged}}}};
  write_file(path, j.dump(2) + "\n");
}

void write_eval_csv(const std::string& path, const EvalReport& r) {
  std::set<int> classes;
  for (const auto& m : r.per_class_ap)
    for (const auto& [c, v] : m) classes.insert(c);
  std::string s = "tiou,mAP";
  for (int c : classes) s += ",AP_class" + std::to_string(c);
  s += "\n";
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    s += fmt(r.thresholds[i]) + "," + fmt(r.map[i]);
    for (int c : classes) {
      auto it = r.per_class_ap[i].find(c);
      s += "," + (it == r.per_class_ap[i].end() ? std::string() : fmt(it->second));
    }
    s += "\n";
  }
  write_file(path, s);
}

void write_eval_json(const std::string& path, const EvalReport& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.thresholds.size(); ++i) {
    json ap = json::object();
    for (const auto& [c, v] : r.per_class_ap[i]) ap[std::to_string(c)] = v;
    rows.push_back({{"tiou", r.thresholds[i]}, {"mAP", r.map[i]}, {"per_class_ap", ap}});
  }
  const json j = {{"thresholds", rows},
                  {"average_range", r.average_range},
                  {"average_mAP", r.average_map},
                  {"num_detections", r.detections.size()},
                  {"errors", r.errors}};
  write_file(path, j.dump(2) + "\n");
}

}  // namespace detal
