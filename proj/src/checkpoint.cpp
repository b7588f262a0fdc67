#include "adafuse/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "adafuse/error.hpp"
#include "adafuse/tensor_io.hpp"

namespace adafuse {

namespace fs = std::filesystem;

void Manifest::set(std::string key, std::string value) {
  for (auto& [k, v] : entries_) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(key), std::move(value));
}

bool Manifest::has(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return true;
  }
  return false;
}

const std::string& Manifest::get(std::string_view key) const {
  for (const auto& [k, v] : entries_) {
    if (k == key) return v;
  }
  throw ParseError(source_ + ": missing key '" + std::string(key) + "'");
}

void Manifest::write(const fs::path& file) const {
  std::ofstream out(file, std::ios::binary);
  for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  if (!out) throw InputError("failed writing " + file.string());
}

Manifest Manifest::read(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DependencyError("missing manifest " + file.string());
  Manifest m;
  m.source_ = file.string();
  std::string line;
  std::size_t n = 0, offset = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto eq = line.find('=');
    if (!line.empty() && eq == std::string::npos) {
      throw ParseError(file.string() + " line " + std::to_string(n) + " (byte offset " +
                       std::to_string(offset) + "): expected key=value");
    }
    if (!line.empty()) m.set(line.substr(0, eq), line.substr(eq + 1));
    offset += line.size() + 1;
  }
  return m;
}

void save_params(const fs::path& directory, const Params& params, Manifest manifest) {
  fs::create_directories(directory);
  std::string names;
  for (const auto& e : params.entries()) {
    names += (names.empty() ? "" : ",") + e.name;
    write_mdtf(directory / (e.name + ".mdtf"), e.value);
  }
  manifest.set("params", names);
  manifest.set("hash", hash_hex(params.hash()));
  manifest.write(directory / "manifest.txt");
}

std::pair<Manifest, Params> load_params(const fs::path& directory) {
  if (!fs::is_directory(directory)) throw DependencyError("missing checkpoint " + directory.string());
  Manifest m = Manifest::read(directory / "manifest.txt");
  Params p;
  const std::string& names = m.get("params");
  std::size_t start = 0;
  while (start <= names.size() && !names.empty()) {
    const std::size_t end = std::min(names.find(',', start), names.size());
    const std::string name = names.substr(start, end - start);
    p.add(name, read_mdtf(directory / (name + ".mdtf")));
    start = end + 1;
  }
  if (hash_hex(p.hash()) != m.get("hash")) {
    throw ParseError(directory.string() + ": parameter hash does not match the manifest");
  }
  return {std::move(m), std::move(p)};
}

namespace {

std::size_t to_size(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ParseError(what + ": bad integer '" + s + "'");
  }
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(what + ": bad number '" + s + "'");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Manifest net_manifest(const char* kind, const ExpertNet& net) {
  Manifest m;
  m.set("kind", kind);
  m.set("architecture", kExpertArchitecture);
  m.set("modality", modality_name(net.modality().id));
  m.set("channels", std::to_string(net.input_size().channels));
  m.set("height", std::to_string(net.input_size().height));
  m.set("width", std::to_string(net.input_size().width));
  m.set("classes", std::to_string(net.classes()));
  m.set("dropout", fmt(net.dropout_rate()));
  return m;
}

ExpertNet net_from(const fs::path& dir, const char* kind) {
  auto [m, p] = load_params(dir);
  const std::string where = (dir / "manifest.txt").string();
  if (m.get("kind") != kind) {
    throw ParseError(where + ": expected kind " + kind + ", found " + m.get("kind"));
  }
  if (m.get("architecture") != kExpertArchitecture) {
    throw ParseError(where + ": unsupported architecture " + m.get("architecture"));
  }
  Modality mod = parse_modality(m.get("modality"));
  const InputSize in{to_size(m.get("channels"), where), to_size(m.get("height"), where),
                     to_size(m.get("width"), where)};
  mod.channels = in.channels;
  return ExpertNet(mod, in, to_size(m.get("classes"), where), std::move(p),
                   to_double(m.get("dropout"), where));
}

std::string expert_list(const std::vector<ExpertNet>& experts) {
  std::string s;
  for (const auto& e : experts) s += (s.empty() ? "" : ",") + modality_name(e.modality().id);
  return s;
}

template <typename Head>
Head head_from(const fs::path& dir, const char* kind, const std::vector<ExpertNet>& experts) {
  auto [m, p] = load_params(dir);
  const std::string where = (dir / "manifest.txt").string();
  if (m.get("kind") != kind) {
    throw ParseError(where + ": expected kind " + kind + ", found " + m.get("kind"));
  }
  if (m.get("experts") != expert_list(experts)) {
    throw DependencyError(std::string(kind) + " at " + dir.string() + " was trained on experts '" +
                          m.get("experts") + "', not '" + expert_list(experts) + "'");
  }
  for (const auto& e : experts) {
    const std::string key = "expert_hash." + modality_name(e.modality().id);
    if (m.get(key) != hash_hex(e.params().hash())) {
      throw DependencyError(std::string(kind) + " at " + dir.string() + " was trained on a different " +
                            modality_name(e.modality().id) + " expert");
    }
  }
  return Head(to_size(m.get("input_dim"), where), to_size(m.get("output_dim"), where), std::move(p),
              to_double(m.get("dropout"), where));
}

}  // namespace

void save_expert(const fs::path& directory, const ExpertNet& net) {
  save_params(directory, net.params(), net_manifest("expert", net));
}

ExpertNet load_expert(const fs::path& directory) { return net_from(directory, "expert"); }

void save_channel_net(const fs::path& directory, const ExpertNet& net,
                      const std::vector<Modality>& order) {
  Manifest m = net_manifest("channel", net);
  m.set("order", join_modalities(order));
  save_params(directory, net.params(), std::move(m));
}

std::pair<ExpertNet, std::vector<Modality>> load_channel_net(const fs::path& directory) {
  ExpertNet net = net_from(directory, "channel");
  auto order = parse_modalities(Manifest::read(directory / "manifest.txt").get("order"));
  return {std::move(net), std::move(order)};
}

void save_head(const fs::path& directory, const std::string& kind, const TwoLayerHead& head,
               const std::vector<ExpertNet>& experts) {
  Manifest m;
  m.set("kind", kind);
  m.set("input_dim", std::to_string(head.input_dim()));
  m.set("output_dim", std::to_string(head.output_dim()));
  m.set("dropout", fmt(head.dropout_rate()));
  m.set("experts", expert_list(experts));
  for (const auto& e : experts) {
    m.set("expert_hash." + modality_name(e.modality().id), hash_hex(e.params().hash()));
  }
  save_params(directory, head.params(), std::move(m));
}

GatingNet load_gate(const fs::path& directory, const std::vector<ExpertNet>& experts) {
  return head_from<GatingNet>(directory, "gate", experts);
}

LateFusionHead load_late_head(const fs::path& directory, const std::vector<ExpertNet>& experts) {
  return head_from<LateFusionHead>(directory, "late", experts);
}

fs::path expert_dir(const fs::path& model_dir, const Modality& m) {
  return model_dir / "experts" / modality_name(m.id);
}

FusedModel load_fused_model(const fs::path& model_dir, Scheme scheme,
                            const std::optional<std::vector<Modality>>& modalities) {
  FusedModel model;
  model.scheme = scheme;
  if (scheme == Scheme::channel) {
    auto [net, order] = load_channel_net(model_dir / "channel");
    if (modalities && *modalities != order) {
      throw ConfigError("channel network stacks '" + join_modalities(order) + "', not '" +
                        join_modalities(*modalities) + "'");
    }
    model.channel_net = std::move(net);
    model.channel_order = std::move(order);
    model.validate();
    return model;
  }

  std::vector<Modality> mods;
  const fs::path head_dir = model_dir / (scheme == Scheme::late ? "late" : "gate");
  const bool needs_head = scheme != Scheme::average;
  if (modalities) {
    mods = *modalities;
  } else if (needs_head && fs::exists(head_dir / "manifest.txt")) {
    mods = parse_modalities(Manifest::read(head_dir / "manifest.txt").get("experts"));
  } else {
    for (ModalityId id : {ModalityId::rgb, ModalityId::depth, ModalityId::motion}) {
      if (fs::exists(expert_dir(model_dir, modality(id)) / "manifest.txt")) mods.push_back(modality(id));
    }
  }
  if (mods.empty()) throw DependencyError("no expert checkpoints under " + (model_dir / "experts").string());
  for (const auto& m : mods) model.experts.push_back(load_expert(expert_dir(model_dir, m)));
  if (scheme == Scheme::mode || scheme == Scheme::switching) model.gate = load_gate(head_dir, model.experts);
  if (scheme == Scheme::late) model.late_head = load_late_head(head_dir, model.experts);
  model.validate();
  return model;
}

}  // namespace adafuse
