#include "protofuse/corpus/io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "protofuse/corpus/text.hpp"

namespace protofuse::corpus {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json manifest_json(const DomainManifest& m) {
  json labels = json::array();
  for (const auto& l : m.labels) labels.push_back({{"name", l.name}, {"definition", l.definition}});
  json out = {{"domain_id", m.domain_id}, {"labels", labels}};
  if (!m.source_meta.empty()) out["source_meta"] = m.source_meta;
  return out;
}

DomainManifest manifest_from(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("manifest: expected a JSON object");
  DomainManifest m;
  m.domain_id = j.at("domain_id").get<std::string>();
  if (m.domain_id.empty()) throw std::invalid_argument("manifest: empty domain_id");
  for (const auto& l : j.at("labels")) {
    m.labels.push_back({l.at("name").get<std::string>(), l.value("definition", std::string())});
  }
  if (j.contains("source_meta")) m.source_meta = j.at("source_meta").get<std::vector<std::string>>();
  m.validate();
  return m;
}

}  // namespace

DomainManifest parse_manifest(const std::string& json_text) {
  try {
    return manifest_from(json::parse(json_text));
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("manifest: ") + e.what());
  }
}

DomainManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path));
}

std::string manifest_to_json(const DomainManifest& manifest) {
  return manifest_json(manifest).dump(2);
}

Dataset load_domain(const std::filesystem::path& manifest_file,
                    const std::filesystem::path& records_file) {
  DomainManifest manifest = load_manifest(manifest_file);
  std::ifstream in(records_file);
  if (!in) throw std::runtime_error("cannot open '" + records_file.string() + "'");

  std::vector<Example> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = records_file.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw std::invalid_argument(where + ": malformed record: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("text") || !rec.contains("label") ||
        !rec["text"].is_string() || !rec["label"].is_string()) {
      throw std::invalid_argument(where + ": record needs string fields 'text' and 'label'");
    }
    const auto label = rec["label"].get<std::string>();
    const auto idx = manifest.find(label);
    if (!idx) {
      throw std::invalid_argument(where + ": unknown label '" + label + "' for domain '" +
                                  manifest.domain_id + "'");
    }
    Example ex;
    ex.text = preprocess_text(rec["text"].get<std::string>());
    ex.label_index = *idx;
    ex.domain_id = manifest.domain_id;
    ex.uid = line_no;
    if (rec.contains("id")) {
      ex.id = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
    }
    examples.push_back(std::move(ex));
  }
  return Dataset(std::move(manifest), std::move(examples), SplitTag::full);
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  json examples = json::array();
  for (const auto& ex : d.examples()) {
    json e = {{"uid", ex.uid}, {"text", ex.text}, {"label", d.manifest().label(ex.label_index).name}};
    if (ex.id) e["id"] = *ex.id;
    examples.push_back(std::move(e));
  }
  json doc = {{"version", 1},
              {"manifest", manifest_json(d.manifest())},
              {"split", to_string(d.split_tag())},
              {"examples", std::move(examples)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << doc.dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  if (doc.value("version", 0) != 1) {
    throw std::invalid_argument(path.string() + ": unsupported dataset version");
  }
  DomainManifest manifest = manifest_from(doc.at("manifest"));
  std::vector<Example> examples;
  for (const auto& e : doc.at("examples")) {
    const auto label = e.at("label").get<std::string>();
    const auto idx = manifest.find(label);
    if (!idx) throw std::invalid_argument(path.string() + ": unknown label '" + label + "'");
    Example ex;
    ex.text = e.at("text").get<std::string>();
    ex.label_index = *idx;
    ex.domain_id = manifest.domain_id;
    ex.uid = e.at("uid").get<std::uint64_t>();
    if (e.contains("id")) ex.id = e["id"].get<std::string>();
    examples.push_back(std::move(ex));
  }
  return Dataset(std::move(manifest), std::move(examples),
                 split_tag_from_string(doc.value("split", std::string("full"))));
}

}  // namespace protofuse::corpus
