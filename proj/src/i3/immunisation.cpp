#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "i3/immune.hpp"

namespace i3 {

namespace {

namespace pt = boost::property_tree;

constexpr std::string_view kVersion = "1";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& text, const std::string& what) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && std::isspace(static_cast<unsigned char>(*first))) ++first;
  while (last > first && std::isspace(static_cast<unsigned char>(last[-1]))) --last;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || first == last) {
    throw SchemaError(what + ": '" + text + "' is not a number");
  }
  if (!std::isfinite(v)) throw SchemaError(what + " must be finite");
  return v;
}

const pt::ptree& attrs(const pt::ptree& node, const std::string& where) {
  auto it = node.find("<xmlattr>");
  if (it == node.not_found()) throw SchemaError(where + " has no attributes");
  return it->second;
}

std::string required_attr(const pt::ptree& node, const std::string& name, const std::string& where) {
  const auto& a = attrs(node, where);
  auto it = a.find(name);
  if (it == a.not_found()) throw SchemaError(where + " is missing attribute '" + name + "'");
  return it->second.data();
}

/// Element children in document order, skipping attributes and comments.
std::vector<std::pair<std::string, const pt::ptree*>> elements(const pt::ptree& node) {
  std::vector<std::pair<std::string, const pt::ptree*>> out;
  for (const auto& [key, child] : node) {
    if (key == "<xmlattr>" || key == "<xmlcomment>") continue;
    out.emplace_back(key, &child);
  }
  return out;
}

FeatureVector read_features(const pt::ptree& proto, const std::string& where) {
  const auto kids = elements(proto);
  if (kids.size() != kFeatureDims) {
    throw SchemaError(where + " must have exactly " + std::to_string(kFeatureDims) + " <f> elements");
  }
  FeatureVector f{};
  for (std::size_t i = 0; i < kFeatureDims; ++i) {
    const auto& [key, node] = kids[i];
    const std::string name(feature_names()[i]);
    if (key != "f") throw SchemaError(where + ": unexpected <" + key + ">");
    if (required_attr(*node, "name", where) != name) {
      throw SchemaError(where + ": <f> " + std::to_string(i) + " must be named " + name);
    }
    f[i] = parse_number(node->data(), where + "/" + name);
  }
  return f;
}

}  // namespace

std::string export_immunisation(const ImmuneModel& model, double prior) {
  model.validate();
  if (!(prior > 0.0 && prior < 1.0)) throw std::invalid_argument("prior must lie in (0, 1)");

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<immunisation version=\"" << kVersion << "\">\n";
  out << "  <normalisation>\n";
  for (std::size_t i = 0; i < kFeatureDims; ++i) {
    out << "    <dim name=\"" << feature_names()[i] << "\" center=\""
        << fmt(model.normalisation.center[i]) << "\" scale=\"" << fmt(model.normalisation.scale[i])
        << "\"/>\n";
  }
  out << "  </normalisation>\n";
  for (std::size_t p = 0; p < model.prototypes.size(); ++p) {
    out << "  <prototype id=\"" << p << "\">\n";
    for (std::size_t i = 0; i < kFeatureDims; ++i) {
      out << "    <f name=\"" << feature_names()[i] << "\">" << fmt(model.prototypes[p][i])
          << "</f>\n";
    }
    out << "  </prototype>\n";
  }
  out << "  <threshold value=\"" << fmt(model.threshold) << "\"/>\n";
  out << "  <beta value=\"" << fmt(model.beta) << "\"/>\n";
  out << "  <prior normal=\"" << fmt(prior) << "\"/>\n";
  out << "</immunisation>\n";
  return out.str();
}

Immunisation import_immunisation(std::string_view xml) {
  pt::ptree doc;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, doc);
  } catch (const pt::xml_parser_error& e) {
    throw SchemaError(std::string("malformed XML: ") + e.what());
  }

  const auto top = elements(doc);
  if (top.size() != 1 || top[0].first != "immunisation") {
    throw SchemaError("root element must be <immunisation>");
  }
  const pt::ptree& root = *top[0].second;
  const std::string version = required_attr(root, "version", "<immunisation>");
  if (version != kVersion) throw SchemaError("unsupported immunisation version '" + version + "'");

  Immunisation result;
  ImmuneModel& model = result.model;
  bool seen_norm = false;
  bool seen_threshold = false;
  bool seen_beta = false;
  bool seen_prior = false;

  for (const auto& [key, node] : elements(root)) {
    if (key == "normalisation") {
      if (seen_norm || !model.prototypes.empty()) throw SchemaError("<normalisation> out of place");
      seen_norm = true;
      const auto dims = elements(*node);
      if (dims.size() != kFeatureDims) {
        throw SchemaError("<normalisation> must have exactly 12 <dim> elements");
      }
      for (std::size_t i = 0; i < kFeatureDims; ++i) {
        const std::string name(feature_names()[i]);
        if (dims[i].first != "dim") throw SchemaError("<normalisation>: unexpected <" + dims[i].first + ">");
        if (required_attr(*dims[i].second, "name", "<dim>") != name) {
          throw SchemaError("<dim> " + std::to_string(i) + " must be named " + name);
        }
        model.normalisation.center[i] =
            parse_number(required_attr(*dims[i].second, "center", "<dim>"), name + " center");
        const double scale =
            parse_number(required_attr(*dims[i].second, "scale", "<dim>"), name + " scale");
        if (!(scale > 0.0)) throw SchemaError(name + " scale must be > 0");
        model.normalisation.scale[i] = scale;
      }
    } else if (key == "prototype") {
      if (!seen_norm || seen_threshold) throw SchemaError("<prototype> out of place");
      const std::string id = required_attr(*node, "id", "<prototype>");
      if (id != std::to_string(model.prototypes.size())) {
        throw SchemaError("prototype ids must run 0, 1, 2, ... (got '" + id + "')");
      }
      model.prototypes.push_back(read_features(*node, "<prototype id=\"" + id + "\">"));
    } else if (key == "threshold") {
      if (model.prototypes.empty() || seen_threshold) throw SchemaError("<threshold> out of place");
      seen_threshold = true;
      model.threshold = parse_number(required_attr(*node, "value", "<threshold>"), "threshold");
      if (model.threshold < 0.0) throw SchemaError("threshold must be >= 0");
    } else if (key == "beta") {
      if (!seen_threshold || seen_beta) throw SchemaError("<beta> out of place");
      seen_beta = true;
      model.beta = parse_number(required_attr(*node, "value", "<beta>"), "beta");
      if (model.beta < 0.0) throw SchemaError("beta must be >= 0");
    } else if (key == "prior") {
      if (!seen_beta || seen_prior) throw SchemaError("<prior> out of place");
      seen_prior = true;
      result.prior = parse_number(required_attr(*node, "normal", "<prior>"), "prior");
      if (!(result.prior > 0.0 && result.prior < 1.0)) throw SchemaError("prior must lie in (0, 1)");
    } else {
      throw SchemaError("unexpected element <" + key + ">");
    }
  }

  if (!seen_norm) throw SchemaError("missing <normalisation>");
  if (model.prototypes.empty()) throw SchemaError("at least one <prototype> is required");
  if (!seen_threshold) throw SchemaError("missing <threshold>");
  if (!seen_beta) throw SchemaError("missing <beta>");
  if (!seen_prior) throw SchemaError("missing <prior>");
  return result;
}

}  // namespace i3
