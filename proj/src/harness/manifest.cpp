#include <set>

#include "vfc/harness.hpp"
#include "vfc/util.hpp"

namespace vfc {
namespace {

bool is_remote(const std::string& p) {
  return p.rfind("http://", 0) == 0 || p.rfind("https://", 0) == 0 || p.rfind("data:", 0) == 0;
}

ImageRef resolve_image(const std::string& id, const std::string& path, const fs::path& base,
                       std::vector<std::string>& missing) {
  if (is_remote(path)) return ImageRef::url(id, path);
  fs::path p = fs::path(path).is_absolute() ? fs::path(path) : base / path;
  if (!fs::is_regular_file(p)) missing.push_back(path);
  return ImageRef::file(id, p.lexically_normal().string());
}

double number_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  return j[key].get<double>();
}

}  // namespace

std::string_view to_string(ManifestKind k) noexcept { return k == ManifestKind::images2d ? "images2d" : "objects3d"; }

const ManifestEntry* Manifest::find(const std::string& item_id) const {
  for (const auto& e : entries)
    if (e.item_id == item_id) return &e;
  return nullptr;
}

Manifest load_manifest(const fs::path& path, const std::vector<ViewAngle>& default_views) {
  Manifest m;
  m.path = path;
  fs::path base = path.parent_path();
  std::vector<std::string> missing;
  std::vector<std::string> dups;
  std::set<std::string> seen;
  std::optional<ManifestKind> kind;

  auto lines = split(read_file(path), '\n');
  for (std::size_t n = 0; n < lines.size(); ++n) {
    if (trim(lines[n]).empty()) continue;
    std::string where = path.string() + ":" + std::to_string(n + 1);
    ManifestEntry e;
    ManifestKind line_kind;
    try {
      auto j = json::parse(lines[n]);
      if (!j.is_object()) fail(ErrorCode::schema_error, where + ": entry must be an object");
      if (!j.contains("item_id") || !j["item_id"].is_string() || j["item_id"].get<std::string>().empty())
        fail(ErrorCode::schema_error, where + ": missing item_id");
      e.item_id = j["item_id"].get<std::string>();
      if (j.contains("gt_captions")) e.gt_captions = j["gt_captions"].get<std::vector<std::string>>();
      bool has_image = j.contains("image"), has_views = j.contains("views");
      if (has_image == has_views) fail(ErrorCode::schema_error, where + ": exactly one of image/views is required");
      if (has_image) {
        line_kind = ManifestKind::images2d;
        e.image_path = j["image"].get<std::string>();
        e.image = resolve_image(e.item_id, e.image_path, base, missing);
      } else {
        line_kind = ManifestKind::objects3d;
        const auto& views = j["views"];
        if (!views.is_array() || views.empty()) fail(ErrorCode::schema_error, where + ": views must be a non-empty list");
        std::set<std::string> view_ids;
        for (std::size_t k = 0; k < views.size(); ++k) {
          const auto& v = views[k];
          ObjectView ov;
          std::string rel = v.is_string() ? v.get<std::string>() : v.at("image").get<std::string>();
          ov.view_id = v.is_object() ? v.value("view_id", "view" + std::to_string(k)) : "view" + std::to_string(k);
          ViewAngle def = k < default_views.size() ? default_views[k] : ViewAngle{};
          if (v.is_object()) {
            ov.angle.azimuth_deg = number_or(v, "azimuth", def.azimuth_deg);
            ov.angle.elevation_deg = number_or(v, "elevation", def.elevation_deg);
          } else {
            ov.angle = def;
          }
          if (!view_ids.insert(ov.view_id).second)
            fail(ErrorCode::schema_error, where + ": duplicate view_id '" + ov.view_id + "'");
          ov.image = resolve_image(e.item_id + "/" + ov.view_id, rel, base, missing);
          e.view_paths.push_back(rel);
          e.views.push_back(std::move(ov));
        }
      }
    } catch (const json::exception& ex) {
      fail(ErrorCode::schema_error, where + ": " + ex.what());
    }
    if (kind && *kind != line_kind) fail(ErrorCode::schema_error, where + ": manifest mixes 2D and 3D entries");
    kind = line_kind;
    if (!seen.insert(e.item_id).second) dups.push_back(e.item_id);
    m.entries.push_back(std::move(e));
  }
  if (!dups.empty()) fail(ErrorCode::duplicate_ids, "duplicate item ids: " + join(dups, ", "));
  if (!missing.empty()) fail(ErrorCode::missing_files, "missing files: " + join(missing, ", "));
  if (kind) m.kind = *kind;
  return m;
}

}  // namespace vfc
