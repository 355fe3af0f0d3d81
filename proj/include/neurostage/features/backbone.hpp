#pragma once

#include "neurostage/features/feature_cache.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

namespace neurostage {

struct BackboneOptions {
  // Command that runs the frozen backbone. Empty -> $NEUROSTAGE_BACKBONE_CMD,
  // then "python3 tools/extract_openclip.py".
  std::string command;
  std::string prompt_template = "{}";
  std::string pooling = "global_average";
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char ch : s) {
    if (ch == '\'')
      out += "'\\''";
    else
      out += ch;
  }
  return out + "'";
}

inline std::string backbone_command(const BackboneOptions& opt) {
  if (!opt.command.empty()) return opt.command;
  if (const char* env = std::getenv("NEUROSTAGE_BACKBONE_CMD"); env && *env) return env;
  return "python3 tools/extract_openclip.py";
}

}  // namespace detail

/// Runs the external frozen image/text backbone over `image_dir` and the class
/// labels in `label_file`, writing a feature cache to `out_cache`, then loads
/// and validates it.
///
/// The command receives `--check` first; a non-zero exit means the backbone
/// (or its weights) is not installed and raises EnvironmentError. Everything
/// else in the library works without this step.
inline FeatureBundle extract_backbone_features(const std::filesystem::path& image_dir,
                                               const std::filesystem::path& label_file,
                                               const std::filesystem::path& out_cache,
                                               const BackboneOptions& opt = {}) {
  require<ArgumentError>(std::filesystem::is_directory(image_dir), "image directory ",
                         image_dir.string(), " does not exist");
  require<ArgumentError>(std::filesystem::exists(label_file), "label file ", label_file.string(),
                         " does not exist");
  const std::string cmd = detail::backbone_command(opt);
  if (std::system((cmd + " --check >/dev/null 2>&1").c_str()) != 0)
    throw EnvironmentError(
        "pretrained backbone unavailable: `" + cmd +
        " --check` failed. Install open_clip_torch with ResNet50 weights, or set "
        "NEUROSTAGE_BACKBONE_CMD to an extractor; alternatively use synthetic features "
        "(synth-data) or an existing feature cache (--features DIR).");
  const std::string full = cmd + " --images " + detail::shell_quote(image_dir.string()) +
                           " --labels " + detail::shell_quote(label_file.string()) + " --out " +
                           detail::shell_quote(out_cache.string()) + " --prompt " +
                           detail::shell_quote(opt.prompt_template) + " --pooling " +
                           detail::shell_quote(opt.pooling);
  const int rc = std::system(full.c_str());
  if (rc != 0)
    throw EnvironmentError("backbone extraction failed (exit status " + std::to_string(rc) +
                           "): " + full);
  return load_cached_features(out_cache);
}

class BackboneFeatureProvider : public FeatureProvider {
 public:
  BackboneFeatureProvider(const std::filesystem::path& image_dir,
                          const std::filesystem::path& label_file,
                          const std::filesystem::path& out_cache, const BackboneOptions& opt = {})
      : bundle_(extract_backbone_features(image_dir, label_file, out_cache, opt)) {}
  const FeatureBundle& bundle() const override { return bundle_; }
  std::string kind() const override { return "backbone"; }

 private:
  FeatureBundle bundle_;
};

}  // namespace neurostage
