#pragma once

#include <map>
#include <string>
#include <vector>

namespace aop {

// Editable prompt assets for the annotation pipeline and the loop agents.
// Templates use {placeholder} substitution; see each default template for
// the placeholders it consumes. Known template names: segment_annotation,
// global_synthesis, global_chunk, planner, reflector, reasoner,
// direct_inference, tools.
class PromptLibrary {
 public:
  static PromptLibrary defaults();

  // Defaults with any  <name>.txt  files found in `directory` overriding the
  // corresponding template.
  static PromptLibrary from_directory(const std::string& directory);

  const std::string& get(const std::string& name) const;
  void set(const std::string& name, std::string text);
  std::vector<std::string> names() const;

  static std::string render(const std::string& tmpl,
                            const std::map<std::string, std::string>& values);

 private:
  std::map<std::string, std::string> templates_;
};

}  // namespace aop
