#pragma once

#include <map>
#include <string>

#include "srlf/domain.hpp"

namespace srlf {

// Prompt templates, one file per template with {{placeholder}} markers.
// Shipped defaults: assess, repair, reflect_user, reflect_item. A store
// constructed without a directory serves the built-in defaults.
class TemplateStore {
 public:
  TemplateStore();

  // Loads every *.txt in `dir` (template name = file stem), overriding the
  // built-in defaults name by name.
  static TemplateStore from_directory(const std::string& dir);

  const PromptTemplate& get(const std::string& name) const;
  bool has(const std::string& name) const { return templates_.count(name) > 0; }

 private:
  std::map<std::string, PromptTemplate> templates_;
};

// Substitutes every {{name}} marker in the body. Throws if the body
// references a placeholder the values map does not supply.
std::string render_template(const PromptTemplate& tmpl,
                            const std::map<std::string, std::string>& values);

}  // namespace srlf
