#include "srlf/templates.hpp"

#include <filesystem>
#include <stdexcept>

#include "srlf/util.hpp"

namespace srlf {

namespace {

// The block markers below (USER:, PROFILE:, ITEMS:, item lines of the form
// "[n] id=... :: ...") are a stable contract: the latent oracle backend
// recovers the structured inputs by parsing them out of the rendered prompt.

constexpr const char* kAssessBody =
    R"(You are a set-wise recommendation assessor. Consider the items below together:
weigh how they relate to each other and how the set as a whole fits the user's
tastes, not just each item in isolation.

USER: {{user_id}}
PROFILE:
{{profile}}
END PROFILE

ITEMS:
{{items}}
END ITEMS

Reply with exactly one JSON object and nothing else:
{"scores": {"<item id>": <preference in [0,1]>, ...}, "compatibility": <number in [0,1]>, "rationale": "<one sentence>"}
The "scores" object must contain every listed item id (or its [n] index) and no others.
)";

constexpr const char* kAssessSchema =
    R"({"scores": {"<item id>": <number in [0,1]>}, "compatibility": <number in [0,1]>, "rationale": "<string>"})";

constexpr const char* kRepairBody =
    R"(Your previous reply could not be used: {{problem}}

ORIGINAL REQUEST:
{{original_prompt}}
END ORIGINAL REQUEST

PREVIOUS REPLY:
{{previous_reply}}
END PREVIOUS REPLY

Answer the original request again. Reply with exactly one JSON object matching
this schema and nothing else:
{{schema}}
)";

constexpr const char* kReflectUserBody =
    R"(You are revising a user preference profile after its predictions disagreed
with observed feedback.

USER: {{user_id}}
PROFILE:
{{profile}}
END PROFILE

OBSERVATIONS:
{{observations}}
END OBSERVATIONS

GUIDANCE:
{{guidance}}
RECENT REPORTS:
{{recent_reports}}

Write the complete revised profile text. Keep what the observations confirm,
add what they reveal, and state dislikes explicitly. Reply with the profile
text only.
)";

constexpr const char* kReflectItemBody =
    R"(You are rewriting an item description: across several evaluations the
predicted appeal of this item contradicted the user's actual feedback.

USER: {{user_id}}
ITEM: {{item_id}}
DESCRIPTION:
{{description}}
END DESCRIPTION

ASSESSMENTS:
{{performance}}
END ASSESSMENTS

ACTUAL FEEDBACK: {{label_context}}

Rewrite the description so a reader would anticipate that feedback. Reply with
the description text only.
)";

}  // namespace

TemplateStore::TemplateStore() {
  templates_["assess"] = PromptTemplate{"assess", kAssessBody, kAssessSchema};
  templates_["repair"] = PromptTemplate{"repair", kRepairBody, kAssessSchema};
  templates_["reflect_user"] = PromptTemplate{"reflect_user", kReflectUserBody, "free text"};
  templates_["reflect_item"] = PromptTemplate{"reflect_item", kReflectItemBody, "free text"};
}

TemplateStore TemplateStore::from_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw std::runtime_error("not a template directory: " + dir);
  TemplateStore store;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".txt")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    std::string name = path.stem().string();
    std::string schema = store.has(name) ? store.get(name).output_schema : "free text";
    store.templates_[name] = PromptTemplate{name, read_text_file(path.string()), schema};
  }
  return store;
}

const PromptTemplate& TemplateStore::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw std::out_of_range("unknown template: " + name);
  return it->second;
}

std::string render_template(const PromptTemplate& tmpl,
                            const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.body.size());
  const std::string& body = tmpl.body;
  size_t pos = 0;
  for (;;) {
    size_t open = body.find("{{", pos);
    if (open == std::string::npos) {
      out.append(body, pos, std::string::npos);
      break;
    }
    size_t close = body.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(body, pos, std::string::npos);
      break;
    }
    out.append(body, pos, open - pos);
    std::string key = body.substr(open + 2, close - open - 2);
    auto it = values.find(key);
    if (it == values.end())
      throw std::invalid_argument("template '" + tmpl.name + "' placeholder not supplied: " + key);
    out += it->second;
    pos = close + 2;
  }
  return out;
}

}  // namespace srlf
