#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "swea/binio.hpp"
#include "swea/error.hpp"

namespace swea {

/// One fact rewrite: on `prompt` (which may embed "{subject}" or, failing
/// that, is prefixed by the subject), the model should now continue with
/// new_object instead of original_object. Paraphrases probe generalization;
/// neighborhood probes are same-relation prompts about other subjects whose
/// answers must not move.
struct EditRequest {
  std::string subject;
  std::string prompt;
  std::string original_object;
  std::string new_object;
  std::vector<std::string> paraphrases;
  struct Probe {
    std::string prompt;
    std::string object;
    bool operator==(const Probe&) const = default;
  };
  std::vector<Probe> neighborhood;

  bool operator==(const EditRequest&) const = default;

  /// Stable identifier used in error reporting.
  std::string id() const { return subject + " -> " + new_object; }

  /// The prompt with the subject substituted in. A "{subject}" placeholder is
  /// replaced; otherwise the subject is prepended.
  std::string rendered_prompt() const { return render_prompt(prompt); }
  std::string render_prompt(const std::string& templ) const {
    const std::string ph = "{subject}";
    auto pos = templ.find(ph);
    if (pos == std::string::npos) return subject + " " + templ;
    std::string out = templ;
    out.replace(pos, ph.size(), subject);
    return out;
  }
};

/// Knobs of the fused optimizing-then-suppressing edit step. Defaults are the
/// reference operating point.
struct FusionConfig {
  double alpha = 0.2;         // weight of the KL anchor to the pre-edit model
  double beta = 1.0;          // weight of the new-object NLL term
  double gamma = 0.5;         // suppression strength
  double t = 0.35;            // knowledge-dimension threshold (fraction of max)
  int steps = 25;             // optimizer iterations
  double lr = 2e-2;
  double weight_decay = 0.3;  // additive L2 pull on the delta
  double clamp_factor = 1.0;  // per-row norm cap, relative to the base row
  int riemann_steps = 20;     // integration resolution for attribution
  int prefix_count = 4;       // sampled prefixes per request
  int prefix_length = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (steps < 0 || riemann_steps < 1 || prefix_count < 0 ||
        prefix_length < 1) {
      throw ConfigError("fusion config: counts out of range");
    }
    if (lr <= 0 || clamp_factor <= 0) {
      throw ConfigError("fusion config: lr and clamp_factor must be > 0");
    }
    if (t < 0 || t > 1) {
      throw ConfigError("fusion config: threshold t must lie in [0, 1]");
    }
    if (alpha < 0 || beta < 0 || gamma < 0 || weight_decay < 0) {
      throw ConfigError("fusion config: weights must be >= 0");
    }
  }

  bool operator==(const FusionConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const EditRequest::Probe& p) {
  j = {{"prompt", p.prompt}, {"object", p.object}};
}
inline void from_json(const nlohmann::json& j, EditRequest::Probe& p) {
  j.at("prompt").get_to(p.prompt);
  j.at("object").get_to(p.object);
}

inline void to_json(nlohmann::json& j, const EditRequest& r) {
  j = {{"subject", r.subject},
       {"prompt", r.prompt},
       {"original_object", r.original_object},
       {"new_object", r.new_object},
       {"paraphrases", r.paraphrases},
       {"neighborhood", r.neighborhood}};
}
inline void from_json(const nlohmann::json& j, EditRequest& r) {
  j.at("subject").get_to(r.subject);
  j.at("prompt").get_to(r.prompt);
  j.at("original_object").get_to(r.original_object);
  j.at("new_object").get_to(r.new_object);
  r.paraphrases = j.value("paraphrases", std::vector<std::string>{});
  r.neighborhood = j.value("neighborhood", std::vector<EditRequest::Probe>{});
}

inline void to_json(nlohmann::json& j, const FusionConfig& c) {
  j = {{"alpha", c.alpha},
       {"beta", c.beta},
       {"gamma", c.gamma},
       {"t", c.t},
       {"steps", c.steps},
       {"lr", c.lr},
       {"weight_decay", c.weight_decay},
       {"clamp_factor", c.clamp_factor},
       {"riemann_steps", c.riemann_steps},
       {"prefix_count", c.prefix_count},
       {"prefix_length", c.prefix_length},
       {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, FusionConfig& c) {
  j.at("alpha").get_to(c.alpha);
  j.at("beta").get_to(c.beta);
  j.at("gamma").get_to(c.gamma);
  j.at("t").get_to(c.t);
  j.at("steps").get_to(c.steps);
  j.at("lr").get_to(c.lr);
  j.at("weight_decay").get_to(c.weight_decay);
  j.at("clamp_factor").get_to(c.clamp_factor);
  j.at("riemann_steps").get_to(c.riemann_steps);
  j.at("prefix_count").get_to(c.prefix_count);
  j.at("prefix_length").get_to(c.prefix_length);
  j.at("seed").get_to(c.seed);
}

/// Reads one EditRequest per non-blank line.
inline std::vector<EditRequest> load_requests_jsonl(const std::string& path) {
  std::string text = read_file_bytes(path);
  std::vector<EditRequest> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string line = text.substr(
        pos, nl == std::string::npos ? std::string::npos : nl - pos);
    ++line_no;
    pos = (nl == std::string::npos) ? text.size() + 1 : nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<EditRequest>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("requests file '" + path + "' line " +
                        std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void save_requests_jsonl(const std::string& path,
                                const std::vector<EditRequest>& requests) {
  std::string out;
  for (const auto& r : requests) {
    out += nlohmann::json(r).dump();
    out.push_back('\n');
  }
  atomic_write_file(path, out);
}

}  // namespace swea
