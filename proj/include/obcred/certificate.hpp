#pragma once

// Proof certificates as JSON:
//
//   { "rule": "Fork", "pre": "obs(1) * credit", "cmd": "fork { exit }",
//     "post": "obs(0) * credit", "premises": [ ... ],
//     "ruleData": { "child": [1, 0], "kept": [0, 1] } }
//
// Frame carries {"frame": "<assertion>"}; ViewShift optionally carries
// {"pre": "<hint>", "post": "<hint>"} naming the view-shift rules used.

#include "obcred/proofs.hpp"

#include "json.hpp"

#include <stdexcept>
#include <string>

namespace obcred {

class CertificateError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline nlohmann::json to_json(const ProofTree& t) {
  nlohmann::json j;
  j["rule"] = rule_name(t.rule);
  j["pre"] = to_string(t.conclusion.pre);
  j["cmd"] = pretty(t.conclusion.cmd);
  j["post"] = to_string(t.conclusion.post);
  j["premises"] = nlohmann::json::array();
  for (const ProofTree& p : t.premises) j["premises"].push_back(to_json(p));

  nlohmann::json data = nlohmann::json::object();
  if (const auto* f = std::get_if<FrameData>(&t.data)) {
    data["frame"] = to_string(f->frame);
  } else if (const auto* v = std::get_if<ViewShiftData>(&t.data)) {
    if (v->pre_hint) data["pre"] = *v->pre_hint;
    if (v->post_hint) data["post"] = *v->post_hint;
  } else if (const auto* s = std::get_if<ForkSplit>(&t.data)) {
    data["child"] = {s->child_obligations, s->child_credits};
    data["kept"] = {s->kept_obligations, s->kept_credits};
  }
  j["ruleData"] = std::move(data);
  return j;
}

namespace detail {

inline std::string string_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_string())
    throw CertificateError(where + ": missing string field '" + key + "'");
  return j[key].get<std::string>();
}

inline std::pair<Nat, Nat> pair_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 2 || !j[key][0].is_number_unsigned() ||
      !j[key][1].is_number_unsigned())
    throw CertificateError(where + ": ruleData." + key + " must be [obligations, credits]");
  return {j[key][0].get<Nat>(), j[key][1].get<Nat>()};
}

inline ProofTree from_json_at(const nlohmann::json& j, const std::string& where) {
  if (!j.is_object()) throw CertificateError(where + ": expected an object");
  const std::string rule_text = string_field(j, "rule", where);
  const auto rule = proof_rule_from_name(rule_text);
  if (!rule) throw CertificateError(where + ": unknown rule '" + rule_text + "'");

  ProofTree t{{Assertion::tt(), Command::exit(), Assertion::tt()}, *rule, {}, {}};
  try {
    t.conclusion.pre = parse_assertion(string_field(j, "pre", where));
    t.conclusion.cmd = parse(string_field(j, "cmd", where));
    t.conclusion.post = parse_assertion(string_field(j, "post", where));
  } catch (const ParseError& e) {
    throw CertificateError(where + ": " + e.what());
  }

  if (j.contains("premises")) {
    if (!j["premises"].is_array()) throw CertificateError(where + ": premises must be an array");
    for (std::size_t i = 0; i < j["premises"].size(); ++i)
      t.premises.push_back(from_json_at(j["premises"][i], where + "." + std::to_string(i)));
  }

  const nlohmann::json data = j.value("ruleData", nlohmann::json::object());
  if (!data.is_object()) throw CertificateError(where + ": ruleData must be an object");
  switch (*rule) {
  case ProofRule::Frame:
    try {
      t.data = FrameData{parse_assertion(string_field(data, "frame", where + ".ruleData"))};
    } catch (const ParseError& e) {
      throw CertificateError(where + ": frame: " + e.what());
    }
    break;
  case ProofRule::ViewShift: {
    ViewShiftData v;
    if (data.contains("pre")) v.pre_hint = string_field(data, "pre", where + ".ruleData");
    if (data.contains("post")) v.post_hint = string_field(data, "post", where + ".ruleData");
    t.data = std::move(v);
    break;
  }
  case ProofRule::Fork:
    if (data.contains("child") || data.contains("kept")) {
      const auto [co, cc] = pair_field(data, "child", where);
      const auto [ko, kc] = pair_field(data, "kept", where);
      t.data = ForkSplit{co, cc, ko, kc};
    }
    break;
  default:
    break;
  }
  return t;
}

} // namespace detail

inline ProofTree from_json(const nlohmann::json& j) { return detail::from_json_at(j, "root"); }

inline std::string write_certificate(const ProofTree& t) { return to_json(t).dump(2) + "\n"; }

inline ProofTree read_certificate(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CertificateError(std::string("malformed JSON: ") + e.what());
  }
  return from_json(j);
}

} // namespace obcred
