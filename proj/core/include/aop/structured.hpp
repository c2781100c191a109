#pragma once

#include <string>

#include <json.hpp>

namespace aop {

// Extracts the last fenced JSON block (```json ... ``` or plain ``` ... ```)
// from model output and parses it; falls back to parsing the whole text when
// no fence is present. Throws ErrorKind::Parse with the underlying reason.
nlohmann::json extract_fenced_json(const std::string& text);

}  // namespace aop
