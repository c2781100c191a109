#include "aop/structured.hpp"

#include "aop/errors.hpp"

namespace aop {

nlohmann::json extract_fenced_json(const std::string& text) {
  std::string payload = text;
  const std::size_t close = text.rfind("```");
  if (close != std::string::npos && close > 0) {
    const std::size_t open = text.rfind("```", close - 1);
    if (open != std::string::npos && open + 3 <= close) {
      std::size_t body_start = open + 3;
      // Skip an info string such as "json" up to the end of that line.
      const std::size_t newline = text.find('\n', body_start);
      if (newline != std::string::npos && newline < close) body_start = newline + 1;
      payload = text.substr(body_start, close - body_start);
    }
  }
  try {
    return nlohmann::json::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Parse, std::string("no parseable JSON block: ") + e.what());
  }
}

}  // namespace aop
