#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace patchlab {

enum class Method { ERM, CUTOUT, CUTMIX };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::ERM: return "erm";
    case Method::CUTOUT: return "cutout";
    case Method::CUTMIX: return "cutmix";
  }
  return "?";
}

inline std::optional<Method> method_from_name(std::string_view name) {
  if (name == "erm") return Method::ERM;
  if (name == "cutout") return Method::CUTOUT;
  if (name == "cutmix") return Method::CUTMIX;
  return std::nullopt;
}

}  // namespace patchlab
