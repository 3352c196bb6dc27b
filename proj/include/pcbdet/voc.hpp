#pragma once

#include <map>
#include <string>
#include <vector>

#include "pcbdet/types.hpp"

namespace pcbdet {

using ClassMap = std::map<std::string, DefectClass, std::less<>>;

/// The six Table-1 names mapped to their ids.
ClassMap default_class_map();

struct VocAnnotation {
  std::string filename;
  int width = 0;
  int height = 0;
  std::vector<LabeledBox> boxes;
};

/// Parses a Pascal-VOC annotation document.
///
/// Malformed XML raises ParseError carrying the parser's line number;
/// missing required elements raise ParseError too. An object whose name is
/// not in `class_map` raises ClassError; an inverted or out-of-bounds box
/// raises ValidationError.
VocAnnotation parse_voc_annotation(const std::string& xml_text, const ClassMap& class_map = default_class_map());

std::string write_voc_annotation(const VocAnnotation& ann);

}  // namespace pcbdet
