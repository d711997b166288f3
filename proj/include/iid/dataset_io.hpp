#pragma once

// Dataset file format: UTF-8 JSON Lines, one frame per line. Frames of a
// sequence are contiguous and ordered. Reals are written with 17 significant
// digits so that write -> read -> write is byte-stable and lossless.

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "iid/core.hpp"
#include "iid/errors.hpp"

namespace iid {

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

namespace detail {

inline void append_array(std::string& line, const double* data, int n) {
  line += '[';
  for (int i = 0; i < n; ++i) {
    if (i) line += ',';
    line += fmt_real(data[i]);
  }
  line += ']';
}

}  // namespace detail

inline void write_dataset(const Dataset& data, std::ostream& os) {
  data.validate();
  for (const auto& seq : data.sequences) {
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      const Frame& f = seq.frames[i];
      const bool interaction =
          seq.interaction_index && *seq.interaction_index == static_cast<int>(i);
      std::string line;
      line.reserve(512);
      line += "{\"seq_id\":\"" + json_escape(seq.id) + "\"";
      line += ",\"env\":\"" + json_escape(seq.env) + "\"";
      line += ",\"label\":";
      line += seq.label ? "true" : "false";
      line += ",\"frame_idx\":" + std::to_string(i);
      line += ",\"t\":" + fmt_real(f.t);
      line += ",\"p_c\":";
      detail::append_array(line, f.p_c.v.data(), kPoseDim);
      line += ",\"p_h\":";
      detail::append_array(line, f.p_h.v.data(), kPoseDim);
      line += ",\"landmarks\":";
      if (f.landmarks) {
        detail::append_array(line, f.landmarks->values.data(), kLandmarkDim);
      } else {
        line += "null";
      }
      line += ",\"gaze_gt\":";
      line += f.gaze_gt ? (*f.gaze_gt ? "true" : "false") : "null";
      line += ",\"m_hat\":";
      line += f.m_hat ? fmt_real(*f.m_hat) : "null";
      line += ",\"interaction\":";
      line += interaction ? "true" : "false";
      line += "}\n";
      os << line;
    }
  }
}

inline void write_dataset(const Dataset& data, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_dataset(data, os);
  if (!os) throw IoError("failed writing " + path);
}

namespace detail {

inline double require_real(const nlohmann::json& j, const char* key,
                           std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw ParseError(line, std::string("missing or non-numeric '") + key + "'");
  }
  return it->get<double>();
}

inline void read_pose(const nlohmann::json& j, const char* key, Pose9& out,
                      std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_array() || it->size() != kPoseDim) {
    throw ParseError(line, std::string("'") + key + "' must be an array of " +
                              std::to_string(kPoseDim) + " reals");
  }
  for (int i = 0; i < kPoseDim; ++i) {
    if (!(*it)[i].is_number()) {
      throw ParseError(line, std::string("non-numeric entry in '") + key + "'");
    }
    out.v[i] = (*it)[i].get<double>();
  }
}

}  // namespace detail

inline Dataset read_dataset(std::istream& is) {
  Dataset data;
  Sequence* current = nullptr;
  std::map<std::string, bool> finished;  // ids of closed sequences
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(line_no, "expected a JSON object");

    auto id_it = j.find("seq_id");
    if (id_it == j.end() || !id_it->is_string()) {
      throw ParseError(line_no, "missing or non-string 'seq_id'");
    }
    const std::string id = id_it->get<std::string>();
    auto env_it = j.find("env");
    if (env_it == j.end() || !env_it->is_string()) {
      throw ParseError(line_no, "missing or non-string 'env'");
    }
    auto label_it = j.find("label");
    if (label_it == j.end() || !label_it->is_boolean()) {
      throw ParseError(line_no, "missing or non-boolean 'label'");
    }
    const bool label = label_it->get<bool>();
    auto idx_it = j.find("frame_idx");
    if (idx_it == j.end() || !idx_it->is_number_integer()) {
      throw ParseError(line_no, "missing or non-integer 'frame_idx'");
    }
    const int frame_idx = idx_it->get<int>();

    if (!current || current->id != id) {
      if (current) finished[current->id] = true;
      if (finished.count(id)) {
        throw SchemaError("sequence " + id +
                          " is not contiguous in the file (line " +
                          std::to_string(line_no) + ")");
      }
      data.sequences.emplace_back();
      current = &data.sequences.back();
      current->id = id;
      current->env = env_it->get<std::string>();
      current->label = label;
    }
    if (current->label != label) {
      throw SchemaError("sequence " + id + " carries mixed labels (line " +
                        std::to_string(line_no) + ")");
    }
    if (current->env != env_it->get<std::string>()) {
      throw SchemaError("sequence " + id + " carries mixed env tags (line " +
                        std::to_string(line_no) + ")");
    }
    if (frame_idx != static_cast<int>(current->frames.size())) {
      throw SchemaError("sequence " + id + ": frame_idx " +
                        std::to_string(frame_idx) + " out of order (line " +
                        std::to_string(line_no) + ")");
    }

    Frame f;
    f.t = detail::require_real(j, "t", line_no);
    detail::read_pose(j, "p_c", f.p_c, line_no);
    detail::read_pose(j, "p_h", f.p_h, line_no);

    auto lm_it = j.find("landmarks");
    if (lm_it == j.end()) throw ParseError(line_no, "missing 'landmarks'");
    if (!lm_it->is_null()) {
      if (!lm_it->is_array() || lm_it->size() != kLandmarkDim) {
        throw ParseError(line_no, "'landmarks' must be null or an array of " +
                                      std::to_string(kLandmarkDim) + " reals");
      }
      LandmarkSet lm;
      for (int i = 0; i < kLandmarkDim; ++i) {
        if (!(*lm_it)[i].is_number()) {
          throw ParseError(line_no, "non-numeric entry in 'landmarks'");
        }
        lm.values[i] = (*lm_it)[i].get<double>();
      }
      lm.normalized = true;  // files store normalized landmark coordinates
      f.landmarks = lm;
    }

    auto gg_it = j.find("gaze_gt");
    if (gg_it == j.end()) throw ParseError(line_no, "missing 'gaze_gt'");
    if (!gg_it->is_null()) {
      if (!gg_it->is_boolean()) {
        throw ParseError(line_no, "'gaze_gt' must be null or boolean");
      }
      f.gaze_gt = gg_it->get<bool>();
    }

    auto mh_it = j.find("m_hat");
    if (mh_it == j.end()) throw ParseError(line_no, "missing 'm_hat'");
    if (!mh_it->is_null()) {
      if (!mh_it->is_number()) {
        throw ParseError(line_no, "'m_hat' must be null or a real");
      }
      f.m_hat = mh_it->get<double>();
    }

    auto int_it = j.find("interaction");
    if (int_it == j.end() || !int_it->is_boolean()) {
      throw ParseError(line_no, "missing or non-boolean 'interaction'");
    }
    if (int_it->get<bool>()) {
      if (current->interaction_index) {
        throw SchemaError("sequence " + id +
                          " marks more than one interaction frame (line " +
                          std::to_string(line_no) + ")");
      }
      current->interaction_index = frame_idx;
    }
    current->frames.push_back(std::move(f));
  }

  for (const auto& seq : data.sequences) {
    if (seq.label != seq.interaction_index.has_value()) {
      throw SchemaError("sequence " + seq.id + ": label " +
                        (seq.label ? "true" : "false") +
                        " inconsistent with interaction marking");
    }
  }
  data.validate();
  return data;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_dataset(is);
}

}  // namespace iid
