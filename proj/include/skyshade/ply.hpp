#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "skyshade/error.hpp"

namespace skyshade::ply {

enum class Scalar { Float32, Float64, Int8, UInt8, Int16, UInt16, Int32, UInt32 };

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::Int8:
    case Scalar::UInt8: return 1;
    case Scalar::Int16:
    case Scalar::UInt16: return 2;
    case Scalar::Float32:
    case Scalar::Int32:
    case Scalar::UInt32: return 4;
    case Scalar::Float64: return 8;
  }
  return 0;
}

inline const char* scalar_name(Scalar s) {
  switch (s) {
    case Scalar::Float32: return "float";
    case Scalar::Float64: return "double";
    case Scalar::Int8: return "char";
    case Scalar::UInt8: return "uchar";
    case Scalar::Int16: return "short";
    case Scalar::UInt16: return "ushort";
    case Scalar::Int32: return "int";
    case Scalar::UInt32: return "uint";
  }
  return "float";
}

inline bool scalar_from_name(const std::string& name, Scalar& out) {
  if (name == "float" || name == "float32") out = Scalar::Float32;
  else if (name == "double" || name == "float64") out = Scalar::Float64;
  else if (name == "char" || name == "int8") out = Scalar::Int8;
  else if (name == "uchar" || name == "uint8") out = Scalar::UInt8;
  else if (name == "short" || name == "int16") out = Scalar::Int16;
  else if (name == "ushort" || name == "uint16") out = Scalar::UInt16;
  else if (name == "int" || name == "int32") out = Scalar::Int32;
  else if (name == "uint" || name == "uint32") out = Scalar::UInt32;
  else return false;
  return true;
}

struct Property {
  std::string name;
  Scalar type = Scalar::Float32;
  std::vector<double> values;  // one per vertex, widened to double
};

/// Vertex table of a PLY file. Extra properties ride along untouched so the
/// filter stage can pass them through.
struct VertexTable {
  std::size_t count = 0;
  std::vector<Property> properties;
  std::size_t dropped_non_finite = 0;

  const Property* find(const std::string& name) const {
    for (const auto& p : properties)
      if (p.name == name) return &p;
    return nullptr;
  }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < properties.size(); ++i)
      if (properties[i].name == name) return static_cast<int>(i);
    return -1;
  }
};

namespace detail {

inline double decode_scalar(const unsigned char* p, Scalar type) {
  switch (type) {
    case Scalar::Float32: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case Scalar::Float64: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
    case Scalar::Int8: return *reinterpret_cast<const std::int8_t*>(p);
    case Scalar::UInt8: return *p;
    case Scalar::Int16: {
      std::int16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case Scalar::UInt16: {
      std::uint16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case Scalar::Int32: {
      std::int32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case Scalar::UInt32: {
      std::uint32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
  }
  return 0.0;
}

inline void encode_scalar(double v, Scalar type, std::string& out) {
  char buf[8];
  std::size_t n = 0;
  switch (type) {
    case Scalar::Float32: {
      const float f = static_cast<float>(v);
      std::memcpy(buf, &f, n = 4);
      break;
    }
    case Scalar::Float64: std::memcpy(buf, &v, n = 8); break;
    case Scalar::Int8: {
      const std::int8_t i = static_cast<std::int8_t>(v);
      std::memcpy(buf, &i, n = 1);
      break;
    }
    case Scalar::UInt8: {
      const std::uint8_t i = static_cast<std::uint8_t>(v);
      std::memcpy(buf, &i, n = 1);
      break;
    }
    case Scalar::Int16: {
      const std::int16_t i = static_cast<std::int16_t>(v);
      std::memcpy(buf, &i, n = 2);
      break;
    }
    case Scalar::UInt16: {
      const std::uint16_t i = static_cast<std::uint16_t>(v);
      std::memcpy(buf, &i, n = 2);
      break;
    }
    case Scalar::Int32: {
      const std::int32_t i = static_cast<std::int32_t>(v);
      std::memcpy(buf, &i, n = 4);
      break;
    }
    case Scalar::UInt32: {
      const std::uint32_t i = static_cast<std::uint32_t>(v);
      std::memcpy(buf, &i, n = 4);
      break;
    }
  }
  out.append(buf, n);
}

inline void format_ascii(double v, Scalar type, std::ostream& out) {
  char buf[40];
  if (type == Scalar::Float32)
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(v)));
  else if (type == Scalar::Float64)
    std::snprintf(buf, sizeof(buf), "%.17g", v);
  else
    std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
  out << buf;
}

}  // namespace detail

/// Reads the vertex element of an ascii or binary-little-endian PLY file.
/// Rows with a non-finite x/y/z are dropped and counted.
inline VertexTable read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) fail(errc::corrupt_header, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ply") fail(errc::corrupt_header, "missing 'ply' magic");

  bool binary = false;
  bool format_seen = false;
  VertexTable table;
  bool in_vertex = false;
  bool vertex_seen = false;

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else fail(errc::unsupported_format, "PLY format '" + fmt + "'");
      format_seen = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        if (vertex_seen) fail(errc::corrupt_header, "duplicate vertex element");
        table.count = count;
        in_vertex = true;
        vertex_seen = true;
      } else {
        if (count != 0)
          fail(errc::unsupported_format, "non-empty element '" + name + "'");
        in_vertex = false;
      }
    } else if (tok == "property") {
      if (!in_vertex) continue;
      std::string type_name, prop_name;
      ls >> type_name;
      if (type_name == "list")
        fail(errc::unsupported_format, "list properties on vertices");
      ls >> prop_name;
      Property p;
      if (!scalar_from_name(type_name, p.type))
        fail(errc::corrupt_header, "unknown property type '" + type_name + "'");
      p.name = prop_name;
      table.properties.push_back(std::move(p));
    } else if (tok == "end_header") {
      break;
    } else {
      fail(errc::corrupt_header, "unexpected header token '" + tok + "'");
    }
  }
  if (!format_seen) fail(errc::corrupt_header, "missing format line");
  if (!vertex_seen) fail(errc::corrupt_header, "missing vertex element");
  const int xi = table.index_of("x"), yi = table.index_of("y"), zi = table.index_of("z");
  if (xi < 0 || yi < 0 || zi < 0)
    fail(errc::corrupt_header, "vertex element lacks x/y/z properties");

  const std::size_t nprops = table.properties.size();
  for (auto& p : table.properties) p.values.reserve(table.count);
  std::vector<double> row(nprops);

  auto keep_row = [&](const std::vector<double>& r) {
    if (!std::isfinite(r[xi]) || !std::isfinite(r[yi]) || !std::isfinite(r[zi])) {
      ++table.dropped_non_finite;
      return;
    }
    for (std::size_t c = 0; c < nprops; ++c) table.properties[c].values.push_back(r[c]);
  };

  if (binary) {
    std::size_t stride = 0;
    for (const auto& p : table.properties) stride += scalar_size(p.type);
    std::vector<unsigned char> buf(stride);
    for (std::size_t r = 0; r < table.count; ++r) {
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(stride));
      if (static_cast<std::size_t>(in.gcount()) != stride)
        fail(errc::truncated_payload, "binary payload ends at row " + std::to_string(r) +
                                          " of " + std::to_string(table.count));
      std::size_t off = 0;
      for (std::size_t c = 0; c < nprops; ++c) {
        row[c] = detail::decode_scalar(buf.data() + off, table.properties[c].type);
        off += scalar_size(table.properties[c].type);
      }
      keep_row(row);
    }
  } else {
    for (std::size_t r = 0; r < table.count; ++r) {
      if (!std::getline(in, line))
        fail(errc::truncated_payload, "ascii payload ends at row " + std::to_string(r) +
                                          " of " + std::to_string(table.count));
      std::istringstream ls(line);
      for (std::size_t c = 0; c < nprops; ++c) {
        std::string tok;
        if (!(ls >> tok))
          fail(errc::truncated_payload, "row " + std::to_string(r) + " has too few values");
        try {
          row[c] = std::stod(tok);
        } catch (const std::exception&) {
          fail(errc::truncated_payload,
               "row " + std::to_string(r) + ": '" + tok + "' is not a number");
        }
      }
      keep_row(row);
    }
  }
  table.count = table.properties.empty() ? 0 : table.properties.front().values.size();
  return table;
}

/// Writes a vertex table, ascii or binary little-endian.
inline void write(const std::string& path, const VertexTable& table, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_failure, "cannot open '" + path + "' for writing");
  const std::size_t n =
      table.properties.empty() ? 0 : table.properties.front().values.size();
  out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
  out << "element vertex " << n << "\n";
  for (const auto& p : table.properties)
    out << "property " << scalar_name(p.type) << " " << p.name << "\n";
  out << "end_header\n";
  if (binary) {
    std::string buf;
    for (std::size_t r = 0; r < n; ++r) {
      buf.clear();
      for (const auto& p : table.properties) detail::encode_scalar(p.values[r], p.type, buf);
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
  } else {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < table.properties.size(); ++c) {
        if (c) out << ' ';
        detail::format_ascii(table.properties[c].values[r], table.properties[c].type, out);
      }
      out << "\n";
    }
  }
  if (!out) fail(errc::io_failure, "write failed on '" + path + "'");
}

}  // namespace skyshade::ply
