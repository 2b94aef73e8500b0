#pragma once
// Text formats.
//
// Surface files:
//   # comment
//   triangle 0
//   v 1 0
//   v 0 1
//   v -1 -1
//   glue 0.0 1.2 +1
//   mark 0.1
// Coordinates are exact rationals: "p/q", integers, or plain decimals.
// Slot a.b is side b of triangle a (corner b to corner b+1); mark a.b names
// corner b of triangle a and marks its whole vertex class.
//
// Curve files:
//   curve name: 0.1+,2.0-,1.1
// Each entry is a door the curve crosses, in order; "+" (default) crosses
// out of the named slot, "-" crosses into it (out of its partner).

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "semiflat/errors.hpp"
#include "semiflat/surface.hpp"

namespace semiflat {

struct CurveInput {
  std::string name;
  std::vector<std::pair<SlotRef, bool>> doors;  // (slot, forward)
};

namespace detail {

inline SlotRef parse_slot(const std::string& tok) {
  auto dotpos = tok.find('.');
  if (dotpos == std::string::npos || dotpos == 0 || dotpos + 1 >= tok.size())
    fail(errc::parse_error, "expected t.i slot reference, got '" + tok + "'");
  try {
    return {std::stoi(tok.substr(0, dotpos)), std::stoi(tok.substr(dotpos + 1))};
  } catch (const std::exception&) {
    fail(errc::parse_error, "bad slot reference '" + tok + "'");
  }
}

inline std::string strip_comment(const std::string& line) {
  auto pos = line.find('#');
  return pos == std::string::npos ? line : line.substr(0, pos);
}

}  // namespace detail

inline SurfaceBuilder<Rational> parse_surface(std::istream& in) {
  SurfaceBuilder<Rational> b;
  std::string line;
  int lineno = 0;
  int cur_tri = -1;
  int vcount = 0;
  auto ctx = [&]() { return " (line " + std::to_string(lineno) + ")"; };
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(detail::strip_comment(line));
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw == "triangle") {
      int id;
      if (!(ls >> id)) fail(errc::parse_error, "triangle needs an id" + ctx());
      if (cur_tri >= 0 && vcount != 3)
        fail(errc::parse_error, "triangle " + std::to_string(cur_tri) + " has " +
                                    std::to_string(vcount) + " sides" + ctx());
      if (id != int(b.tris.size()))
        fail(errc::parse_error, "triangle ids must be consecutive from 0" + ctx());
      b.tris.push_back({});
      cur_tri = id;
      vcount = 0;
    } else if (kw == "v") {
      std::string sx, sy;
      if (!(ls >> sx >> sy)) fail(errc::parse_error, "v needs two coordinates" + ctx());
      if (cur_tri < 0 || vcount >= 3)
        fail(errc::parse_error, "v line outside a triangle" + ctx());
      try {
        b.tris[cur_tri].v[vcount] = {parse_rational(sx), parse_rational(sy)};
      } catch (const std::invalid_argument& e) {
        fail(errc::parse_error, std::string(e.what()) + ctx());
      }
      ++vcount;
    } else if (kw == "glue") {
      std::string sa, sb, ss;
      if (!(ls >> sa >> sb >> ss)) fail(errc::parse_error, "glue needs two slots and a sign" + ctx());
      int s;
      if (ss == "+1" || ss == "1")
        s = 1;
      else if (ss == "-1")
        s = -1;
      else
        fail(errc::parse_error, "glue sign must be +1 or -1" + ctx());
      b.glue(detail::parse_slot(sa), detail::parse_slot(sb), s);
    } else if (kw == "mark") {
      std::string sc;
      if (!(ls >> sc)) fail(errc::parse_error, "mark needs a corner" + ctx());
      b.mark(detail::parse_slot(sc));
    } else {
      fail(errc::parse_error, "unknown keyword '" + kw + "'" + ctx());
    }
  }
  if (cur_tri >= 0 && vcount != 3)
    fail(errc::parse_error, "triangle " + std::to_string(cur_tri) + " has " +
                                std::to_string(vcount) + " sides");
  return b;
}

inline Surface<Rational> load_surface(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open '" + path + "'");
  try {
    return build_surface(parse_surface(in));
  } catch (const sf_error& e) {
    throw sf_error(e.code(), std::string(e.what()) + " [" + path + "]");
  }
}

template <class S>
std::string serialize_surface(const Surface<S>& s) {
  std::ostringstream os;
  for (int t = 0; t < s.F(); ++t) {
    os << "triangle " << t << "\n";
    for (int i = 0; i < 3; ++i)
      os << "v " << format_scalar(s.tris[t].v[i].x) << ' '
         << format_scalar(s.tris[t].v[i].y) << "\n";
  }
  for (const Edge& e : s.edges)
    os << "glue " << to_string(e.a) << ' ' << to_string(e.b) << ' '
       << (e.s > 0 ? "+1" : "-1") << "\n";
  for (const auto& vc : s.classes)
    if (vc.marked) os << "mark " << to_string(vc.corners[0]) << "\n";
  return os.str();
}

template <class S>
void save_surface(const Surface<S>& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(errc::io_error, "cannot open '" + path + "' for writing");
  out << serialize_surface(s);
}

inline std::vector<CurveInput> parse_curves(std::istream& in) {
  std::vector<CurveInput> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string body = detail::strip_comment(line);
    std::istringstream ls(body);
    std::string kw;
    if (!(ls >> kw)) continue;
    if (kw != "curve")
      fail(errc::parse_error,
           "expected 'curve' (line " + std::to_string(lineno) + ")");
    auto colon = body.find(':');
    if (colon == std::string::npos)
      fail(errc::parse_error, "curve line needs ':' (line " + std::to_string(lineno) + ")");
    CurveInput c;
    {
      std::istringstream hs(body.substr(0, colon));
      std::string kw2;
      hs >> kw2 >> c.name;
      if (c.name.empty())
        fail(errc::parse_error, "curve needs a name (line " + std::to_string(lineno) + ")");
    }
    std::string rest = body.substr(colon + 1);
    for (auto& ch : rest)
      if (ch == ',') ch = ' ';
    std::istringstream ts(rest);
    std::string tok;
    while (ts >> tok) {
      bool forward = true;
      if (tok.back() == '+') {
        tok.pop_back();
      } else if (tok.back() == '-') {
        forward = false;
        tok.pop_back();
      }
      c.doors.emplace_back(detail::parse_slot(tok), forward);
    }
    if (c.doors.empty())
      fail(errc::parse_error, "curve '" + c.name + "' has no crossings (line " +
                                  std::to_string(lineno) + ")");
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<CurveInput> load_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::io_error, "cannot open '" + path + "'");
  return parse_curves(in);
}

}  // namespace semiflat
