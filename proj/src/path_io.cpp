#include "qdet/path_io.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "qdet/errors.hpp"

namespace qdet {

namespace {

std::string fmt17(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_path_csv(std::ostream& os, const SamplePath& p) {
  os << "# theta=" << fmt17(p.theta) << " seed=" << p.seed
     << " clamped=" << p.clamp_count << "\n";
  os << "t,X,pi,phi,dBbar\n";
  for (std::size_t k = 0; k < p.x.size(); ++k) {
    os << fmt17(p.times[k]) << "," << fmt17(p.x[k]) << ",,,";
    if (k < p.db.size()) os << fmt17(p.db[k]);
    os << "\n";
  }
}

void write_path_csv(std::ostream& os, const JointPath& p) {
  os << "# theta= seed=" << p.seed << " clamped=" << p.clamp_count
     << " saturated=" << (p.saturated ? 1 : 0) << "\n";
  os << "t,X,pi,phi,dBbar\n";
  for (std::size_t k = 0; k < p.x.size(); ++k) {
    os << fmt17(p.times[k]) << "," << fmt17(p.x[k]) << ","
       << fmt17(p.pi[k]) << "," << fmt17(p.phi[k]) << ",";
    if (k < p.dbbar.size()) os << fmt17(p.dbbar[k]);
    os << "\n";
  }
}

SamplePath read_path_csv(std::istream& is) {
  SamplePath p;
  p.theta = std::numeric_limits<double>::infinity();
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq + 1 >= kv.size()) continue;
        const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
        if (key == "theta") {
          if (val == "inf") p.theta = std::numeric_limits<double>::infinity();
          else p.theta = std::stod(val);
        } else if (key == "seed") {
          p.seed = std::stoull(val);
        }
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("t,X", 0) != 0)
        throw ConfigError("/path_csv", "expected header t,X,pi,phi,dBbar");
      header_seen = true;
      continue;
    }
    std::istringstream ls(line);
    std::string t, x, pi, phi, db;
    std::getline(ls, t, ',');
    std::getline(ls, x, ',');
    std::getline(ls, pi, ',');
    std::getline(ls, phi, ',');
    std::getline(ls, db, ',');
    p.times.push_back(std::stod(t));
    p.x.push_back(std::stod(x));
    if (!db.empty()) p.db.push_back(std::stod(db));
  }
  if (p.x.empty()) throw ConfigError("/path_csv", "no rows");
  return p;
}

void write_filter_csv(std::ostream& os, const std::vector<FilterState>& st) {
  os << "t,logL,phi,pi\n";
  for (const FilterState& s : st)
    os << fmt17(s.t) << "," << fmt17(s.logL) << "," << fmt17(s.phi) << ","
       << fmt17(s.pi) << "\n";
}

}  // namespace qdet
