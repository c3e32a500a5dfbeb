#pragma once

#include <iosfwd>

#include "qdet/filter.hpp"
#include "qdet/simulate.hpp"

namespace qdet {

// Path CSV schema: header "t,X,pi,phi,dBbar", one row per grid point with
// the increment column empty on the last row; theta and seed ride in a '#'
// comment line. Observation-only paths leave pi and phi empty.
void write_path_csv(std::ostream& os, const SamplePath& p);
void write_path_csv(std::ostream& os, const JointPath& p);
SamplePath read_path_csv(std::istream& is);

// Filter output CSV: "t,logL,phi,pi".
void write_filter_csv(std::ostream& os, const std::vector<FilterState>& states);

}  // namespace qdet
