#include "kolmo/cli.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace kolmo {

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c == '\n' ? ' ' : c;
    }
    return out + '"';
}

}  // namespace

ReportRow make_row(std::string suite, std::string check, std::string statistic, double value, double bound,
                   long sample_size, std::uint64_t seed) {
    ReportRow r;
    r.suite = std::move(suite);
    r.check = std::move(check);
    r.statistic = std::move(statistic);
    r.value = value;
    r.bound = bound;
    r.pass = value <= bound;
    r.sample_size = sample_size;
    r.seed = seed;
    return r;
}

void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
    os << "suite,check,statistic,value,bound,pass,sample_size,seed,wall_time\n";
    const auto flags = os.flags();
    const auto prec = os.precision();
    os << std::setprecision(17);
    for (const auto& r : rows) {
        os << csv_field(r.suite) << ',' << csv_field(r.check) << ',' << csv_field(r.statistic) << ',' << r.value
           << ',' << r.bound << ',' << (r.pass ? "true" : "false") << ',' << r.sample_size << ',' << r.seed << ','
           << r.wall_time << '\n';
    }
    os.flags(flags);
    os.precision(prec);
}

void write_summary(std::ostream& os, const std::vector<ReportRow>& rows) {
    long failed = 0;
    for (const auto& r : rows) {
        os << (r.pass ? "PASS " : "FAIL ") << r.suite << '/' << r.check << "  " << r.statistic << " = "
           << std::setprecision(6) << r.value << " (bound " << r.bound << ")\n";
        failed += r.pass ? 0 : 1;
    }
    os << rows.size() << " checks, " << failed << " failed\n";
}

}  // namespace kolmo
