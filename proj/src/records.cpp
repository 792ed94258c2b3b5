#include "csober/records.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>

#include "csober/errors.hpp"

namespace csober {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& field) {
    if (field.empty()) return std::nan("");
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str()) throw DomainError("parse_csv_row: bad numeric field: " + field);
    return v;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (const char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current += c;
        }
    }
    fields.push_back(current);
    return fields;
}

}  // namespace

std::string csv_header() {
    return "iteration,best_feasible,log_regret,eps_lp,est_rejection,realised_rejection,"
           "batch_logdet,wce,batch_size,elapsed_seconds,seed";
}

std::string to_csv_row(const RunRecord& r) {
    std::ostringstream out;
    out << r.iteration << ',' << format_double(r.best_feasible) << ',';
    if (r.log_regret.has_value()) out << format_double(*r.log_regret);
    out << ',' << format_double(r.eps_lp) << ',' << format_double(r.est_rejection) << ','
        << format_double(r.realised_rejection) << ',' << format_double(r.batch_logdet) << ','
        << format_double(r.wce) << ',' << r.batch_size << ','
        << format_double(r.elapsed_seconds) << ',' << r.seed;
    return out.str();
}

RunRecord parse_csv_row(const std::string& line) {
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 11) throw DomainError("parse_csv_row: expected 11 fields");
    RunRecord r;
    r.iteration = std::atoi(f[0].c_str());
    r.best_feasible = parse_double(f[1]);
    if (!f[2].empty()) r.log_regret = parse_double(f[2]);
    r.eps_lp = parse_double(f[3]);
    r.est_rejection = parse_double(f[4]);
    r.realised_rejection = parse_double(f[5]);
    r.batch_logdet = parse_double(f[6]);
    r.wce = parse_double(f[7]);
    r.batch_size = std::atoi(f[8].c_str());
    r.elapsed_seconds = parse_double(f[9]);
    r.seed = std::strtoull(f[10].c_str(), nullptr, 10);
    return r;
}

bool same_results(const RunRecord& a, const RunRecord& b) {
    auto eq = [](double x, double y) {
        return (std::isnan(x) && std::isnan(y)) || x == y;
    };
    return a.iteration == b.iteration && eq(a.best_feasible, b.best_feasible) &&
           a.log_regret.has_value() == b.log_regret.has_value() &&
           (!a.log_regret.has_value() || eq(*a.log_regret, *b.log_regret)) &&
           eq(a.eps_lp, b.eps_lp) && eq(a.est_rejection, b.est_rejection) &&
           eq(a.realised_rejection, b.realised_rejection) &&
           eq(a.batch_logdet, b.batch_logdet) && eq(a.wce, b.wce) &&
           a.batch_size == b.batch_size && a.seed == b.seed;
}

std::string records_to_csv(const std::vector<RunRecord>& records) {
    std::ostringstream out;
    out << csv_header() << '\n';
    for (const RunRecord& r : records) out << to_csv_row(r) << '\n';
    return out.str();
}

std::vector<RunRecord> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<RunRecord> records;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            continue;  // header
        }
        records.push_back(parse_csv_row(line));
    }
    return records;
}

}  // namespace csober
