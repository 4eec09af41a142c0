#include "melbridge/eval/report.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "melbridge/core/io.hpp"

namespace melbridge::eval {

namespace {

constexpr const char* kMagicLine = "melbridge eval report v1";

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_key(const std::string& key) {
    if (key.empty() || key.find('=') != std::string::npos ||
        key.find('\n') != std::string::npos || key.find('\t') != std::string::npos)
        throw std::invalid_argument("bad report key \"" + key + "\"");
}

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
    throw FormatError("eval report " + path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

void EvalReport::set_provenance(const std::string& key, const std::string& value) {
    check_key(key);
    for (auto& [k, v] : provenance)
        if (k == key) {
            v = value;
            return;
        }
    provenance.emplace_back(key, value);
}

std::optional<std::string> EvalReport::provenance_value(const std::string& key) const {
    for (const auto& [k, v] : provenance)
        if (k == key) return v;
    return std::nullopt;
}

void EvalReport::set_metric(const std::string& key, double value) {
    check_key(key);
    for (auto& [k, v] : metrics)
        if (k == key) {
            v = value;
            return;
        }
    metrics.emplace_back(key, value);
}

std::optional<double> EvalReport::metric(const std::string& key) const {
    for (const auto& [k, v] : metrics)
        if (k == key) return v;
    return std::nullopt;
}

void EvalReport::validate() const {
    for (const auto& [k, v] : provenance) {
        check_key(k);
        if (v.find('\n') != std::string::npos)
            throw std::invalid_argument("report provenance \"" + k + "\" contains a newline");
    }
    for (const auto& [k, v] : metrics) {
        check_key(k);
        if (!std::isfinite(v))
            throw std::invalid_argument("report metric \"" + k + "\" is not finite");
    }
    for (const auto& row : cosine_table) {
        if (row.variant.empty() || row.variant.find('\t') != std::string::npos)
            throw std::invalid_argument("bad cosine table variant name \"" + row.variant + "\"");
        if (!std::isfinite(row.mean_cos))
            throw std::invalid_argument("cosine row \"" + row.variant + "\" is not finite");
    }
}

void EvalReport::save(const std::string& path) const {
    validate();
    std::ostringstream out;
    out << kMagicLine << "\n";
    out << "[provenance]\n";
    for (const auto& [k, v] : provenance) out << k << " = " << v << "\n";
    out << "[metrics]\n";
    for (const auto& [k, v] : metrics) out << k << " = " << fmt_double(v) << "\n";
    out << "[cosine_table]\n";
    for (const auto& row : cosine_table)
        out << row.variant << '\t' << fmt_double(row.mean_cos) << '\t' << row.count << "\n";
    write_text_file(path, out.str());
}

EvalReport EvalReport::load(const std::string& path) {
    std::istringstream in(read_text_file(path));
    EvalReport r;
    std::string line;
    int lineno = 0;

    if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
    ++lineno;
    if (line != kMagicLine)
        parse_fail(path, lineno,
                   "expected header \"" + std::string(kMagicLine) + "\", got \"" + line + "\"");

    enum class Section { kNone, kProvenance, kMetrics, kCosine } section = Section::kNone;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (line == "[provenance]") {
            section = Section::kProvenance;
            continue;
        }
        if (line == "[metrics]") {
            section = Section::kMetrics;
            continue;
        }
        if (line == "[cosine_table]") {
            section = Section::kCosine;
            continue;
        }
        if (line[0] == '[') parse_fail(path, lineno, "unknown section " + line);

        switch (section) {
            case Section::kNone:
                parse_fail(path, lineno, "content before any section");
            case Section::kProvenance:
            case Section::kMetrics: {
                const auto eq = line.find(" = ");
                if (eq == std::string::npos) parse_fail(path, lineno, "expected \"key = value\"");
                const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
                if (section == Section::kProvenance) {
                    r.provenance.emplace_back(key, value);
                } else {
                    try {
                        std::size_t used = 0;
                        const double d = std::stod(value, &used);
                        if (used != value.size()) throw std::invalid_argument(value);
                        r.metrics.emplace_back(key, d);
                    } catch (const std::exception&) {
                        parse_fail(path, lineno, "bad metric value \"" + value + "\"");
                    }
                }
                break;
            }
            case Section::kCosine: {
                CosineRow row;
                const auto t1 = line.find('\t');
                const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
                if (t2 == std::string::npos)
                    parse_fail(path, lineno, "expected variant<TAB>mean<TAB>count");
                row.variant = line.substr(0, t1);
                try {
                    row.mean_cos = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
                    row.count = std::stoull(line.substr(t2 + 1));
                } catch (const std::exception&) {
                    parse_fail(path, lineno, "bad cosine row");
                }
                r.cosine_table.push_back(std::move(row));
                break;
            }
        }
    }
    try {
        r.validate();
    } catch (const std::invalid_argument& err) {
        throw FormatError("eval report " + path + ": " + err.what());
    }
    return r;
}

}  // namespace melbridge::eval
